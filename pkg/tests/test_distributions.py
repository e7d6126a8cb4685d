import itertools
import math
from fractions import Fraction

import numpy as np
import pytest
from scipy import stats

from tracesmc.distributions import (
    Memo,
    PolyaUrn,
    RngStream,
    discrete_rng,
    gamma_rng,
    normal_lnp,
    normal_rng,
    polya_urn_draw,
)
from tracesmc.trace import InferenceContext


def test_normal_lnp_standard():
    assert normal_lnp(0, 0, 1) == pytest.approx(-0.5 * math.log(2 * math.pi), abs=1e-12)
    assert normal_lnp(0, 0, 1) == pytest.approx(-0.918939, abs=1e-6)


def test_normal_lnp_uses_variance():
    # -1/2 ln(4 pi) - (9 - 7)^2 / 4
    assert normal_lnp(9, 7, 2) == pytest.approx(-2.265513, abs=1e-6)
    assert normal_lnp(9, 7, 2) == pytest.approx(stats.norm.logpdf(9, 7, math.sqrt(2)), abs=1e-12)


@pytest.mark.parametrize("var", [0.0, -1.0])
def test_variance_must_be_positive(var):
    with pytest.raises(ValueError):
        normal_lnp(0, 0, var)
    with pytest.raises(ValueError):
        normal_rng(RngStream(0), 0, var)


def test_normal_rng_moments():
    s = RngStream(11)
    x = np.array([normal_rng(s, 1.0, 5.0) for _ in range(100_000)])
    assert abs(x.mean() - 1) < 0.03
    assert abs(x.var() - 5) < 0.15


def test_normal_rng_matches_lnp_histogram():
    s = RngStream(12)
    x = np.array([normal_rng(s, 2.0, 3.0) for _ in range(100_000)])
    assert stats.kstest(x, lambda v: stats.norm.cdf(v, 2.0, math.sqrt(3.0))).pvalue > 1e-3
    # coarse grid: histogram density against exp(lnp) at bin centres
    hist, edges = np.histogram(x, bins=20, range=(-4, 8), density=True)
    mid = 0.5 * (edges[1:] + edges[:-1])
    dens = np.exp([normal_lnp(m, 2.0, 3.0) for m in mid])
    assert np.max(np.abs(hist - dens)) < 0.01


def test_gamma_rng_exponential_case():
    s = RngStream(13)
    x = np.array([gamma_rng(s, 1, 1) for _ in range(100_000)])
    assert np.all(x > 0)
    assert abs(x.mean() - 1) < 0.013


def test_gamma_rng_shape_rate():
    s = RngStream(14)
    x = np.array([gamma_rng(s, 2, 2) for _ in range(100_000)])
    assert abs(x.mean() - 1) < 0.01
    assert stats.kstest(x, stats.gamma(2, scale=0.5).cdf).pvalue > 1e-3


def test_gamma_rng_rejects_bad_params():
    with pytest.raises(ValueError):
        gamma_rng(RngStream(0), 0, 1)
    with pytest.raises(ValueError):
        gamma_rng(RngStream(0), 1, -1)


def test_discrete_degenerate():
    s = RngStream(0)
    assert all(discrete_rng(s, [1, 0, 0], 3) == 0 for _ in range(1000))


@pytest.mark.parametrize("probs", [[1 / 3, 1 / 3, 1 / 3], [0.1, 0.5, 0.4]])
def test_discrete_frequencies(probs):
    s = RngStream(15)
    n = 100_000
    counts = np.bincount([discrete_rng(s, probs, 3) for _ in range(n)], minlength=3)
    p = np.array(probs)
    sd = np.sqrt(p * (1 - p) / n)
    assert np.all(np.abs(counts / n - p) < 4 * sd)


@pytest.mark.parametrize("probs", [[0.5, 0.6], [-0.1, 1.1], [0.5, float("nan")]])
def test_discrete_rejects_bad_probs(probs):
    with pytest.raises(ValueError):
        discrete_rng(RngStream(0), probs)


def test_discrete_length_mismatch():
    with pytest.raises(ValueError):
        discrete_rng(RngStream(0), [0.5, 0.5], 3)


def test_discrete_renormalizes_within_tolerance():
    s = RngStream(0)
    assert discrete_rng(s, [0.5, 0.5 + 5e-10]) in (0, 1)


def test_streams_reproducible_and_distinct():
    a, b = RngStream(7), RngStream(7)
    assert [a.uniform() for _ in range(10)] == [b.uniform() for _ in range(10)]
    streams = [RngStream(seed) for seed in range(100)]
    flat = [s.uniform() for s in streams for _ in range(10)]
    assert len(set(flat)) == len(flat)


def test_child_streams_distinct_and_order_free():
    root = RngStream(3)
    c1 = root.child(1).uniform()
    root.child(0).uniform()
    assert RngStream(3).child(1).uniform() == c1
    kids = [root.child(k) for k in range(50)]
    firsts = [k.uniform() for k in kids]
    assert len(set(firsts)) == 50


def test_urn_first_draw_is_class_zero():
    for seed in range(20):
        assert polya_urn_draw(PolyaUrn(3.0), RngStream(seed)) == 0


def test_urn_probabilities_after_draws():
    urn = PolyaUrn(1.0)
    for k in [0, 0, 1]:
        urn.add(k)
    assert urn.probabilities() == pytest.approx([2 / 4, 1 / 4, 1 / 4])
    assert urn.total == sum(urn.counts) == 3


def _urn_distinct_distribution(n, alpha):
    """Exact distribution of the number of classes by walking every draw sequence."""
    dist = {}

    def walk(counts, p):
        if sum(counts) == n:
            dist[len(counts)] = dist.get(len(counts), 0) + p
            return
        z = sum(counts) + alpha
        for k, c in enumerate(counts):
            nxt = list(counts)
            nxt[k] += 1
            walk(nxt, p * Fraction(c) / z)
        walk(counts + [1], p * Fraction(alpha) / z)

    walk([], Fraction(1))
    return dist


def test_urn_class_count_oracle():
    assert _urn_distinct_distribution(3, 1) == {1: Fraction(1, 3), 2: Fraction(1, 2), 3: Fraction(1, 6)}


def test_urn_class_count_simulation():
    exact = _urn_distinct_distribution(3, 1)
    s = RngStream(16)
    n = 100_000
    counts = {1: 0, 2: 0, 3: 0}
    sizes = {}
    for _ in range(n):
        urn = PolyaUrn(1.0)
        for _ in range(3):
            polya_urn_draw(urn, s)
        counts[urn.num_classes] += 1
        key = tuple(sorted(urn.counts))
        sizes[key] = sizes.get(key, 0) + 1
    for k, p in exact.items():
        p = float(p)
        assert abs(counts[k] / n - p) < 4 * math.sqrt(p * (1 - p) / n)
    # block-size multisets: (3,), (1,2), (1,1,1) carry the same masses
    assert set(sizes) == {(3,), (1, 2), (1, 1, 1)}


def test_urn_rejects_bad_state():
    with pytest.raises(ValueError):
        PolyaUrn(0)
    urn = PolyaUrn(1)
    with pytest.raises(ValueError):
        urn.add(2)


def test_memoize_returns_stored_value_without_new_choice():
    ctx = InferenceContext(RngStream(0))
    urn = PolyaUrn(1.0)
    get_class = Memo(lambda c, n: c.polya_urn_draw(urn))
    a = get_class(ctx, 0)
    before = len(ctx.trace.choices)
    assert get_class(ctx, 0) == a
    assert len(ctx.trace.choices) == before


def test_memoize_distinct_args_draw_separately():
    ctx = InferenceContext(RngStream(1))
    draws = Memo(lambda c, n: c.normal_rng(0.0, 1.0))
    a, b = draws(ctx, 0), draws(ctx, 1)
    assert a != b
    assert len(ctx.trace.choices) == 2


def test_urn_exchangeable_partition_masses():
    """Any ordering of the same block sizes has the same probability."""
    alpha = 1.3
    for labels in itertools.permutations([0, 0, 1, 2]):
        # relabel to first-occurrence order
        seen, seq = {}, []
        for x in labels:
            seq.append(seen.setdefault(x, len(seen)))
        urn, p = PolyaUrn(alpha), 1.0
        for k in seq:
            p *= urn.probabilities()[k]
            urn.add(k)
        # three blocks, sizes (2, 1, 1): alpha^3 * 1! / rising factorial
        assert p == pytest.approx(alpha**3 / (alpha * (alpha + 1) * (alpha + 2) * (alpha + 3)))
