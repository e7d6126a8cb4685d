"""Exact posteriors for the benchmark models and KL-divergence evaluation."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln, logsumexp
from scipy.stats import multivariate_normal, norm

from .models import CRP_ALPHA, CRP_DATA, GAUSSIAN_DATA, GAUSSIAN_LIKE_VAR, GAUSSIAN_PRIOR, HmmSpec, hmm_spec


@dataclass(frozen=True)
class GaussianPosterior:
    mean: float
    var: float


@dataclass(frozen=True)
class CategoricalPosterior:
    probs: dict

    def __post_init__(self) -> None:
        total = sum(self.probs.values())
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"categorical probabilities sum to {total}")


@dataclass
class ExactPosterior:
    """Exact posterior per predict name, plus the log evidence when known."""

    table: dict = field(default_factory=dict)
    log_evidence: float | None = None

    def __getitem__(self, name: str):
        return self.table[name]


# --- Gaussian ---------------------------------------------------------------


def gaussian_exact(prior_mean: float, prior_var: float, like_var: float, data) -> tuple[GaussianPosterior, float]:
    """Conjugate posterior of the mean and the log marginal likelihood of ``data``."""
    if not (prior_var > 0 and like_var > 0):
        raise ValueError("variances must be positive")
    y = np.asarray(data, dtype=float)
    n = len(y)
    if n == 0:
        return GaussianPosterior(prior_mean, prior_var), 0.0
    post_var = 1.0 / (1.0 / prior_var + n / like_var)
    post_mean = float(post_var * (prior_mean / prior_var + y.sum() / like_var))
    cov = like_var * np.eye(n) + prior_var * np.ones((n, n))
    log_z = float(multivariate_normal(np.full(n, prior_mean), cov).logpdf(y))
    return GaussianPosterior(post_mean, post_var), log_z


def gaussian_benchmark_exact() -> ExactPosterior:
    post, log_z = gaussian_exact(*GAUSSIAN_PRIOR, GAUSSIAN_LIKE_VAR, GAUSSIAN_DATA)
    return ExactPosterior({"mu": post}, log_z)


# --- HMM --------------------------------------------------------------------


def hmm_marginals(spec: HmmSpec) -> tuple[np.ndarray, float]:
    """Smoothed state marginals ``P(z_n | y)`` by forward-backward in log space.

    NaN data entries are treated as unobserved.  Returns the (steps, K)
    marginal array and the log evidence.
    """
    logT = np.log(np.asarray(spec.transition, dtype=float))
    log_init = np.log(np.asarray(spec.initial, dtype=float))
    means = np.asarray(spec.means, dtype=float)
    data = np.asarray(spec.data, dtype=float)
    S, K = len(data), len(means)

    loglik = np.zeros((S, K))
    obs = ~np.isnan(data)
    d = data[obs][:, None] - means[None, :]
    loglik[obs] = -0.5 * (math.log(2 * math.pi * spec.var) + d * d / spec.var)

    alpha = np.empty((S, K))
    alpha[0] = log_init + loglik[0]
    for n in range(1, S):
        alpha[n] = logsumexp(alpha[n - 1][:, None] + logT, axis=0) + loglik[n]
    beta = np.zeros((S, K))
    for n in range(S - 2, -1, -1):
        beta[n] = logsumexp(logT + (loglik[n + 1] + beta[n + 1])[None, :], axis=1)
    log_z = float(logsumexp(alpha[-1]))
    post = np.exp(alpha + beta - log_z)
    return post / post.sum(axis=1, keepdims=True), log_z


def hmm_exact(spec: HmmSpec | str = "small") -> ExactPosterior:
    if isinstance(spec, str):
        spec = hmm_spec(spec)
    marg, log_z = hmm_marginals(spec)
    table = {
        f"state[{n}]": CategoricalPosterior({k: float(marg[n, k]) for k in range(spec.K)})
        for n in range(spec.steps)
    }
    return ExactPosterior(table, log_z)


# --- CRP mixture --------------------------------------------------------------

CRP_MAX_N = 12


def normal_gamma_log_marginal(y, mu0=0.0, kappa0=1.0, a0=1.0, b0=1.0) -> float:
    """Log marginal likelihood of ``y`` under precision ``~ Gamma(a0, rate b0)``,
    mean ``~ N(mu0, 1 / (kappa0 * precision))``."""
    y = np.asarray(y, dtype=float)
    n = len(y)
    if n == 0:
        return 0.0
    ybar = y.mean()
    kn = kappa0 + n
    an = a0 + n / 2
    bn = b0 + 0.5 * np.sum((y - ybar) ** 2) + kappa0 * n * (ybar - mu0) ** 2 / (2 * kn)
    return float(
        gammaln(an) - gammaln(a0) + a0 * math.log(b0) - an * math.log(bn)
        + 0.5 * math.log(kappa0 / kn) - 0.5 * n * math.log(2 * math.pi)
    )


def set_partitions(n: int):
    """Yield every set partition of ``range(n)`` as a list of bitmasks."""
    if n == 0:
        yield []
        return
    blocks: list[int] = []

    def rec(i):
        if i == n:
            yield list(blocks)
            return
        bit = 1 << i
        for b in range(len(blocks)):
            blocks[b] |= bit
            yield from rec(i + 1)
            blocks[b] ^= bit
        blocks.append(bit)
        yield from rec(i + 1)
        blocks.pop()

    yield from rec(0)


def crp_log_prior(sizes, alpha: float) -> float:
    n = sum(sizes)
    return float(
        len(sizes) * math.log(alpha) + gammaln(alpha) - gammaln(alpha + n)
        + sum(gammaln(s) for s in sizes)
    )


def crp_exact(
    alpha: float = CRP_ALPHA,
    data=CRP_DATA,
    mu0: float = 0.0,
    kappa0: float = 1.0,
    a0: float = 1.0,
    b0: float = 1.0,
    flat: bool = False,
) -> ExactPosterior:
    """Posterior of the number of classes by enumerating all set partitions."""
    y = np.asarray(data, dtype=float)
    n = len(y)
    if n > CRP_MAX_N:
        raise ValueError(f"partition enumeration refused for N={n} > {CRP_MAX_N}")
    block_ll: dict[int, float] = {}

    def ll(mask):
        try:
            return block_ll[mask]
        except KeyError:
            members = [i for i in range(n) if mask >> i & 1]
            v = block_ll[mask] = 0.0 if flat else normal_gamma_log_marginal(y[members], mu0, kappa0, a0, b0)
            return v

    by_k: dict[int, list[float]] = {}
    for blocks in set_partitions(n):
        sizes = [bin(b).count("1") for b in blocks]
        lp = crp_log_prior(sizes, alpha) + sum(ll(b) for b in blocks)
        by_k.setdefault(len(blocks), []).append(lp)
    logs = {k: float(logsumexp(v)) for k, v in by_k.items()}
    log_z = float(logsumexp(list(logs.values())))
    probs = {k: math.exp(v - log_z) for k, v in sorted(logs.items())}
    return ExactPosterior({"num_classes": CategoricalPosterior(probs)}, log_z)


def exact_posterior(model_id: str) -> ExactPosterior:
    if model_id == "gaussian":
        return gaussian_benchmark_exact()
    if model_id == "hmm-small":
        return hmm_exact("small")
    if model_id == "hmm-large":
        return hmm_exact("large")
    if model_id == "crp":
        return crp_exact()
    raise KeyError(f"no oracle for model {model_id!r}")


# --- KL divergence ------------------------------------------------------------


def kl_divergence(p_hat, p) -> float:
    """``KL(p_hat || p)`` for categoricals given as dicts or aligned arrays."""
    if isinstance(p_hat, dict) or isinstance(p, dict):
        p_hat, p = dict(p_hat), dict(p)
        support = sorted(set(p_hat) | set(p), key=lambda k: (str(type(k)), k))
        q = np.array([p_hat.get(k, 0.0) for k in support], dtype=float)
        r = np.array([p.get(k, 0.0) for k in support], dtype=float)
    else:
        q = np.asarray(p_hat, dtype=float)
        r = np.asarray(p, dtype=float)
    pos = q > 0
    if np.any(r[pos] <= 0):
        warnings.warn("estimate puts mass where the reference has none; KL is infinite")
        return math.inf
    return float(np.sum(q[pos] * np.log(q[pos] / r[pos])))


KL_BINS = 200
KL_WIDTH_SD = 6.0


def gaussian_bins(post: GaussianPosterior, bins: int = KL_BINS, width: float = KL_WIDTH_SD):
    """Shared grid over mean +/- ``width`` sd; returns (edges, exact bin mass).

    Tail mass beyond the grid is folded into the outermost bins.
    """
    sd = math.sqrt(post.var)
    edges = np.linspace(post.mean - width * sd, post.mean + width * sd, bins + 1)
    cdf = norm.cdf(edges, post.mean, sd)
    mass = np.diff(cdf)
    mass[0] += cdf[0]
    mass[-1] += 1.0 - cdf[-1]
    return edges, mass


def binned_gaussian_kl(values, weights, post: GaussianPosterior, bins: int = KL_BINS) -> float:
    """KL of a weighted sample against a Gaussian, both binned on the shared grid."""
    edges, mass = gaussian_bins(post, bins)
    x = np.asarray(values, dtype=float)
    w = np.asarray(weights, dtype=float)
    idx = np.clip(np.searchsorted(edges, x, side="right") - 1, 0, bins - 1)
    hist = np.bincount(idx, weights=w, minlength=bins)
    return kl_divergence(hist / hist.sum(), mass)


def categorical_kl(values, weights, post: CategoricalPosterior) -> float:
    acc: dict = {}
    for v, w in zip(values, weights):
        acc[v] = acc.get(v, 0.0) + float(w)
    z = sum(acc.values())
    return kl_divergence({k: v / z for k, v in acc.items()}, post.probs)


def predict_kl(values, weights, post) -> float:
    if isinstance(post, GaussianPosterior):
        return binned_gaussian_kl(values, weights, post)
    return categorical_kl(values, weights, post)
