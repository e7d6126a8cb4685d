"""Benchmark model programs: Gaussian mean, hidden Markov models, CRP mixture."""

from __future__ import annotations

import math
from dataclasses import dataclass
from importlib import resources
from typing import Callable

import numpy as np

from .distributions import Memo, PolyaUrn, normal_lnp
from .trace import Model

# --- Gaussian with unknown mean -------------------------------------------

GAUSSIAN_PRIOR = (1.0, 5.0)  # mean, variance
GAUSSIAN_LIKE_VAR = 2.0
GAUSSIAN_DATA = (9.0, 8.0)


def gaussian_model(
    prior_mean: float = GAUSSIAN_PRIOR[0],
    prior_var: float = GAUSSIAN_PRIOR[1],
    like_var: float = GAUSSIAN_LIKE_VAR,
    data=GAUSSIAN_DATA,
    flat: bool = False,
) -> Model:
    """``mu ~ N(prior_mean, prior_var)``, each datum ``~ N(mu, like_var)``.

    With ``flat`` every observe contributes zero log-likelihood, so the
    program samples from its prior.
    """
    data = tuple(data)

    def gaussian(ctx):
        mu = ctx.normal_rng(prior_mean, prior_var)
        for y in data:
            yield 0.0 if flat else normal_lnp(y, mu, like_var)
        ctx.predict("mu", mu)

    return Model(gaussian, len(data), "gaussian")


# --- Hidden Markov models -------------------------------------------------

HMM_SMALL_T = (
    (0.1, 0.5, 0.4),
    (0.2, 0.2, 0.6),
    (0.15, 0.15, 0.7),
)
HMM_SMALL_DATA = (math.nan, 0.9, 0.8, 0.7, 0.0, -0.025, -5.0, -2.0, -0.1, 0.0, 0.13)
HMM_SMALL_INIT = (1.0 / 3, 1.0 / 3, 1.0 / 3)
HMM_SMALL_MEANS = (-1.0, 1.0, 0.0)
HMM_SMALL_VAR = 1.0

HMM_LARGE_K = 10
HMM_LARGE_N = 50
HMM_LARGE_VAR = 4.0
HMM_LARGE_SEED = 20150101
HMM_LARGE_FILE = "hmm_large_observations.txt"


@dataclass(frozen=True)
class HmmSpec:
    """Constants of a discrete-state HMM with Gaussian emissions.

    ``data[0]`` is never observed; timesteps 1.. are.
    """

    transition: tuple
    initial: tuple
    means: tuple
    var: float
    data: tuple

    @property
    def K(self) -> int:
        return len(self.initial)

    @property
    def steps(self) -> int:
        return len(self.data)


def hmm_large_transition(K: int = HMM_LARGE_K) -> tuple:
    off = 0.5 / (K - 1)
    return tuple(tuple(0.5 if i == j else off for j in range(K)) for i in range(K))


def simulate_hmm_large_data(seed: int = HMM_LARGE_SEED) -> tuple:
    """Draw the stored hmm-large observation sequence from the model itself."""
    rng = np.random.default_rng(seed)
    K = HMM_LARGE_K
    T = np.array(hmm_large_transition(K))
    z = rng.integers(K)
    ys = []
    for _ in range(HMM_LARGE_N):
        z = rng.choice(K, p=T[z])
        ys.append(round(float(rng.normal(z, math.sqrt(HMM_LARGE_VAR))), 6))
    return tuple(ys)


def write_hmm_large_data(path, seed: int = HMM_LARGE_SEED) -> None:
    ys = simulate_hmm_large_data(seed)
    with open(path, "w") as f:
        f.write(f"# hmm-large observations y_1..y_{len(ys)}; seed={seed}\n")
        for y in ys:
            f.write(f"{y:.6f}\n")


def read_observations(text: str) -> tuple[int | None, tuple]:
    """Parse the one-value-per-line format; returns (seed, values)."""
    seed = None
    values = []
    for line in text.splitlines():
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            if "seed=" in line:
                seed = int(line.split("seed=")[1].split(";")[0].split()[0])
            continue
        values.append(float(line))
    return seed, tuple(values)


def load_hmm_large_data() -> tuple:
    text = resources.files("tracesmc.data").joinpath(HMM_LARGE_FILE).read_text()
    return read_observations(text)[1]


def hmm_spec(scale: str = "small") -> HmmSpec:
    if scale == "small":
        return HmmSpec(HMM_SMALL_T, HMM_SMALL_INIT, HMM_SMALL_MEANS, HMM_SMALL_VAR, HMM_SMALL_DATA)
    if scale == "large":
        K = HMM_LARGE_K
        return HmmSpec(
            hmm_large_transition(K),
            tuple([1.0 / K] * K),
            tuple(float(k) for k in range(K)),
            HMM_LARGE_VAR,
            (math.nan, *load_hmm_large_data()),
        )
    raise ValueError(f"unknown HMM scale {scale!r}")


def hmm_program(spec: HmmSpec, name: str = "hmm", flat: bool = False) -> Model:
    T, init, means, var, data = spec.transition, spec.initial, spec.means, spec.var, spec.data
    K = spec.K

    def hmm(ctx):
        state = ctx.discrete_rng(init, K)
        ctx.predict("state[0]", state)
        for n in range(1, len(data)):
            state = ctx.discrete_rng(T[state], K)
            yield 0.0 if flat else normal_lnp(data[n], means[state], var)
            ctx.predict(f"state[{n}]", state)

    return Model(hmm, len(data) - 1, name)


def hmm_model(scale: str = "small", flat: bool = False) -> Model:
    return hmm_program(hmm_spec(scale), f"hmm-{scale}", flat)


# --- CRP mixture of Gaussians ---------------------------------------------

CRP_DATA = (1.0, 1.1, 1.2, -1.0, -1.5, -2.0, 0.001, 0.01, 0.005, 0.0)
CRP_ALPHA = 1.0


def crp_model(data=CRP_DATA, alpha: float = CRP_ALPHA, flat: bool = False) -> Model:
    """Dirichlet-process mixture of Gaussians with a normal-gamma base measure."""
    data = tuple(data)

    def draw_theta(ctx):
        variance = 1.0 / ctx.gamma_rng(1.0, 1.0)
        return ctx.normal_rng(0.0, variance), variance

    def crp(ctx):
        urn = PolyaUrn(alpha)
        get_class = Memo(lambda c, n: c.polya_urn_draw(urn))
        params = {}
        for n, y in enumerate(data):
            k = get_class(ctx, n)
            if k not in params:
                params[k] = draw_theta(ctx)
            mu, var = params[k]
            yield 0.0 if flat else normal_lnp(y, mu, var)
        ctx.predict("num_classes", urn.num_classes)

    return Model(crp, len(data), "crp")


# --- registry ---------------------------------------------------------------


@dataclass(frozen=True)
class Benchmark:
    id: str
    make: Callable[[], Model]
    predicts: tuple[str, ...]

    @property
    def model(self) -> Model:
        return self.make()


def _hmm_names(scale: str) -> tuple[str, ...]:
    steps = len(HMM_SMALL_DATA) if scale == "small" else HMM_LARGE_N + 1
    return tuple(f"state[{n}]" for n in range(steps))


BENCHMARKS = {
    "gaussian": Benchmark("gaussian", gaussian_model, ("mu",)),
    "hmm-small": Benchmark("hmm-small", lambda: hmm_model("small"), _hmm_names("small")),
    "hmm-large": Benchmark("hmm-large", lambda: hmm_model("large"), _hmm_names("large")),
    "crp": Benchmark("crp", crp_model, ("num_classes",)),
}
