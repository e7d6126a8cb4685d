"""Sequential Monte Carlo over program executions.

Particles are advanced to each observe barrier (in parallel when a worker
pool is configured), then weights, effective sample size, offspring counts
and the evidence estimate are computed serially.  Resampling happens when
the ESS of the weights accumulated since the last resampling event falls
strictly below ``tau``.
"""

from __future__ import annotations

import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from .distributions import RngStream
from .resampling import (
    SCHEMES,
    WeightVector,
    ess,
    log_mean_weight,
    normalize,
    sample_offspring,
)
from .trace import (
    ContractError,
    ExecutionTrace,
    Model,
    Particle,
    branch,
    kill,
    run_to_barrier,
    start_particle,
)

# stream keys under the root seed
SWEEP_KEY = 0
CHAIN_KEY = 1


@dataclass
class SmcConfig:
    particles: int = 100
    tau: float | None = None  # defaults to particles / 2
    scheme: str = "systematic"
    seed: int = 0
    workers: int = 1

    def __post_init__(self) -> None:
        if self.particles < 1:
            raise ValueError("need at least one particle")
        self.tau_explicit = self.tau is not None
        if self.tau is None:
            self.tau = self.particles / 2
        if not 0 <= self.tau <= self.particles:
            raise ValueError(f"tau must lie in [0, {self.particles}], got {self.tau}")
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")


@dataclass
class StepEvent:
    """Engine log record for one observe step."""

    n: int
    ess: float
    resampled: bool
    log_mean_weight: float
    retained_offspring: int | None = None
    logw: tuple[float, ...] = ()  # weights accumulated since the last resampling


@dataclass
class SweepResult:
    particles: list[ExecutionTrace]
    weights: WeightVector
    log_evidence: float
    events: list[StepEvent] = field(default_factory=list)
    wallclock: float = 0.0

    @property
    def predicts(self):
        return [t.predicts for t in self.particles]

    def __len__(self) -> int:
        return len(self.particles)


class Workers:
    """Runs per-particle work serially or on a thread pool.

    Each particle is owned by one task at a time, and results come back in
    input order, so the outcome does not depend on the worker count.
    """

    def __init__(self, n: int) -> None:
        self.n = n
        self._pool = ThreadPoolExecutor(n) if n > 1 else None

    def map(self, fn, items):
        items = list(items)
        if self._pool is None or len(items) < 2:
            return [fn(x) for x in items]
        size = -(-len(items) // self.n)
        chunks = [items[i : i + size] for i in range(0, len(items), size)]
        out = []
        for part in self._pool.map(lambda c: [fn(x) for x in c], chunks):
            out.extend(part)
        return out

    def close(self) -> None:
        if self._pool is not None:
            self._pool.shutdown()


@contextmanager
def worker_pool(n: int):
    w = Workers(n)
    try:
        yield w
    finally:
        w.close()


def advance(particles: list[Particle], workers: Workers) -> str:
    """Run every particle to its next barrier; return "observe" or "complete"."""
    events = workers.map(run_to_barrier, particles)
    kinds = {(e.kind, e.n) for e in events}
    if len(kinds) != 1:
        raise ContractError(f"particles disagree at a barrier: {sorted(kinds)}")
    return events[0].kind


def resample_population(
    particles: list[Particle], counts, workers: Workers
) -> list[Particle]:
    """Kill, keep or branch each particle according to its offspring count."""
    jobs = []
    for p, c in zip(particles, counts):
        c = int(c)
        if c == 0:
            kill(p)
        else:
            jobs.append((p, c))

    def spawn(job):
        p, c = job
        if c == 1:
            return [p]
        return branch(p, c, list(range(c)))

    out = []
    for group in workers.map(spawn, jobs):
        for child in group:
            child.cum_logw = 0.0
            out.append(child)
    return out


def sweep_stream(cfg: SmcConfig, index: int) -> RngStream:
    return RngStream(cfg.seed).child(SWEEP_KEY, index)


def run_sweep(
    model: Model,
    cfg: SmcConfig,
    stream: RngStream | None = None,
    *,
    always_resample: bool = False,
    workers: Workers | None = None,
) -> SweepResult:
    """One SMC sweep of ``cfg.particles`` executions of ``model``."""
    if stream is None:
        stream = sweep_stream(cfg, 0)
    if workers is None:
        with worker_pool(cfg.workers) as w:
            return run_sweep(model, cfg, stream, always_resample=always_resample, workers=w)

    t0 = time.perf_counter()
    L = cfg.particles
    resample_stream = stream.child(1)
    particles = [start_particle(model, stream.child(0, i)) for i in range(L)]
    log_z = 0.0
    events: list[StepEvent] = []
    try:
        while advance(particles, workers) == "observe":
            logw = [p.cum_logw for p in particles]
            w = normalize(logw)
            e = ess(w)
            lmw = log_mean_weight(logw)
            do_resample = always_resample or e < cfg.tau
            if do_resample:
                log_z += lmw
                counts = sample_offspring(w, L, cfg.scheme, resample_stream)
                particles = resample_population(particles, counts, workers)
            events.append(StepEvent(len(events) + 1, e, do_resample, lmw, logw=tuple(logw)))
        logw = [p.cum_logw for p in particles]
        weights = normalize(logw)
        log_z += log_mean_weight(logw)
    except BaseException:
        for p in particles:
            kill(p)
        raise
    return SweepResult(
        [p.trace for p in particles], weights, log_z, events, time.perf_counter() - t0
    )


def iter_smc(model: Model, cfg: SmcConfig, sweeps: int) -> Iterator[SweepResult]:
    """Independent SMC sweeps, one per iteration.

    Pooling the output of repeated sweeps by their normalized weights is a
    biased estimator for fixed particle count, however many sweeps are run.
    """
    with worker_pool(cfg.workers) as w:
        for m in range(sweeps):
            yield run_sweep(model, cfg, sweep_stream(cfg, m), workers=w)


class EmpiricalPosterior:
    """Weighted pool of predict values; each sweep contributes total weight L."""

    def __init__(self, values, weights) -> None:
        self.values = list(values)
        self.weights = np.asarray(weights, dtype=float)

    @property
    def total(self) -> float:
        return float(self.weights.sum())

    def mean(self) -> float:
        return float(np.dot(self.weights, np.asarray(self.values, dtype=float)) / self.total)

    def var(self) -> float:
        x = np.asarray(self.values, dtype=float)
        m = np.dot(self.weights, x) / self.total
        return float(np.dot(self.weights, (x - m) ** 2) / self.total)

    def counts(self) -> dict:
        out: dict = {}
        for v, w in zip(self.values, self.weights):
            out[v] = out.get(v, 0.0) + float(w)
        return out

    def categorical(self) -> dict:
        z = self.total
        return {k: v / z for k, v in sorted(self.counts().items())}


def posterior_estimate(results, name: str, weighting: str = "uniform") -> EmpiricalPosterior:
    """Pool the ``name`` predicts of several sweeps, weighted within each sweep.

    With ``weighting="uniform"`` every sweep counts equally, which is what
    repeated independent SMC does.  ``"evidence"`` scales each sweep by its
    evidence estimate relative to the others, which makes the pooled
    estimate consistent as the number of sweeps grows.
    """
    results = list(results)
    if not results:
        raise ValueError("no sweep results to pool")
    if weighting == "uniform":
        scale = np.ones(len(results))
    elif weighting == "evidence":
        lz = np.array([r.log_evidence for r in results])
        scale = np.exp(lz - lz.max())
        scale *= len(results) / scale.sum()
    else:
        raise ValueError(f"unknown weighting {weighting!r}")
    values, weights = [], []
    found = False
    for r, c in zip(results, scale):
        L = len(r.particles) * c
        for trace, w in zip(r.particles, r.weights.norm):
            for v in trace.predict_values(name):
                found = True
                values.append(v)
                weights.append(L * w)
    if not found:
        raise KeyError(f"no predict named {name!r}")
    return EmpiricalPosterior(values, weights)


def warn_tau_ignored(cfg: SmcConfig) -> None:
    if cfg.tau_explicit:
        warnings.warn("particle Gibbs resamples at every observe; tau is ignored", stacklevel=3)
