"""Particle Gibbs over program executions.

The chain carries one retained execution trace between iterations.  A
conditional sweep runs ``L - 1`` fresh particles next to it; at every
observe the retained trajectory keeps one offspring (its own recorded
continuation) and may gain more, which are branched from its checkpoint at
that observe by replaying its choice prefix.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .distributions import RngStream
from .resampling import ess, log_mean_weight, normalize, sample_offspring
from .smc import (
    CHAIN_KEY,
    SmcConfig,
    StepEvent,
    SweepResult,
    Workers,
    advance,
    resample_population,
    run_sweep,
    sweep_stream,
    warn_tau_ignored,
    worker_pool,
)
from .trace import ContractError, ExecutionTrace, Model, kill, replay_to_barrier, start_particle


@dataclass(frozen=True)
class RetainedTrajectory:
    final_trace: ExecutionTrace

    @property
    def checkpoints(self) -> list[int]:
        """Choice-prefix length at observe n, for n = 1..N."""
        return self.final_trace.barrier_choices

    @property
    def observe_logw(self) -> list[float]:
        return self.final_trace.observe_logw

    @property
    def num_observes(self) -> int:
        return self.final_trace.observe_count

    def prefix(self, n: int):
        """Choices made before observe ``n`` (n >= 1) was reached."""
        return self.final_trace.choices[: self.checkpoints[n - 1]]

    def branch_at(self, model: Model, n: int, stream: RngStream):
        """A fresh particle resumed from the retained state at observe ``n``."""
        return replay_to_barrier(model, self.prefix(n), n, stream, self.observe_logw)


def select_retained(result: SweepResult, stream: RngStream) -> tuple[int, RetainedTrajectory]:
    idx = int(stream.gen.choice(len(result.particles), p=result.weights.norm))
    return idx, RetainedTrajectory(result.particles[idx])


def pg_init(
    model: Model, cfg: SmcConfig, stream: RngStream | None = None, workers: Workers | None = None
) -> tuple[RetainedTrajectory, SweepResult]:
    """Unconditional sweep resampling at every observe, then pick a trajectory."""
    if stream is None:
        stream = sweep_stream(cfg, 0)
    result = run_sweep(model, cfg, stream, always_resample=True, workers=workers)
    _, retained = select_retained(result, stream.child(3))
    return retained, result


def conditional_sweep(
    model: Model,
    cfg: SmcConfig,
    retained: RetainedTrajectory,
    stream: RngStream | None = None,
    workers: Workers | None = None,
) -> SweepResult:
    """SMC sweep conditioned on ``retained`` surviving every resampling step.

    The retained trajectory occupies the last slot.  The other ``L - 1``
    ancestors are drawn multinomially from the weights of all ``L`` slots.
    """
    if stream is None:
        stream = sweep_stream(cfg, 1)
    if workers is None:
        with worker_pool(cfg.workers) as w:
            return conditional_sweep(model, cfg, retained, stream, w)

    t0 = time.perf_counter()
    L = cfg.particles
    N = retained.num_observes
    resample_stream = stream.child(1)
    live = [start_particle(model, stream.child(0, i)) for i in range(L - 1)]
    events: list[StepEvent] = []
    log_z = 0.0
    try:
        for n in range(1, N + 1):
            if live and advance(live, workers) != "observe":
                raise ContractError(f"{model.name}: completed before retained observe {n}")
            logw = [p.cum_logw for p in live] + [retained.observe_logw[n - 1]]
            w = normalize(logw)
            lmw = log_mean_weight(logw)
            log_z += lmw
            counts = sample_offspring(w, L - 1, "multinomial", resample_stream)
            extra = int(counts[-1])
            live = resample_population(live, counts[:-1], workers)
            live.extend(
                workers.map(
                    lambda j: retained.branch_at(model, n, stream.child(2, n, j)), range(extra)
                )
            )
            events.append(StepEvent(n, ess(w), True, lmw, 1 + extra, tuple(logw)))
        if live and advance(live, workers) != "complete":
            raise ContractError(f"{model.name}: more observes than the retained trajectory")
    except BaseException:
        for p in live:
            kill(p)
        raise
    traces = [p.trace for p in live] + [retained.final_trace]
    # every slot was reset by the resampling at observe N
    weights = normalize(np.zeros(L))
    return SweepResult(traces, weights, log_z, events, time.perf_counter() - t0)


@dataclass
class PgIteration:
    result: SweepResult
    retained: RetainedTrajectory
    retained_index: int


def iter_pg(model: Model, cfg: SmcConfig, iterations: int) -> Iterator[PgIteration]:
    if iterations < 1:
        raise ValueError("need at least one iteration")
    warn_tau_ignored(cfg)
    select_stream = RngStream(cfg.seed).child(CHAIN_KEY, 1)
    with worker_pool(cfg.workers) as w:
        result = run_sweep(model, cfg, sweep_stream(cfg, 0), always_resample=True, workers=w)
        idx, retained = select_retained(result, select_stream)
        yield PgIteration(result, retained, idx)
        for m in range(1, iterations):
            result = conditional_sweep(model, cfg, retained, sweep_stream(cfg, m), w)
            idx, retained = select_retained(result, select_stream)
            yield PgIteration(result, retained, idx)


def pg_chain(model: Model, cfg: SmcConfig, iterations: int) -> list[PgIteration]:
    return list(iter_pg(model, cfg, iterations))
