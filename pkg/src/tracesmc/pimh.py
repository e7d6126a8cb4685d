"""Particle independent Metropolis-Hastings.

Each iteration proposes a whole fresh SMC sweep and accepts it with
probability ``min(1, Z'/Z)`` using the sweeps' evidence estimates.  On
rejection the previous sweep's samples are emitted again.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator

from .distributions import RngStream
from .smc import CHAIN_KEY, SmcConfig, SweepResult, Workers, run_sweep, sweep_stream, worker_pool
from .trace import Model


@dataclass
class PimhState:
    current: SweepResult
    log_z: float
    iteration: int = 1
    accept_count: int = 1
    last_accepted: bool = True

    @property
    def acceptance_rate(self) -> float:
        return self.accept_count / self.iteration


def accept_probability(log_z_new: float, log_z: float) -> float:
    if log_z == -math.inf:
        return 1.0
    return math.exp(min(0.0, log_z_new - log_z))


def pimh_step(
    state: PimhState,
    model: Model,
    cfg: SmcConfig,
    stream: RngStream,
    log_u: float | None = None,
    workers: Workers | None = None,
) -> PimhState:
    """One PIMH iteration.

    ``stream`` drives the acceptance test; the proposal sweep uses the
    sweep stream for this iteration index.  Passing ``log_u`` fixes the log
    uniform used for the test (``math.inf`` forces a rejection).
    """
    proposal = run_sweep(model, cfg, sweep_stream(cfg, state.iteration), workers=workers)
    if log_u is None:
        log_u = math.log(stream.uniform())
    accepted = log_u < proposal.log_evidence - state.log_z or state.log_z == -math.inf
    if accepted:
        return PimhState(proposal, proposal.log_evidence, state.iteration + 1, state.accept_count + 1, True)
    return PimhState(state.current, state.log_z, state.iteration + 1, state.accept_count, False)


def iter_pimh(model: Model, cfg: SmcConfig, iterations: int) -> Iterator[PimhState]:
    """Yield the chain state after each iteration; ``state.current`` is the emitted block."""
    if iterations < 1:
        raise ValueError("need at least one iteration")
    accept_stream = RngStream(cfg.seed).child(CHAIN_KEY, 0)
    with worker_pool(cfg.workers) as w:
        first = run_sweep(model, cfg, sweep_stream(cfg, 0), workers=w)
        state = PimhState(first, first.log_evidence)
        yield state
        for _ in range(iterations - 1):
            state = pimh_step(state, model, cfg, accept_stream, workers=w)
            yield state


@dataclass
class ChainResult:
    blocks: list[SweepResult]
    accepted: list[bool]

    @property
    def acceptance_rate(self) -> float:
        """Fraction of proposals accepted; the initial sweep is not a proposal."""
        proposals = self.accepted[1:]
        return sum(proposals) / len(proposals) if proposals else 1.0


def pimh_chain(model: Model, cfg: SmcConfig, iterations: int) -> ChainResult:
    blocks, accepted = [], []
    for state in iter_pimh(model, cfg, iterations):
        blocks.append(state.current)
        accepted.append(state.last_accepted)
    return ChainResult(blocks, accepted)
