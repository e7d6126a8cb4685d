"""Small models with exactly enumerable posteriors, shared by several test modules."""

import itertools
import math

from tracesmc.distributions import RngStream
from tracesmc.trace import ChoiceRecord, model, run_to_barrier, start_particle, Particle

TOY_PRIOR = (0.2, 0.5, 0.3)
TOY_T = ((0.7, 0.3), (0.4, 0.6), (0.1, 0.9))
TOY_LIK1 = (0.1, 0.6, 0.3)
TOY_LIK2 = ((0.8, 0.05), (0.2, 0.5), (0.9, 0.4))


@model(observes=2)
def toy(ctx):
    """Two observes over a 3-state then 2-state discrete latent path."""
    x1 = ctx.discrete_rng(TOY_PRIOR)
    yield math.log(TOY_LIK1[x1])
    x2 = ctx.discrete_rng(TOY_T[x1])
    yield math.log(TOY_LIK2[x1][x2])
    ctx.predict("path", 2 * x1 + x2)


def toy_exact() -> dict:
    """Posterior over path codes by enumerating all six paths."""
    mass = {}
    for x1, x2 in itertools.product(range(3), range(2)):
        mass[2 * x1 + x2] = TOY_PRIOR[x1] * TOY_LIK1[x1] * TOY_T[x1][x2] * TOY_LIK2[x1][x2]
    z = sum(mass.values())
    return {k: v / z for k, v in mass.items()}


def trace_from_values(m, dist_ids_values):
    """Run ``m`` to completion feeding it the given (dist_id, value) choices."""
    choices = [ChoiceRecord(i, d, (), v) for i, (d, v) in enumerate(dist_ids_values)]
    p = Particle(m, RngStream(0), replay=choices)
    while run_to_barrier(p).kind != "complete":
        pass
    return p.trace


def run_to_end(p):
    while run_to_barrier(p).kind != "complete":
        pass
    return p


# acceptance results, printed by the terminal-summary hook in conftest
ACCEPTANCE: dict = {}


def record(criterion: int, part: str, passed: bool, detail: str) -> None:
    ACCEPTANCE.setdefault(criterion, {})[part] = (bool(passed), detail)
