"""Inference over execution traces of probabilistic model programs."""

from .distributions import Memo, PolyaUrn, RngStream, gamma_rng, normal_lnp, normal_rng
from .pg import conditional_sweep, iter_pg, pg_chain, pg_init
from .pimh import iter_pimh, pimh_chain, pimh_step
from .resampling import DegenerateSweep, ess, normalize, offspring_to_ancestors, sample_offspring
from .smc import SmcConfig, SweepResult, iter_smc, posterior_estimate, run_sweep
from .trace import (
    ContractError,
    InferenceContext,
    Model,
    ModelFault,
    branch,
    kill,
    model,
    run_to_barrier,
    start_particle,
)

__version__ = "0.1.0"
