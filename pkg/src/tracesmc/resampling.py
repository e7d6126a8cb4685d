"""Weight normalization, effective sample size and offspring sampling."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .distributions import RngStream

SCHEMES = ("multinomial", "residual", "systematic")


class DegenerateSweep(RuntimeError):
    """Every particle has zero likelihood."""


@dataclass(frozen=True)
class WeightVector:
    log_unnorm: np.ndarray
    norm: np.ndarray

    def __len__(self) -> int:
        return len(self.norm)


def normalize(log_unnorm) -> WeightVector:
    lw = np.asarray(log_unnorm, dtype=float)
    if lw.size == 0:
        raise ValueError("no weights to normalize")
    if np.any(np.isnan(lw)) or np.any(lw == np.inf):
        raise ValueError("log-weights must be finite or -inf")
    top = lw.max()
    if top == -np.inf:
        raise DegenerateSweep("all particles have zero likelihood")
    w = np.exp(lw - top)
    w /= w.sum()
    return WeightVector(lw, w)


def log_mean_weight(log_unnorm) -> float:
    """``log(mean(exp(log_unnorm)))``, computed with a max shift."""
    lw = np.asarray(log_unnorm, dtype=float)
    top = lw.max()
    if top == -np.inf:
        return -np.inf
    return float(top + np.log(np.mean(np.exp(lw - top))))


def ess(w: WeightVector) -> float:
    return float(1.0 / np.dot(w.norm, w.norm))


def _systematic_counts(p: np.ndarray, n: int, u: float) -> np.ndarray:
    cdf = np.cumsum(p)
    cdf[-1] = 1.0
    positions = (u + np.arange(n)) / n
    idx = np.searchsorted(cdf, positions, side="right")
    return np.bincount(idx, minlength=len(p))


def sample_offspring(w: WeightVector, L: int, scheme: str, stream: RngStream) -> np.ndarray:
    """Integer offspring counts summing to ``L`` with ``E[counts] = L * w``.

    ``L`` is usually ``len(w)`` but any non-negative total is allowed.
    """
    p = w.norm
    if L < 0:
        raise ValueError(f"cannot draw {L} offspring")
    gen = stream.gen
    if scheme == "multinomial":
        return gen.multinomial(L, p)
    if scheme == "systematic":
        return _systematic_counts(p, L, gen.random())
    if scheme == "residual":
        scaled = L * p
        # tolerance keeps exact integer parts from rounding down
        counts = np.floor(scaled + 1e-9).astype(np.int64)
        rest = L - int(counts.sum())
        if rest > 0:
            resid = np.clip(scaled - counts, 0.0, None)
            counts += gen.multinomial(rest, resid / resid.sum())
        return counts
    raise ValueError(f"unknown resampling scheme {scheme!r}; expected one of {SCHEMES}")


def offspring_to_ancestors(counts) -> np.ndarray:
    counts = np.asarray(counts, dtype=np.int64)
    return np.repeat(np.arange(len(counts)), counts)


def ancestors_to_offspring(ancestors, L: int) -> np.ndarray:
    return np.bincount(np.asarray(ancestors, dtype=np.int64), minlength=L)
