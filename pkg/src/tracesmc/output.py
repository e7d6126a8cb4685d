"""CSV output: predict samples, per-iteration diagnostics and KL curves.

All files are comma-separated with a header row.  ``kl_curve.csv`` is a
pure function of ``samples.csv`` plus the wallclock column of
``diagnostics.csv``, so it can be recomputed offline with :func:`kl_curve`.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .oracles import (
    KL_BINS,
    ExactPosterior,
    GaussianPosterior,
    gaussian_bins,
    kl_divergence,
)
from .trace import PredictRecord

SAMPLES_HEADER = ["iteration", "particle", "predict_name", "value", "weight"]
DIAGNOSTICS_HEADER = [
    "iteration",
    "wallclock_seconds",
    "log_evidence",
    "ess_trace",
    "resampled_steps",
    "accepted",
    "acceptance_rate",
    "retained_offspring",
]
KL_HEADER = ["cumulative_samples", "wallclock_seconds", "kl", "kl_sum"]


def emit_predict_line(record: PredictRecord, full_precision: bool = False) -> str:
    return f"{record.name},{render_value(record, full_precision)}"


def render_value(record: PredictRecord, full_precision: bool = False) -> str:
    if full_precision and isinstance(record.raw, float):
        return repr(record.raw)
    return record.value


def sample_rows(iteration: int, block, full_precision: bool = False) -> Iterable[list]:
    for i, (trace, w) in enumerate(zip(block.particles, block.weights.norm)):
        for rec in trace.predicts:
            yield [iteration, i, rec.name, render_value(rec, full_precision), repr(float(w))]


def _fmt_float(x: float) -> str:
    return repr(float(x))


@dataclass
class Diagnostics:
    iteration: int
    wallclock: float
    log_evidence: float
    ess: list[float]
    resampled: list[bool]
    accepted: bool | None = None
    acceptance_rate: float | None = None
    retained_offspring: list[int] | None = None

    def row(self) -> list:
        return [
            self.iteration,
            _fmt_float(self.wallclock),
            _fmt_float(self.log_evidence),
            ";".join(f"{e:.6f}" for e in self.ess),
            ";".join(str(int(r)) for r in self.resampled),
            "" if self.accepted is None else int(self.accepted),
            "" if self.acceptance_rate is None else f"{self.acceptance_rate:.6f}",
            "" if self.retained_offspring is None else ";".join(map(str, self.retained_offspring)),
        ]


class _Accumulator:
    """Cumulative weighted estimate of one predict's distribution."""

    def __init__(self, post) -> None:
        self.post = post
        if isinstance(post, GaussianPosterior):
            self.edges, self.mass = gaussian_bins(post, KL_BINS)
            self.hist = np.zeros(KL_BINS)
        else:
            self.counts: dict = {}

    def add(self, value: str, weight: float) -> None:
        if isinstance(self.post, GaussianPosterior):
            i = int(np.searchsorted(self.edges, float(value), side="right")) - 1
            self.hist[min(max(i, 0), KL_BINS - 1)] += weight
        else:
            k = _parse_key(value)
            self.counts[k] = self.counts.get(k, 0.0) + weight

    def kl(self) -> float:
        if isinstance(self.post, GaussianPosterior):
            z = self.hist.sum()
            return kl_divergence(self.hist / z, self.mass) if z > 0 else math.inf
        z = sum(self.counts.values())
        if z <= 0:
            return math.inf
        return kl_divergence({k: v / z for k, v in self.counts.items()}, self.post.probs)


def _parse_key(value: str):
    try:
        return int(value)
    except ValueError:
        return value


def kl_curve(rows: Iterable[list], wallclock: dict[int, float], exact: ExactPosterior) -> list[list]:
    """Cumulative KL of the pooled estimate after each iteration.

    ``rows`` are samples.csv rows (strings accepted) in file order.  ``kl`` is
    the mean over the exact posterior's predict names and ``kl_sum`` their
    sum; for single-predict models they coincide.
    """
    accs = {name: _Accumulator(post) for name, post in exact.table.items()}
    out = []
    seen: set = set()
    current = None

    def flush(it):
        kls = [a.kl() for a in accs.values()]
        out.append([len(seen), _fmt_float(wallclock.get(it, math.nan)),
                    _fmt_float(float(np.mean(kls))), _fmt_float(float(np.sum(kls)))])

    for it, particle, name, value, weight in rows:
        it = int(it)
        if current is not None and it != current:
            flush(current)
        current = it
        seen.add((it, int(particle)))
        acc = accs.get(name)
        if acc is not None:
            acc.add(value, float(weight))
    if current is not None:
        flush(current)
    return out


def write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def read_csv(path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="") as f:
        r = csv.reader(f)
        header = next(r)
        return header, list(r)


def wallclock_from_diagnostics(rows) -> dict[int, float]:
    return {int(r[0]): float(r[1]) for r in rows}

