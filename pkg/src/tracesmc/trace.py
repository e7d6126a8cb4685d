"""Model programs, execution traces and resumable particles.

A model program is a Python generator function taking an
:class:`InferenceContext`.  Random choices go through the context so they are
recorded; every ``yield`` is an observe statement whose yielded value is the
log-likelihood increment ``ln g(y_n | x_1:n)``::

    @model(observes=2)
    def gaussian(ctx):
        mu = ctx.normal_rng(1.0, 5.0)
        yield normal_lnp(9.0, mu, 2.0)
        yield normal_lnp(8.0, mu, 2.0)
        ctx.predict("mu", mu)

Particles pause at each ``yield``.  Branching a paused particle is done by
checkpoint and replay: a child re-executes the program while being fed the
parent's recorded choice values, then continues on its own random stream.
This relies on the program being deterministic given its choices.
"""

from __future__ import annotations

import math
import types
from dataclasses import dataclass, field
from typing import Any, Callable, NamedTuple

from . import distributions as D
from .distributions import RngStream


class ContractError(RuntimeError):
    """A model program or caller broke a runtime contract."""


class ModelFault(RuntimeError):
    """The model program raised while being executed."""


class ReplayMismatch(ContractError):
    """Re-executing a recorded prefix did not reproduce the recorded trace."""


@dataclass(frozen=True, slots=True)
class ChoiceRecord:
    index: int
    dist_id: str
    params: tuple
    value: Any


@dataclass(frozen=True, slots=True)
class PredictRecord:
    """A predicted value; ``raw`` is the value, ``value`` its printf rendering."""

    name: str
    raw: Any
    observe_index: int
    fmt: str | None = None

    @property
    def value(self) -> str:
        return format_value(self.raw, self.fmt)

    def line(self) -> str:
        return f"{self.name},{self.value}"


@dataclass
class ExecutionTrace:
    choices: list[ChoiceRecord] = field(default_factory=list)
    observe_logw: list[float] = field(default_factory=list)
    predicts: list[PredictRecord] = field(default_factory=list)
    # number of choices made when each observe was reached
    barrier_choices: list[int] = field(default_factory=list)

    @property
    def observe_count(self) -> int:
        return len(self.observe_logw)

    def predict_values(self, name: str) -> list[Any]:
        return [p.raw for p in self.predicts if p.name == name]


def format_value(value: Any, fmt: str | None = None) -> str:
    if fmt is not None:
        return fmt % value
    if isinstance(value, bool):
        return "%d" % value
    if isinstance(value, int):
        return "%d" % value
    if isinstance(value, float):
        return "%f" % value
    return str(value)


class InferenceContext:
    """The runtime handle passed to a model program.

    Owns the trace being built, the particle's random stream and, while a
    branch is being replayed, the recorded choices to feed back.
    """

    __slots__ = ("trace", "stream", "_replay", "_cursor")

    def __init__(self, stream: RngStream, replay: list[ChoiceRecord] | None = None) -> None:
        self.trace = ExecutionTrace()
        self.stream = stream
        self._replay = replay
        self._cursor = 0

    @property
    def replaying(self) -> bool:
        return self._replay is not None and self._cursor < len(self._replay)

    def _replayed(self, dist_id: str) -> Any:
        rec = self._replay[self._cursor]
        if rec.dist_id != dist_id:
            raise ReplayMismatch(
                f"choice {self._cursor}: recorded {rec.dist_id!r}, program asked for {dist_id!r}"
            )
        self._cursor += 1
        self.trace.choices.append(rec)
        return rec.value

    def _record(self, dist_id: str, params: tuple, value: Any) -> Any:
        choices = self.trace.choices
        choices.append(ChoiceRecord(len(choices), dist_id, params, value))
        return value

    def normal_rng(self, mu: float, var: float) -> float:
        if self._replay is not None and self._cursor < len(self._replay):
            return self._replayed("normal")
        return self._record("normal", (mu, var), D.normal_rng(self.stream, mu, var))

    def gamma_rng(self, shape: float, rate: float) -> float:
        if self._replay is not None and self._cursor < len(self._replay):
            return self._replayed("gamma")
        return self._record("gamma", (shape, rate), D.gamma_rng(self.stream, shape, rate))

    def discrete_rng(self, probs, k: int | None = None) -> int:
        if self._replay is not None and self._cursor < len(self._replay):
            return self._replayed("discrete")
        return self._record("discrete", tuple(probs), D.discrete_rng(self.stream, probs, k))

    def polya_urn_draw(self, urn: D.PolyaUrn) -> int:
        if self._replay is not None and self._cursor < len(self._replay):
            k = self._replayed("polya_urn")
        else:
            k = self._record(
                "polya_urn", (urn.alpha, *urn.counts), D._categorical(self.stream, urn.probabilities())
            )
        urn.add(k)
        return k

    def predict(self, name: str, value: Any, fmt: str | None = None) -> None:
        if not name:
            raise ContractError("predict name must be non-empty")
        if fmt is not None:
            fmt % value  # fail at the predict call on a bad directive
        self.trace.predicts.append(PredictRecord(name, value, len(self.trace.observe_logw), fmt))


@dataclass(frozen=True)
class Model:
    """A model program plus its declared observe count (``None`` if undeclared)."""

    fn: Callable[[InferenceContext], Any]
    observes: int | None = None
    name: str = ""

    def __call__(self, ctx: InferenceContext):
        return self.fn(ctx)


def model(observes: int | None = None, name: str | None = None):
    def wrap(fn):
        return Model(fn, observes, name or fn.__name__)

    return wrap


AT_BARRIER = "at-barrier"
COMPLETED = "completed"
KILLED = "killed"
FAILED = "failed"


class BarrierEvent(NamedTuple):
    kind: str  # "observe" or "complete"
    n: int  # observes passed so far
    logw: float | None = None


class Particle:
    """A resumable program execution paused at an observe barrier."""

    __slots__ = ("model", "ctx", "gen", "status", "cum_logw", "started")

    def __init__(self, model: Model, stream: RngStream, replay=None) -> None:
        self.model = model
        self.ctx = InferenceContext(stream, replay)
        self.gen = None
        self.started = False
        self.status = AT_BARRIER
        self.cum_logw = 0.0

    @property
    def trace(self) -> ExecutionTrace:
        return self.ctx.trace

    @property
    def stream(self) -> RngStream:
        return self.ctx.stream

    @property
    def n(self) -> int:
        return self.ctx.trace.observe_count

    def __repr__(self) -> str:
        return f"Particle({self.model.name}, {self.status}, n={self.n})"


ParticleHandle = Particle


def start_particle(model: Model, seed: int | RngStream) -> Particle:
    stream = seed if isinstance(seed, RngStream) else RngStream(seed)
    return Particle(model, stream)


def _finish(p: Particle) -> BarrierEvent:
    p.status = COMPLETED
    p.gen = None
    declared = p.model.observes
    if declared is not None and p.n != declared:
        raise ContractError(f"{p.model.name}: completed after {p.n} observes, declared {declared}")
    return BarrierEvent("complete", p.n)


def run_to_barrier(p: Particle) -> BarrierEvent:
    """Advance ``p`` to its next observe, or to completion."""
    if p.status != AT_BARRIER:
        raise ContractError(f"cannot advance a {p.status} particle")
    try:
        if not p.started:
            p.started = True
            p.gen = p.model(p.ctx)
            if not isinstance(p.gen, types.GeneratorType):
                return _finish(p)
        lnw = next(p.gen)
    except StopIteration:
        return _finish(p)
    except ContractError:
        p.status = FAILED
        raise
    except Exception as exc:
        p.status = FAILED
        raise ModelFault(f"{p.model.name} raised at observe {p.n}: {exc!r}") from exc

    lnw = float(lnw)
    if math.isnan(lnw) or lnw == math.inf:
        p.status = FAILED
        raise ContractError(f"{p.model.name}: observe increment {lnw} at observe {p.n + 1}")
    trace = p.ctx.trace
    trace.barrier_choices.append(len(trace.choices))
    trace.observe_logw.append(lnw)
    declared = p.model.observes
    n = len(trace.observe_logw)
    if declared is not None and n > declared:
        p.status = FAILED
        raise ContractError(f"{p.model.name}: more than the declared {declared} observes")
    p.cum_logw += lnw
    return BarrierEvent("observe", n, lnw)


def replay_to_barrier(
    model: Model,
    choices: list[ChoiceRecord],
    n: int,
    stream: RngStream,
    expected_logw: list[float] | None = None,
) -> Particle:
    """Rebuild a particle paused at observe ``n`` from a recorded choice prefix.

    ``choices`` must be exactly the choices made before observe ``n`` was
    reached.  Once the prefix is consumed the particle draws from ``stream``.
    """
    p = Particle(model, stream, replay=choices)
    for _ in range(n):
        ev = run_to_barrier(p)
        if ev.kind != "observe":
            raise ReplayMismatch(f"{model.name}: replay completed before observe {n}")
    ctx = p.ctx
    if ctx._cursor != len(choices):
        raise ReplayMismatch(
            f"{model.name}: replay used {ctx._cursor} of {len(choices)} recorded choices"
        )
    if expected_logw is not None and ctx.trace.observe_logw != list(expected_logw[:n]):
        raise ReplayMismatch(f"{model.name}: replayed observe increments differ")
    ctx._replay = None
    p.cum_logw = 0.0
    return p


def branch(p: Particle, count: int, child_seeds: list[int]) -> list[Particle]:
    """Split ``p`` into ``count`` particles; ``p`` is consumed.

    Every child has ``p``'s trace and a stream keyed from ``p``'s stream by
    its child seed.  The first child takes over ``p``'s paused execution; the
    rest are rebuilt by replay.  All children keep ``p``'s accumulated weight.
    """
    if p.status != AT_BARRIER:
        raise ContractError(f"cannot branch a {p.status} particle")
    if count < 1 or len(child_seeds) != count:
        raise ContractError("branch needs count >= 1 and one seed per child")
    trace = p.ctx.trace
    children = []
    for seed in child_seeds[1:]:
        stream = p.stream.child(seed)
        if p.started:
            c = replay_to_barrier(p.model, trace.choices, trace.observe_count, stream, trace.observe_logw)
        else:
            c = Particle(p.model, stream)
        c.cum_logw = p.cum_logw
        children.append(c)
    first = Particle.__new__(Particle)
    first.model = p.model
    first.ctx = p.ctx
    first.gen = p.gen
    first.started = p.started
    first.status = AT_BARRIER
    first.cum_logw = p.cum_logw
    first.ctx.stream = p.stream.child(child_seeds[0])
    p.ctx = InferenceContext(p.stream)
    p.gen = None
    p.status = KILLED
    return [first, *children]


def kill(p: Particle) -> None:
    if p.gen is not None:
        p.gen.close()
        p.gen = None
    if p.status != KILLED:
        p.status = KILLED
        p.ctx = InferenceContext(p.ctx.stream)
