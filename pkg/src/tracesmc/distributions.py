"""Random streams, samplers and log-densities used by model programs.

Normal distributions are parameterized by mean and *variance*; gamma by
shape and rate.
"""

from __future__ import annotations

import hashlib
import math
import random
import struct

import numpy as np

LOG_2PI = math.log(2.0 * math.pi)
PROB_SUM_TOL = 1e-9


class RngStream:
    """A seeded random stream that can be split into keyed children.

    A stream is identified by a 128-bit key.  ``child(*keys)`` hashes the
    parent key together with integer keys, so a tree of streams is
    reproducible from the root seed regardless of the order children are
    made in.  Scalar draws go through ``py``, a :class:`random.Random` driven
    by a counter-mode hash of the key (cheap to create, which matters because
    every branch makes new streams).  Vector work such as resampling uses a
    numpy generator, ``gen``.  Both are built lazily.
    """

    __slots__ = ("key", "_py", "_gen")

    def __init__(self, seed: int | bytes) -> None:
        if isinstance(seed, bytes):
            self.key = seed
        else:
            self.key = _hash_key(b"root", int(seed))
        self._py = None
        self._gen = None

    def child(self, *keys: int) -> "RngStream":
        return RngStream(_hash_key(self.key, *keys))

    @property
    def py(self) -> random.Random:
        if self._py is None:
            self._py = KeyedRandom(self.key)
        return self._py

    @property
    def gen(self) -> np.random.Generator:
        if self._gen is None:
            words = np.frombuffer(self.key, dtype=np.uint32)
            self._gen = np.random.Generator(np.random.PCG64(np.random.SeedSequence(words)))
        return self._gen

    def uniform(self) -> float:
        return self.py.random()

    def __repr__(self) -> str:
        return f"RngStream({self.key.hex()})"


class KeyedRandom(random.Random):
    """``random.Random`` whose bits come from BLAKE2b over (key, counter)."""

    def __init__(self, key: bytes) -> None:
        self._key = key
        self._counter = 0
        self._buf: tuple = ()
        self._pos = 0
        super().__init__()

    def seed(self, *args, **kwargs) -> None:
        self.gauss_next = None

    def _next64(self) -> int:
        if self._pos == len(self._buf):
            h = hashlib.blake2b(self._key, digest_size=64)
            h.update(self._counter.to_bytes(8, "little"))
            self._counter += 1
            self._buf = _UNPACK8(h.digest())
            self._pos = 0
        x = self._buf[self._pos]
        self._pos += 1
        return x

    def random(self) -> float:
        return (self._next64() >> 11) * _TWO_M53

    def getrandbits(self, k: int) -> int:
        if k < 0:
            raise ValueError("number of bits must be non-negative")
        out, have = 0, 0
        while have < k:
            out |= self._next64() << have
            have += 64
        return out & ((1 << k) - 1)

    def getstate(self):
        return (self._key, self._counter, self._buf, self._pos, self.gauss_next)

    def setstate(self, state) -> None:
        self._key, self._counter, self._buf, self._pos, self.gauss_next = state


_UNPACK8 = struct.Struct("<8Q").unpack
_TWO_M53 = 2.0**-53


def _hash_key(prefix: bytes, *keys: int) -> bytes:
    h = hashlib.blake2b(prefix, digest_size=16)
    for k in keys:
        h.update(int(k).to_bytes(16, "little", signed=True))
    return h.digest()


def _check_variance(var: float) -> None:
    if not var > 0:
        raise ValueError(f"variance must be positive, got {var}")


def normal_rng(stream: RngStream, mu: float, var: float) -> float:
    _check_variance(var)
    return stream.py.gauss(mu, math.sqrt(var))


def normal_lnp(x: float, mu: float, var: float) -> float:
    """Log density of ``N(mu, var)`` at ``x``."""
    _check_variance(var)
    d = x - mu
    return -0.5 * (LOG_2PI + math.log(var)) - 0.5 * d * d / var


def gamma_rng(stream: RngStream, shape: float, rate: float) -> float:
    if not (shape > 0 and rate > 0):
        raise ValueError(f"gamma parameters must be positive, got shape={shape}, rate={rate}")
    return stream.py.gammavariate(shape, 1.0 / rate)


def check_probs(probs, k: int | None = None) -> list[float]:
    """Validate a probability vector, renormalizing within ``PROB_SUM_TOL``."""
    p = [float(x) for x in probs]
    if k is not None and len(p) != k:
        raise ValueError(f"expected {k} probabilities, got {len(p)}")
    if not p:
        raise ValueError("probabilities must be a non-empty vector")
    if min(p) < 0 or not all(map(math.isfinite, p)):
        raise ValueError("probabilities must be finite and non-negative")
    total = math.fsum(p)
    if abs(total - 1.0) > PROB_SUM_TOL:
        raise ValueError(f"probabilities sum to {total}, not 1")
    if total != 1.0:
        p = [x / total for x in p]
    return p


def _categorical(stream: RngStream, p) -> int:
    u = stream.py.random()
    acc = 0.0
    last = 0
    for i, pi in enumerate(p):
        if pi <= 0:
            continue
        acc += pi
        last = i
        if u < acc:
            return i
    # u landed in the rounding gap above the cumulative sum
    return last


def discrete_rng(stream: RngStream, probs, k: int | None = None) -> int:
    """Draw ``i`` with probability ``probs[i]``."""
    return _categorical(stream, check_probs(probs, k))


class PolyaUrn:
    """Blackwell-MacQueen urn: the sequential Chinese restaurant process."""

    __slots__ = ("alpha", "counts", "total")

    def __init__(self, alpha: float) -> None:
        if not alpha > 0:
            raise ValueError("concentration must be positive")
        self.alpha = float(alpha)
        self.counts: list[int] = []
        self.total = 0

    def probabilities(self) -> list[float]:
        """Probability of each existing class, then of a fresh class."""
        z = self.total + self.alpha
        return [c / z for c in self.counts] + [self.alpha / z]

    def add(self, k: int) -> None:
        if k == len(self.counts):
            self.counts.append(1)
        elif 0 <= k < len(self.counts):
            self.counts[k] += 1
        else:
            raise ValueError(f"class {k} is neither existing nor the next fresh id")
        self.total += 1

    @property
    def num_classes(self) -> int:
        return len(self.counts)


def polya_urn_draw(urn: PolyaUrn, stream: RngStream) -> int:
    k = _categorical(stream, urn.probabilities())
    urn.add(k)
    return k


class Memo:
    """Stochastic memoization table for one wrapped function.

    ``f`` is called as ``f(ctx, arg)`` the first time ``arg`` is seen; later
    calls with an equal argument return the stored value without drawing.
    The table should be created inside the model body so that it belongs to
    a single execution trace.
    """

    def __init__(self, f) -> None:
        self.f = f
        self.table: dict = {}

    def __call__(self, ctx, arg):
        return memoize_invoke(self, ctx, arg)


def memoize_invoke(memo: Memo, ctx, arg):
    try:
        return memo.table[arg]
    except KeyError:
        value = memo.table[arg] = memo.f(ctx, arg)
        return value
