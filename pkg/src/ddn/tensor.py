"""Dense float64 arithmetic and counter-based random streams.

Tensors are plain ``numpy.ndarray`` objects of dtype float64. The helpers
here add the shape and finiteness checks the rest of the package relies on.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, NumericError, ParameterError

_MASK64 = (1 << 64) - 1


def as_tensor(x, name="tensor"):
    """Return ``x`` as a float64 array, rejecting NaN/Inf."""
    arr = np.asarray(x, dtype=np.float64)
    check_finite(arr, name)
    return arr


def check_finite(arr, name="tensor"):
    if not np.all(np.isfinite(arr)):
        raise NumericError(f"{name} contains non-finite values")
    return arr


def matmul(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2:
        raise DimensionError(f"matmul expects 2-d operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"inner dimensions differ: {a.shape} x {b.shape}")
    return check_finite(a @ b, "matmul result")


def softmax(z, temperature=1.0):
    """Softmax over the last axis with ``exp(z / T)`` weights.

    Works on a single logit vector or a batch (rows).
    """
    if not temperature > 0:
        raise ParameterError(f"temperature must be positive, got {temperature}")
    z = as_tensor(z, "logits") / temperature
    shifted = z - z.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(z):
    z = np.asarray(z, dtype=np.float64)
    shifted = z - z.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def _splitmix64(x):
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


@dataclass(frozen=True)
class RngStream:
    """Immutable handle on a Philox stream keyed by ``(seed, stream_id)``.

    Every call to :meth:`generator` starts the stream from its beginning, so
    a stream value always yields the same draws. Use :meth:`child` to get
    independent sub-streams (per layer, per MC sample, per training step).
    """

    seed: int
    stream_id: int = 0

    def __post_init__(self):
        for field_name in ("seed", "stream_id"):
            v = getattr(self, field_name)
            if not 0 <= int(v) <= _MASK64:
                raise ParameterError(f"{field_name} must fit in an unsigned 64-bit integer")
            object.__setattr__(self, field_name, int(v))

    def generator(self):
        key = np.array([self.seed, self.stream_id], dtype=np.uint64)
        return np.random.Generator(np.random.Philox(key=key))

    def child(self, *path):
        sid = self.stream_id
        for k in path:
            sid = _splitmix64(sid ^ _splitmix64(int(k) & _MASK64))
        return RngStream(self.seed, sid)

    def uniform(self, shape):
        return self.generator().random(shape)

    def normal(self, shape):
        return self.generator().standard_normal(shape)


def bernoulli_mask(shape, keep_prob, rng):
    """0/1 float mask whose entries are 1 with probability ``keep_prob``."""
    if not 0.0 < keep_prob <= 1.0:
        raise ParameterError(f"keep_prob must lie in (0, 1], got {keep_prob}")
    if keep_prob == 1.0:
        return np.ones(shape, dtype=np.float64)
    return (rng.uniform(shape) < keep_prob).astype(np.float64)
