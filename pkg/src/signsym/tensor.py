"""Dense float64 kernels and seeded random streams.

Tensors are plain ``numpy.ndarray`` objects of dtype float64 (C order).  The
helpers below add the checks the rest of the package relies on: shape
errors that name both operands, and rejection of NaN/Inf inputs instead of
silently propagating them.
"""

from __future__ import annotations

import numpy as np

from .errors import DimensionError, NonFiniteError, RangeError

DTYPE = np.float64


def as_tensor(x, name: str = "tensor") -> np.ndarray:
    """Return ``x`` as a C-contiguous float64 array, rejecting non-finite values."""
    arr = np.ascontiguousarray(x, dtype=DTYPE)
    check_finite(arr, name)
    return arr


def check_finite(arr: np.ndarray, name: str = "tensor") -> None:
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError(f"{name} contains NaN or Inf")


def matmul(a, b) -> np.ndarray:
    a = as_tensor(a, "left operand")
    b = as_tensor(b, "right operand")
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"cannot multiply shapes {a.shape} and {b.shape}")
    out = a @ b
    check_finite(out, "matmul result")
    return out


def hadamard(a, b) -> np.ndarray:
    a = as_tensor(a, "left operand")
    b = as_tensor(b, "right operand")
    if a.shape != b.shape:
        raise DimensionError(f"hadamard needs identical shapes, got {a.shape} and {b.shape}")
    return a * b


def sign_of(a) -> np.ndarray:
    """Elementwise sign with sign(0) == 0."""
    return np.sign(as_tensor(a))


class SeededRng:
    """Deterministic random stream addressed by ``(seed, stream)``.

    Distinct stream ids give statistically independent generators; the same
    pair always reproduces the same draws (PCG64 is platform independent).
    """

    def __init__(self, seed: int, stream: int = 0):
        if seed < 0 or stream < 0:
            raise RangeError("seed and stream must be non-negative")
        self.seed = int(seed)
        self.stream = int(stream)
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=(self.stream,))
        self._gen = np.random.Generator(np.random.PCG64(ss))

    def __repr__(self) -> str:
        return f"SeededRng(seed={self.seed}, stream={self.stream})"

    def child(self, stream: int) -> "SeededRng":
        """A fresh generator on another stream of the same seed."""
        return SeededRng(self.seed, stream)

    @property
    def generator(self) -> np.random.Generator:
        return self._gen

    def uniform(self, shape, lo: float = 0.0, hi: float = 1.0) -> np.ndarray:
        return sample_uniform(self, shape, lo, hi)

    def normal(self, shape, loc: float = 0.0, scale: float = 1.0) -> np.ndarray:
        return self._gen.normal(loc, scale, size=shape)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def integers(self, lo: int, hi: int, size=None):
        return self._gen.integers(lo, hi, size=size)


def sample_uniform(rng: SeededRng, shape, lo: float, hi: float) -> np.ndarray:
    """I.i.d. draws in ``[lo, hi)``; advances ``rng``."""
    if not (np.isfinite(lo) and np.isfinite(hi)) or lo >= hi:
        raise RangeError(f"need lo < hi, got lo={lo}, hi={hi}")
    return rng.generator.uniform(lo, hi, size=shape)
