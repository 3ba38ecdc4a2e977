"""Dense float64 primitives used by the network.

Matrices are plain 2-D ``numpy.ndarray`` objects of dtype float64 (row-major).
There is no general autograd here: :mod:`icenet.network` hand-derives the
backward pass for its fixed topology and writes into a :class:`GradTape`.
"""
from __future__ import annotations

import numpy as np

ETA_MAX = 30.0


class DimensionError(ValueError):
    """Operand shapes are incompatible."""


def as_matrix(x) -> np.ndarray:
    m = np.asarray(x, dtype=np.float64)
    if m.ndim == 1:
        m = m[:, None]
    if m.ndim != 2:
        raise DimensionError(f"expected a 2-D matrix, got shape {m.shape}")
    return m


def matmul(a, b) -> np.ndarray:
    a = as_matrix(a)
    b = as_matrix(b)
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"cannot multiply {a.shape} by {b.shape}")
    out = a @ b
    if not np.all(np.isfinite(out)):
        raise FloatingPointError("matmul produced non-finite entries")
    return out


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def relu_grad(x: np.ndarray) -> np.ndarray:
    """Indicator of ``x > 0``; the subgradient at 0 is 0."""
    return (np.asarray(x) > 0.0).astype(np.float64)


def exp_link(eta):
    """Inverse log link with the pre-activation clamped to ``[-ETA_MAX, ETA_MAX]``."""
    return np.exp(np.clip(eta, -ETA_MAX, ETA_MAX))


def exp_link_grad(eta):
    """d exp_link / d eta: ``exp(eta)`` inside the clamp, 0 where the clamp is active."""
    eta = np.asarray(eta, dtype=np.float64)
    inside = np.abs(eta) <= ETA_MAX
    return np.where(inside, np.exp(np.clip(eta, -ETA_MAX, ETA_MAX)), 0.0)


class GradTape:
    """Gradient accumulators with the same shapes as a parameter list.

    ``arrays`` is ordered like :meth:`icenet.network.NetworkParams.arrays`.
    """

    def __init__(self, shapes):
        self.arrays = [np.zeros(s) for s in shapes]

    @classmethod
    def like(cls, arrays) -> "GradTape":
        return cls([a.shape for a in arrays])

    @property
    def shapes(self):
        return [a.shape for a in self.arrays]

    def reset(self) -> None:
        for a in self.arrays:
            a.fill(0.0)

    def add(self, other: "GradTape") -> None:
        if other.shapes != self.shapes:
            raise DimensionError("tape shapes differ")
        for a, b in zip(self.arrays, other.arrays):
            a += b

    def scale(self, factor: float) -> None:
        for a in self.arrays:
            a *= factor

    @classmethod
    def merge(cls, tapes) -> "GradTape":
        """Sum tapes in the given order (deterministic reduction)."""
        tapes = list(tapes)
        out = cls(tapes[0].shapes)
        for t in tapes:
            out.add(t)
        return out

    def is_zero(self) -> bool:
        return all(not np.any(a) for a in self.arrays)

    def flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.arrays])
