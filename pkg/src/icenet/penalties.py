"""Difference operators, smoothing/monotonicity penalties and the compound loss.

Blocks are ICE outputs of one instance for one column, ordered along the
column's grid.  Functions accept a single block (1-D) or a stack of blocks
(2-D, one row per instance).
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from . import kernels

logger = logging.getLogger(__name__)

SMOOTH_ORDER = 3

# per-column (smooth_lambda, mono_lambda, direction) for the French MTPL covariates
GLOBAL_PRESET = {
    "DrivAge": (10.0, 0.0, -1),
    "VehAge": (1.0, 0.0, -1),
    "BonusMalus": (1.0, 100.0, -1),
    "Density": (1.0, 100.0, -1),
    "VehPower": (1.0, 100.0, -1),
}
LOCAL_PRESET = {
    "DrivAge": (200.0, 0.0, -1),
    "VehAge": (10.0, 0.0, -1),
    "BonusMalus": (10.0, 200.0, -1),
    "Density": (10.0, 200.0, -1),
    "VehPower": (10.0, 200.0, -1),
}
LOCAL_WINDOW = 5


@dataclass(frozen=True)
class ColumnConstraint:
    smooth_lambda: float = 0.0
    mono_lambda: float = 0.0
    direction: int = -1  # -1 enforces increase, +1 enforces decrease

    @property
    def active(self) -> bool:
        return self.smooth_lambda > 0 or self.mono_lambda > 0


@dataclass
class ConstraintSpec:
    columns: dict[str, ColumnConstraint] = field(default_factory=dict)
    penalty_on_exposure_scale: bool = False

    @classmethod
    def from_table(cls, table: dict, **kw) -> "ConstraintSpec":
        return cls({k: ColumnConstraint(float(s), float(m), int(d)) for k, (s, m, d) in table.items()}, **kw)

    @property
    def smooth_set(self) -> list[str]:
        return [k for k, c in self.columns.items() if c.smooth_lambda > 0]

    @property
    def mono_set(self) -> list[str]:
        return [k for k, c in self.columns.items() if c.mono_lambda > 0]

    @property
    def active_columns(self) -> list[str]:
        return [k for k, c in self.columns.items() if c.active]

    def scaled(self, factor: float) -> "ConstraintSpec":
        """Copy with every smoothing and monotonicity lambda multiplied by ``factor``."""
        cols = {k: replace(c, smooth_lambda=c.smooth_lambda * factor, mono_lambda=c.mono_lambda * factor)
                for k, c in self.columns.items()}
        return ConstraintSpec(cols, self.penalty_on_exposure_scale)

    def problems(self, schema=None) -> list[str]:
        out = []
        for k, c in self.columns.items():
            if c.smooth_lambda < 0 or c.mono_lambda < 0:
                out.append(f"constraint {k!r}: lambdas must be >= 0")
            if c.direction not in (-1, 1):
                out.append(f"constraint {k!r}: direction must be -1 or +1, got {c.direction}")
            if schema is not None and c.active and k not in schema.grids:
                out.append(f"constraint {k!r}: column has no grid in the schema")
        return out

    def to_dict(self) -> dict:
        return {
            "columns": {k: {"smooth_lambda": c.smooth_lambda, "mono_lambda": c.mono_lambda,
                            "direction": c.direction} for k, c in self.columns.items()},
            "penalty_on_exposure_scale": self.penalty_on_exposure_scale,
        }


def diff(seq, order: int = 1) -> np.ndarray:
    """Backward difference of the given order along the last axis."""
    seq = np.asarray(seq, dtype=np.float64)
    if order < 1:
        raise ValueError("difference order must be >= 1")
    if seq.shape[-1] <= order:
        raise ValueError(f"sequence of length {seq.shape[-1]} is too short for order {order}")
    out = seq
    for _ in range(order):
        out = out[..., 1:] - out[..., :-1]
    return out


def _as_blocks(block):
    b = np.asarray(block, dtype=np.float64)
    return b[None, :] if b.ndim == 1 else b, b.ndim == 1


def smoothing_loss(block, lam: float):
    """``lam * sum (third difference)^2``; blocks shorter than 4 give 0 with a warning."""
    blocks, single = _as_blocks(block)
    if blocks.shape[1] < SMOOTH_ORDER + 1:
        logger.warning("block of length %d is too short for smoothing; skipped", blocks.shape[1])
    values, _ = kernels.smooth_penalty(blocks, lam)
    return float(values[0]) if single else values


def monotonicity_loss(block, lam: float, direction: int):
    """``lam * sum max(direction * first difference, 0)``."""
    if direction not in (-1, 1):
        raise ValueError("direction must be -1 or +1")
    blocks, single = _as_blocks(block)
    values, _ = kernels.mono_penalty(blocks, lam, direction)
    return float(values[0]) if single else values


def poisson_deviance(y, y_hat):
    """Unit Poisson deviance ``2 (y_hat - y + y log(y / y_hat))``, elementwise.

    The log term is 0 where ``y == 0``.
    """
    y = np.asarray(y, dtype=np.float64)
    y_hat = np.asarray(y_hat, dtype=np.float64)
    if np.any(y_hat <= 0):
        raise ValueError("predictions must be positive")
    safe_y = np.where(y > 0, y, 1.0)
    log_term = np.where(y > 0, y * np.log(safe_y / y_hat), 0.0)
    return 2.0 * (y_hat - y + log_term)


def mean_poisson_deviance(y, y_hat) -> float:
    return float(np.mean(poisson_deviance(y, y_hat)))


def _column_parts(block, c: ColumnConstraint):
    blocks, _ = _as_blocks(block)
    s = np.zeros(blocks.shape[0])
    m = np.zeros(blocks.shape[0])
    if c.smooth_lambda > 0 and blocks.shape[1] > SMOOTH_ORDER:
        s, _ = kernels.smooth_penalty(blocks, c.smooth_lambda)
    if c.mono_lambda > 0:
        m, _ = kernels.mono_penalty(blocks, c.mono_lambda, c.direction)
    return s, m


def compound_loss(y, y_hat, blocks: dict, spec: ConstraintSpec):
    """Per-observation loss ``deviance + smoothing + monotonicity``.

    Returns ``(total, parts)`` where ``parts`` has keys ``deviance``,
    ``smoothing`` and ``monotonicity``.  Scalars in, scalars out; arrays of
    observations (with 2-D blocks) give arrays.
    """
    dev = poisson_deviance(y, y_hat)
    smooth = np.zeros_like(dev)
    mono = np.zeros_like(dev)
    for name in spec.active_columns:
        if name not in blocks:
            raise KeyError(f"no ICE block supplied for constrained column {name!r}")
        s, m = _column_parts(blocks[name], spec.columns[name])
        smooth = smooth + (s[0] if dev.ndim == 0 else s)
        mono = mono + (m[0] if dev.ndim == 0 else m)
    total = dev + smooth + mono
    parts = {"deviance": dev, "smoothing": smooth, "monotonicity": mono}
    if dev.ndim == 0:
        return float(total), {k: float(v) for k, v in parts.items()}
    return total, parts


def penalty_grads(blocks: dict, spec: ConstraintSpec) -> dict:
    """d(smoothing + monotonicity) / d block for every supplied constrained column."""
    out = {}
    for name, block in blocks.items():
        c = spec.columns.get(name)
        b, single = _as_blocks(block)
        g = np.zeros_like(b)
        if c is not None:
            if c.smooth_lambda > 0 and b.shape[1] > SMOOTH_ORDER:
                g += kernels.smooth_penalty(b, c.smooth_lambda)[1]
            if c.mono_lambda > 0:
                g += kernels.mono_penalty(b, c.mono_lambda, c.direction)[1]
        out[name] = g[0] if single else g
    return out
