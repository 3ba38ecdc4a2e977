"""Pseudo-data for ICE evaluation: full-grid and windowed copies of an instance."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .network import forward


@dataclass(frozen=True)
class WindowSpec:
    omega: int = 5

    def __post_init__(self):
        if self.omega < 5 or self.omega % 2 == 0:
            raise ValueError(f"window size must be odd and >= 5, got {self.omega}")


@dataclass
class PseudoBatch:
    """Copies of one instance that differ only in ``column``.

    ``grid_indices`` are 0-based positions in the column's grid, strictly
    increasing; ``grid_values`` are in network units.
    """

    column: str
    x_cont: np.ndarray
    x_cat: np.ndarray
    grid_indices: np.ndarray
    grid_values: np.ndarray

    def __len__(self) -> int:
        return len(self.grid_indices)


@dataclass
class IceBlock:
    column: str
    values: np.ndarray
    grid_indices: np.ndarray

    def __len__(self) -> int:
        return len(self.values)


def column_values(x_cont, x_cat, name: str, schema) -> np.ndarray:
    """Current value of ``name`` for every row, in network units."""
    pos = schema.position(name)
    if schema.kind(name) == "continuous":
        return np.asarray(x_cont, dtype=np.float64)[:, pos]
    return np.asarray(x_cat)[:, pos].astype(np.float64)


def expand(x_cont, x_cat, name: str, schema, values) -> tuple[np.ndarray, np.ndarray]:
    """Repeat each row ``w`` times and overwrite ``name`` with ``values[i, :]``.

    ``values`` has shape ``(n_rows, w)`` in network units; output rows are
    grouped by instance.
    """
    values = np.asarray(values)
    w = values.shape[1]
    xc = np.repeat(np.asarray(x_cont, dtype=np.float64), w, axis=0)
    xk = np.repeat(np.asarray(x_cat, dtype=np.int64), w, axis=0)
    pos = schema.position(name)
    if schema.kind(name) == "continuous":
        xc[:, pos] = values.ravel()
    else:
        xk[:, pos] = values.ravel().astype(np.int64)
    return xc, xk


def window_index(x_cont, x_cat, name: str, schema, omega: int) -> tuple[np.ndarray, int]:
    """Window start per row and the common width ``min(omega, K)``."""
    grid = schema.network_grid(name)
    width = min(omega, len(grid))
    starts = kernels.window_starts(column_values(x_cont, x_cat, name, schema), grid, width)
    return starts, width


def _single(x_cont, x_cat):
    x_cont = np.atleast_2d(np.asarray(x_cont, dtype=np.float64))
    x_cat = np.asarray(x_cat, dtype=np.int64).reshape(1, -1)
    if x_cont.shape[0] != 1:
        raise ValueError("expected a single instance")
    return x_cont, x_cat


def build_full(x_cont, x_cat, name: str, schema) -> PseudoBatch:
    x_cont, x_cat = _single(x_cont, x_cat)
    grid = schema.network_grid(name)
    xc, xk = expand(x_cont, x_cat, name, schema, grid[None, :])
    return PseudoBatch(name, xc, xk, np.arange(len(grid)), grid)


def build_window(x_cont, x_cat, name: str, schema, omega: int) -> PseudoBatch:
    """Window of ``min(omega, K)`` grid points around the instance's own value.

    Centred on the nearest grid point (ties to the lower one); near the ends
    of the grid the first or last ``omega`` points are used instead.
    """
    WindowSpec(omega)
    x_cont, x_cat = _single(x_cont, x_cat)
    starts, width = window_index(x_cont, x_cat, name, schema, omega)
    idx = starts[0] + np.arange(width)
    grid = schema.network_grid(name)[idx]
    xc, xk = expand(x_cont, x_cat, name, schema, grid[None, :])
    return PseudoBatch(name, xc, xk, idx, grid)


def evaluate_block(params, batch: PseudoBatch) -> IceBlock:
    """Apply the shared network to every pseudo-row (frequency scale, no exposure)."""
    mu, _ = forward(params, batch.x_cont, batch.x_cat)
    return IceBlock(batch.column, mu, batch.grid_indices.copy())
