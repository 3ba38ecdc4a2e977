"""Hot inner loops of ICEnet training.

Each kernel exists twice: a vectorised numpy version (``*_numpy``) and a
loop version compiled with numba (``*_numba``).  The public name is bound to
one of them at import time, see :mod:`icenet._jit`.  Both versions are
exercised by the test-suite and compared in ``benchmarks/bench_kernels.py``.

All block arrays are ``(n_instances, K)`` float64, one row per instance and
one column per grid point.
"""
import numpy as np

from ._jit import USE_NUMBA, njit

__all__ = [
    "smooth_penalty",
    "mono_penalty",
    "scatter_add_rows",
    "window_starts",
    "BACKEND",
]

# coefficients of the third forward difference x[u] - 3x[u-1] + 3x[u-2] - x[u-3]
_D3 = np.array([-1.0, 3.0, -3.0, 1.0])


# --------------------------------------------------------------------------
# numpy reference paths
# --------------------------------------------------------------------------


def smooth_penalty_numpy(blocks, lam):
    n, k = blocks.shape
    values = np.zeros(n)
    grad = np.zeros((n, k))
    if k < 4 or lam == 0.0:
        return values, grad
    d3 = np.diff(blocks, n=3, axis=1)
    values = lam * np.sum(d3 * d3, axis=1)
    r = 2.0 * lam * d3
    m = k - 3
    for s, c in enumerate(_D3):
        grad[:, s:s + m] += c * r
    return values, grad


def mono_penalty_numpy(blocks, lam, direction):
    n, k = blocks.shape
    values = np.zeros(n)
    grad = np.zeros((n, k))
    if k < 2 or lam == 0.0:
        return values, grad
    signed = direction * np.diff(blocks, axis=1)
    active = signed > 0.0
    values = lam * np.sum(np.where(active, signed, 0.0), axis=1)
    g = np.where(active, lam * direction, 0.0)
    grad[:, 1:] += g
    grad[:, :-1] -= g
    return values, grad


def scatter_add_rows_numpy(table, idx, rows):
    np.add.at(table, idx, rows)


def window_starts_numpy(x, grid, width):
    k = grid.shape[0]
    hi = np.clip(np.searchsorted(grid, x, side="left"), 1, k - 1)
    lo = hi - 1
    # ties go to the lower grid point
    center = np.where(np.abs(x - grid[lo]) <= np.abs(grid[hi] - x), lo, hi)
    return np.clip(center - (width - 1) // 2, 0, k - width).astype(np.int64)


# --------------------------------------------------------------------------
# numba paths
# --------------------------------------------------------------------------


@njit
def smooth_penalty_numba(blocks, lam):
    n, k = blocks.shape
    values = np.zeros(n)
    grad = np.zeros((n, k))
    if k < 4 or lam == 0.0:
        return values, grad
    for i in range(n):
        acc = 0.0
        for u in range(3, k):
            d = blocks[i, u] - 3.0 * blocks[i, u - 1] + 3.0 * blocks[i, u - 2] - blocks[i, u - 3]
            acc += d * d
            r = 2.0 * lam * d
            grad[i, u] += r
            grad[i, u - 1] -= 3.0 * r
            grad[i, u - 2] += 3.0 * r
            grad[i, u - 3] -= r
        values[i] = lam * acc
    return values, grad


@njit
def mono_penalty_numba(blocks, lam, direction):
    n, k = blocks.shape
    values = np.zeros(n)
    grad = np.zeros((n, k))
    if k < 2 or lam == 0.0:
        return values, grad
    g = lam * direction
    for i in range(n):
        acc = 0.0
        for u in range(1, k):
            s = direction * (blocks[i, u] - blocks[i, u - 1])
            if s > 0.0:
                acc += s
                grad[i, u] += g
                grad[i, u - 1] -= g
        values[i] = lam * acc
    return values, grad


@njit
def scatter_add_rows_numba(table, idx, rows):
    n, b = rows.shape
    for i in range(n):
        r = idx[i]
        for c in range(b):
            table[r, c] += rows[i, c]


@njit
def window_starts_numba(x, grid, width):
    k = grid.shape[0]
    half = (width - 1) // 2
    out = np.empty(x.shape[0], dtype=np.int64)
    for i in range(x.shape[0]):
        xi = x[i]
        hi = np.searchsorted(grid, xi)
        if hi < 1:
            hi = 1
        elif hi > k - 1:
            hi = k - 1
        lo = hi - 1
        center = lo if abs(xi - grid[lo]) <= abs(grid[hi] - xi) else hi
        start = center - half
        if start < 0:
            start = 0
        elif start > k - width:
            start = k - width
        out[i] = start
    return out


# --------------------------------------------------------------------------
# dispatch
# --------------------------------------------------------------------------

if USE_NUMBA:
    BACKEND = "numba"
    _smooth, _mono, _scatter, _starts = (
        smooth_penalty_numba, mono_penalty_numba, scatter_add_rows_numba, window_starts_numba)
else:
    BACKEND = "numpy"
    _smooth, _mono, _scatter, _starts = (
        smooth_penalty_numpy, mono_penalty_numpy, scatter_add_rows_numpy, window_starts_numpy)


def smooth_penalty(blocks, lam):
    """Per-row ``lam * sum_u (third difference)^2`` and its gradient w.r.t. ``blocks``.

    Rows with fewer than four grid points give zero value and gradient.
    """
    return _smooth(np.ascontiguousarray(blocks, dtype=np.float64), float(lam))


def mono_penalty(blocks, lam, direction):
    """Per-row ``lam * sum_u max(direction * first difference, 0)`` and its gradient.

    ``direction=-1`` penalises decreases.  The hinge subgradient at exactly
    zero is taken as zero.
    """
    return _mono(np.ascontiguousarray(blocks, dtype=np.float64), float(lam), float(direction))


def scatter_add_rows(table, idx, rows):
    """In place ``table[idx[i]] += rows[i]`` with repeated indices accumulated."""
    _scatter(table, np.ascontiguousarray(idx, dtype=np.int64),
             np.ascontiguousarray(rows, dtype=np.float64))


def window_starts(x, grid, width):
    """First grid index of a ``width``-point window centred on each ``x``.

    The centre is the nearest grid point (ties to the lower one); windows
    that would run past either end are shifted inwards so every window has
    exactly ``width`` points.  ``grid`` must be strictly increasing and
    ``width <= len(grid)``.
    """
    grid = np.ascontiguousarray(grid, dtype=np.float64)
    if width > grid.shape[0]:
        raise ValueError(f"window width {width} exceeds grid size {grid.shape[0]}")
    if grid.shape[0] == 1:
        return np.zeros(np.shape(x), dtype=np.int64)
    return _starts(np.ascontiguousarray(x, dtype=np.float64), grid, int(width))
