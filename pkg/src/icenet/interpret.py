"""ICE curves, partial dependence, per-instance constraint audits and CSV export."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import kernels
from ._io import atomic_write_csv
from .ice_builder import build_full, evaluate_block, expand
from .network import predict
from .penalties import SMOOTH_ORDER

ICE_COLUMNS = ("instance_id", "column", "grid_index", "grid_value", "prediction")
PDP_COLUMNS = ("column", "grid_index", "grid_value", "mean_prediction")
AUDIT_COLUMNS = ("instance_id", "column", "smooth_score", "mono_score")
DIFF_COLUMNS = ("instance_id", "column", "smooth_diff", "mono_diff")

# rows pushed through the network per call when evaluating ICE grids
_ROWS = 65536


def ice_curve(params, x_cont, x_cat, v: float, column: str, schema) -> np.ndarray:
    """Expected counts ``mu(x with column = a_u) * v`` over the column's grid."""
    return evaluate_block(params, build_full(x_cont, x_cat, column, schema)).values * float(v)


def ice_matrix(params, data, column: str, schema, exposure: bool = True) -> np.ndarray:
    """ICE curves of every instance in ``data`` as an ``(n, K)`` array.

    With ``exposure=False`` the curves are on the frequency scale.
    """
    grid = schema.network_grid(column)
    k = len(grid)
    n = len(data)
    out = np.empty((n, k))
    step = max(1, _ROWS // k)
    for a in range(0, n, step):
        sl = slice(a, min(a + step, n))
        xc, xk = expand(data.x_cont[sl], data.x_cat[sl], column, schema, np.broadcast_to(grid, (sl.stop - a, k)))
        out[sl] = predict(params, xc, xk, chunk=_ROWS).reshape(-1, k)
    if exposure:
        out *= data.v[:, None]
    return out


def pdp(params, data, column: str, schema, exposure_weighted: bool = False) -> np.ndarray:
    """Mean ICE curve.

    Default: ``sum_n mu_n(a_u) v_n / N``.  ``exposure_weighted`` divides by
    ``sum_n v_n`` instead, giving a frequency-level curve.
    """
    if len(data) == 0:
        raise ValueError("partial dependence needs at least one instance")
    curves = ice_matrix(params, data, column, schema)
    total = curves.sum(axis=0)
    return total / data.v.sum() if exposure_weighted else total / len(data)


@dataclass
class AuditTable:
    """Unit-weight smoothing and monotonicity scores, one row per instance.

    ``smooth[:, c]`` and ``mono[:, c]`` belong to ``columns[c]``.
    """

    instance_ids: np.ndarray
    columns: list[str]
    smooth: np.ndarray
    mono: np.ndarray

    def __len__(self) -> int:
        return len(self.instance_ids)

    def scores(self, kind: str) -> np.ndarray:
        if kind not in ("smooth", "mono"):
            raise ValueError("kind must be 'smooth' or 'mono'")
        return self.smooth if kind == "smooth" else self.mono

    def mean(self, column: str, kind: str) -> float:
        return float(self.scores(kind)[:, self.columns.index(column)].mean())

    def rows(self):
        for i, iid in enumerate(self.instance_ids):
            for c, name in enumerate(self.columns):
                yield iid, name, float(self.smooth[i, c]), float(self.mono[i, c])

    def difference(self, other: "AuditTable") -> "AuditTable":
        """``other - self`` per instance and column (e.g. constrained minus unconstrained)."""
        if self.columns != other.columns or not np.array_equal(self.instance_ids, other.instance_ids):
            raise ValueError("audits cover different instances or columns")
        return AuditTable(self.instance_ids, self.columns, other.smooth - self.smooth, other.mono - self.mono)


def audit(params, data, spec, schema) -> AuditTable:
    """Score every instance on every constrained column over the full grid.

    Scores are the smoothing and monotonicity penalties with lambda = 1 on
    frequency-scale ICE outputs; the configured lambdas only weight training.
    """
    columns = [c for c in spec.columns if c in schema.grids]
    n = len(data)
    smooth = np.zeros((n, len(columns)))
    mono = np.zeros((n, len(columns)))
    for j, name in enumerate(columns):
        blocks = ice_matrix(params, data, name, schema, exposure=False)
        if blocks.shape[1] > SMOOTH_ORDER:
            smooth[:, j] = kernels.smooth_penalty(blocks, 1.0)[0]
        mono[:, j] = kernels.mono_penalty(blocks, 1.0, spec.columns[name].direction)[0]
    return AuditTable(np.asarray(data.row_ids), columns, smooth, mono)


def worst_offenders(table: AuditTable, column: str, kind: str = "mono", k: int = 4) -> np.ndarray:
    """Row positions of the ``k`` highest scores; ties broken by ascending instance id."""
    s = table.scores(kind)[:, table.columns.index(column)]
    order = np.lexsort((np.asarray(table.instance_ids), -s))
    return order[:k]


@dataclass
class IceRecord:
    instance_id: object
    column: str
    grid_values: list
    predictions: np.ndarray


def ice_records(params, data, column: str, schema, positions) -> list[IceRecord]:
    sub = data.take(np.asarray(positions, dtype=np.int64))
    curves = ice_matrix(params, sub, column, schema)
    labels = schema.grid_labels(column)
    return [IceRecord(iid, column, labels, curves[i]) for i, iid in enumerate(sub.row_ids)]


def export_curves(curves, path) -> None:
    rows = []
    for rec in curves:
        for u, (a, p) in enumerate(zip(rec.grid_values, rec.predictions), start=1):
            rows.append((rec.instance_id, rec.column, u, a, float(p)))
    atomic_write_csv(path, ICE_COLUMNS, rows)


def export_pdp(pdps: dict, schema, path) -> None:
    """``pdps`` maps column -> mean prediction per grid point."""
    rows = []
    for column, values in pdps.items():
        for u, (a, p) in enumerate(zip(schema.grid_labels(column), values), start=1):
            rows.append((column, u, a, float(p)))
    atomic_write_csv(path, PDP_COLUMNS, rows)


def export_audit(table: AuditTable, path, diff: bool = False) -> None:
    atomic_write_csv(path, DIFF_COLUMNS if diff else AUDIT_COLUMNS, list(table.rows()))


def read_pdp(path) -> dict:
    out: dict = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            out.setdefault(row["column"], []).append(float(row["mean_prediction"]))
    return {k: np.array(v) for k, v in out.items()}


def read_csv_rows(path) -> list[dict]:
    with open(Path(path), newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))
