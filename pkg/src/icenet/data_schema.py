"""CSV ingestion, preprocessing schema and learn/validation/test splitting."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import pandas as pd

DEFAULT_DISTINCT_CAP = 100
DEFAULT_PERCENTILES = 100


class DataError(ValueError):
    """Input data violates the expected format."""


class SchemaError(ValueError):
    """Schema cannot be fitted or applied."""


@dataclass(frozen=True)
class ColumnRoles:
    response: str
    exposure: str
    continuous: tuple[str, ...] = ()
    categorical: tuple[str, ...] = ()
    id: str | None = None

    @property
    def covariates(self) -> tuple[str, ...]:
        return tuple(self.continuous) + tuple(self.categorical)


@dataclass
class RawData:
    """Typed raw observations, stored column-wise.

    Row ``n`` is the record ``(response[n], exposure[n], {name: col[n]})``.
    """

    response: np.ndarray
    exposure: np.ndarray
    continuous: dict[str, np.ndarray]
    categorical: dict[str, np.ndarray]
    row_ids: np.ndarray

    def __len__(self) -> int:
        return len(self.response)

    def take(self, idx) -> "RawData":
        return RawData(
            response=self.response[idx],
            exposure=self.exposure[idx],
            continuous={k: v[idx] for k, v in self.continuous.items()},
            categorical={k: v[idx] for k, v in self.categorical.items()},
            row_ids=self.row_ids[idx],
        )

    def record(self, n: int) -> dict:
        rec = {"response": self.response[n], "exposure": self.exposure[n]}
        rec.update({k: v[n] for k, v in self.continuous.items()})
        rec.update({k: v[n] for k, v in self.categorical.items()})
        return rec


def _numeric(values: pd.Series, name: str) -> np.ndarray:
    out = pd.to_numeric(values.str.strip(), errors="coerce").to_numpy(dtype=np.float64)
    bad = np.flatnonzero(~np.isfinite(out))
    if bad.size:
        n = int(bad[0])
        raise DataError(f"row {n + 1}: column {name!r} value {values.iloc[n]!r} is not a finite number")
    return out


def ingest_csv(path, roles: ColumnRoles) -> RawData:
    """Read a UTF-8 CSV with a header row into typed columns.

    Rows are numbered from 1 (first data line) in error messages.
    """
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8")
    except (OSError, pd.errors.ParserError, UnicodeDecodeError) as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    frame.columns = [c.strip() for c in frame.columns]
    wanted = [roles.response, roles.exposure, *roles.covariates]
    if roles.id:
        wanted.append(roles.id)
    missing = [c for c in wanted if c not in frame.columns]
    if missing:
        raise DataError(f"missing column(s): {', '.join(missing)}")

    y = _numeric(frame[roles.response], roles.response)
    bad = np.flatnonzero((y < 0) | (y != np.round(y)))
    if bad.size:
        raise DataError(f"row {bad[0] + 1}: response must be a non-negative integer, got {y[bad[0]]!r}")
    v = _numeric(frame[roles.exposure], roles.exposure)
    bad = np.flatnonzero(v <= 0)
    if bad.size:
        raise DataError(f"row {bad[0] + 1}: exposure must be positive, got {v[bad[0]]!r}")

    cont = {c: _numeric(frame[c], c) for c in roles.continuous}
    cat = {}
    for c in roles.categorical:
        col = frame[c].str.strip().to_numpy(dtype=object)
        empty = np.flatnonzero(col == "")
        if empty.size:
            raise DataError(f"row {empty[0] + 1}: column {c!r} is empty")
        cat[c] = col
    ids = frame[roles.id].to_numpy(dtype=object) if roles.id else np.arange(1, len(frame) + 1)
    return RawData(response=y, exposure=v, continuous=cont, categorical=cat, row_ids=ids)


def _sorted_levels(values) -> list[str]:
    levels = sorted(set(values))
    try:
        return sorted(levels, key=float)
    except ValueError:
        return levels


def percentile_grid(values, n_percentiles: int = DEFAULT_PERCENTILES) -> np.ndarray:
    """Deduplicated empirical percentiles ``1/P, 2/P, ..., 100%`` (observed values only).

    Level ``p/P`` is the inverted-CDF order statistic ``sorted[ceil(p n / P) - 1]``;
    ranks are computed in integer arithmetic so exact levels never drift.
    """
    s = np.sort(np.asarray(values, dtype=np.float64))
    n = s.shape[0]
    p = np.arange(1, n_percentiles + 1, dtype=np.int64)
    ranks = (p * n + n_percentiles - 1) // n_percentiles  # ceil(p n / P)
    return np.unique(s[np.maximum(ranks, 1) - 1])


@dataclass
class Schema:
    """Fitted preprocessing state.

    ``continuous`` maps column -> (min, max); ``categorical`` maps column ->
    ordered levels (level ``levels[k-1]`` is coded ``k``); ``grids`` maps
    every constrained column to its raw grid values (continuous) or to the
    codes ``1..K`` (categorical).
    """

    continuous: dict[str, tuple[float, float]]
    categorical: dict[str, list[str]]
    grids: dict[str, list[float]] = field(default_factory=dict)

    @property
    def cont_names(self) -> list[str]:
        return list(self.continuous)

    @property
    def cat_names(self) -> list[str]:
        return list(self.categorical)

    @property
    def cardinalities(self) -> list[int]:
        return [len(v) for v in self.categorical.values()]

    def kind(self, name: str) -> str:
        if name in self.continuous:
            return "continuous"
        if name in self.categorical:
            return "categorical"
        raise SchemaError(f"unknown column {name!r}")

    def position(self, name: str) -> int:
        if self.kind(name) == "continuous":
            return self.cont_names.index(name)
        return self.cat_names.index(name)

    def scale(self, name: str, raw) -> np.ndarray:
        lo, hi = self.continuous[name]
        return np.clip((np.asarray(raw, dtype=np.float64) - lo) / (hi - lo), 0.0, 1.0)

    def unscale(self, name: str, scaled) -> np.ndarray:
        lo, hi = self.continuous[name]
        return lo + np.asarray(scaled, dtype=np.float64) * (hi - lo)

    def grid(self, name: str) -> np.ndarray:
        """Raw grid values (categorical: codes 1..K)."""
        if name not in self.grids:
            raise SchemaError(f"column {name!r} has no constraint grid")
        return np.asarray(self.grids[name], dtype=np.float64)

    def network_grid(self, name: str) -> np.ndarray:
        """Grid in the units the network consumes (scaled continuous, codes categorical)."""
        g = self.grid(name)
        return self.scale(name, g) if self.kind(name) == "continuous" else g

    def grid_labels(self, name: str) -> list:
        if self.kind(name) == "categorical":
            return list(self.categorical[name])
        return [float(a) for a in self.grid(name)]

    def to_dict(self) -> dict:
        return {
            "continuous": {k: [float(lo), float(hi)] for k, (lo, hi) in self.continuous.items()},
            "categorical": {k: list(v) for k, v in self.categorical.items()},
            "grids": {k: [float(a) for a in v] for k, v in self.grids.items()},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Schema":
        return cls(
            continuous={k: (float(v[0]), float(v[1])) for k, v in d["continuous"].items()},
            categorical={k: list(v) for k, v in d["categorical"].items()},
            grids={k: [float(a) for a in v] for k, v in d.get("grids", {}).items()},
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1))

    @classmethod
    def load(cls, path) -> "Schema":
        return cls.from_dict(json.loads(Path(path).read_text()))


def fit_schema(
    raw: RawData,
    constrained: Sequence[str] = (),
    distinct_cap: int = DEFAULT_DISTINCT_CAP,
    n_percentiles: int = DEFAULT_PERCENTILES,
) -> Schema:
    """Fit min-max scaling, category dictionaries and constraint grids on ``raw``.

    Grid policy for a constrained continuous column: all distinct values if
    there are at most ``distinct_cap`` of them, else the deduplicated
    empirical percentiles.
    """
    cont = {}
    for name, col in raw.continuous.items():
        lo, hi = float(np.min(col)), float(np.max(col))
        if not lo < hi:
            raise SchemaError(f"continuous column {name!r} is constant")
        cont[name] = (lo, hi)
    cat = {}
    for name, col in raw.categorical.items():
        levels = _sorted_levels(col)
        if len(levels) < 2:
            raise SchemaError(f"categorical column {name!r} has a single level")
        cat[name] = levels

    grids = {}
    for name in constrained:
        if name in cont:
            col = raw.continuous[name]
            distinct = np.unique(col)
            g = distinct if len(distinct) <= distinct_cap else percentile_grid(col, n_percentiles)
        elif name in cat:
            g = np.arange(1, len(cat[name]) + 1, dtype=np.float64)
        else:
            raise SchemaError(f"constrained column {name!r} is not a covariate")
        if len(g) < 2:
            raise SchemaError(f"grid for {name!r} has fewer than 2 points")
        grids[name] = [float(a) for a in g]
    return Schema(continuous=cont, categorical=cat, grids=grids)


@dataclass
class TabularDataset:
    """Network-ready data: scaled continuous matrix, 1-based category codes, y, v."""

    x_cont: np.ndarray
    x_cat: np.ndarray
    y: np.ndarray
    v: np.ndarray
    row_ids: np.ndarray

    def __len__(self) -> int:
        return len(self.y)

    def take(self, idx) -> "TabularDataset":
        return TabularDataset(self.x_cont[idx], self.x_cat[idx], self.y[idx], self.v[idx], self.row_ids[idx])

    def with_response(self, y) -> "TabularDataset":
        y = np.asarray(y, dtype=np.float64)
        if y.shape != self.y.shape:
            raise ValueError("response length does not match dataset")
        return TabularDataset(self.x_cont, self.x_cat, y, self.v, self.row_ids)


def transform(raw: RawData, schema: Schema) -> TabularDataset:
    n = len(raw)
    x_cont = np.empty((n, len(schema.continuous)))
    for i, name in enumerate(schema.cont_names):
        if name not in raw.continuous:
            raise SchemaError(f"column {name!r} missing from data")
        x_cont[:, i] = schema.scale(name, raw.continuous[name])
    x_cat = np.empty((n, len(schema.categorical)), dtype=np.int64)
    for i, name in enumerate(schema.cat_names):
        lookup = {lvl: k + 1 for k, lvl in enumerate(schema.categorical[name])}
        col = raw.categorical[name]
        codes = np.fromiter((lookup.get(a, 0) for a in col), dtype=np.int64, count=n)
        unknown = np.flatnonzero(codes == 0)
        if unknown.size:
            raise SchemaError(
                f"row {unknown[0] + 1}: level {col[unknown[0]]!r} of {name!r} was not seen when fitting")
        x_cat[:, i] = codes
    return TabularDataset(x_cont, x_cat, raw.response.astype(np.float64),
                          raw.exposure.astype(np.float64), np.asarray(raw.row_ids))


def split_sizes(n: int, ratios: Sequence[float]) -> list[int]:
    if any(r < 0 for r in ratios) or not math.isclose(sum(ratios), 1.0, abs_tol=1e-9):
        raise ValueError(f"ratios must be non-negative and sum to 1, got {list(ratios)}")
    sizes = [int(math.floor(r * n + 1e-9)) for r in ratios[:-1]]
    sizes.append(n - sum(sizes))
    if any(s == 0 for s in sizes):
        raise ValueError(f"split of {n} rows by {list(ratios)} leaves an empty partition")
    return sizes


def split_indices(n: int, ratios: Sequence[float], seed: int) -> list[np.ndarray]:
    """Shuffle ``range(n)`` with a seeded uniform key and cut it by ``ratios``.

    Partition sizes are ``floor(ratio * n)`` with the remainder going to the
    last partition.  Indices inside each partition are returned sorted.
    """
    sizes = split_sizes(n, ratios)
    keys = np.random.default_rng(seed).random(n)
    order = np.argsort(keys, kind="stable")
    bounds = np.cumsum([0, *sizes])
    return [np.sort(order[a:b]) for a, b in zip(bounds[:-1], bounds[1:])]


def split(data, ratios: Sequence[float], seed: int):
    return tuple(data.take(idx) for idx in split_indices(len(data), ratios, seed))
