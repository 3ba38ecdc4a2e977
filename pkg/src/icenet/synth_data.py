"""Synthetic claim-count portfolios with a known multiplicative frequency.

The true frequency is ``base * prod_j exp(f_j(x_j))`` and counts are drawn
as ``Poisson(frequency * exposure)``.  Effect shapes:

``none``             f = 0
``monotone_smooth``  strength * tanh of the standardised (log-)value
``monotone_rough``   increasing staircase with uneven steps
``non_monotone``     U shape around the middle of the range
``levels``           fixed per-level effects (categorical only)
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ._io import atomic_write_csv
from .data_schema import ColumnRoles, RawData

EFFECTS = ("none", "monotone_smooth", "monotone_rough", "non_monotone", "levels")
KINDS = ("integer", "lognormal", "categorical")


@dataclass
class CovariateSpec:
    name: str
    kind: str
    effect: str = "none"
    strength: float = 0.5
    low: int = 0
    high: int = 10
    mu: float = 6.0  # lognormal: mean of log value
    sigma: float = 1.5
    levels: int = 2

    def problems(self) -> list[str]:
        out = []
        if self.kind not in KINDS:
            out.append(f"covariate {self.name!r}: kind must be one of {KINDS}")
        if self.effect not in EFFECTS:
            out.append(f"covariate {self.name!r}: effect must be one of {EFFECTS}")
        if self.kind == "categorical" and self.effect not in ("none", "levels"):
            out.append(f"covariate {self.name!r}: categorical effects are 'none' or 'levels'")
        if self.kind == "integer" and self.high <= self.low:
            out.append(f"covariate {self.name!r}: high must exceed low")
        if self.kind == "categorical" and self.levels < 2:
            out.append(f"covariate {self.name!r}: at least 2 levels required")
        if not np.isfinite(self.strength) or abs(self.strength) > 5:
            out.append(f"covariate {self.name!r}: |strength| must be <= 5")
        return out


def _default_covariates() -> list[CovariateSpec]:
    return [
        CovariateSpec("DrivAge", "integer", "non_monotone", 0.6, low=18, high=87),
        CovariateSpec("BonusMalus", "integer", "monotone_rough", 0.8, low=50, high=125),
        CovariateSpec("Density", "lognormal", "monotone_smooth", 0.4, mu=6.0, sigma=1.5),
        CovariateSpec("Region", "categorical", "levels", 0.3, levels=10),
        CovariateSpec("Area", "categorical", "levels", 0.2, levels=4),
    ]


@dataclass
class SynthSpec:
    n_rows: int = 50_000
    base_frequency: float = 0.07
    exposure_low: float = 0.05
    exposure_high: float = 1.0
    seed: int = 0
    covariates: list[CovariateSpec] = field(default_factory=_default_covariates)

    def problems(self) -> list[str]:
        out = []
        if self.n_rows < 1:
            out.append("n_rows must be positive")
        if not self.base_frequency > 0:
            out.append("base_frequency must be positive")
        if not 0 < self.exposure_low <= self.exposure_high:
            out.append("exposure bounds must satisfy 0 < low <= high")
        names = [c.name for c in self.covariates]
        if len(set(names)) != len(names):
            out.append("covariate names must be unique")
        for c in self.covariates:
            out += c.problems()
        return out

    @property
    def roles(self) -> ColumnRoles:
        return ColumnRoles(
            response="ClaimNb", exposure="Exposure", id="IDpol",
            continuous=tuple(c.name for c in self.covariates if c.kind != "categorical"),
            categorical=tuple(c.name for c in self.covariates if c.kind == "categorical"),
        )

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "SynthSpec":
        d = dict(d)
        covs = d.pop("covariates", None)
        spec = cls(**d)
        if covs is not None:
            spec.covariates = [CovariateSpec(**c) for c in covs]
        return spec

    @classmethod
    def load(cls, path) -> "SynthSpec":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _draw(c: CovariateSpec, n: int, rng) -> np.ndarray:
    if c.kind == "integer":
        # triangular skew towards the low end, like bonus-malus levels
        u = rng.triangular(0.0, 0.0, 1.0, size=n) if c.effect == "monotone_rough" else rng.random(n)
        return np.floor(c.low + u * (c.high - c.low + 1)).clip(c.low, c.high)
    if c.kind == "lognormal":
        return np.round(np.exp(rng.normal(c.mu, c.sigma, size=n)), 0).clip(1.0, None)
    return rng.integers(1, c.levels + 1, size=n)


def effect(c: CovariateSpec, x) -> np.ndarray:
    """Log-scale effect ``f(x)`` of one covariate (categorical: codes 1..levels)."""
    x = np.asarray(x, dtype=np.float64)
    s = c.strength
    if c.effect == "none":
        return np.zeros_like(x)
    if c.effect == "levels":
        return s * np.linspace(-1.0, 1.0, c.levels)[x.astype(int) - 1]
    if c.kind == "lognormal":
        z = (np.log(x) - c.mu) / c.sigma
        lo, hi = -3.0, 3.0
    else:
        z, lo, hi = x, float(c.low), float(c.high)
    t = np.clip((z - lo) / (hi - lo), 0.0, 1.0)  # position in [0, 1]
    if c.effect == "monotone_smooth":
        return s * np.tanh(2.0 * (2.0 * t - 1.0))
    if c.effect == "monotone_rough":
        steps = np.array([0.0, 0.05, 0.3, 0.35, 0.6, 0.62, 0.9, 1.0])
        return s * (2.0 * steps[np.minimum((t * len(steps)).astype(int), len(steps) - 1)] - 1.0)
    return s * (4.0 * (t - 0.5) ** 2 - 0.5)


def true_frequency(spec: SynthSpec, columns: dict) -> np.ndarray:
    log_mu = np.log(spec.base_frequency)
    for c in spec.covariates:
        x = columns[c.name]
        if c.kind == "categorical":
            x = np.array([int(a[1:]) for a in x]) if x.dtype == object else x
        log_mu = log_mu + effect(c, x)
    return np.exp(log_mu)


def generate(spec: SynthSpec) -> RawData:
    """Draw a portfolio; identical seeds give identical data."""
    problems = spec.problems()
    if problems:
        raise ValueError("; ".join(problems))
    rng = np.random.default_rng(spec.seed)
    n = spec.n_rows
    raw_cols = {c.name: _draw(c, n, rng) for c in spec.covariates}
    v = rng.uniform(spec.exposure_low, spec.exposure_high, size=n)
    mu = true_frequency(spec, raw_cols)
    y = rng.poisson(mu * v).astype(np.float64)
    cont = {c.name: raw_cols[c.name].astype(np.float64) for c in spec.covariates if c.kind != "categorical"}
    cat = {c.name: np.array([f"L{k:02d}" for k in raw_cols[c.name]], dtype=object)
           for c in spec.covariates if c.kind == "categorical"}
    return RawData(response=y, exposure=v, continuous=cont, categorical=cat, row_ids=np.arange(1, n + 1))


def write_csv(raw: RawData, spec: SynthSpec, path) -> None:
    roles = spec.roles
    header = [roles.id, roles.response, roles.exposure, *roles.continuous, *roles.categorical]
    cols = [raw.row_ids, raw.response.astype(np.int64), raw.exposure,
            *[raw.continuous[c] for c in roles.continuous], *[raw.categorical[c] for c in roles.categorical]]
    rows = zip(*[c.tolist() for c in cols])
    atomic_write_csv(path, header, rows)
