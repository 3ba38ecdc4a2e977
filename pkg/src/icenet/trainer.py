"""Minibatch Adam training of the ICEnet compound loss.

Each minibatch is pushed through the network in a single forward pass: the
observed rows first, followed by the pseudo-rows for every constrained
column.  The deviance gradient on the observed rows and the penalty
gradients on the pseudo-rows are then propagated back together, so the
penalties train the same shared weights that make the predictions.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import kernels
from ._io import atomic_write_csv, atomic_write_json, atomic_write_text
from .ice_builder import WindowSpec, expand, window_index
from .network import Architecture, NetworkParams, backward, forward, init, predict
from .penalties import SMOOTH_ORDER, ConstraintSpec, poisson_deviance
from .tensor_engine import ETA_MAX, GradTape

logger = logging.getLogger(__name__)

MODES = ("fcn", "icenet_global", "icenet_local")
TRACE_COLUMNS = ("epoch", "learn_dev", "valid_dev", "smooth_part", "mono_part")
SWEEP_SCALES = tuple(10.0 ** k for k in range(-5, 6))


class TrainingDiverged(RuntimeError):
    """Loss became non-finite or the link clamp saturated."""


@dataclass
class TrainConfig:
    epochs: int = 50
    batch_size: int = 1024
    learning_rate: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    runs: int = 10
    mode: str = "icenet_global"
    omega: int = 5
    # early stopping may return the starting parameters (epoch 0)
    include_initial: bool = True
    # fresh starts set the head bias to log(sum y / sum v) of the learning data
    homogeneous_bias_init: bool = True
    clamp_tolerance: float = 0.01

    def problems(self) -> list[str]:
        out = []
        for name in ("epochs", "batch_size", "runs"):
            if int(getattr(self, name)) < 1:
                out.append(f"training.{name} must be a positive integer")
        if not self.learning_rate > 0:
            out.append("training.learning_rate must be positive")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1 and self.eps > 0):
            out.append("adam parameters must satisfy 0 <= beta < 1 and eps > 0")
        if self.mode not in MODES:
            out.append(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.mode == "icenet_local":
            try:
                WindowSpec(self.omega)
            except ValueError as exc:
                out.append(str(exc))
        return out


@dataclass
class RunResult:
    params: NetworkParams
    trace: list[dict]
    report: dict
    seed: int
    best_epoch: int

    def save(self, run_dir) -> None:
        run_dir = Path(run_dir)
        atomic_write_text(run_dir / "model.json", json.dumps(self.params.to_dict()))
        atomic_write_csv(run_dir / "trace.csv", TRACE_COLUMNS,
                         [[r[c] for c in TRACE_COLUMNS] for r in self.trace])
        atomic_write_json(run_dir / "report.json", self.report)


# --------------------------------------------------------------------------
# objective
# --------------------------------------------------------------------------


@dataclass
class _Column:
    name: str
    smooth_lambda: float
    mono_lambda: float
    direction: int
    grid: np.ndarray  # network units


def constraint_plan(schema, spec: ConstraintSpec, mode: str, omega: int = 5) -> list[_Column]:
    """Columns that generate pseudo-rows; columns whose lambdas are all zero are dropped."""
    if mode == "fcn":
        return []
    plan = []
    for name in spec.active_columns:
        c = spec.columns[name]
        grid = schema.network_grid(name)
        width = len(grid) if mode == "icenet_global" else min(omega, len(grid))
        smooth = c.smooth_lambda
        if smooth > 0 and width <= SMOOTH_ORDER:
            logger.warning("column %r: %d grid points are too few for smoothing; smoothing skipped",
                           name, width)
            smooth = 0.0
        if smooth > 0 or c.mono_lambda > 0:
            plan.append(_Column(name, smooth, c.mono_lambda, c.direction, grid))
    return plan


@dataclass
class BatchOutput:
    deviance: float
    smoothing: float
    monotonicity: float
    tape: GradTape | None
    clamp_fraction: float

    @property
    def total(self) -> float:
        return self.deviance + self.smoothing + self.monotonicity


ROWS_PER_CHUNK = 4096


def batch_objective(params, x_cont, x_cat, y, v, schema, plan, mode="icenet_global", omega=5,
                    exposure_scale=False, need_grad=True, rows_per_chunk=ROWS_PER_CHUNK) -> BatchOutput:
    """Batch mean of the compound loss and (optionally) its gradient tape.

    Instances are processed in groups sized so that observed plus pseudo
    rows stay near ``rows_per_chunk``; group tapes are summed in order.
    """
    n = len(y)
    windows = []
    for col in plan:
        if mode == "icenet_local":
            windows.append(window_index(x_cont, x_cat, col.name, schema, omega))
        else:
            windows.append((None, len(col.grid)))
    rows_per_instance = 1 + sum(w for _, w in windows)
    group = max(1, rows_per_chunk // rows_per_instance)

    tape = GradTape.like(params.arrays()) if need_grad else None
    dev_sum = smooth_sum = mono_sum = 0.0
    clamped = 0
    for a in range(0, n, group):
        sl = slice(a, min(a + group, n))
        d, s, m, c, t = _group_objective(params, x_cont[sl], x_cat[sl], y[sl], v[sl], schema, plan,
                                         [(None if st is None else st[sl], w) for st, w in windows],
                                         exposure_scale, need_grad, n)
        dev_sum += d
        smooth_sum += s
        mono_sum += m
        clamped += c
        if need_grad:
            tape.add(t)
    return BatchOutput(dev_sum / n, smooth_sum / n, mono_sum / n, tape, clamped / (n * rows_per_instance))


def _group_objective(params, x_cont, x_cat, y, v, schema, plan, windows, exposure_scale, need_grad, n_batch):
    n = len(y)
    rows_c, rows_k = [x_cont], [x_cat]
    for col, (starts, width) in zip(plan, windows):
        if starts is None:
            values = np.broadcast_to(col.grid, (n, width))
        else:
            values = col.grid[starts[:, None] + np.arange(width)]
        xc, xk = expand(x_cont, x_cat, col.name, schema, values)
        rows_c.append(xc)
        rows_k.append(xk)
    all_c = np.concatenate(rows_c) if len(rows_c) > 1 else x_cont
    all_k = np.concatenate(rows_k) if len(rows_k) > 1 else x_cat

    mu, cache = forward(params, all_c, all_k)
    clamped = int(np.count_nonzero(np.abs(cache.eta) >= ETA_MAX))
    mu_obs = mu[:n]
    dev = poisson_deviance(y, mu_obs * v)
    dl_dmu = np.empty_like(mu) if need_grad else None
    if need_grad:
        dl_dmu[:n] = 2.0 * (v - y / mu_obs) / n_batch

    smooth_sum = mono_sum = 0.0
    off = n
    for col, (_, width) in zip(plan, windows):
        size = n * width
        blocks = mu[off:off + size].reshape(n, width)
        if exposure_scale:
            blocks = blocks * v[:, None]
        grad = np.zeros_like(blocks)
        if col.smooth_lambda > 0:
            s, g = kernels.smooth_penalty(blocks, col.smooth_lambda)
            smooth_sum += s.sum()
            grad += g
        if col.mono_lambda > 0:
            m, g = kernels.mono_penalty(blocks, col.mono_lambda, col.direction)
            mono_sum += m.sum()
            grad += g
        if need_grad:
            if exposure_scale:
                grad *= v[:, None]
            dl_dmu[off:off + size] = grad.ravel() / n_batch
        off += size

    tape = backward(params, cache, dl_dmu) if need_grad else None
    return float(dev.sum()), smooth_sum, mono_sum, clamped, tape


# --------------------------------------------------------------------------
# optimiser
# --------------------------------------------------------------------------


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0

    @classmethod
    def zeros(cls, params: NetworkParams) -> "AdamState":
        return cls([np.zeros_like(a) for a in params.arrays()], [np.zeros_like(a) for a in params.arrays()])


def adam_step(params: NetworkParams, tape: GradTape, state: AdamState, cfg: TrainConfig):
    """One bias-corrected Adam update, applied in place."""
    state.t += 1
    b1, b2 = cfg.beta1, cfg.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for p, g, m, s in zip(params.arrays(), tape.arrays, state.m, state.v):
        m *= b1
        m += (1.0 - b1) * g
        s *= b2
        s += (1.0 - b2) * g * g
        p -= cfg.learning_rate * (m / c1) / (np.sqrt(s / c2) + cfg.eps)
    params.touch()
    return params, state


# --------------------------------------------------------------------------
# training
# --------------------------------------------------------------------------


def evaluate_deviance(params: NetworkParams, data) -> float:
    mu = predict(params, data.x_cont, data.x_cat)
    return float(np.mean(poisson_deviance(data.y, mu * data.v)))


def train(splits: Sequence, arch: Architecture, spec: ConstraintSpec, cfg: TrainConfig, schema,
          init_params: NetworkParams | None = None,
          on_epoch: Callable[[dict], None] | None = None) -> RunResult:
    """Train on ``splits = (learn, validation[, test])`` and restore the best epoch.

    The best epoch minimises the validation deviance; epoch 0 (the starting
    parameters) is a candidate when ``cfg.include_initial`` is set.
    """
    learn, valid = splits[0], splits[1]
    test = splits[2] if len(splits) > 2 else None
    problems = cfg.problems() + spec.problems(schema)
    if problems:
        raise ValueError("; ".join(problems))
    plan = constraint_plan(schema, spec, cfg.mode, cfg.omega)
    if init_params is not None:
        params = init_params.copy()
    else:
        params = init(arch, cfg.seed)
        if cfg.homogeneous_bias_init and learn.y.sum() > 0:
            params.head_bias[0] = np.log(learn.y.sum() / learn.v.sum())
    state = AdamState.zeros(params)
    n = len(learn)

    row0 = {"epoch": 0, "learn_dev": evaluate_deviance(params, learn),
            "valid_dev": evaluate_deviance(params, valid), "smooth_part": math.nan, "mono_part": math.nan,
            "train_dev": math.nan, "train_total": math.nan}
    trace = [row0]
    if on_epoch:
        on_epoch(row0)
    best_dev, best_epoch, best_params = math.inf, 0, params.copy()
    if cfg.include_initial:
        best_dev = row0["valid_dev"]

    for epoch in range(1, cfg.epochs + 1):
        order = np.random.default_rng([cfg.seed, epoch]).permutation(n)
        sums = np.zeros(3)
        for s in range(0, n, cfg.batch_size):
            idx = order[s:s + cfg.batch_size]
            out = batch_objective(params, learn.x_cont[idx], learn.x_cat[idx], learn.y[idx], learn.v[idx],
                                  schema, plan, cfg.mode, cfg.omega, spec.penalty_on_exposure_scale)
            if not math.isfinite(out.total) or out.clamp_fraction > cfg.clamp_tolerance:
                raise TrainingDiverged(
                    f"epoch {epoch}, batch starting at {s}: loss={out.total!r}, "
                    f"deviance={out.deviance!r}, clamped fraction={out.clamp_fraction:.4f}")
            adam_step(params, out.tape, state, cfg)
            sums += len(idx) * np.array([out.deviance, out.smoothing, out.monotonicity])
        train_dev, smooth, mono = sums / n
        row = {"epoch": epoch, "learn_dev": evaluate_deviance(params, learn),
               "valid_dev": evaluate_deviance(params, valid), "smooth_part": smooth, "mono_part": mono,
               "train_dev": train_dev, "train_total": train_dev + smooth + mono}
        trace.append(row)
        if on_epoch:
            on_epoch(row)
        logger.info("epoch %3d  learn %.6f  valid %.6f  smooth %.3g  mono %.3g",
                    epoch, row["learn_dev"], row["valid_dev"], smooth, mono)
        if row["valid_dev"] < best_dev:
            best_dev, best_epoch, best_params = row["valid_dev"], epoch, params.copy()

    report = {
        "seed": cfg.seed,
        "mode": cfg.mode,
        "best_epoch": best_epoch,
        "learn_deviance": evaluate_deviance(best_params, learn),
        "validation_deviance": evaluate_deviance(best_params, valid),
    }
    if test is not None:
        report["test_deviance"] = evaluate_deviance(best_params, test)
    return RunResult(best_params, trace, report, cfg.seed, best_epoch)


def train_runs(splits, arch, spec, cfg: TrainConfig, schema, on_epoch=None) -> list[RunResult]:
    """``cfg.runs`` independent runs with seeds ``cfg.seed, cfg.seed + 1, ...``."""
    results = []
    for r in range(cfg.runs):
        run_cfg = replace(cfg, seed=cfg.seed + r)
        cb = (lambda row, r=r: on_epoch(r, row)) if on_epoch else None
        results.append(train(splits, arch, spec, run_cfg, schema, on_epoch=cb))
    return results


def nagging(models: Sequence[NetworkParams], x_cont, x_cat, v) -> np.ndarray:
    """Ensemble-mean expected counts ``mean_m mu_m(x) * v``."""
    if not models:
        raise ValueError("nagging needs at least one model")
    arch = models[0].arch
    if any(m.arch != arch for m in models):
        raise ValueError("models do not share one architecture/schema")
    acc = np.zeros(np.asarray(x_cont).shape[0])
    for m in models:
        acc += predict(m, x_cont, x_cat)
    return acc / len(models) * np.asarray(v, dtype=np.float64)


def distill(teacher_preds: Sequence[np.ndarray], splits: Sequence, arch: Architecture, cfg: TrainConfig,
            schema, init_params: NetworkParams | None = None) -> RunResult:
    """Fit a single network to teacher expected counts with Poisson deviance.

    ``teacher_preds[i]`` are expected counts (``mu * v``) aligned with
    ``splits[i]``; they replace the responses during training.
    """
    if len(teacher_preds) != len(splits):
        raise ValueError("one teacher prediction vector per split is required")
    pseudo = []
    for preds, data in zip(teacher_preds, splits):
        preds = np.asarray(preds, dtype=np.float64)
        if np.any(preds <= 0):
            raise ValueError("teacher predictions must be positive")
        pseudo.append(data.with_response(preds))
    return train(pseudo, arch, ConstraintSpec(), replace(cfg, mode="fcn"), schema, init_params=init_params)


def lambda_sweep(base_params: NetworkParams, scales: Sequence[float], splits: Sequence,
                 spec: ConstraintSpec, cfg: TrainConfig, schema, base_label: str = "meta-model") -> list[dict]:
    """Fine-tune ``base_params`` once per scale with every lambda multiplied by it.

    Returns one row per model (the base model first) with learn, validation
    and test deviance.  Fine-tuning selects its best epoch among the
    trained epochs only, so large penalties are not masked by the start point.
    """
    learn, valid = splits[0], splits[1]
    test = splits[2] if len(splits) > 2 else None
    mode = cfg.mode if cfg.mode != "fcn" else "icenet_global"
    tune_cfg = replace(cfg, mode=mode, include_initial=False)

    def row(label, scale, params):
        r = {"label": label, "scale": scale,
             "log10_scale": math.log10(scale) if scale and scale > 0 else math.nan,
             "learn": evaluate_deviance(params, learn), "validation": evaluate_deviance(params, valid)}
        r["test"] = evaluate_deviance(params, test) if test is not None else math.nan
        return r

    rows = [row(base_label, math.nan, base_params)]
    for scale in scales:
        res = train(splits, base_params.arch, spec.scaled(scale), tune_cfg, schema, init_params=base_params)
        label = f"{scale:g}"
        rows.append(row(label, scale, res.params))
        logger.info("sweep scale %g: validation %.6f", scale, rows[-1]["validation"])
    return rows


def config_dict(cfg: TrainConfig) -> dict:
    return asdict(cfg)
