"""``icenet`` command line.

    icenet prepare|train|audit|ice|pdp|sweep|synth --config PATH [--seed N] [--out DIR] [--dry-run]

Exit codes: 0 success, 2 configuration error, 3 data error, 4 training divergence.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import config as config_mod
from . import interpret, synth_data
from ._io import atomic_write_csv, atomic_write_json, atomic_write_text
from .config import ConfigError
from .data_schema import DataError, Schema, SchemaError, fit_schema, ingest_csv, split_indices, transform
from .network import Architecture, NetworkParams
from .penalties import ConstraintSpec, mean_poisson_deviance
from .trainer import TrainingDiverged, distill, lambda_sweep, nagging, train_runs

log = logging.getLogger("icenet")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_DIVERGED = 0, 2, 3, 4
SPLITS = ("learn", "validation", "test")


# --------------------------------------------------------------------------
# shared steps
# --------------------------------------------------------------------------


def _split_summary(raw, idx) -> dict:
    y = raw.response[idx]
    v = raw.exposure[idx]
    return {"N": int(len(idx)), "exposure": float(v.sum()), "claims": float(y.sum()),
            "frequency": float(y.sum() / v.sum())}


def prepare(cfg) -> tuple:
    """Ingest, split, fit the schema on the learning set and persist everything."""
    out = Path(cfg.output_dir)
    raw = ingest_csv(cfg.base_dir / cfg.data_path, cfg.roles)
    s = cfg.schema
    learning, test = split_indices(len(raw), (1.0 - s.test_ratio, s.test_ratio), s.split_seed)
    inner = split_indices(len(learning), (1.0 - s.validation_ratio, s.validation_ratio), s.split_seed + 1)
    idx = {"learn": learning[inner[0]], "validation": learning[inner[1]], "test": test}
    constrained = [c for c in cfg.constraints.columns if c in cfg.roles.covariates]
    schema = fit_schema(raw.take(learning), constrained, s.distinct_cap, s.percentiles)
    report = {"learning_set": _split_summary(raw, learning), "total": _split_summary(raw, np.arange(len(raw)))}
    report.update({k: _split_summary(raw, v) for k, v in idx.items()})
    report["grid_sizes"] = {k: len(v) for k, v in schema.grids.items()}
    atomic_write_text(out / "schema.json", json.dumps(schema.to_dict(), indent=1))
    atomic_write_json(out / "splits.json", {k: v.tolist() for k, v in idx.items()})
    atomic_write_json(out / "prep_report.json", report)
    return raw, schema, idx, report


def load_prepared(cfg):
    """Datasets per split, reusing ``schema.json``/``splits.json`` when present."""
    out = Path(cfg.output_dir)
    if (out / "schema.json").is_file() and (out / "splits.json").is_file():
        raw = ingest_csv(cfg.base_dir / cfg.data_path, cfg.roles)
        schema = Schema.load(out / "schema.json")
        idx = {k: np.asarray(v, dtype=np.int64) for k, v in json.loads((out / "splits.json").read_text()).items()}
        if sum(len(v) for v in idx.values()) != len(raw):
            raise DataError("splits.json does not match the data file; re-run prepare")
    else:
        raw, schema, idx, _ = prepare(cfg)
    data = transform(raw, schema)
    return schema, {k: data.take(idx[k]) for k in SPLITS}


def _arch(cfg, schema) -> Architecture:
    return Architecture.for_schema(schema, cfg.layers, cfg.embedding_dim)


def _spec_for(cfg, schema) -> ConstraintSpec:
    # keep only columns that received a grid (declared covariates)
    cols = {k: c for k, c in cfg.constraints.columns.items() if k in schema.grids}
    return ConstraintSpec(cols, cfg.constraints.penalty_on_exposure_scale)


def _run_summary(results, splits) -> dict:
    out = {"runs": [r.report for r in results]}
    for split in SPLITS:
        devs = np.array([mean_poisson_deviance(splits[split].y,
                                               nagging([r.params], splits[split].x_cont, splits[split].x_cat,
                                                       splits[split].v)) for r in results])
        ens = nagging([r.params for r in results], splits[split].x_cont, splits[split].x_cat, splits[split].v)
        out[split] = {"mean": float(devs.mean()), "std": float(devs.std(ddof=1)) if len(devs) > 1 else 0.0,
                      "nagging": mean_poisson_deviance(splits[split].y, ens)}
    return out


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------


def cmd_prepare(cfg, args) -> int:
    _, _, _, report = prepare(cfg)
    for k in ("learning_set", "learn", "validation", "test"):
        r = report[k]
        print(f"{k:<13} N={r['N']:>9,d}  exposure={r['exposure']:>12,.0f}  claims={r['claims']:>9,.0f}"
              f"  frequency={r['frequency']:.4f}")
    return EXIT_OK


def cmd_train(cfg, args) -> int:
    schema, splits = load_prepared(cfg)
    out = Path(cfg.output_dir)
    arch = _arch(cfg, schema)
    spec = _spec_for(cfg, schema)
    logs: dict[int, list] = {}

    def on_epoch(run, row):
        logs.setdefault(run, []).append(row)
        log.info("run %d epoch %3d learn %.6f valid %.6f smooth %.4g mono %.4g", run, row["epoch"],
                 row["learn_dev"], row["valid_dev"], row["smooth_part"], row["mono_part"])

    results = train_runs((splits["learn"], splits["validation"], splits["test"]), arch, spec, cfg.training,
                         schema, on_epoch=on_epoch)
    for r, res in enumerate(results):
        run_dir = out / "runs" / f"run_{r:02d}"
        res.save(run_dir)
        atomic_write_text(run_dir / "log.jsonl", "".join(json.dumps(row) + "\n" for row in logs.get(r, [])))
    rows = []
    for split in SPLITS:
        d = splits[split]
        pred = nagging([r.params for r in results], d.x_cont, d.x_cat, d.v)
        rows += [(iid, split, float(p)) for iid, p in zip(d.row_ids, pred)]
    atomic_write_csv(out / "nagging.csv", ("instance_id", "split", "prediction"), rows)
    summary = _run_summary(results, splits)
    summary["mode"] = cfg.mode
    atomic_write_json(out / "train_report.json", summary)
    for split in ("learn", "test"):
        s = summary[split]
        print(f"{cfg.mode} {split}: mean {s['mean']:.6f} (sd {s['std']:.6f})  nagging {s['nagging']:.6f}")
    return EXIT_OK


def _models(cfg, args) -> list[tuple[str, NetworkParams]]:
    paths = args.model or [str(Path(cfg.output_dir) / "runs" / "run_00" / "model.json")]
    out = []
    for i, p in enumerate(paths, start=1):
        if not Path(p).is_file():
            raise ConfigError([f"model file not found: {p}"])
        out.append((f"m{i}", NetworkParams.load(p)))
    atomic_write_json(Path(cfg.output_dir) / "models.json", {label: str(p) for (label, _), p in zip(out, paths)})
    return out


def _interpret_data(cfg, splits):
    data = splits[cfg.interpret.split]
    if cfg.interpret.instances:
        wanted = {str(i) for i in cfg.interpret.instances}
        pos = [i for i, iid in enumerate(data.row_ids) if str(iid) in wanted]
        if len(pos) != len(wanted):
            raise ConfigError([f"interpret.instances: some ids are not in the {cfg.interpret.split} split"])
        return data.take(np.asarray(pos))
    return data


def cmd_audit(cfg, args) -> int:
    schema, splits = load_prepared(cfg)
    out = Path(cfg.output_dir)
    data = splits[cfg.interpret.split]
    spec = _spec_for(cfg, schema)
    models = _models(cfg, args)
    tables = []
    for label, params in models:
        table = interpret.audit(params, data, spec, schema)
        interpret.export_audit(table, out / f"audit_{label}.csv")
        tables.append(table)
        for c in table.columns:
            print(f"{label} {c}: mean smooth {table.mean(c, 'smooth'):.6g}  mean mono {table.mean(c, 'mono'):.6g}")
    if len(models) >= 2:
        base, other = tables[0], tables[1]
        interpret.export_audit(base.difference(other), out / "audit_diff.csv", diff=True)
        k = cfg.interpret.top_k
        for kind in ("mono", "smooth"):
            for c in base.columns:
                pos = interpret.worst_offenders(base, c, kind, k)
                for label, params in models[:2]:
                    recs = interpret.ice_records(params, data, c, schema, pos)
                    interpret.export_curves(recs, out / f"worst_{kind}_{c}_{label}.csv")
    return EXIT_OK


def cmd_ice(cfg, args) -> int:
    schema, splits = load_prepared(cfg)
    data = _interpret_data(cfg, splits)
    if not cfg.interpret.instances:
        data = data.take(np.arange(min(cfg.interpret.top_k, len(data))))
    spec = _spec_for(cfg, schema)
    for label, params in _models(cfg, args):
        recs = []
        for c in spec.columns:
            recs += interpret.ice_records(params, data, c, schema, np.arange(len(data)))
        interpret.export_curves(recs, Path(cfg.output_dir) / f"ice_{label}.csv")
    return EXIT_OK


def cmd_pdp(cfg, args) -> int:
    schema, splits = load_prepared(cfg)
    data = _interpret_data(cfg, splits)
    spec = _spec_for(cfg, schema)
    for label, params in _models(cfg, args):
        pdps = {c: interpret.pdp(params, data, c, schema, cfg.interpret.exposure_weighted_pdp) for c in spec.columns}
        interpret.export_pdp(pdps, schema, Path(cfg.output_dir) / f"pdp_{label}.csv")
    return EXIT_OK


def cmd_sweep(cfg, args) -> int:
    schema, splits = load_prepared(cfg)
    out = Path(cfg.output_dir)
    arch = _arch(cfg, schema)
    spec = _spec_for(cfg, schema)
    tr = cfg.training
    teacher_cfg = replace(tr, mode="fcn", runs=cfg.sweep.teacher_runs or tr.runs)
    parts = (splits["learn"], splits["validation"], splits["test"])
    teachers = train_runs(parts, arch, spec, teacher_cfg, schema)
    preds = [nagging([t.params for t in teachers], d.x_cont, d.x_cat, d.v) for d in parts]
    meta = distill(preds, parts, arch, tr, schema)
    meta.save(out / "meta_model")
    tune_cfg = replace(tr, epochs=cfg.sweep.fine_tune_epochs or tr.epochs)
    rows = lambda_sweep(meta.params, [float(s) for s in cfg.sweep.scales], parts, spec, tune_cfg, schema)
    atomic_write_csv(out / "sweep.csv", ("label", "scale", "log10_scale", "learn", "validation", "test"),
                     [(r["label"], r["scale"], r["log10_scale"], r["learn"], r["validation"], r["test"]) for r in rows])
    for r in rows:
        print(f"{r['label']:>10}  {r['learn']:.5f}  {r['validation']:.5f}  {r['test']:.5f}")
    return EXIT_OK


def cmd_synth(cfg, args) -> int:
    spec = cfg.synth or synth_data.SynthSpec()
    out = Path(cfg.output_dir)
    path = Path(cfg.synth_path) if cfg.synth_path else out / "synth.csv"
    if not path.is_absolute() and cfg.synth_path:
        path = cfg.base_dir / path
    raw = synth_data.generate(spec)
    synth_data.write_csv(raw, spec, path)
    atomic_write_json(out / "synth_spec.json", spec.to_dict())
    roles = spec.roles
    template = {
        "data": {"path": str(path.resolve()), "response": roles.response, "exposure": roles.exposure,
                 "id": roles.id, "continuous": list(roles.continuous), "categorical": list(roles.categorical)},
        "constraints": {"preset": "none", "columns": {
            c.name: {"smooth_lambda": 1.0, "mono_lambda": 100.0 if c.effect.startswith("monotone") else 0.0,
                     "direction": -1}
            for c in spec.covariates if c.kind != "categorical"}},
        "mode": "icenet_global",
        "output": {"dir": str((out / "run").resolve())},
    }
    atomic_write_json(out / "synth_config.json", template)
    print(f"wrote {len(raw)} rows to {path}")
    return EXIT_OK


COMMANDS = {"prepare": cmd_prepare, "train": cmd_train, "audit": cmd_audit, "ice": cmd_ice, "pdp": cmd_pdp,
            "sweep": cmd_sweep, "synth": cmd_synth}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="icenet", description="Smoothness and monotonicity constrained networks.")
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", required=True, help="run configuration (JSON)")
    p.add_argument("--seed", type=int, default=None, help="override the training (or synth) seed")
    p.add_argument("--out", default=None, help="override output.dir")
    p.add_argument("--dry-run", action="store_true", help="validate and print the effective config only")
    p.add_argument("--model", action="append", help="model JSON (audit/ice/pdp); repeat for several")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(levelname)s %(message)s")
    try:
        cfg = config_mod.load(args.config, seed=args.seed, out=args.out, need_data=args.command != "synth")
        if args.dry_run:
            print(json.dumps(cfg.to_dict(), indent=1))
            return EXIT_OK
        return COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        print("config error: " + "; ".join(exc.problems), file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, SchemaError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except TrainingDiverged as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
