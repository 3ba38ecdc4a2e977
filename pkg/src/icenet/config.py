"""Run configuration: one JSON document with sections
``data, schema, architecture, constraints, training, mode, output``
(plus optional ``interpret``, ``sweep`` and ``synth``).
"""
from __future__ import annotations

import copy
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .data_schema import DEFAULT_DISTINCT_CAP, DEFAULT_PERCENTILES, ColumnRoles
from .network import DEFAULT_EMBEDDING_DIM, DEFAULT_LAYERS
from .penalties import GLOBAL_PRESET, LOCAL_PRESET, LOCAL_WINDOW, ColumnConstraint, ConstraintSpec
from .synth_data import SynthSpec
from .trainer import SWEEP_SCALES, TrainConfig

PRESETS = {"global": GLOBAL_PRESET, "local": LOCAL_PRESET, "none": {}}
SECTIONS = ("data", "schema", "architecture", "constraints", "training", "mode", "output",
            "interpret", "sweep", "synth")


class ConfigError(ValueError):
    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


@dataclass
class SchemaOptions:
    distinct_cap: int = DEFAULT_DISTINCT_CAP
    percentiles: int = DEFAULT_PERCENTILES
    test_ratio: float = 0.1
    validation_ratio: float = 0.05
    split_seed: int = 0


@dataclass
class InterpretOptions:
    split: str = "test"
    instances: list = field(default_factory=list)
    top_k: int = 4
    exposure_weighted_pdp: bool = False


@dataclass
class SweepOptions:
    scales: list = field(default_factory=lambda: list(SWEEP_SCALES))
    teacher_runs: int | None = None
    fine_tune_epochs: int | None = None


@dataclass
class RunConfig:
    data_path: str | None
    roles: ColumnRoles | None
    schema: SchemaOptions
    layers: tuple
    embedding_dim: int
    constraints: ConstraintSpec
    training: TrainConfig
    output_dir: str
    interpret: InterpretOptions
    sweep: SweepOptions
    synth: SynthSpec | None
    synth_path: str | None
    base_dir: Path = Path(".")

    @property
    def mode(self) -> str:
        return self.training.mode

    def to_dict(self) -> dict:
        return {
            "data": None if self.roles is None else {
                "path": self.data_path, "response": self.roles.response, "exposure": self.roles.exposure,
                "id": self.roles.id, "continuous": list(self.roles.continuous),
                "categorical": list(self.roles.categorical)},
            "schema": asdict(self.schema),
            "architecture": {"layers": list(self.layers), "embedding_dim": self.embedding_dim},
            "constraints": self.constraints.to_dict(),
            "training": {k: v for k, v in asdict(self.training).items() if k != "mode"},
            "mode": self.training.mode,
            "output": {"dir": self.output_dir},
            "interpret": asdict(self.interpret),
            "sweep": asdict(self.sweep),
            "synth": None if self.synth is None else {**self.synth.to_dict(), "path": self.synth_path},
        }


def _known(cls, section: dict, name: str, problems: list) -> dict:
    allowed = {f.name for f in fields(cls)}
    for k in section:
        if k not in allowed:
            problems.append(f"{name}.{k}: unknown key")
    return {k: v for k, v in section.items() if k in allowed}


def _number(value, where: str, problems: list, cast=float, default=0):
    """``cast(value)``, recording a problem (and returning ``default``) when it is not a number."""
    if isinstance(value, bool) and cast is not bool:
        problems.append(f"{where}: expected a number, got {value!r}")
        return default
    try:
        out = cast(value)
    except (TypeError, ValueError):
        problems.append(f"{where}: expected a number, got {value!r}")
        return default
    if cast is int and isinstance(value, float) and value != out:
        problems.append(f"{where}: expected an integer, got {value!r}")
    return out


def _typed(cls, section: dict, name: str, problems: list):
    """Instantiate ``cls`` after coercing fields whose default is an int/float."""
    kw = _known(cls, section, name, problems)
    defaults = cls()
    for f in fields(cls):
        if f.name not in kw:
            continue
        d = getattr(defaults, f.name)
        if isinstance(d, bool):
            if not isinstance(kw[f.name], bool):
                problems.append(f"{name}.{f.name}: expected true/false, got {kw[f.name]!r}")
                kw[f.name] = d
        elif isinstance(d, (int, float)):
            kw[f.name] = _number(kw[f.name], f"{name}.{f.name}", problems, type(d), d)
        elif d is None and kw[f.name] is not None:
            kw[f.name] = _number(kw[f.name], f"{name}.{f.name}", problems, int, None)
    return cls(**kw)


def _section(doc: dict, name: str, problems: list) -> dict:
    sec = doc.get(name) or {}
    if not isinstance(sec, dict):
        problems.append(f"{name}: must be an object")
        return {}
    return sec


def resolve(doc: dict, base_dir=".", seed: int | None = None, out: str | None = None,
            need_data: bool = True) -> RunConfig:
    """Validate ``doc`` and fill in defaults; raises :class:`ConfigError` listing every problem."""
    problems: list[str] = []
    if not isinstance(doc, dict):
        raise ConfigError(["config must be a JSON object"])
    doc = copy.deepcopy(doc)
    for k in doc:
        if k not in SECTIONS:
            problems.append(f"{k}: unknown section")
    base_dir = Path(base_dir)

    # data
    data = _section(doc, "data", problems)
    roles = None
    data_path = data.get("path")
    if data:
        for key in ("path", "response", "exposure"):
            if not data.get(key):
                problems.append(f"data.{key}: required")
        cont = list(data.get("continuous", []))
        cat = list(data.get("categorical", []))
        dup = {c for c in cont + cat if (cont + cat).count(c) > 1}
        if dup:
            problems.append(f"data: columns listed twice: {sorted(dup)}")
        if not cont and not cat:
            problems.append("data: at least one continuous or categorical covariate is required")
        roles = ColumnRoles(data.get("response", ""), data.get("exposure", ""), tuple(cont), tuple(cat),
                            data.get("id"))
        if data_path and need_data and not (base_dir / data_path).is_file():
            problems.append(f"data.path: file not found: {data_path}")
    elif need_data:
        problems.append("data: section required")

    sch = _typed(SchemaOptions, _section(doc, "schema", problems), "schema", problems)
    if sch.distinct_cap < 2 or sch.percentiles < 2:
        problems.append("schema: distinct_cap and percentiles must be >= 2")
    if not (0 < sch.test_ratio < 1 and 0 < sch.validation_ratio < 1):
        problems.append("schema: test_ratio and validation_ratio must be in (0, 1)")

    arch = _section(doc, "architecture", problems)
    raw_layers = arch.get("layers", DEFAULT_LAYERS)
    if not isinstance(raw_layers, (list, tuple)):
        problems.append("architecture.layers: must be a list of integers")
        raw_layers = DEFAULT_LAYERS
    layers = tuple(_number(q, "architecture.layers", problems, int, 1) for q in raw_layers)
    emb = _number(arch.get("embedding_dim", DEFAULT_EMBEDDING_DIM), "architecture.embedding_dim", problems, int, 1)
    if not layers or any(q < 1 for q in layers):
        problems.append("architecture.layers: need at least one layer, sizes >= 1")
    if emb < 1:
        problems.append("architecture.embedding_dim: must be >= 1")

    # constraints
    cons = _section(doc, "constraints", problems)
    preset = cons.get("preset", "global")
    if preset not in PRESETS:
        problems.append(f"constraints.preset: must be one of {sorted(PRESETS)}")
        preset = "none"
    table = {k: ColumnConstraint(*map(float, v[:2]), int(v[2])) for k, v in PRESETS[preset].items()}
    for name, over in (cons.get("columns") or {}).items():
        if not isinstance(over, dict):
            problems.append(f"constraints.columns.{name}: must be an object")
            continue
        bad = set(over) - {"smooth_lambda", "mono_lambda", "direction"}
        if bad:
            problems.append(f"constraints.columns.{name}: unknown keys {sorted(bad)}")
        base = table.get(name, ColumnConstraint())
        where = f"constraints.columns.{name}"
        table[name] = ColumnConstraint(
            _number(over.get("smooth_lambda", base.smooth_lambda), f"{where}.smooth_lambda", problems),
            _number(over.get("mono_lambda", base.mono_lambda), f"{where}.mono_lambda", problems),
            _number(over.get("direction", base.direction), f"{where}.direction", problems, int, -1))
    on_exposure = cons.get("penalty_on_exposure_scale", False)
    if not isinstance(on_exposure, bool):
        problems.append("constraints.penalty_on_exposure_scale: expected true/false")
        on_exposure = False
    spec = ConstraintSpec(table, on_exposure)
    problems += spec.problems()
    if roles is not None:
        for name in spec.active_columns:
            if name not in roles.covariates:
                problems.append(f"constraints: column {name!r} is not a declared covariate")

    # training and mode
    tr_doc = dict(_section(doc, "training", problems))
    if "mode" in tr_doc:
        problems.append("training.mode: set the top-level 'mode' instead")
        tr_doc.pop("mode")
    mode = doc.get("mode", "icenet_local" if preset == "local" else "icenet_global")
    if preset == "local":
        tr_doc.setdefault("omega", LOCAL_WINDOW)
    training = _typed(TrainConfig, tr_doc, "training", problems)
    training.mode = mode
    if seed is not None:
        training.seed = int(seed)
    problems += training.problems()

    output = _section(doc, "output", problems)
    out_dir = out or output.get("dir") or "icenet_out"

    interp = _typed(InterpretOptions, _section(doc, "interpret", problems), "interpret", problems)
    if interp.split not in ("learn", "validation", "test"):
        problems.append("interpret.split: must be learn, validation or test")
    if interp.top_k < 1:
        problems.append("interpret.top_k: must be >= 1")
    sweep = _typed(SweepOptions, _section(doc, "sweep", problems), "sweep", problems)
    if not isinstance(sweep.scales, list) or not sweep.scales:
        problems.append("sweep.scales: must be a non-empty list")
        sweep.scales = list(SWEEP_SCALES)
    sweep.scales = [_number(a, "sweep.scales", problems) for a in sweep.scales]
    if any(a < 0 for a in sweep.scales):
        problems.append("sweep.scales: must be >= 0")

    synth = synth_path = None
    if doc.get("synth") is not None:
        sdoc = dict(_section(doc, "synth", problems))
        synth_path = sdoc.pop("path", None)
        try:
            synth = SynthSpec.from_dict(sdoc)
            if seed is not None:
                synth.seed = int(seed)
            problems += [f"synth: {p}" for p in synth.problems()]
        except (TypeError, ValueError, KeyError) as exc:
            problems.append(f"synth: {exc}")

    if problems:
        raise ConfigError(problems)
    return RunConfig(data_path, roles, sch, tuple(int(q) for q in layers), emb, spec, training, out_dir,
                     interp, sweep, synth, synth_path, base_dir)


def load(path, **kw) -> RunConfig:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError([f"cannot read config {path}: {exc}"]) from exc
    except json.JSONDecodeError as exc:
        raise ConfigError([f"config {path} is not valid JSON: {exc}"]) from exc
    return resolve(doc, base_dir=path.parent, **kw)
