import json

import pytest

from icenet.config import ConfigError, load, resolve


def base_doc(tmp_path):
    (tmp_path / "d.csv").write_text("y,v,a,k\n0,1,1,A\n")
    return {"data": {"path": "d.csv", "response": "y", "exposure": "v", "continuous": ["a"],
                     "categorical": ["k"]},
            "constraints": {"preset": "none", "columns": {"a": {"smooth_lambda": 1, "mono_lambda": 100}}}}


def test_minimal_defaults(tmp_path):
    cfg = resolve(base_doc(tmp_path), base_dir=tmp_path)
    assert cfg.mode == "icenet_global"
    assert cfg.layers == (32, 16, 8) and cfg.embedding_dim == 5
    assert cfg.training.epochs == 50 and cfg.training.runs == 10
    assert cfg.constraints.columns["a"].mono_lambda == 100.0
    assert cfg.schema.test_ratio == 0.1 and cfg.schema.validation_ratio == 0.05
    assert cfg.sweep.scales == [10.0**k for k in range(-5, 6)]
    json.dumps(cfg.to_dict())


def test_global_preset_is_default():
    cfg = resolve({"constraints": {}}, need_data=False)
    assert cfg.constraints.columns["DrivAge"].smooth_lambda == 10.0
    assert cfg.constraints.columns["BonusMalus"].mono_lambda == 100.0


def test_local_preset():
    cfg = resolve({"constraints": {"preset": "local"}}, need_data=False)
    assert cfg.mode == "icenet_local" and cfg.training.omega == 5
    assert cfg.constraints.columns["DrivAge"].smooth_lambda == 200.0


def test_overrides_seed_and_out(tmp_path):
    cfg = resolve(base_doc(tmp_path), base_dir=tmp_path, seed=42, out="elsewhere")
    assert cfg.training.seed == 42 and cfg.output_dir == "elsewhere"


def test_every_problem_is_reported(tmp_path):
    doc = base_doc(tmp_path)
    doc["data"]["path"] = "missing.csv"
    doc["training"] = {"epochs": 0, "learning_rate": "fast", "batch_sise": 3}
    doc["architecture"] = {"layers": [4, "x"], "embedding_dim": 0}
    doc["constraints"]["columns"]["zz"] = {"mono_lambda": -1}
    doc["mode"] = "boosting"
    doc["bogus"] = {}
    with pytest.raises(ConfigError) as exc:
        resolve(doc, base_dir=tmp_path)
    text = " | ".join(exc.value.problems)
    for fragment in ("missing.csv", "training.epochs", "training.learning_rate", "batch_sise", "architecture.layers",
                     "embedding_dim", "zz", "mode", "bogus"):
        assert fragment in text, fragment
    assert len(exc.value.problems) >= 9


@pytest.mark.parametrize("doc", [
    {"schema": {"test_ratio": 1.5}},
    {"schema": {"distinct_cap": "many"}},
    {"interpret": {"split": "holdout"}},
    {"interpret": {"top_k": 0}},
    {"sweep": {"scales": [-1]}},
    {"sweep": {"scales": "all"}},
    {"constraints": {"preset": "strict"}},
    {"constraints": {"columns": {"a": {"direction": "up"}}}},
    {"constraints": {"columns": {"a": 3}}},
    {"constraints": {"penalty_on_exposure_scale": "yes"}},
    {"training": {"mode": "fcn"}},
    {"training": {"include_initial": 1}},
    {"synth": {"n_rows": 0}},
    {"synth": {"rows": 10}},
    {"data": {"path": "x.csv"}},
    [],
])
def test_invalid_documents(doc):
    with pytest.raises(ConfigError):
        resolve(doc, need_data=False)


def test_data_section_required_when_needed():
    with pytest.raises(ConfigError, match="data"):
        resolve({})


def test_undeclared_constrained_column(tmp_path):
    doc = base_doc(tmp_path)
    doc["constraints"]["preset"] = "global"
    with pytest.raises(ConfigError, match="DrivAge"):
        resolve(doc, base_dir=tmp_path)


def test_load_errors(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        load(tmp_path / "none.json")
    (tmp_path / "bad.json").write_text("{")
    with pytest.raises(ConfigError, match="valid JSON"):
        load(tmp_path / "bad.json")


def test_load_resolves_relative_to_config(tmp_path):
    doc = base_doc(tmp_path)
    (tmp_path / "c.json").write_text(json.dumps(doc))
    assert load(tmp_path / "c.json").base_dir == tmp_path
