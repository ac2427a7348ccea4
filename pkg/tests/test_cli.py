import json

import numpy as np
import pytest

from simlabel.annotation_store import load_dataset, save_dataset
from simlabel.cli import EXIT_CONFIG, EXIT_DATA, EXIT_OK, EXIT_TRAINING, main, parse_axis_values
from simlabel.config import ConfigError, ExperimentConfig
from simlabel.synth import generate, two_group_spec

GEN = {"preset": "two_group", "num_samples": 150, "feature_dim": 6, "class_separation": 1.0}


def write_config(tmp_path, **overrides):
    doc = {
        "dataset": {"generate": dict(GEN)},
        "policy": {"mode": ["skip", "sim_weighted", "sim_weighted_confidence"],
                   "max_epochs": 2, "batch_size": 16},
        "seeds": [0, 1],
        "output_dir": "out",
    }
    doc.update(overrides)
    path = tmp_path / "config.json"
    path.write_text(json.dumps(doc))
    return path


def test_config_parsing(tmp_path):
    cfg = ExperimentConfig.from_file(write_config(tmp_path))
    assert cfg.modes == ["skip", "sim_weighted", "sim_weighted_confidence"]
    assert cfg.seeds == [0, 1] and cfg.output_dir == tmp_path / "out"
    assert cfg.policy.max_epochs == 2 and cfg.metric == "cohen_kappa"
    assert cfg.generator_spec().num_samples == 150


@pytest.mark.parametrize(
    "change, field",
    [
        ({"dataset": {"generate": GEN, "load": "x.csv"}}, "dataset"),
        ({"dataset": {}}, "dataset"),
        ({"seeds": []}, "seeds"),
        ({"policy": {"mode": "best"}}, "policy.mode"),
        ({"policy": {"confidence_threshold": -1}}, "confidence_threshold"),
        ({"policy": {"temperature": 2}}, "temperature"),
        ({"metric": "cosine"}, "metric"),
        ({"removal_ratio": 2}, "removal_ratio"),
        ({"extra": 1}, "extra"),
    ],
)
def test_config_errors_name_the_field(tmp_path, change, field):
    with pytest.raises(ConfigError, match=field):
        ExperimentConfig.from_file(write_config(tmp_path, **change))


def test_config_hash_tracks_every_field(tmp_path):
    base = ExperimentConfig.from_file(write_config(tmp_path))
    same = ExperimentConfig.from_file(write_config(tmp_path))
    assert base.config_hash() == same.config_hash()
    changed = ExperimentConfig.from_file(write_config(tmp_path, metric="alpha"))
    assert changed.config_hash() != base.config_hash()
    assert base.with_overrides(seed=3).config_hash() != base.config_hash()
    assert base.with_overrides(seed=3).seeds == [3]


def test_run_writes_reports_and_is_reproducible(tmp_path, capsys):
    cfg = write_config(tmp_path)
    assert main(["run", str(cfg)]) == EXIT_OK
    out = tmp_path / "out"
    for seed in (0, 1):
        for mode in ("skip", "sim_weighted", "sim_weighted_confidence"):
            d = out / f"seed_{seed}" / mode
            for name in ("report.json", "accuracy.csv", "dic.csv", "trace.csv",
                         "imputations.jsonl", "similarity.csv", "similarity.json"):
                assert (d / name).exists(), d / name
            assert len(list((d / "models").glob("annotator_*.json"))) == 10
    skip_trace = (out / "seed_0" / "skip" / "trace.csv").read_text().splitlines()
    assert all(line.split(",")[4] == "0" for line in skip_trace[1:])
    assert (out / "seed_0" / "skip" / "imputations.jsonl").read_text() == ""
    assert len((out / "comparison.csv").read_text().splitlines()) == 4
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["config_hash"] == ExperimentConfig.from_file(cfg).config_hash()
    assert len(manifest["runs"]) == 6

    snapshot = {p: p.read_bytes() for p in out.rglob("*") if p.is_file()}
    assert main(["run", str(cfg)]) == EXIT_OK
    for p, content in snapshot.items():
        assert p.read_bytes() == content, p


def test_run_flags_override(tmp_path):
    cfg = write_config(tmp_path, policy={"mode": "skip", "max_epochs": 1})
    assert main(["run", str(cfg), "--out", str(tmp_path / "o2"), "--seed-override", "7"]) == EXIT_OK
    assert (tmp_path / "o2" / "seed_7" / "skip" / "report.json").exists()
    assert not (tmp_path / "out").exists()


def test_run_on_loaded_dataset(tmp_path):
    m, _ = generate(two_group_spec(num_samples=120, feature_dim=4))
    save_dataset(m, tmp_path / "data.csv")
    cfg = write_config(tmp_path, dataset={"load": "data.csv"}, removal_ratio=0.2,
                       policy={"mode": "sim_weighted", "max_epochs": 1})
    assert main(["run", str(cfg)]) == EXIT_OK
    report = json.loads((tmp_path / "out" / "seed_0" / "sim_weighted" / "report.json").read_text())
    assert report["dataset"] == "data"


def test_config_error_exit_code(tmp_path, capsys):
    cfg = write_config(tmp_path, seeds=[])
    assert main(["run", str(cfg)]) == EXIT_CONFIG
    assert "seeds" in capsys.readouterr().err
    assert main(["run", str(tmp_path / "missing.json")]) == EXIT_CONFIG


def test_training_failure_keeps_partial_artifacts(tmp_path):
    cfg = write_config(tmp_path, policy={"mode": "sim_weighted", "init_scale": 1e308, "max_epochs": 2},
                       seeds=[0])
    with np.errstate(all="ignore"):
        assert main(["run", str(cfg)]) == EXIT_TRAINING
    run_dir = tmp_path / "out" / "seed_0" / "sim_weighted"
    assert "non-finite" in (run_dir / "FAILED").read_text()
    assert (run_dir / "trace.csv").exists()
    assert json.loads((tmp_path / "out" / "manifest.json").read_text())["failed"] == "seed_0/sim_weighted"


@pytest.mark.parametrize(
    "axis, values, rows",
    [
        ("threshold", "0.5,0.6,0.7,0.8", 4),
        ("similarity_metric", "pearson,alpha,kappa", 3),
        ("confidence_variant", "max_only,entropy_only,combined", 3),
    ],
)
def test_ablate_tables(tmp_path, axis, values, rows):
    cfg = write_config(tmp_path, seeds=[0], policy={"max_epochs": 1})
    assert main(["ablate", str(cfg), "--axis", axis, "--values", values]) == EXIT_OK
    lines = (tmp_path / "out" / f"ablation_{axis}.csv").read_text().splitlines()
    assert lines[0] == "value,mean_accuracy,std_accuracy,mean_dic,n_seeds"
    assert len(lines) == rows + 1


def test_ablate_value_validation():
    assert parse_axis_values("threshold", "0.5, 0.8") == [0.5, 0.8]
    assert parse_axis_values("similarity_metric", "kappa") == ["cohen_kappa"]
    for axis, raw in [("threshold", "1.5"), ("threshold", "high"), ("confidence_variant", "mean"),
                      ("similarity_metric", "cosine"), ("threshold", "")]:
        with pytest.raises(ConfigError):
            parse_axis_values(axis, raw)


def test_validate_reports_diagnostics(tmp_path, capsys):
    m, _ = generate(two_group_spec(num_samples=80, feature_dim=3))
    path = tmp_path / "d.csv"
    save_dataset(m, path)
    before = path.read_bytes()
    assert main(["validate", str(path)]) == EXIT_OK
    text = capsys.readouterr().out
    assert "missing rate" in text and "A_10" in text
    assert main(["validate", str(path), "--json"]) == EXIT_OK
    diag = json.loads(capsys.readouterr().out)
    np.testing.assert_allclose(diag["missing_rates"], m.missing_rates())
    assert np.array(diag["overlap_counts"]).shape == (10, 10)
    assert path.read_bytes() == before


def test_validate_complete_dataset(tmp_path, capsys):
    m, _ = generate(two_group_spec(num_samples=30, feature_dim=2, missing_rates=np.zeros(10)))
    save_dataset(m, tmp_path / "d.json")
    assert main(["validate", str(tmp_path / "d.json"), "--json"]) == EXIT_OK
    assert json.loads(capsys.readouterr().out)["missing_rates"] == [0.0] * 10


def test_validate_malformed_file(tmp_path, capsys):
    path = tmp_path / "bad.csv"
    path.write_text("sample_id,f_0,a_0\nx,1.0,0\ny,1.0\n")
    assert main(["validate", str(path)]) == EXIT_DATA
    assert "line 3" in capsys.readouterr().err


def test_generate_writes_dataset_and_truth(tmp_path):
    spec_path = tmp_path / "gen.json"
    two_group_spec(num_samples=60, feature_dim=3, seed=2).save(spec_path)
    assert main(["generate", str(spec_path), "-o", str(tmp_path / "d.csv")]) == EXIT_OK
    m = load_dataset(tmp_path / "d.csv")
    truth = json.loads((tmp_path / "d.truth.json").read_text())
    assert m.num_samples == 60 and len(truth["true_classes"]) == 60
    (tmp_path / "preset.json").write_text(json.dumps({"preset": "amer2", "feature_dim": 4}))
    assert main(["generate", str(tmp_path / "preset.json"), "-o", str(tmp_path / "a.json")]) == EXIT_OK
    assert load_dataset(tmp_path / "a.json").num_classes == 8
