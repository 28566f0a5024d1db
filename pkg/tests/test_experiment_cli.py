import csv
import json

import numpy as np
import pytest

from apricot import cli, experiment
from apricot.experiment import ExperimentConfig, StageError


def _small(**kw):
    base = dict(per_variety=8, repeats=1, models=("mlp",), seed=11)
    base.update(kw)
    return ExperimentConfig(**base)


def test_config_validation():
    with pytest.raises(ValueError):
        ExperimentConfig(ratios=(0.5, 0.3, 0.3))
    with pytest.raises(ValueError):
        ExperimentConfig(repeats=0)
    with pytest.raises(ValueError):
        ExperimentConfig(models=())
    with pytest.raises(ValueError):
        ExperimentConfig(models=("svm",))


def test_config_dict_round_trip():
    cfg = _small(spread_scale=0.5)
    assert ExperimentConfig.from_dict(json.loads(json.dumps(cfg.to_dict()))) == cfg


def test_load_toml(tmp_path):
    (tmp_path / "c.toml").write_text('[run]\nrepeats = 3\nseed = 7\n\n[rbf]\nradius = 0.4\n')
    cfg = experiment.load_config(tmp_path / "c.toml")
    assert (cfg.repeats, cfg.seed, cfg.rbf.radius, cfg.rbf.sigma) == (3, 7, 0.4, 80.0)
    (tmp_path / "bad.toml").write_text("colour = 1\n")
    with pytest.raises(ValueError):
        experiment.load_config(tmp_path / "bad.toml")


def test_repeat_seeds_distinct():
    seeds = [experiment.repeat_seed(2020, r) for r in range(10)]
    assert len(set(seeds)) == 10 and seeds == [experiment.repeat_seed(2020, r) for r in range(10)]


def test_calibration_scale_recovers_pixel_size():
    s = experiment.calibration_scale(experiment.synthgen.RenderConfig())
    assert s.mm_per_pixel == pytest.approx(0.1, rel=0.01)


def test_small_run_layout_and_determinism(tmp_path):
    a = experiment.run_experiment(_small(), tmp_path / "a")
    experiment.run_experiment(_small(), tmp_path / "b")
    for name in ("report.json", "report.txt", "accuracy.csv", "features.csv", "manifest.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    assert (tmp_path / "a" / "repeat_00" / "model_mlp.json").exists()
    row = a["accuracy"]["mlp"]
    defined = [v for v in row["per_variety"] if v is not None]
    assert row["mean"] == pytest.approx(np.mean(defined), abs=1e-6)
    assert a["seeds"] == [experiment.repeat_seed(11, 0)]


def test_accuracy_layout():
    table = {k: {"per_variety": list(v[:5]), "mean": v[5]} for k, v in experiment.PUBLISHED_ACCURACY.items()}
    lines = experiment.render_accuracy_table(table).splitlines()
    assert len(lines) == 6
    assert lines[0].split("\t")[1:] == ["Ordubad (%)", "Shahrod (%)", "Maragheh (%)", "Oromieh (%)",
                                        "Nasiri (%)", "Mean (%)"]
    assert [ln.split("\t")[0] for ln in lines[1:]] == [experiment.MODEL_LABELS[k] for k in experiment.MODEL_NAMES]


def test_emit_plots(tmp_path):
    experiment.run_experiment(_small(), tmp_path)
    summary = experiment.emit_plots(tmp_path, bins=10)
    with open(tmp_path / "mass_error_histogram.csv") as fh:
        counts = [int(r["count"]) for r in csv.DictReader(fh)]
    assert sum(counts) == summary["n"] == 40
    with pytest.raises(StageError):
        experiment.emit_plots(tmp_path / "nothing")


def test_histogram_of_perfect_predictor():
    rows = experiment.histogram_rows(np.zeros(12), bins=5)
    assert sum(r[2] for r in rows) == 12 and max(r[2] for r in rows) == 12


def test_cli_pipeline(tmp_path, capsys):
    s = tmp_path / "s"
    assert cli.main(["synth", "--seed", "2", "--per-variety", "5", "--out-dir", str(s)]) == 0
    assert len(list((s / "images").glob("*.pgm"))) == 75
    feats = tmp_path / "f.csv"
    assert cli.main(["extract", "--manifest", str(s / "manifest.csv"), "--images", str(s / "images"),
                     "--out", str(feats)]) == 0
    assert cli.main(["fit-mass", "--features", str(feats), "--manifest", str(s / "manifest.csv"),
                     "--out-dir", str(tmp_path / "m"), "--seed", "0"]) == 0
    fm = tmp_path / "fm.csv"
    assert cli.main(["predict-mass", "--model", str(tmp_path / "m" / "mass_model.json"),
                     "--features", str(feats), "--out", str(fm)]) == 0
    for model in ("mlp", "rbf", "anfis-fcm"):
        out = tmp_path / f"{model}.json"
        assert cli.main(["train", "--features", str(fm), "--model", model, "--seed", "0",
                         "--split", str(tmp_path / "m" / "split.json"), "--out", str(out)]) == 0
        assert cli.main(["evaluate", "--model", str(out), "--features", str(fm)]) == 0
    assert cli.main(["stats", "--features", str(feats), "--manifest", str(s / "manifest.csv"),
                     "--out-dir", str(tmp_path / "st")]) == 0
    assert (tmp_path / "st" / "mass_by_variety.csv").exists()


def test_cli_run_and_plots(tmp_path, capsys):
    out = tmp_path / "r"
    assert cli.main(["run", "--seed", "3", "--repeats", "1", "--per-variety", "6", "--models", "mlp,rbf",
                     "--out-dir", str(out)]) == 0
    assert "Mean (%)" in capsys.readouterr().out
    assert cli.main(["emit-plots", "--run-dir", str(out)]) == 0


def test_cli_failures_are_stage_tagged(tmp_path, capsys):
    assert cli.main(["extract", "--manifest", str(tmp_path / "none.csv"), "--images", str(tmp_path),
                     "--out", str(tmp_path / "x.csv"), "--mm-per-pixel", "0.1"]) != 0
    assert "[extract]" in capsys.readouterr().err
    assert cli.main(["emit-plots", "--run-dir", str(tmp_path)]) != 0
    assert "[emit-plots]" in capsys.readouterr().err
    with pytest.raises(SystemExit):
        cli.main(["train", "--model", "svm", "--features", "f", "--out", "o"])
