import csv
import json
from dataclasses import replace

import numpy as np
import pytest

from siamloc.channel import TIntersection
from siamloc.cli import main
from siamloc.config import OUTPUT_DIR_ENV, ExperimentConfig, SammonConfig, preset, unsupervised
from siamloc.dataset import load_dataset
from siamloc.exceptions import InvalidConfigError, StaleDatasetError, UnsupportedOperationError
from siamloc.experiments import (
    Embedding,
    cmd_evaluate,
    cmd_generate,
    cmd_reproduce,
    cmd_train,
    load_embedding,
    save_embedding,
    suite_cells,
)
from siamloc.nn import SgdConfig, load_checkpoint


def tiny(**changes):
    cfg = ExperimentConfig(
        n_train=60,
        n_test=40,
        n_train_traces=2,
        n_test_traces=2,
        k_values=(1, 5),
        sgd=SgdConfig(learning_rate=1e-5, batch_size=20, epochs=2),
        sammon=SammonConfig(iters=20),
    )
    regime = changes.pop("regime", None)
    if regime:
        cfg = cfg.with_regime(regime, anchor_fraction={"supervised": 1.0, "semisupervised": 0.1, "unsupervised": 0.0}[regime])
    return replace(cfg, **changes)


# -- config --------------------------------------------------------------------


def test_config_json_round_trip(tmp_path):
    cfg = preset("semisupervised")
    cfg.save(tmp_path / "c.json")
    back = ExperimentConfig.load(tmp_path / "c.json")
    assert back == cfg
    assert back.to_json() == cfg.to_json()


@pytest.mark.parametrize(
    "changes",
    [
        {"method": "sammon"},  # sammon needs the unsupervised regime
        {"method": "fcnn", "regime": "semisupervised", "anchor_fraction": 0.1},
        {"regime": "semisupervised", "anchor_fraction": 1.0},
        {"mode": "grid"},
        {"anchor_fraction": 1.5},
    ],
)
def test_config_rejects(changes):
    base = ExperimentConfig()
    regime = changes.pop("regime", None)
    with pytest.raises(InvalidConfigError):
        cfg = base.with_regime(regime, **changes) if regime else replace(base, **changes)


def test_config_rejects_unknown_keys():
    with pytest.raises(InvalidConfigError):
        ExperimentConfig.from_dict({"epochz": 3})


def test_unsupervised_variant():
    cfg = preset("unsupervised")
    assert cfg == unsupervised(ExperimentConfig())
    assert cfg.sigma == 2.0 and cfg.anchor_fraction == 0.0 and cfg.loss.pairwise_weight == 1.0
    assert cfg.sgd.learning_rate < ExperimentConfig().sgd.learning_rate
    for label, cell, _ in suite_cells("full-grid", ExperimentConfig()):
        assert (cell.sigma == 2.0) == (cell.regime == "unsupervised"), label


def test_output_dir_env(monkeypatch, tmp_path):
    cfg = replace(ExperimentConfig(), output_dir="runs/a")
    monkeypatch.delenv(OUTPUT_DIR_ENV, raising=False)
    assert str(cfg.resolved_output_dir()) == "runs/a"
    monkeypatch.setenv(OUTPUT_DIR_ENV, str(tmp_path))
    assert cfg.resolved_output_dir() == tmp_path / "runs/a"


# -- pipeline --------------------------------------------------------------------


def test_generate_layout(tmp_path):
    cfg = tiny(regime="semisupervised")
    paths = cmd_generate(cfg, tmp_path, csv_export=True)
    train, test = load_dataset(paths["train"]), load_dataset(paths["test"])
    assert train.features.shape == (60, 256) and test.features.shape == (40, 256)
    assert train.n_anchors == 6 and test.n_anchors == 0
    assert train.header["pipeline"] == test.header["pipeline"]
    assert (tmp_path / "train.csv").exists()
    assert json.loads((tmp_path / "config.json").read_text())["regime"] == "semisupervised"


def test_generate_full_anchoring(tmp_path):
    cmd_generate(tiny(), tmp_path)
    assert load_dataset(tmp_path / "train.npz").anchor_mask.all()


def test_generate_traces(tmp_path):
    cfg = tiny(mode="t_intersection")
    cmd_generate(cfg, tmp_path)
    train, test = load_dataset(tmp_path / "train.npz"), load_dataset(tmp_path / "test.npz")
    assert set(np.unique(train.trace_ids)) == {0, 1}
    assert set(np.unique(test.trace_ids)) == {2, 3}
    road = TIntersection.for_scene(cfg.scene)
    assert road.contains(train.positions).all()


def test_train_and_evaluate_siamese(tmp_path):
    cfg = tiny(regime="unsupervised")
    cmd_generate(cfg, tmp_path)
    cmd_train(cfg, tmp_path)
    model = load_checkpoint(tmp_path / "model.npz")
    assert model.alpha == 1.0
    rep = cmd_evaluate(cfg, tmp_path, "test")
    assert rep.mde is None
    assert "MDE" not in (tmp_path / "report_test.txt").read_text()
    with open(tmp_path / "scatter_test.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["true_x", "true_y", "pred_x", "pred_y", "trace_id"]
    assert len(rows) == 41
    log_rows = (tmp_path / "train_log.csv").read_text().splitlines()
    assert len(log_rows) == 3


def test_oracle_checkpoint_report(tmp_path):
    # a "model" that returns the truth: evaluate a saved embedding equal to the positions
    cfg = tiny(regime="unsupervised", method="sammon")
    cmd_generate(cfg, tmp_path)
    train = load_dataset(tmp_path / "train.npz")
    save_embedding(Embedding(train.positions.copy()), tmp_path / "embedding.npz")
    rep = cmd_evaluate(cfg, tmp_path, "train")
    assert rep.ks == 0.0 and all(v == 1.0 for v in rep.tw.values()) and all(v == 1.0 for v in rep.ct.values())


def test_sammon_has_no_test_results(tmp_path):
    cfg = tiny(regime="unsupervised", method="sammon")
    cmd_generate(cfg, tmp_path)
    cmd_train(cfg, tmp_path)
    assert load_embedding(tmp_path / "embedding.npz").points.shape == (60, 2)
    cmd_evaluate(cfg, tmp_path, "train")
    with pytest.raises(UnsupportedOperationError):
        cmd_evaluate(cfg, tmp_path, "test")


def test_fcnn_on_ten_percent(tmp_path):
    cfg = tiny(regime="semisupervised")
    cmd_generate(cfg, tmp_path)
    ten = cfg.with_regime("supervised", anchor_fraction=0.1, anchored_only=True)
    for method in ("fcnn", "siamese"):
        cmd_train(replace(ten, method=method), tmp_path)
        assert cmd_evaluate(replace(ten, method=method), tmp_path, "test").mde > 0


def test_stale_dataset(tmp_path):
    cfg = tiny()
    cmd_generate(cfg, tmp_path)
    with pytest.raises(StaleDatasetError):
        cmd_train(replace(cfg, sigma=2.0), tmp_path)


def test_supervised_needs_full_anchors(tmp_path):
    cfg = tiny(regime="semisupervised")
    cmd_generate(cfg, tmp_path)
    with pytest.raises(InvalidConfigError):
        cmd_train(cfg.with_regime("supervised", anchor_fraction=0.1), tmp_path)


# -- reproduce ----------------------------------------------------------------------


def test_suite_cells():
    cells = suite_cells("full-grid", ExperimentConfig())
    assert len(cells) == 14
    assert all(cfg.method != "sammon" or cfg.regime == "unsupervised" for _, cfg, _ in cells)
    assert len(suite_cells("t-intersection", ExperimentConfig())) == 2
    with pytest.raises(InvalidConfigError):
        suite_cells("everything", ExperimentConfig())


def test_reproduce_t_intersection_deterministic(tmp_path):
    cfg = tiny()
    a = cmd_reproduce("t-intersection", cfg, tmp_path / "a")
    b = cmd_reproduce("t-intersection", cfg, tmp_path / "b")
    assert a == b
    lines = a.splitlines()
    assert lines[0].startswith("run,split,MDE,KS,TW@1,TW@5,CT@1,CT@5")
    assert len(lines) == 3
    assert (tmp_path / "a" / "summary.txt").exists()


# -- CLI ------------------------------------------------------------------------------


def test_cli_round(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv(OUTPUT_DIR_ENV, str(tmp_path))
    flags = ["--out", "run", "--n-train", "40", "--n-test", "20", "--k", "1", "3", "--epochs", "1", "--batch-size", "20"]
    assert main(["generate", *flags]) == 0
    assert (tmp_path / "run" / "train.npz").exists()
    assert main(["train", "--out", "run"]) == 0
    assert main(["evaluate", "--out", "run"]) == 0
    out = capsys.readouterr().out
    assert "MDE" in out and "TW@3" in out
    assert (tmp_path / "run" / "report_test.csv").exists()


def test_cli_errors(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv(OUTPUT_DIR_ENV, str(tmp_path))
    assert main(["train", "--out", "missing"]) == 2
    assert main(["generate", "--out", "x", "--regime", "unsupervised", "--method", "fcnn"]) == 2
    assert "error" in capsys.readouterr().err
    with pytest.raises(SystemExit):
        main(["reproduce", "nope"])
