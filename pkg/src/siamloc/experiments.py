"""generate -> train -> evaluate pipeline and the batch suites built on it.

Every run directory holds ``config.json`` plus the artifacts of each step:

    train.npz, test.npz        datasets (features, positions, anchors, traces)
    model.npz | embedding.npz  trained network or Sammon embedding
    train_log.csv              per-epoch losses (or per-iteration for Sammon)
    report_<split>.csv/.txt    metric tables
    scatter_<split>.csv        true vs predicted positions for plotting
"""

from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import replace
from pathlib import Path

import numpy as np

from .baselines import Embedding, sammon_nonparametric, train_fcnn
from .channel import SceneConfig, gen_t_intersection_traces, make_scene, place_square_ring, place_uniform, synth_csi_batch
from .config import ExperimentConfig, unsupervised
from .dataset import Dataset, anchor_subsample, export_csv, load_dataset, save_dataset
from .exceptions import InvalidConfigError, StaleDatasetError, UnsupportedOperationError
from .features import csi_to_features, pipeline_tag
from .metrics import MetricReport, evaluate, valid_k_values
from .nn import DEFAULT_LAYER_DIMS, forward, init_model, load_checkpoint, save_checkpoint
from .siamese import train

log = logging.getLogger(__name__)

EMBEDDING_FORMAT_VERSION = 1
SUITES = ("full-grid", "t-intersection")


def _out_dir(cfg: ExperimentConfig, out_dir=None) -> Path:
    path = Path(out_dir) if out_dir is not None else cfg.resolved_output_dir()
    path.mkdir(parents=True, exist_ok=True)
    return path


def _write_config(cfg: ExperimentConfig, out: Path) -> None:
    cfg.save(out / "config.json")


# -- generate ------------------------------------------------------------------


def _sample_positions(cfg: ExperimentConfig, scene: SceneConfig):
    """Train and test positions (and trace ids; None outside trace mode)."""
    if cfg.mode == "uniform":
        train_pos = place_uniform(scene, cfg.n_train, seed=cfg.seed + 1)
        half = cfg.n_test // 2
        test_pos = np.vstack([place_uniform(scene, half, seed=cfg.seed + 2), place_square_ring(scene, half)])
        return train_pos, None, test_pos, None
    tr = gen_t_intersection_traces(scene, cfg.n_train_traces, cfg.trace_speed, cfg.trace_dt, seed=cfg.seed + 1)
    te = gen_t_intersection_traces(
        scene, cfg.n_test_traces, cfg.trace_speed, cfg.trace_dt, seed=cfg.seed + 2, first_id=cfg.n_train_traces
    )

    def stack(traces):
        pos = np.vstack([t.positions for t in traces])
        ids = np.concatenate([np.full(len(t), t.trace_id) for t in traces])
        return pos, ids

    return (*stack(tr), *stack(te))


def cmd_generate(cfg: ExperimentConfig, out_dir=None, csv_export: bool = False) -> dict:
    """Synthesize CSI, extract features and write the train/test datasets."""
    out = _out_dir(cfg, out_dir)
    scene, scatterers = make_scene(cfg.scene)
    train_pos, train_ids, test_pos, test_ids = _sample_positions(cfg, scene)
    noise_rng = np.random.default_rng(cfg.seed + 3) if scene.snr_db is not None else None
    header = {
        "scene": scene.to_dict(),
        "mode": cfg.mode,
        "pipeline": pipeline_tag(cfg.sigma),
        "seed": cfg.seed,
    }
    paths = {}
    for split, pos, ids in (("train", train_pos, train_ids), ("test", test_pos, test_ids)):
        feats = csi_to_features(synth_csi_batch(scene, scatterers, pos, rng=noise_rng), cfg.sigma)
        if split == "train":
            mask = anchor_subsample(len(pos), cfg.anchor_fraction, cfg.seed + 4)
            extra = {"anchor_fraction": cfg.anchor_fraction, "anchor_seed": cfg.seed + 4}
        else:
            mask = np.zeros(len(pos), dtype=bool)
            extra = {}
        data = Dataset(feats, pos, mask, ids, dict(header, split=split, **extra))
        paths[split] = out / f"{split}.npz"
        save_dataset(data, paths[split])
        if csv_export:
            export_csv(data, out / f"{split}.csv")
        log.info("wrote %s (%d samples, %d anchored)", paths[split], len(data), data.n_anchors)
    _write_config(cfg, out)
    return paths


# -- train ---------------------------------------------------------------------


def load_checked(path, cfg: ExperimentConfig) -> Dataset:
    """Load a dataset and refuse it if it came from another feature pipeline."""
    data = load_dataset(path)
    expected = pipeline_tag(cfg.sigma)
    if data.header.get("pipeline") != expected:
        raise StaleDatasetError(f"{path} was built with {data.header.get('pipeline')!r}, config expects {expected!r}")
    return data


def save_embedding(emb: Embedding, path, header: dict | None = None) -> None:
    meta = dict(header or {}, format="siamloc-embedding", version=EMBEDDING_FORMAT_VERSION, best_iter=emb.best_iter)
    buf = io.BytesIO()
    np.savez(buf, header=np.array(json.dumps(meta, sort_keys=True)), points=emb.points, loss_history=emb.loss_history)
    Path(path).write_bytes(buf.getvalue())


def load_embedding(path) -> Embedding:
    with np.load(path, allow_pickle=False) as npz:
        meta = json.loads(str(npz["header"]))
        if meta.get("format") != "siamloc-embedding":
            raise InvalidConfigError(f"{path} is not an embedding file")
        return Embedding(npz["points"].copy(), npz["loss_history"].copy(), int(meta["best_iter"]))


def _training_set(cfg: ExperimentConfig, data: Dataset) -> Dataset:
    if cfg.regime == "unsupervised":
        return data.with_anchor_mask(np.zeros(len(data), dtype=bool))
    if cfg.anchored_only or (cfg.method == "fcnn" and data.n_anchors < len(data)):
        return data.subset(np.flatnonzero(data.anchor_mask))
    return data


def cmd_train(cfg: ExperimentConfig, out_dir=None) -> Path:
    """Train the configured method on ``train.npz``; returns the artifact path."""
    out = _out_dir(cfg, out_dir)
    data = _training_set(cfg, load_checked(out / "train.npz", cfg))
    meta = {"method": cfg.method, "regime": cfg.regime, "pipeline": pipeline_tag(cfg.sigma)}
    if cfg.method == "sammon":
        emb = sammon_nonparametric(
            data,
            iters=cfg.sammon.iters,
            lr=cfg.sammon.learning_rate,
            epsilon=cfg.loss.epsilon,
            seed=cfg.seed,
            momentum=cfg.sammon.momentum,
        )
        path = out / "embedding.npz"
        save_embedding(emb, path, meta)
        with open(out / "train_log.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iteration", "sammon_loss"])
            w.writerows([i, repr(float(v))] for i, v in enumerate(emb.loss_history))
    else:
        if cfg.method == "fcnn":
            model, train_log = train_fcnn(data, cfg.sgd, init_seed=cfg.seed)
        else:
            dims = [data.dim, *DEFAULT_LAYER_DIMS[1:-1], 2]
            model, train_log = train(init_model(dims, cfg.seed), data, cfg.loss, cfg.sgd)
        path = out / "model.npz"
        save_checkpoint(model, path, meta)
        train_log.to_csv(out / "train_log.csv")
    _write_config(cfg, out)
    log.info("trained %s/%s -> %s", cfg.method, cfg.regime, path)
    return path


# -- evaluate ---------------------------------------------------------------------


def predictions(cfg: ExperimentConfig, out: Path, split: str, data: Dataset) -> np.ndarray:
    if cfg.method == "sammon":
        if split != "train":
            raise UnsupportedOperationError("Sammon mapping has no results on the test set (it cannot embed new samples)")
        return load_embedding(out / "embedding.npz").points
    return forward(load_checkpoint(out / "model.npz"), data.features)[0]


def write_scatter(path, data: Dataset, pred: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["true_x", "true_y", "pred_x", "pred_y", "trace_id"])
        for n in range(len(data)):
            tid = "" if data.trace_ids is None else int(data.trace_ids[n])
            w.writerow([*(repr(float(v)) for v in data.positions[n]), *(repr(float(v)) for v in pred[n]), tid])


def cmd_evaluate(cfg: ExperimentConfig, out_dir=None, split: str = "test") -> MetricReport:
    """Metric report and scatter export for one split of the run."""
    if split not in ("train", "test"):
        raise InvalidConfigError("split must be 'train' or 'test'")
    out = _out_dir(cfg, out_dir)
    data = load_checked(out / f"{split}.npz", cfg)
    if cfg.method != "sammon" and split == "train":
        data = _training_set(cfg, data)
    pred = predictions(cfg, out, split, data)
    if cfg.method == "sammon":
        data = _training_set(cfg, data)
    k_values = valid_k_values(len(data), cfg.k_values)
    rep = evaluate(pred, data, k_values, include_mde=cfg.regime != "unsupervised")
    (out / f"report_{split}.csv").write_text(rep.to_csv())
    (out / f"report_{split}.txt").write_text(rep.to_text())
    write_scatter(out / f"scatter_{split}.csv", data, pred)
    return rep


def run_pipeline(cfg: ExperimentConfig, out_dir=None, splits=("test",)) -> dict:
    out = _out_dir(cfg, out_dir)
    cmd_generate(cfg, out)
    cmd_train(cfg, out)
    return {split: cmd_evaluate(cfg, out, split) for split in splits}


# -- reproduce ---------------------------------------------------------------------


def suite_cells(suite: str, base: ExperimentConfig) -> list:
    """(label, config, splits) for every run in a suite."""
    cells = []
    if suite == "full-grid":
        for los in (True, False):
            tag = "LoS" if los else "NLoS"
            scene = replace(base.scene, los=los)
            sup = replace(base.with_regime("supervised", anchor_fraction=1.0), scene=scene)
            ten = replace(base.with_regime("supervised", anchor_fraction=0.1, anchored_only=True), scene=scene)
            semi = replace(base.with_regime("semisupervised", anchor_fraction=0.1), scene=scene)
            unsup = replace(unsupervised(base), scene=scene)
            cells += [
                (f"{tag}/supervised/siamese", sup, ("test",)),
                (f"{tag}/supervised/fcnn", replace(sup, method="fcnn"), ("test",)),
                (f"{tag}/supervised-10%/siamese", ten, ("test",)),
                (f"{tag}/supervised-10%/fcnn", replace(ten, method="fcnn"), ("test",)),
                (f"{tag}/semisupervised/siamese", semi, ("test",)),
                (f"{tag}/unsupervised/siamese", unsup, ("train", "test")),
                (f"{tag}/unsupervised/sammon", replace(unsup, method="sammon"), ("train",)),
            ]
    elif suite == "t-intersection":
        t = replace(base, mode="t_intersection")
        cells += [
            ("T/supervised/siamese", t.with_regime("supervised", anchor_fraction=1.0), ("test",)),
            ("T/semisupervised/siamese", t.with_regime("semisupervised", anchor_fraction=0.1), ("test",)),
        ]
    else:
        raise InvalidConfigError(f"unknown suite {suite!r}; choose from {SUITES}")
    return cells


def _table(rows: list, k_values) -> str:
    names = ["MDE", "KS", *(f"TW@{k}" for k in k_values), *(f"CT@{k}" for k in k_values)]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["run", "split", *names])
    for label, split, rep in rows:
        values = rep.as_dict()
        w.writerow([label, split, *("" if values.get(n) is None else repr(float(values[n])) for n in names)])
    return buf.getvalue()


def _text_table(rows: list, k_values) -> str:
    names = ["MDE", "KS", *(f"TW@{k}" for k in k_values), *(f"CT@{k}" for k in k_values)]
    width = max(len(label) for label, _, _ in rows) + 2
    lines = [f"{'run':<{width}}{'split':<7}" + "".join(f"{n:>9}" for n in names)]
    for label, split, rep in rows:
        values = rep.as_dict()
        cells = "".join(f"{'N/A':>9}" if n not in values else f"{values[n]:>9.3f}" for n in names)
        lines.append(f"{label:<{width}}{split:<7}{cells}")
    return "\n".join(lines) + "\n"


def cmd_reproduce(suite: str, base: ExperimentConfig | None = None, out_dir=None) -> str:
    """Run every cell of a suite and write ``summary.csv`` / ``summary.txt``.

    Returns the CSV table. Each cell gets its own subdirectory.
    """
    base = base or ExperimentConfig()
    cells = suite_cells(suite, base)
    root = _out_dir(base, out_dir)
    rows = []
    for label, cfg, splits in cells:
        sub = root / label.replace("/", "_").replace("%", "pct")
        cfg = replace(cfg, output_dir=str(sub))
        log.info("suite %s: running %s", suite, label)
        reports = run_pipeline(cfg, sub, splits)
        rows += [(label, split, reports[split]) for split in splits]
    table = _table(rows, base.k_values)
    (root / "summary.csv").write_text(table)
    (root / "summary.txt").write_text(_text_table(rows, base.k_values))
    _write_config(base, root)
    return table
