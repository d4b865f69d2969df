"""Siamese-network objective (parametric Sammon mapping) and its trainer.

One shared tower ``f`` maps features to positions. For a mini-batch the loss
is

    lambda_a * mean_{anchored n} ||f(x_n) - ybar_n||^2
  + lambda_p * mean_{n<m} w_nm (||x_n - x_m||_e - alpha ||f(x_n) - f(x_m)||_e)^2

with ``||v||_e = sqrt(||v||^2 + eps)`` and ``w_nm = 1 / ||x_n - x_m||_e``.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np

from .dataset import Dataset
from .exceptions import InvalidBatchError, InvalidConfigError, ShapeError
from .nn import GradientSet, MlpModel, SgdConfig, backward, forward, sgd_step

REGIMES = ("supervised", "semisupervised", "unsupervised")


@dataclass
class LossConfig:
    """Loss weights. ``None`` weights resolve from the regime:
    supervised (1, 0), semisupervised (1, 1), unsupervised (0, 1)."""

    regime: str = "semisupervised"
    epsilon: float = 1e-6
    anchor_weight: float | None = None
    pairwise_weight: float | None = None

    def __post_init__(self):
        if self.regime not in REGIMES:
            raise InvalidConfigError(f"unknown regime {self.regime!r}")
        if not self.epsilon > 0:
            raise InvalidConfigError("epsilon must be positive")
        default_a, default_p = {"supervised": (1.0, 0.0), "semisupervised": (1.0, 1.0), "unsupervised": (0.0, 1.0)}[
            self.regime
        ]
        if self.anchor_weight is None:
            self.anchor_weight = default_a
        if self.pairwise_weight is None:
            self.pairwise_weight = default_p
        if self.anchor_weight < 0 or self.pairwise_weight < 0:
            raise InvalidConfigError("loss weights must be nonnegative")
        if self.regime == "unsupervised" and self.anchor_weight != 0:
            raise InvalidConfigError("the unsupervised regime cannot use anchor terms")

    @property
    def trains_alpha(self) -> bool:
        return self.regime == "semisupervised"


class LossValue(NamedTuple):
    loss: float
    grads: GradientSet
    n_terms: int  # pairs or anchors that contributed; 0 flags an empty term


# -- scalar helpers ---------------------------------------------------------


def smooth_norm(v, epsilon: float = 1e-6) -> float:
    v = np.asarray(v, dtype=np.float64)
    return float(np.sqrt(np.sum(v * v) + epsilon))


def smooth_norm_grad(v, epsilon: float = 1e-6) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    return v / smooth_norm(v, epsilon)


def sammon_weight(x_n, x_m, epsilon: float = 1e-6) -> float:
    return 1.0 / smooth_norm(np.asarray(x_n, dtype=np.float64) - np.asarray(x_m, dtype=np.float64), epsilon)


def smooth_distances(X, epsilon: float) -> np.ndarray:
    """Matrix of ``sqrt(||x_n - x_m||^2 + eps)`` for all pairs."""
    X = np.asarray(X, dtype=np.float64)
    sq = np.sum(X * X, axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (X @ X.T)
    np.maximum(d2, 0.0, out=d2)
    np.fill_diagonal(d2, 0.0)
    return np.sqrt(d2 + epsilon)


def pair_terms(dx, Y, alpha: float, epsilon: float):
    """Sammon pair sum for outputs ``Y`` given smoothed feature distances.

    Returns ``(loss, dloss/dY, dloss/dalpha, n_pairs)`` with the loss averaged
    over the M(M-1)/2 unordered pairs.
    """
    Y = np.asarray(Y, dtype=np.float64)
    m = len(Y)
    diff = Y[:, None, :] - Y[None, :, :]
    dy = np.sqrt(np.sum(diff * diff, axis=2) + epsilon)
    w = 1.0 / dx
    r = dx - alpha * dy
    upper = np.triu(np.ones((m, m), dtype=bool), 1)
    n_pairs = m * (m - 1) // 2
    loss = float(np.sum((w * r * r)[upper]) / n_pairs)
    # symmetric per-pair coefficient; the diagonal carries diff == 0
    coef = -2.0 * alpha * w * r / dy / n_pairs
    dY = np.einsum("nm,nmk->nk", coef, diff)
    dalpha = float(np.sum((-2.0 * w * r * dy)[upper]) / n_pairs)
    return loss, dY, dalpha, n_pairs


def anchor_terms(Y, targets, mask):
    """Mean squared anchor error and its gradient w.r.t. ``Y``."""
    Y = np.asarray(Y, dtype=np.float64)
    count = int(np.sum(mask))
    dY = np.zeros_like(Y)
    if count == 0:
        return 0.0, dY, 0
    err = Y[mask] - targets[mask]
    loss = float(np.sum(err * err) / count)
    dY[mask] = 2.0 * err / count
    return loss, dY, count


def _check_batch(batch, n: int) -> np.ndarray:
    idx = np.asarray(batch, dtype=np.int64).ravel()
    if len(idx) < 2:
        raise InvalidBatchError("a pair batch needs at least two samples")
    if len(np.unique(idx)) != len(idx):
        raise InvalidBatchError("batch indices must be distinct")
    if idx.min() < 0 or idx.max() >= n:
        raise InvalidBatchError("batch index out of range")
    return idx


# -- public losses ------------------------------------------------------------


def pairwise_loss(model: MlpModel, batch, data: Dataset, cfg: LossConfig) -> LossValue:
    idx = _check_batch(batch, len(data))
    X = data.features[idx]
    Y, tape = forward(model, X)
    loss, dY, dalpha, n_pairs = pair_terms(smooth_distances(X, cfg.epsilon), Y, model.alpha, cfg.epsilon)
    grads = backward(model, tape, dY)
    if cfg.trains_alpha:
        grads.d_log_alpha = dalpha * model.alpha
    return LossValue(loss, grads, n_pairs)


def anchor_loss(model: MlpModel, batch, data: Dataset, cfg: LossConfig | None = None) -> LossValue:
    idx = np.asarray(batch, dtype=np.int64).ravel()
    mask = data.anchor_mask[idx]
    if not mask.any():
        return LossValue(0.0, GradientSet.zeros_like(model), 0)
    Y, tape = forward(model, data.features[idx])
    loss, dY, count = anchor_terms(Y, data.positions[idx], mask)
    return LossValue(loss, backward(model, tape, dY), count)


def combined_loss(model: MlpModel, batch, data: Dataset, cfg: LossConfig):
    """Weighted anchor + pairwise loss with one forward/backward pass.

    Returns ``(total, anchor_part, pairwise_part, grads)``; the parts are the
    unweighted means.
    """
    idx = np.asarray(batch, dtype=np.int64).ravel()
    X = data.features[idx]
    Y, tape = forward(model, X)
    dY = np.zeros_like(Y)
    la = lp = 0.0
    d_log_alpha = 0.0
    if cfg.anchor_weight > 0:
        mask = data.anchor_mask[idx]
        if mask.any():
            la, dYa, _ = anchor_terms(Y, data.positions[idx], mask)
            dY += cfg.anchor_weight * dYa
    if cfg.pairwise_weight > 0:
        if len(idx) < 2:
            raise InvalidBatchError("a pair batch needs at least two samples")
        lp, dYp, dalpha, _ = pair_terms(smooth_distances(X, cfg.epsilon), Y, model.alpha, cfg.epsilon)
        dY += cfg.pairwise_weight * dYp
        if cfg.trains_alpha:
            d_log_alpha = cfg.pairwise_weight * dalpha * model.alpha
    grads = backward(model, tape, dY)
    grads.d_log_alpha = d_log_alpha
    total = cfg.anchor_weight * la + cfg.pairwise_weight * lp
    return total, la, lp, grads


# -- training -------------------------------------------------------------------


@dataclass
class EpochRecord:
    epoch: int
    anchor_loss: float
    pairwise_loss: float
    alpha: float
    wall_clock: float


@dataclass
class TrainingLog:
    records: list = field(default_factory=list)

    def append(self, rec: EpochRecord) -> None:
        self.records.append(rec)

    def __len__(self):
        return len(self.records)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records])

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["epoch", "anchor_loss", "pairwise_loss", "alpha", "wall_clock"])
            for r in self.records:
                w.writerow([r.epoch, repr(r.anchor_loss), repr(r.pairwise_loss), repr(r.alpha), f"{r.wall_clock:.3f}"])


def _check_regime(data: Dataset, cfg: LossConfig) -> None:
    n_anchor = data.n_anchors
    if cfg.regime == "unsupervised" and cfg.anchor_weight > 0:
        raise InvalidConfigError("the unsupervised regime cannot use anchor terms")
    if cfg.anchor_weight > 0 and n_anchor == 0:
        raise InvalidConfigError("anchor_weight > 0 but the dataset has no anchored samples")
    if cfg.regime == "supervised" and n_anchor != len(data):
        raise InvalidConfigError("the supervised regime needs every sample anchored")
    if cfg.anchor_weight == 0 and cfg.pairwise_weight == 0:
        raise InvalidConfigError("both loss weights are zero")


def train(model: MlpModel, data: Dataset, loss_cfg: LossConfig, sgd_cfg: SgdConfig, callback=None):
    """Train ``model`` (a copy; the argument is left untouched).

    Each epoch shuffles the samples with a generator seeded once from
    ``sgd_cfg.seed`` and splits them into near-equal batches of at most
    ``batch_size``. Returns ``(model, TrainingLog)``.
    """
    if data.dim != model.input_dim:
        raise ShapeError(f"model expects {model.input_dim} features, dataset has {data.dim}")
    if len(data) < 2 and loss_cfg.pairwise_weight > 0:
        raise InvalidBatchError("pairwise training needs at least two samples")
    _check_regime(data, loss_cfg)
    model = model.copy()
    rng = np.random.default_rng(sgd_cfg.seed)
    n = len(data)
    n_batches = max(1, -(-n // sgd_cfg.batch_size))
    log = TrainingLog()
    t0 = time.perf_counter()
    for epoch in range(sgd_cfg.epochs):
        step_cfg = replace(sgd_cfg, learning_rate=sgd_cfg.epoch_learning_rate(epoch), final_learning_rate=None)
        perm = rng.permutation(n)
        sum_a = sum_p = 0.0
        for batch in np.array_split(perm, n_batches):
            _, la, lp, grads = combined_loss(model, batch, data, loss_cfg)
            sgd_step(model, grads, step_cfg, inplace=True)
            sum_a += la
            sum_p += lp
        rec = EpochRecord(epoch, sum_a / n_batches, sum_p / n_batches, model.alpha, time.perf_counter() - t0)
        log.append(rec)
        if callback is not None:
            callback(rec, model)
    return model, log


def predict(model: MlpModel, X) -> np.ndarray:
    return forward(model, X)[0]
