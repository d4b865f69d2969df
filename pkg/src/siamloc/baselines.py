"""Reference methods: nonparametric Sammon mapping and the FCNN regressor."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import pdist

from .dataset import Dataset
from .exceptions import InvalidInputError
from .nn import DEFAULT_LAYER_DIMS, SgdConfig, init_model
from .siamese import LossConfig, smooth_distances, train


@dataclass
class Embedding:
    points: np.ndarray  # (N, D')
    loss_history: np.ndarray = field(default_factory=lambda: np.zeros(0))
    best_iter: int = 0

    @property
    def best_so_far(self) -> np.ndarray:
        return np.minimum.accumulate(self.loss_history)


def sammon_loss(X, Y, epsilon: float = 1e-6) -> float:
    """Sum over pairs of w (||x_n - x_m|| - ||y_n - y_m||)^2 with eps-smoothed
    norms and w = 1 / ||x_n - x_m||."""
    dx = np.sqrt(pdist(np.asarray(X, dtype=np.float64), "sqeuclidean") + epsilon)
    dy = np.sqrt(pdist(np.asarray(Y, dtype=np.float64), "sqeuclidean") + epsilon)
    return float(np.sum((dx - dy) ** 2 / dx))


def _features(data) -> np.ndarray:
    X = data.features if isinstance(data, Dataset) else np.asarray(data, dtype=np.float64)
    if X.ndim != 2:
        raise InvalidInputError("features must be an (N, D) matrix")
    return X


def pca_init(X, d_prime: int, seed: int = 0) -> np.ndarray:
    """Top principal components, rescaled to the mean pairwise feature distance.

    A seeded perturbation of relative size 1e-6 keeps degenerate directions
    from starting exactly coincident.
    """
    Xc = X - X.mean(axis=0)
    _, s, vt = np.linalg.svd(Xc, full_matrices=False)
    k = min(d_prime, vt.shape[0])
    Y = np.zeros((len(X), d_prime))
    Y[:, :k] = Xc @ vt[:k].T
    target = np.mean(pdist(X))
    current = np.mean(pdist(Y))
    if current > 0:
        Y *= target / current
    rng = np.random.default_rng(seed)
    Y += 1e-6 * max(target, 1e-12) * rng.standard_normal(Y.shape)
    return Y


def sammon_nonparametric(
    data,
    d_prime: int = 2,
    iters: int = 500,
    lr: float = 0.3,
    epsilon: float = 1e-6,
    seed: int = 0,
    momentum: float = 0.5,
) -> Embedding:
    """Classical (free-point) Sammon mapping by preconditioned momentum descent.

    The objective is the pair sum of ``sammon_loss`` divided by the sum of
    feature distances; each point's step is divided by the diagonal curvature
    estimate 2 * sum_m w_nm / C, which makes ``lr`` scale-free. Returns the
    iterate with the lowest recorded loss.
    """
    X = _features(data)
    n = len(X)
    if n < 2:
        raise InvalidInputError("Sammon mapping needs at least two samples")
    dx = smooth_distances(X, epsilon)
    w = 1.0 / dx
    np.fill_diagonal(w, 0.0)
    upper = np.triu_indices(n, 1)
    c = float(np.sum(dx[upper]))
    precond = (2.0 * w.sum(axis=1) / c)[:, None]

    Y = pca_init(X, d_prime, seed)
    vel = np.zeros_like(Y)
    history = np.empty(iters + 1)
    best, best_loss, best_iter = Y.copy(), np.inf, 0
    for it in range(iters + 1):
        sq = np.sum(Y * Y, axis=1)
        d2 = sq[:, None] + sq[None, :] - 2.0 * (Y @ Y.T)
        np.maximum(d2, 0.0, out=d2)
        dy = np.sqrt(d2 + epsilon)
        r = dx - dy
        loss = float(np.sum((w * r * r)[upper]))
        history[it] = loss
        if loss < best_loss:
            best, best_loss, best_iter = Y.copy(), loss, it
        if it == iters:
            break
        coef = -2.0 * w * r / dy / c
        np.fill_diagonal(coef, 0.0)
        grad = coef.sum(axis=1)[:, None] * Y - coef @ Y
        vel = momentum * vel - lr * grad / precond
        Y = Y + vel
    return Embedding(best, history, best_iter)


def train_fcnn(data: Dataset, sgd_cfg: SgdConfig, layer_dims=None, init_seed: int | None = None):
    """Plain position regressor: the Siamese trainer with anchors only.

    The network uses the same topology as the Siamese tower; its weights are
    initialized from ``init_seed`` (defaults to ``sgd_cfg.seed``). Returns
    ``(model, TrainingLog)``.
    """
    if data.positions is None or data.n_anchors == 0:
        raise InvalidInputError("the FCNN needs anchored training samples")
    if data.n_anchors != len(data):
        raise InvalidInputError("every FCNN training sample must be anchored")
    dims = list(layer_dims) if layer_dims is not None else [data.dim, *DEFAULT_LAYER_DIMS[1:-1], data.positions.shape[1]]
    model = init_model(dims, sgd_cfg.seed if init_seed is None else init_seed)
    return train(model, data, LossConfig("supervised", anchor_weight=1.0, pairwise_weight=0.0), sgd_cfg)
