"""scikit-learn style wrappers around the Siamese trainer and the baselines."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .baselines import sammon_nonparametric, train_fcnn
from .dataset import Dataset
from .exceptions import InvalidConfigError, ShapeError, UnsupportedOperationError
from .nn import DEFAULT_LAYER_DIMS, SgdConfig, init_model
from .siamese import LossConfig, predict, train

DEFAULT_HIDDEN = DEFAULT_LAYER_DIMS[1:-1]


def _targets(X, y, anchor_mask):
    """Split ``y`` into positions and an anchor mask. NaN rows are unanchored."""
    if y is None:
        if anchor_mask is not None and np.any(anchor_mask):
            raise InvalidConfigError("anchor_mask given without positions")
        return None, np.zeros(len(X), dtype=bool)
    y = check_array(y, ensure_2d=False, ensure_all_finite=False, dtype=np.float64)
    if y.ndim == 1:
        y = y[:, None]
    if len(y) != len(X):
        raise ShapeError("X and y have different numbers of samples")
    known = np.all(np.isfinite(y), axis=1)
    mask = known if anchor_mask is None else np.asarray(anchor_mask, dtype=bool) & known
    y = np.where(known[:, None], y, 0.0)
    return y, mask


class SiameseNetwork(RegressorMixin, TransformerMixin, BaseEstimator):
    """Siamese MLP realizing parametric Sammon mapping.

    ``regime="auto"`` picks supervised when every row of ``y`` is known,
    unsupervised when ``y`` is None or all-NaN, and semisupervised otherwise.
    ``transform`` and ``predict`` both return the network outputs.
    """

    def __init__(
        self,
        regime="auto",
        hidden_layer_sizes=DEFAULT_HIDDEN,
        n_components=2,
        learning_rate=1e-5,
        final_learning_rate=3e-7,
        l2_lambda=1e-2,
        batch_size=100,
        epochs=300,
        anchor_weight=None,
        pairwise_weight=None,
        epsilon=1e-6,
        random_state=0,
    ):
        self.regime = regime
        self.hidden_layer_sizes = hidden_layer_sizes
        self.n_components = n_components
        self.learning_rate = learning_rate
        self.final_learning_rate = final_learning_rate
        self.l2_lambda = l2_lambda
        self.batch_size = batch_size
        self.epochs = epochs
        self.anchor_weight = anchor_weight
        self.pairwise_weight = pairwise_weight
        self.epsilon = epsilon
        self.random_state = random_state

    def _sgd_config(self):
        return SgdConfig(
            learning_rate=self.learning_rate,
            l2_lambda=self.l2_lambda,
            batch_size=self.batch_size,
            epochs=self.epochs,
            seed=self.random_state,
            final_learning_rate=self.final_learning_rate,
        )

    def _resolve_regime(self, mask):
        if self.regime != "auto":
            return self.regime
        if not mask.any():
            return "unsupervised"
        return "supervised" if mask.all() else "semisupervised"

    def fit(self, X, y=None, anchor_mask=None):
        X = check_array(X, dtype=np.float64)
        positions, mask = _targets(X, y, anchor_mask)
        d_out = self.n_components if positions is None else positions.shape[1]
        regime = self._resolve_regime(mask)
        data = Dataset(X, positions, mask)
        loss_cfg = LossConfig(regime, self.epsilon, self.anchor_weight, self.pairwise_weight)
        dims = [X.shape[1], *self.hidden_layer_sizes, d_out]
        self.model_, self.log_ = train(init_model(dims, self.random_state), data, loss_cfg, self._sgd_config())
        self.regime_ = regime
        self.n_features_in_ = X.shape[1]
        return self

    @property
    def alpha_(self):
        check_is_fitted(self, "model_")
        return self.model_.alpha

    def predict(self, X):
        check_is_fitted(self, "model_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ShapeError(f"expected {self.n_features_in_} features, got {X.shape[1]}")
        return predict(self.model_, X)

    def transform(self, X):
        return self.predict(X)


class FCNNRegressor(RegressorMixin, BaseEstimator):
    """Fully connected position regressor (the anchored-only Siamese tower)."""

    def __init__(
        self,
        hidden_layer_sizes=DEFAULT_HIDDEN,
        learning_rate=1e-5,
        final_learning_rate=3e-7,
        l2_lambda=1e-2,
        batch_size=100,
        epochs=300,
        random_state=0,
    ):
        self.hidden_layer_sizes = hidden_layer_sizes
        self.learning_rate = learning_rate
        self.final_learning_rate = final_learning_rate
        self.l2_lambda = l2_lambda
        self.batch_size = batch_size
        self.epochs = epochs
        self.random_state = random_state

    def fit(self, X, y):
        X = check_array(X, dtype=np.float64)
        y = check_array(y, ensure_2d=False, dtype=np.float64)
        if y.ndim == 1:
            y = y[:, None]
        if len(y) != len(X):
            raise ShapeError("X and y have different numbers of samples")
        sgd = SgdConfig(
            learning_rate=self.learning_rate,
            l2_lambda=self.l2_lambda,
            batch_size=self.batch_size,
            epochs=self.epochs,
            seed=self.random_state,
            final_learning_rate=self.final_learning_rate,
        )
        dims = [X.shape[1], *self.hidden_layer_sizes, y.shape[1]]
        self.model_, self.log_ = train_fcnn(Dataset(X, y, np.ones(len(X), bool)), sgd, layer_dims=dims)
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        check_is_fitted(self, "model_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ShapeError(f"expected {self.n_features_in_} features, got {X.shape[1]}")
        return predict(self.model_, X)


class SammonMapping(TransformerMixin, BaseEstimator):
    """Classical Sammon mapping. Nonparametric, so there is no ``transform``
    for unseen samples; use ``fit_transform``."""

    def __init__(self, n_components=2, max_iter=500, learning_rate=0.3, momentum=0.5, epsilon=1e-6, random_state=0):
        self.n_components = n_components
        self.max_iter = max_iter
        self.learning_rate = learning_rate
        self.momentum = momentum
        self.epsilon = epsilon
        self.random_state = random_state

    def fit(self, X, y=None):
        X = check_array(X, dtype=np.float64, ensure_min_samples=2)
        emb = sammon_nonparametric(
            X,
            d_prime=self.n_components,
            iters=self.max_iter,
            lr=self.learning_rate,
            epsilon=self.epsilon,
            seed=self.random_state,
            momentum=self.momentum,
        )
        self.embedding_ = emb.points
        self.loss_history_ = emb.loss_history
        self.n_features_in_ = X.shape[1]
        return self

    def fit_transform(self, X, y=None):
        return self.fit(X).embedding_

    def transform(self, X):
        raise UnsupportedOperationError("Sammon mapping cannot embed unseen samples; use fit_transform")
