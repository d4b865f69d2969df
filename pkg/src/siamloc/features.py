"""Beamspace/delay-domain channel features.

Pipeline: power scaling -> unnormalized 2-D DFT over (antennas, subcarriers)
-> entry-wise magnitude -> column-major stacking (subcarrier blocks of B
beams each). Any change to this recipe must bump ``PIPELINE_VERSION``.
"""

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .exceptions import DegenerateInputError, ShapeError

PIPELINE_VERSION = 1


def pipeline_tag(sigma: float = 1.0) -> str:
    return f"beamspace-delay-v{PIPELINE_VERSION};sigma={float(sigma)!r}"


def _entries(h) -> np.ndarray:
    return np.asarray(getattr(h, "entries", h), dtype=np.complex128)


def feature_scale(h, sigma: float = 1.0) -> np.ndarray:
    """Return ``h * (B*S)**(sigma/2) / ||h||_F**sigma``.

    Works on one (B, S) matrix or a stack (N, B, S). ``sigma=1`` normalizes to
    unit average power per entry; ``sigma=0`` is the identity.
    """
    h = _entries(h)
    if h.ndim not in (2, 3):
        raise ShapeError(f"expected (B, S) or (N, B, S) CSI, got {h.shape}")
    norm = np.sqrt(np.sum(np.abs(h) ** 2, axis=(-2, -1), keepdims=True))
    if np.any(norm == 0):
        raise DegenerateInputError("cannot scale an all-zero CSI matrix")
    if sigma == 0:
        return h.copy()
    n_entries = h.shape[-2] * h.shape[-1]
    return h * (n_entries ** (sigma / 2) / norm**sigma)


def dft2(h) -> np.ndarray:
    """Unnormalized 2-D DFT over the last two axes."""
    return np.fft.fft2(_entries(h), axes=(-2, -1))


def csi_to_features(h, sigma: float = 1.0) -> np.ndarray:
    """Real feature vector(s) of length B*S from CSI.

    The stacking is column-major: entry ``k*B + b`` of the output holds the
    magnitude of beam ``b`` in delay tap ``k``.
    """
    mag = np.abs(dft2(feature_scale(h, sigma)))
    if mag.ndim == 2:
        return mag.reshape(-1, order="F")
    return np.swapaxes(mag, 1, 2).reshape(len(mag), -1)


class CsiFeaturizer(TransformerMixin, BaseEstimator):
    """Stateless transformer mapping complex CSI stacks (N, B, S) to features."""

    def __init__(self, sigma=1.0):
        self.sigma = sigma

    def fit(self, X, y=None):
        X = _entries(X)
        if X.ndim != 3:
            raise ShapeError(f"expected CSI stack of shape (N, B, S), got {X.shape}")
        self.n_features_in_ = X.shape[1] * X.shape[2]
        return self

    def transform(self, X):
        X = _entries(X)
        if X.ndim != 3:
            raise ShapeError(f"expected CSI stack of shape (N, B, S), got {X.shape}")
        return csi_to_features(X, self.sigma)

    @property
    def version(self) -> str:
        return pipeline_tag(self.sigma)
