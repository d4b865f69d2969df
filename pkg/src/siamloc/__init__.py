"""Siamese networks for CSI-based positioning and channel charting."""

from .estimators import FCNNRegressor, SammonMapping, SiameseNetwork
from .features import CsiFeaturizer

__version__ = "0.1.0"

__all__ = ["CsiFeaturizer", "FCNNRegressor", "SammonMapping", "SiameseNetwork", "__version__"]
