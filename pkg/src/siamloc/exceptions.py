"""Exception types raised across the package."""


class SiamlocError(Exception):
    """Base class for all package errors."""


class InvalidConfigError(SiamlocError, ValueError):
    """A configuration value is out of its valid range or inconsistent."""


class ShapeError(SiamlocError, ValueError):
    """Array dimensions do not match what the operation expects."""


class InvalidInputError(SiamlocError, ValueError):
    """Input data is unusable for the requested operation."""


class DegenerateInputError(InvalidInputError):
    """Input is degenerate, e.g. an all-zero channel or coincident points."""


class SingularityError(InvalidInputError):
    """Geometry places a UE on top of the base station."""


class InvalidBatchError(InvalidInputError):
    """A pair batch has fewer than two samples or repeated indices."""


class StaleDatasetError(SiamlocError):
    """Dataset was produced by a different feature-pipeline version."""


class UnsupportedOperationError(SiamlocError):
    """Operation is not defined for the chosen method."""
