"""In-memory dataset and its on-disk container.

A dataset file is an ``.npz`` archive holding a JSON header (scene config,
feature dimensions, sample count, pipeline tag, anchor seed, ...) next to the
per-sample arrays. Floats are stored as raw float64 so a round trip is exact.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .exceptions import InvalidConfigError, InvalidInputError, ShapeError

DATASET_FORMAT_VERSION = 1


@dataclass
class Dataset:
    features: np.ndarray  # (N, D)
    positions: np.ndarray | None = None  # (N, D') ground truth
    anchor_mask: np.ndarray | None = None  # (N,) bool, True where the position is known
    trace_ids: np.ndarray | None = None  # (N,) int, -1 when not part of a trace
    header: dict = field(default_factory=dict)

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        if self.features.ndim != 2:
            raise ShapeError(f"features must be (N, D), got {self.features.shape}")
        n = len(self.features)
        if self.positions is not None:
            self.positions = np.asarray(self.positions, dtype=np.float64)
            if self.positions.ndim != 2 or len(self.positions) != n:
                raise ShapeError("positions must be (N, D') aligned with features")
        if self.anchor_mask is None:
            self.anchor_mask = np.zeros(n, dtype=bool)
        self.anchor_mask = np.asarray(self.anchor_mask, dtype=bool)
        if self.anchor_mask.shape != (n,):
            raise ShapeError("anchor_mask must have one entry per sample")
        if self.anchor_mask.any() and self.positions is None:
            raise InvalidInputError("anchored samples need positions")
        if self.trace_ids is not None:
            self.trace_ids = np.asarray(self.trace_ids, dtype=np.int64)
            if self.trace_ids.shape != (n,):
                raise ShapeError("trace_ids must have one entry per sample")

    def __len__(self):
        return len(self.features)

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    @property
    def n_anchors(self) -> int:
        return int(self.anchor_mask.sum())

    @property
    def anchors(self) -> np.ndarray:
        """Known positions; rows of unanchored samples are NaN."""
        out = np.full((len(self), self.positions.shape[1] if self.positions is not None else 2), np.nan)
        if self.positions is not None:
            out[self.anchor_mask] = self.positions[self.anchor_mask]
        return out

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        return Dataset(
            self.features[idx],
            None if self.positions is None else self.positions[idx],
            self.anchor_mask[idx],
            None if self.trace_ids is None else self.trace_ids[idx],
            dict(self.header),
        )

    def with_anchor_mask(self, mask) -> "Dataset":
        return Dataset(self.features, self.positions, mask, self.trace_ids, dict(self.header))

    def equals(self, other: "Dataset") -> bool:
        def same(a, b):
            if a is None or b is None:
                return a is None and b is None
            return a.dtype == b.dtype and a.shape == b.shape and np.array_equal(a, b)

        return (
            same(self.features, other.features)
            and same(self.positions, other.positions)
            and same(self.anchor_mask, other.anchor_mask)
            and same(self.trace_ids, other.trace_ids)
            and json.dumps(self.header, sort_keys=True) == json.dumps(other.header, sort_keys=True)
        )


def anchor_subsample(n: int, fraction: float, seed: int) -> np.ndarray:
    """Boolean mask with round(fraction * n) uniformly chosen True entries."""
    if not 0.0 <= fraction <= 1.0:
        raise InvalidConfigError("anchor fraction must lie in [0, 1]")
    k = int(round(fraction * n))
    mask = np.zeros(n, dtype=bool)
    if k:
        mask[np.random.default_rng(seed).choice(n, size=k, replace=False)] = True
    return mask


def save_dataset(data: Dataset, path) -> None:
    header = dict(data.header)
    header.update(
        format="siamloc-dataset",
        version=DATASET_FORMAT_VERSION,
        N=len(data),
        D=data.dim,
        D_prime=None if data.positions is None else int(data.positions.shape[1]),
    )
    arrays = {
        "header": np.array(json.dumps(header, sort_keys=True)),
        "features": data.features,
        "anchor_mask": data.anchor_mask,
    }
    if data.positions is not None:
        arrays["positions"] = data.positions
    if data.trace_ids is not None:
        arrays["trace_ids"] = data.trace_ids
    buf = io.BytesIO()
    np.savez(buf, **arrays)
    Path(path).write_bytes(buf.getvalue())


def load_dataset(path) -> Dataset:
    with np.load(path, allow_pickle=False) as npz:
        header = json.loads(str(npz["header"]))
        if header.get("format") != "siamloc-dataset":
            raise InvalidInputError(f"{path} is not a dataset file")
        if header["version"] != DATASET_FORMAT_VERSION:
            raise InvalidInputError(f"unsupported dataset version {header['version']}")
        data = Dataset(
            npz["features"].copy(),
            npz["positions"].copy() if "positions" in npz else None,
            npz["anchor_mask"].copy(),
            npz["trace_ids"].copy() if "trace_ids" in npz else None,
        )
    for key in ("format", "version", "N", "D", "D_prime"):
        header.pop(key, None)
    data.header = header
    return data


def export_csv(data: Dataset, path) -> None:
    """Plain-text dump: index, anchor flag, trace id, position, features."""
    d_prime = 0 if data.positions is None else data.positions.shape[1]
    cols = ["index", "anchor", "trace_id"] + [f"y{i + 1}" for i in range(d_prime)]
    cols += [f"x{i + 1}" for i in range(data.dim)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for n in range(len(data)):
            row = [n, int(data.anchor_mask[n]), -1 if data.trace_ids is None else int(data.trace_ids[n])]
            if d_prime:
                row += [repr(float(v)) for v in data.positions[n]]
            row += [repr(float(v)) for v in data.features[n]]
            w.writerow(row)
