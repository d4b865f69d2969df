"""Positioning and embedding-quality metrics: MDE, Kruskal stress,
trustworthiness and continuity.

Neighbor ranks exclude the point itself and break distance ties by ascending
sample index, so every metric is deterministic.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist, pdist

from .exceptions import DegenerateInputError, InvalidConfigError, InvalidInputError, ShapeError

DEFAULT_K = (1, 40, 80)


def _points(a, name):
    a = np.asarray(a, dtype=np.float64)
    if a.ndim == 1:
        a = a[:, None]
    if a.ndim != 2:
        raise ShapeError(f"{name} must be a list of points")
    return a


def mde(pred, truth) -> float:
    """Mean Euclidean distance between predicted and true positions."""
    pred, truth = _points(pred, "pred"), _points(truth, "truth")
    if pred.shape != truth.shape:
        raise ShapeError(f"shape mismatch {pred.shape} vs {truth.shape}")
    if len(pred) == 0:
        raise ShapeError("need at least one position")
    return float(np.mean(np.linalg.norm(pred - truth, axis=1)))


def kruskal_stress(ref, emb) -> float:
    """Kruskal stress with the least-squares optimal scale on ``emb``.

    KS = sqrt(sum (delta - beta d)^2 / sum delta^2) over unordered pairs, where
    beta = sum(delta d) / sum(d^2). Zero for any similarity transform.
    """
    ref, emb = _points(ref, "ref"), _points(emb, "emb")
    if len(ref) != len(emb):
        raise ShapeError("ref and emb need the same number of points")
    if len(ref) < 2:
        raise ShapeError("need at least two points")
    delta = pdist(ref)
    d = pdist(emb)
    denom = np.sum(delta**2)
    if denom == 0:
        raise DegenerateInputError("all reference points coincide")
    dd = np.sum(d**2)
    beta = np.sum(delta * d) / dd if dd > 0 else 0.0
    return float(np.sqrt(np.sum((delta - beta * d) ** 2) / denom))


def neighbor_order(points) -> np.ndarray:
    """Row n lists the other samples sorted by distance from n (ties by index)."""
    pts = _points(points, "points")
    dist = cdist(pts, pts)
    np.fill_diagonal(dist, np.inf)
    # stable sort keeps ascending index among equal distances
    return np.argsort(dist, axis=1, kind="stable")[:, :-1]


def rank_matrix(points) -> np.ndarray:
    """r[n, m] = rank of m among the neighbors of n (1 = nearest); r[n, n] = 0."""
    order = neighbor_order(points)
    n = len(order)
    ranks = np.zeros((n, n), dtype=np.int64)
    rows = np.repeat(np.arange(n), n - 1)
    ranks[rows, order.ravel()] = np.tile(np.arange(1, n), n)
    return ranks


def _check_k(n: int, k: int) -> None:
    if not (1 <= k and 3 * k < 2 * n - 1):
        raise InvalidConfigError(f"K={k} is outside the valid range 1 <= K < (2N-1)/3 for N={n}")


def _penalty_score(ref_rank, emb_rank, k: int) -> float:
    """1 - 2/(NK(2N-3K-1)) * sum of (ref rank - K) over false emb-neighbors."""
    n = len(ref_rank)
    false_nb = (emb_rank <= k) & (emb_rank > 0) & (ref_rank > k)
    penalty = int(np.sum(ref_rank[false_nb] - k))
    return float(1.0 - 2.0 * penalty / (n * k * (2 * n - 3 * k - 1)))


def trustworthiness(ref, emb, K: int) -> float:
    """Penalizes samples that are K-neighbors in ``emb`` but not in ``ref``.

    The normalizer is the worst case only while 2K < N; for larger K in the
    accepted range the score can drop slightly below 0.
    """
    ref, emb = _points(ref, "ref"), _points(emb, "emb")
    if len(ref) != len(emb):
        raise ShapeError("ref and emb need the same number of points")
    _check_k(len(ref), K)
    return _penalty_score(rank_matrix(ref), rank_matrix(emb), K)


def continuity(ref, emb, K: int) -> float:
    """Penalizes samples that are K-neighbors in ``ref`` but not in ``emb``."""
    return trustworthiness(emb, ref, K)


@dataclass
class MetricReport:
    ks: float
    tw: dict
    ct: dict
    k_values: tuple = DEFAULT_K
    mde: float | None = None

    def rows(self) -> list:
        """(name, value) pairs in the fixed order MDE, KS, TW@K..., CT@K..."""
        out = []
        if self.mde is not None:
            out.append(("MDE", self.mde))
        out.append(("KS", self.ks))
        out += [(f"TW@{k}", self.tw[k]) for k in self.k_values]
        out += [(f"CT@{k}", self.ct[k]) for k in self.k_values]
        return out

    def as_dict(self) -> dict:
        return dict(self.rows())

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["metric", "value"])
        for name, value in self.rows():
            w.writerow([name, repr(float(value))])
        return buf.getvalue()

    def to_text(self) -> str:
        lines = []
        for name, value in self.rows():
            lines.append(f"{name:<8}{value:>10.3f}" if name != "MDE" else f"{name:<8}{value:>10.2f}")
        return "\n".join(lines) + "\n"


def valid_k_values(n: int, k_values=DEFAULT_K) -> tuple:
    return tuple(k for k in k_values if 1 <= k and 3 * k < 2 * n - 1)


def report(truth, pred, k_values=DEFAULT_K, include_mde: bool = True, reference=None) -> MetricReport:
    """Full metric set for predicted/embedded points against ground truth.

    ``reference`` overrides the space used for TW/CT neighborhoods (e.g. the
    raw features); KS and MDE always use the true positions.
    """
    truth, pred = _points(truth, "truth"), _points(pred, "pred")
    ref = truth if reference is None else _points(reference, "reference")
    k_values = tuple(int(k) for k in k_values)
    for k in k_values:
        _check_k(len(truth), k)
    ref_rank = rank_matrix(ref)
    emb_rank = rank_matrix(pred)
    tw = {k: _penalty_score(ref_rank, emb_rank, k) for k in k_values}
    ct = {k: _penalty_score(emb_rank, ref_rank, k) for k in k_values}
    return MetricReport(
        ks=kruskal_stress(truth, pred),
        tw=tw,
        ct=ct,
        k_values=k_values,
        mde=mde(pred, truth) if include_mde else None,
    )


def evaluate(model_or_embedding, data, k_values=DEFAULT_K, include_mde: bool = True, reference: str = "positions"):
    """Evaluate a trained model (or a fixed embedding) on a dataset.

    ``model_or_embedding`` may be an ``MlpModel``, anything with ``predict``,
    an object with a ``points`` array, or a plain (N, D') array.
    """
    if data.positions is None:
        raise InvalidInputError("evaluation needs ground-truth positions")
    if hasattr(model_or_embedding, "points"):
        pred = np.asarray(model_or_embedding.points)
    elif hasattr(model_or_embedding, "layers"):
        from .nn import forward

        pred = forward(model_or_embedding, data.features)[0]
    elif hasattr(model_or_embedding, "predict"):
        pred = model_or_embedding.predict(data.features)
    else:
        pred = np.asarray(model_or_embedding, dtype=np.float64)
    if len(pred) != len(data):
        raise ShapeError("embedding does not match the dataset size")
    if reference not in ("positions", "features"):
        raise InvalidConfigError("reference must be 'positions' or 'features'")
    ref = data.features if reference == "features" else None
    return report(data.positions, pred, k_values, include_mde, ref)
