import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from siamloc.dataset import Dataset
from siamloc.exceptions import DegenerateInputError, InvalidConfigError, InvalidInputError, ShapeError
from siamloc.metrics import (
    MetricReport,
    continuity,
    evaluate,
    kruskal_stress,
    mde,
    rank_matrix,
    report,
    trustworthiness,
)

from oracles import brute_continuity, brute_rank, brute_trustworthiness, grid_search_stress, loop_mde


def similarity(points, rng, scale=None):
    theta = rng.uniform(0, 2 * np.pi)
    rot = np.array([[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]])
    s = rng.uniform(0.1, 10) if scale is None else scale
    return s * points @ rot.T + rng.uniform(-50, 50, 2)


def test_mde_examples(rng):
    assert mde([[0, 0], [3, 4]], [[0, 0], [0, 0]]) == 2.5
    p = rng.standard_normal((50, 2))
    assert mde(p, p) == 0.0
    q = rng.standard_normal((50, 2))
    assert mde(p, q) == pytest.approx(loop_mde(p, q), abs=1e-12)
    with pytest.raises(ShapeError):
        mde(p, q[:-1])


def test_ks_examples():
    ref = np.array([[0.0, 0], [1, 0], [2, 0]])
    assert kruskal_stress(ref, ref) == 0.0
    assert kruskal_stress(ref, 3.7 * ref) == pytest.approx(0.0, abs=1e-15)
    emb = np.array([[0.0, 0], [1, 0], [1, 1]])
    ks = kruskal_stress(ref, emb)
    assert ks == pytest.approx(grid_search_stress(ref, emb), abs=1e-9)
    assert ks == pytest.approx(0.1691, abs=1e-4)


def test_ks_degenerate():
    with pytest.raises(DegenerateInputError):
        kruskal_stress(np.zeros((3, 2)), np.random.default_rng(0).standard_normal((3, 2)))
    # collapsed embedding: beta = 0, stress = 1
    assert kruskal_stress([[0, 0], [1, 0]], [[5, 5], [5, 5]]) == 1.0


@settings(max_examples=50, deadline=None)
@given(n=st.integers(2, 40), seed=st.integers(0, 2**31))
def test_ks_range_and_invariance(n, seed):
    rng = np.random.default_rng(seed)
    ref = rng.standard_normal((n, 2)) * 30
    emb = rng.standard_normal((n, 2))
    ks = kruskal_stress(ref, emb)
    assert 0.0 <= ks <= 1.0
    assert kruskal_stress(ref, similarity(emb, rng)) == pytest.approx(ks, abs=1e-10)


def test_rank_matrix_matches_bruteforce(rng):
    pts = rng.integers(0, 3, size=(9, 2)).astype(float)  # many ties
    r = rank_matrix(pts)
    for n in range(9):
        for m in range(9):
            if n != m:
                assert r[n, m] == brute_rank(pts, n, m)


def test_tw_identity_and_rigid():
    rng = np.random.default_rng(3)
    ref = rng.standard_normal((30, 2))
    for k in (1, 5, 19):
        assert trustworthiness(ref, ref, k) == 1.0
        assert continuity(ref, ref, k) == 1.0
        moved = similarity(ref, rng, scale=1.0)
        assert trustworthiness(ref, moved, k) == 1.0
        assert continuity(ref, moved, k) == 1.0


def test_collinear_swap_case():
    ref = np.array([[0.0], [1.0], [2.0], [3.0]])
    emb = np.array([[0.0], [1.0], [3.0], [2.0]])
    for k in (1, 2):
        assert trustworthiness(ref, emb, k) == brute_trustworthiness(ref, emb, k)
        assert continuity(ref, emb, k) == brute_continuity(ref, emb, k)
    # K=1 by hand: sample 2 gains neighbor 3 and sample 3 gains neighbor 1
    # (index tie-break), both at ref rank 2 -> 1 - 2*2/(4*1*4)
    assert trustworthiness(ref, emb, 1) == 0.75


@pytest.mark.parametrize("seed", range(20))
def test_tw_ct_match_bruteforce(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(5, 13))
    ref = rng.integers(0, 4, size=(n, 2)).astype(float) if seed % 3 == 0 else rng.standard_normal((n, 2))
    emb = rng.standard_normal((n, 3))
    for k in (1, 2, 3):
        if 3 * k >= 2 * n - 1:
            continue
        assert trustworthiness(ref, emb, k) == brute_trustworthiness(ref, emb, k)
        assert continuity(ref, emb, k) == brute_continuity(ref, emb, k)


@settings(max_examples=40, deadline=None)
@given(n=st.integers(4, 30), seed=st.integers(0, 2**31), k=st.integers(1, 5))
def test_tw_ct_properties(n, seed, k):
    if 2 * k >= n:  # the [0, 1] bound needs 2K < N, see below
        return
    rng = np.random.default_rng(seed)
    ref = rng.standard_normal((n, 2))
    emb = rng.standard_normal((n, 2))
    tw, ct = trustworthiness(ref, emb, k), continuity(ref, emb, k)
    assert 0.0 <= tw <= 1.0 and 0.0 <= ct <= 1.0
    assert ct == trustworthiness(emb, ref, k)
    assert trustworthiness(ref, similarity(emb, rng), k) == pytest.approx(tw, abs=1e-10)


def test_tw_below_zero_for_large_k():
    # N=9, K=5 is accepted (3K < 2N-1) but each sample can collect N-1-K=3
    # false neighbors with penalty 1+2+3=6 > K(2N-3K-1)/2=5
    rng = np.random.default_rng(822658128)
    ref, emb = rng.standard_normal((9, 2)), rng.standard_normal((9, 2))
    tw = trustworthiness(ref, emb, 5)
    assert tw == brute_trustworthiness(ref, emb, 5) and tw < 0


@pytest.mark.parametrize("k", [0, 7, 100])
def test_k_out_of_range(k):
    pts = np.random.default_rng(0).standard_normal((10, 2))
    with pytest.raises(InvalidConfigError):
        trustworthiness(pts, pts, k)


def test_report_matches_individual_metrics(rng):
    truth = rng.uniform(0, 100, (60, 2))
    pred = truth + rng.standard_normal((60, 2)) * 5
    rep = report(truth, pred, (1, 5, 10))
    assert rep.mde == mde(pred, truth)
    assert rep.ks == kruskal_stress(truth, pred)
    for k in (1, 5, 10):
        assert rep.tw[k] == trustworthiness(truth, pred, k)
        assert rep.ct[k] == continuity(truth, pred, k)


def test_report_layout():
    rep = MetricReport(ks=0.1, tw={1: 0.9, 40: 0.8, 80: 0.7}, ct={1: 0.95, 40: 0.85, 80: 0.75}, mde=3.0)
    assert [name for name, _ in rep.rows()] == ["MDE", "KS", "TW@1", "TW@40", "TW@80", "CT@1", "CT@40", "CT@80"]
    no_mde = MetricReport(ks=0.1, tw=rep.tw, ct=rep.ct)
    assert "MDE" not in no_mde.to_csv() and "MDE" not in no_mde.to_text()
    assert rep.to_csv().splitlines()[0] == "metric,value"


def test_evaluate_oracle_predictor(rng):
    pos = rng.uniform(0, 200, (300, 2))
    data = Dataset(rng.standard_normal((300, 4)), pos)
    rep = evaluate(pos.copy(), data)
    assert rep.mde == 0.0 and rep.ks == 0.0
    assert all(v == 1.0 for v in rep.tw.values()) and all(v == 1.0 for v in rep.ct.values())
    unsup = evaluate(pos.copy(), data, include_mde=False)
    assert unsup.mde is None


def test_evaluate_needs_ground_truth(rng):
    with pytest.raises(InvalidInputError):
        evaluate(np.zeros((5, 2)), Dataset(rng.standard_normal((5, 3))), k_values=(1,))


def test_evaluate_feature_reference(rng):
    X = rng.standard_normal((40, 3))
    pos = rng.standard_normal((40, 2))
    rep = evaluate(X[:, :2], Dataset(X, pos), k_values=(1, 5), reference="features")
    assert rep.tw[5] == trustworthiness(X, X[:, :2], 5)
