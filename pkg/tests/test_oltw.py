import time

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from opera_tracker import oltw
from opera_tracker.errors import DimensionMismatch, InputTooLarge, OutOfRange, ReferenceEmpty
from opera_tracker.features import AlignmentFeature
from opera_tracker.reference import ReferenceIndex

from helpers import path_distance, smooth_features, warped_pair


def _ref(x):
    return ReferenceIndex(np.asarray(x, dtype=np.float32), [0.0])


def test_cosine_distance_cases():
    a = np.arange(1.0, 101.0)
    assert oltw.cosine_distance(a, a) == pytest.approx(0.0, abs=1e-15)
    assert oltw.cosine_distance(a, -a) == pytest.approx(2.0)
    assert oltw.cosine_distance(np.zeros(100), a) == 1.0
    assert oltw.cosine_distance(a, np.full(100, 1e-14)) == 1.0


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2 ** 31))
def test_cosine_distance_range(seed):
    r = np.random.default_rng(seed)
    a, b = r.normal(size=100), r.normal(size=100)
    d = oltw.cosine_distance(a, b)
    assert 0.0 <= d <= 2.0
    assert d == pytest.approx(1 - a @ b / np.linalg.norm(a) / np.linalg.norm(b), abs=1e-12)


def test_init_window(rng):
    ref = _ref(rng.normal(size=(5000, 100)))
    s = oltw.init_tracker(ref)
    assert s.expected_pos == 0 and s.window == (0, 2001)
    s = oltw.init_tracker(ref, 2500)
    assert s.window == (500, 4501)
    s = oltw.init_tracker(ref, 4999)
    assert s.window == (2999, 5000)


def test_init_errors(rng):
    ref = _ref(rng.normal(size=(10, 100)))
    with pytest.raises(OutOfRange):
        oltw.init_tracker(ref, 10)
    with pytest.raises(ReferenceEmpty):
        oltw.init_tracker(None)
    with pytest.raises(ReferenceEmpty):
        ReferenceIndex(np.zeros((0, 100), dtype=np.float32), [])


def test_dimension_mismatch(rng):
    s = oltw.init_tracker(_ref(rng.normal(size=(10, 100))))
    with pytest.raises(DimensionMismatch):
        oltw.step(s, np.zeros(99))


def test_first_step_is_offline_first_row(rng):
    x = rng.normal(size=(300, 100))
    y = rng.normal(size=(1, 100))
    s = oltw.init_tracker(_ref(x))
    oltw.step(s, y[0])
    D = oltw.offline_dtw(x, y).acc
    assert np.allclose(s.acc_cost, D[0], atol=1e-12)


def test_self_alignment_exact(rng):
    x = smooth_features(rng, 2500)
    e = oltw.track(_ref(x), x.astype(np.float32))
    assert np.array_equal(e, np.arange(len(x)))


def test_self_alignment_from_mid_start(rng):
    x = smooth_features(rng, 1500).astype(np.float32)
    e = oltw.track(_ref(x), x[700:], start_pos=700)
    assert np.array_equal(e, np.arange(700, 1500))


def test_uniform_stretch_matches_offline(rng):
    x = smooth_features(rng, 1200).astype(np.float32)
    idx = np.floor(np.arange(1500) / 1.25).astype(int)
    y = x[idx]
    e = oltw.track(_ref(x), y)
    truth = oltw.offline_dtw(x, y).path
    d = path_distance(truth, e)
    assert d[100:].max() <= 3
    assert np.abs(e - idx)[100:].max() <= 3


def test_tempo_curve_within_five_frames():
    # 60 s pair, smooth +-20 % tempo
    x, y, _ = warped_pair(7, 6000, 6000, 0.8, 1.2)
    e = oltw.track(_ref(x), y)
    d = path_distance(oltw.offline_dtw(x, y).path, e)
    assert np.mean(d <= 5) >= 0.99


def test_band_consistency():
    for seed in range(5):
        x, y, _ = warped_pair(100 + seed, 300, 1500)
        s = oltw.init_tracker(_ref(x))
        res = oltw.offline_dtw(x, y)
        inside = True
        for t, f in enumerate(y):
            lo, hi = s.window
            cells = res.path[res.path[:, 0] == t, 1]
            inside &= bool(np.all((cells >= lo) & (cells < hi)))
            oltw.step(s, f)
        assert inside
        j = len(x) - 1
        assert s.window_lo <= j < s.window_lo + len(s.acc_cost)
        assert s.acc_cost[j - s.window_lo] == pytest.approx(res.cost, abs=1e-6)


def test_monotone_and_nonnegative(rng):
    x = rng.normal(size=(800, 100)).astype(np.float32)
    s = oltw.init_tracker(_ref(x), window_radius=50)
    last = 0
    for f in rng.normal(size=(600, 100)):
        est = oltw.step(s, f)
        assert est.ref_frame >= last
        lo = s.window_lo
        assert lo <= est.ref_frame < lo + len(s.acc_cost)
        assert np.all(s.acc_cost[np.isfinite(s.acc_cost)] >= 0)
        last = est.ref_frame


def test_window_length_invariant(rng):
    x = rng.normal(size=(300, 100)).astype(np.float32)
    s = oltw.init_tracker(_ref(x), start_pos=150, window_radius=40)
    for f in x[150:]:
        lo, hi = s.window
        assert hi - lo == min(hi, 300) - max(lo, 0) <= 81
        oltw.step(s, f)
        assert len(s.acc_cost) == hi - lo


def test_deterministic(rng):
    x, y, _ = warped_pair(3, 400, 600)
    a = [oltw.step(s, f) for s in [oltw.init_tracker(_ref(x))] for f in y]
    b = [oltw.step(s, f) for s in [oltw.init_tracker(_ref(x))] for f in y]
    assert a == b


def test_constant_cost_argmin_tie_rule():
    # every reference frame identical: costs constant, so the normalised
    # accumulated cost is flat over the reachable cells and the tie goes to the
    # smallest index, which is the diagonal cell (frame_clock) for a start-anchored run
    x = np.ones((500, 100), dtype=np.float32)
    s = oltw.init_tracker(_ref(x), start_pos=200, window_radius=100)
    for t in range(5):
        est = oltw.step(s, -np.ones(100))
        assert est.ref_frame == 200 + t


def test_estimate_times(rng):
    x = rng.normal(size=(50, 100)).astype(np.float32)
    s = oltw.init_tracker(_ref(x))
    est = oltw.step(s, AlignmentFeature(1.23, x[0]))
    assert est.target_time == 1.23
    assert est.ref_time == est.ref_frame / 100


def test_step_latency(rng):
    ref = _ref(rng.normal(size=(12000, 100)))
    s = oltw.init_tracker(ref, 6000)
    feats = rng.normal(size=(300, 100))
    oltw.step(s, feats[0])
    times = []
    for f in feats[1:]:
        t0 = time.perf_counter()
        oltw.step(s, f)
        times.append(time.perf_counter() - t0)
    assert np.median(times) < 0.010


def test_offline_identical_is_diagonal(rng):
    x = rng.normal(size=(40, 100))
    r = oltw.offline_dtw(x, x)
    assert r.cost == pytest.approx(0.0, abs=1e-12)
    assert np.array_equal(r.path, np.stack([np.arange(40)] * 2, axis=1))


def _brute_force(C):
    """Minimal path cost over every monotone (1,0)/(0,1)/(1,1) path, by enumeration."""
    n, m = C.shape
    best = np.inf
    best_paths = []

    def walk(i, j, acc, path):
        nonlocal best, best_paths
        acc += C[i, j]
        path = path + [(i, j)]
        if (i, j) == (n - 1, m - 1):
            if acc < best - 1e-12:
                best, best_paths = acc, [path]
            elif abs(acc - best) <= 1e-12:
                best_paths.append(path)
            return
        for di, dj in ((1, 0), (0, 1), (1, 1)):
            if i + di < n and j + dj < m:
                walk(i + di, j + dj, acc, path)

    walk(0, 0, 0.0, [])
    return best, best_paths


@pytest.mark.parametrize("n", [2, 3, 4, 5, 6])
def test_offline_doubled_vs_brute_force(rng, n):
    x = rng.normal(size=(n, 100))
    doubled = np.repeat(x, 2, axis=0)
    r = oltw.offline_dtw(x, doubled)
    best, paths = _brute_force(oltw.cost_matrix(x, doubled))
    assert r.cost == pytest.approx(best, abs=1e-9)
    assert r.cost == pytest.approx(0.0, abs=1e-9)
    assert [tuple(p) for p in r.path] in paths
    assert [tuple(p) for p in r.path] == [(i, i // 2) for i in range(2 * n)]


@settings(max_examples=25, deadline=None)
@given(n=st.integers(1, 5), m=st.integers(1, 5), seed=st.integers(0, 2 ** 31))
def test_offline_random_vs_brute_force(n, m, seed):
    r_ = np.random.default_rng(seed)
    a, b = r_.normal(size=(m, 100)), r_.normal(size=(n, 100))
    r = oltw.offline_dtw(a, b)
    best, _ = _brute_force(oltw.cost_matrix(a, b))
    assert r.cost == pytest.approx(best, abs=1e-9)
    steps = np.diff(r.path, axis=0)
    assert {tuple(s) for s in steps} <= {(1, 0), (0, 1), (1, 1)}
    assert tuple(r.path[0]) == (0, 0) and tuple(r.path[-1]) == (n - 1, m - 1)


def test_offline_path_cost_consistency(rng):
    x, y, _ = warped_pair(11, 200, 400)
    r = oltw.offline_dtw(x, y)
    assert oltw.path_cost(x, y, r.path) == pytest.approx(r.cost, abs=1e-9)


def test_offline_cap(rng):
    with pytest.raises(InputTooLarge):
        oltw.offline_dtw(np.ones((100, 100)), np.ones((100, 100)), max_cells=9999)
    with pytest.raises(ReferenceEmpty):
        oltw.offline_dtw(np.ones((0, 100)), np.ones((3, 100)))
