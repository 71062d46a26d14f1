"""Windowed on-line time warping of a target feature stream against a reference.

Each target frame updates one row of the accumulated-cost matrix, restricted
to a window of reference frames around the current estimate.  The row is
anchored at the start position: the virtual predecessor row is zero there and
infinite elsewhere, so the accumulated costs match a full offline DTW started
at ``(0, start_pos)`` whenever the optimal path stays inside the window.
"""

from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np

from .errors import DimensionMismatch, InputTooLarge, OutOfRange, ReferenceEmpty
from .features.mfcc import ALIGN_DIM
from .reference import ReferenceIndex, frame_time

WINDOW_RADIUS = 2000          # 20 s each side at a 10 ms hop
OFFLINE_MAX_CELLS = 10 ** 8
_NORM_EPS = 1e-12


def cosine_distance(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na < _NORM_EPS or nb < _NORM_EPS:
        return 1.0
    return float(min(max(1.0 - (a @ b) / (na * nb), 0.0), 2.0))


def cost_matrix(ref_features, target_features) -> np.ndarray:
    """Cosine distances, target frames x reference frames, same arithmetic as ``step``."""
    ru = _unit_rows(np.asarray(ref_features, dtype=np.float32).astype(np.float64))
    tu = _unit_rows(np.asarray(target_features, dtype=np.float32).astype(np.float64))
    out = np.empty((len(tu[0]), len(ru[0])))
    for i in range(len(out)):
        out[i] = _costs(ru[0], ru[1], tu[0][i], tu[1][i])
    return out


def _unit_rows(f):
    norms = np.linalg.norm(f, axis=1)
    ok = norms >= _NORM_EPS
    unit = np.zeros_like(f)
    unit[ok] = f[ok] / norms[ok, None]
    return unit, ~ok


def _unit(v):
    unit, deg = _unit_rows(v[None, :])
    return unit[0], bool(deg[0])


def _costs(unit_ref, degenerate_ref, fu, f_degenerate):
    if f_degenerate:
        return np.ones(len(unit_ref))
    c = 1.0 - unit_ref @ fu
    np.clip(c, 0.0, 2.0, out=c)
    if degenerate_ref.any():
        c[degenerate_ref] = 1.0
    return c


@numba.njit(cache=True)
def _row_update(cost, lo, old, old_lo, allow_match):
    """Accumulated costs for reference frames lo..lo+len(cost)-1 given the previous row.

    ``allow_match`` is False for the first row, whose virtual predecessor only
    feeds the anchor cell.
    """
    n = len(cost)
    n_old = len(old)
    new = np.empty(n)
    inf = np.inf
    for k in range(n):
        j = lo + k
        best = inf
        o = j - old_lo
        if 0 <= o < n_old:
            best = old[o]                      # insertion (target advances)
        if allow_match and 0 <= o - 1 < n_old and old[o - 1] < best:
            best = old[o - 1]                  # match
        if k > 0 and new[k - 1] < best:
            best = new[k - 1]                  # deletion (reference advances)
        new[k] = cost[k] + best
    return new


@dataclass
class AlignmentEstimate:
    target_time: float
    ref_time: float
    ref_frame: int
    window_cost_min: float


@dataclass
class TrackerState:
    ref: ReferenceIndex
    expected_pos: int
    window_radius: int
    acc_cost: np.ndarray
    window_lo: int
    anchor: int
    last_emitted: int
    frame_clock: int = 0

    @property
    def window(self) -> tuple[int, int]:
        """Half-open reference frame range the next step will evaluate."""
        return _window(self.expected_pos, self.window_radius, len(self.ref))


def _window(center, radius, n):
    return max(0, center - radius), min(n, center + radius + 1)


def init_tracker(ref: ReferenceIndex, start_pos: int = 0,
                 window_radius: int = WINDOW_RADIUS) -> TrackerState:
    if ref is None or len(ref) == 0:
        raise ReferenceEmpty("reference has no frames")
    if not 0 <= start_pos < len(ref):
        raise OutOfRange(f"start position {start_pos} outside reference of {len(ref)} frames")
    if window_radius < 0:
        raise ValueError("window_radius must be >= 0")
    return TrackerState(ref=ref, expected_pos=int(start_pos), window_radius=int(window_radius),
                        acc_cost=np.zeros(1), window_lo=int(start_pos), anchor=int(start_pos),
                        last_emitted=int(start_pos))


def step(state: TrackerState, feat) -> AlignmentEstimate:
    """Advance the tracker by one target frame (an AlignmentFeature or a raw vector)."""
    values = getattr(feat, "values", feat)
    f = np.asarray(values, dtype=np.float32).astype(np.float64)
    if f.shape != (ALIGN_DIM,):
        raise DimensionMismatch(f"alignment feature must have length {ALIGN_DIM}, got shape {f.shape}")
    ref = state.ref
    lo, hi = state.window
    fu, f_deg = _unit(f)
    cost = _costs(ref.unit[lo:hi], ref.degenerate[lo:hi], fu, f_deg)
    acc = _row_update(cost, lo, state.acc_cost, state.window_lo, state.frame_clock > 0)

    lengths = state.frame_clock + np.arange(lo, hi) - state.anchor + 1
    norm = np.where(lengths > 0, acc / np.maximum(lengths, 1), np.inf)
    k = int(np.argmin(norm))           # first minimum = smallest j
    best = lo + k
    emitted = max(best, state.last_emitted)

    state.acc_cost = acc
    state.window_lo = lo
    state.last_emitted = emitted
    state.expected_pos = emitted
    state.frame_clock += 1
    target_time = getattr(feat, "time", None)
    if target_time is None:
        target_time = frame_time(state.frame_clock - 1, ref.hop_ms)
    return AlignmentEstimate(float(target_time), float(frame_time(emitted, ref.hop_ms)),
                             emitted, float(norm[k]))


def track(ref: ReferenceIndex, target_features, start_pos: int = 0,
          window_radius: int = WINDOW_RADIUS) -> np.ndarray:
    """Emitted reference frame for every row of ``target_features``."""
    state = init_tracker(ref, start_pos, window_radius)
    return np.array([step(state, f).ref_frame for f in np.asarray(target_features)], dtype=np.int64)


@numba.njit(cache=True)
def _dtw_matrix(cost):
    n, m = cost.shape
    D = np.empty((n, m))
    for i in range(n):
        for j in range(m):
            c = cost[i, j]
            if i == 0 and j == 0:
                D[i, j] = c
                continue
            best = np.inf
            if i > 0 and D[i - 1, j] < best:
                best = D[i - 1, j]
            if j > 0 and D[i, j - 1] < best:
                best = D[i, j - 1]
            if i > 0 and j > 0 and D[i - 1, j - 1] < best:
                best = D[i - 1, j - 1]
            D[i, j] = c + best
    return D


@numba.njit(cache=True)
def _backtrack(D):
    i, j = D.shape[0] - 1, D.shape[1] - 1
    out = np.empty((D.shape[0] + D.shape[1], 2), dtype=np.int64)
    n = 0
    while True:
        out[n, 0] = i
        out[n, 1] = j
        n += 1
        if i == 0 and j == 0:
            break
        if i == 0:
            j -= 1
        elif j == 0:
            i -= 1
        else:
            d, a, b = D[i - 1, j - 1], D[i - 1, j], D[i, j - 1]
            if d <= a and d <= b:
                i -= 1
                j -= 1
            elif a <= b:
                i -= 1
            else:
                j -= 1
    return out[:n][::-1].copy()


@dataclass
class DTWResult:
    path: np.ndarray            # (steps x 2) of (target_index, reference_index)
    cost: float
    acc: np.ndarray             # accumulated cost matrix, target x reference


def offline_dtw(ref_features, target_features, max_cells: int = OFFLINE_MAX_CELLS) -> DTWResult:
    """Exact full DTW with unit-weight steps from (0, 0) to the last cell of both sequences."""
    ref_features = np.asarray(ref_features)
    target_features = np.asarray(target_features)
    if len(ref_features) == 0 or len(target_features) == 0:
        raise ReferenceEmpty("offline_dtw needs two non-empty sequences")
    if len(ref_features) * len(target_features) > max_cells:
        raise InputTooLarge(f"{len(target_features)} x {len(ref_features)} cells exceeds cap {max_cells}")
    D = _dtw_matrix(cost_matrix(ref_features, target_features))
    return DTWResult(_backtrack(D), float(D[-1, -1]), D)


def path_cost(ref_features, target_features, path) -> float:
    """Sum of local costs along ``path``, accumulated independently of the DP."""
    total = 0.0
    for i, j in path:
        total += cosine_distance(target_features[i], ref_features[j])
    return total
