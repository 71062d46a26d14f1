"""Spectral shape measures and block features for the event detectors.

All functions take magnitude spectra from :func:`magnitude_spectrum` of
100 ms detector frames.  The block features (CFA, CFT, fluctogram) are
simplified versions of the published descriptors; the detectors are trained
on exactly these definitions, so only internal consistency matters.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from ..audio_io import SAMPLE_RATE

# roughly equal mel spans over 0..22050 Hz
DEFAULT_BANDS = ((0.0, 630.0), (630.0, 1720.0), (1720.0, 4400.0), (4400.0, 22050.0))

CFA_PERCENTILE = 90.0
CFA_PERSISTENCE = 0.8

FLUCT_LOW_HZ = 100.0
FLUCT_HIGH_HZ = 8000.0
FLUCT_BANDS = 11
FLUCT_BINS_PER_OCTAVE = 120
FLUCT_MAX_LAG = 6

_SILENT = 1e-12


def bin_frequencies(n_bins: int, sample_rate: int = SAMPLE_RATE) -> np.ndarray:
    n_fft = 2 * (n_bins - 1)
    return np.arange(n_bins) * sample_rate / n_fft


@lru_cache(maxsize=None)
def _band_matrix(bands: tuple, n_bins: int, sample_rate: int) -> tuple:
    """0/1 band membership (bands x bins), bins per band, and bin frequencies."""
    freqs = bin_frequencies(n_bins, sample_rate)
    nyq = sample_rate / 2.0
    member = np.zeros((len(bands), n_bins))
    for i, (lo, hi) in enumerate(bands):
        upper = freqs <= hi if hi >= nyq else freqs < hi
        member[i] = (freqs >= lo) & upper
    sizes = member.sum(axis=1)
    for arr in (member, sizes, freqs):
        arr.setflags(write=False)
    return member, sizes, freqs


def spectral_measures(mag: np.ndarray, prev_mag: np.ndarray | None = None,
                      bands=DEFAULT_BANDS, sample_rate: int = SAMPLE_RATE) -> np.ndarray:
    """Centroid, spread, flux and flatness per band, band-major (16 values for 4 bands).

    Silent bands yield centroid = spread = flux = 0 and flatness = 1.
    Flux is 0 when there is no previous frame.
    """
    mag = np.asarray(mag, dtype=np.float64)
    member, sizes, freqs = _band_matrix(tuple(tuple(b) for b in bands), len(mag), sample_rate)
    total = member @ mag
    loud = total > _SILENT
    safe = np.where(loud, total, 1.0)
    centroid = np.where(loud, (member @ (freqs * mag)) / safe, 0.0)
    second = (member @ (freqs * freqs * mag)) / safe
    spread = np.where(loud, np.sqrt(np.maximum(second - centroid * centroid, 0.0)), 0.0)
    if prev_mag is None:
        flux = np.zeros(len(total))
    else:
        d = mag - prev_mag
        flux = np.sqrt(member @ (d * d))
    power = mag * mag
    n = np.maximum(sizes, 1.0)
    arith = (member @ power) / n
    geo = np.exp((member @ np.log(np.maximum(power, 1e-300))) / n)
    voiced = arith > _SILENT ** 2
    flatness = np.where(voiced, np.minimum(1.0, geo / np.where(voiced, arith, 1.0)), 1.0)
    return np.stack([centroid, spread, flux, flatness], axis=1).ravel()


def cfa_activation(mag: np.ndarray) -> np.ndarray:
    """Bins strictly above the frame's 90th-percentile magnitude."""
    mag = np.asarray(mag, dtype=np.float64)
    pos = CFA_PERCENTILE / 100.0 * (len(mag) - 1)
    k = int(pos)
    if k + 1 < len(mag):
        part = np.partition(mag, (k, k + 1))
        thr = part[k] + (pos - k) * (part[k + 1] - part[k])
    else:
        thr = mag.max()
    return mag > thr


def cfa_from_counts(counts: np.ndarray, n_frames: int) -> float:
    if n_frames == 0:
        return 0.0
    persistent = counts >= CFA_PERSISTENCE * n_frames
    return float(np.count_nonzero(persistent)) / len(counts)


def cfa(block) -> float:
    """Continuous frequency activation: share of bins active in >= 80 % of the block."""
    block = [np.asarray(m) for m in block]
    if not block:
        return 0.0
    counts = np.zeros(len(block[0]), dtype=np.int64)
    for m in block:
        counts += cfa_activation(m)
    return cfa_from_counts(counts, len(block))


def dominant_peak_hz(mag: np.ndarray, sample_rate: int = SAMPLE_RATE) -> float:
    """Frequency of the strongest non-DC bin with parabolic refinement (0 for silence)."""
    mag = np.asarray(mag, dtype=np.float64)
    k = int(np.argmax(mag[1:])) + 1
    if mag[k] <= _SILENT:
        return 0.0
    delta = 0.0
    if 1 < k < len(mag) - 1:
        a, b, c = mag[k - 1], mag[k], mag[k + 1]
        den = a - 2.0 * b + c
        if den < 0.0:
            delta = 0.5 * (a - c) / den
    n_fft = 2 * (len(mag) - 1)
    return (k + delta) * sample_rate / n_fft


def cft_from_track(track: np.ndarray, sample_rate: int = SAMPLE_RATE) -> float:
    """RMS residual of a straight-line fit to a peak-frequency track, over Nyquist."""
    y = np.asarray(track, dtype=np.float64)
    n = len(y)
    if n < 3:
        return 0.0
    t = np.arange(n, dtype=np.float64)
    t -= t.mean()
    yc = y - y.mean()
    slope = float(t @ yc) / float(t @ t)
    resid = yc - slope * t
    return float(np.sqrt(np.mean(resid * resid))) / (sample_rate / 2.0)


def cft(block, sample_rate: int = SAMPLE_RATE) -> float:
    """Curved frequency trajectory of the dominant peak over the block."""
    track = np.array([dominant_peak_hz(m, sample_rate) for m in block])
    return cft_from_track(track, sample_rate)


@lru_cache(maxsize=None)
def _log_grid(n_bins: int, sample_rate: int):
    n_oct = np.log2(FLUCT_HIGH_HZ / FLUCT_LOW_HZ)
    n = int(round(n_oct * FLUCT_BINS_PER_OCTAVE)) + 1
    grid_hz = FLUCT_LOW_HZ * 2.0 ** (np.arange(n) / FLUCT_BINS_PER_OCTAVE)
    pos = grid_hz / (sample_rate / (2 * (n_bins - 1)))
    # edges e_0..e_12 geometric; band k spans [e_k, e_{k+2}] (50 % overlap in log frequency)
    step = (n - 1) / (FLUCT_BANDS + 1)
    width = int(round(2 * step))
    starts = np.array([min(int(round(k * step)), n - width) for k in range(FLUCT_BANDS)])
    lags = np.arange(2 * FLUCT_MAX_LAG + 1)
    cur_idx = starts[:, None] + np.arange(width)[None, :]
    # indices into prev zero-padded by FLUCT_MAX_LAG: lag slot j compares cur[i] with prev[i + j - L]
    lag_idx = starts[:, None] + lags[None, :]
    prev_idx = lag_idx[:, :, None] + np.arange(width)[None, None, :]
    grid = {"pos": pos, "starts": starts, "width": width, "cur_idx": cur_idx,
            "lag_idx": lag_idx, "prev_idx": prev_idx}
    for v in grid.values():
        if isinstance(v, np.ndarray):
            v.setflags(write=False)
    return grid


def log_spectrum(mag: np.ndarray, sample_rate: int = SAMPLE_RATE) -> np.ndarray:
    """Magnitude resampled onto a 120-bins-per-octave grid from 100 Hz to 8 kHz."""
    mag = np.asarray(mag, dtype=np.float64)
    pos = _log_grid(len(mag), sample_rate)["pos"]
    return np.interp(pos, np.arange(len(mag)), mag)


def band_shifts(prev_log: np.ndarray, cur_log: np.ndarray, sample_rate: int = SAMPLE_RATE,
                n_bins: int = 4097) -> np.ndarray:
    """Per-band absolute shift (log-grid bins) maximising the normalised cross-correlation."""
    g = _log_grid(n_bins, sample_rate)
    L, width, starts = FLUCT_MAX_LAG, g["width"], g["starts"]
    padded = np.concatenate([np.zeros(L), prev_log, np.zeros(L)])
    csq = np.concatenate([[0.0], np.cumsum(padded * padded)])
    ccur = np.concatenate([[0.0], np.cumsum(cur_log * cur_log)])
    na = np.sqrt(np.maximum(ccur[starts + width] - ccur[starts], 0.0))
    nb = np.sqrt(np.maximum(csq[g["lag_idx"] + width] - csq[g["lag_idx"]], 0.0))
    corr = np.einsum("kjw,kw->kj", padded[g["prev_idx"]], cur_log[g["cur_idx"]])
    corr /= np.maximum(na[:, None] * nb, _SILENT)

    rows = np.arange(FLUCT_BANDS)
    last = corr.shape[1] - 1
    j = np.argmax(corr, axis=1)
    c0 = corr[rows, np.maximum(j - 1, 0)]
    c1 = corr[rows, j]
    c2 = corr[rows, np.minimum(j + 1, last)]
    den = c0 - 2.0 * c1 + c2
    curved = (j > 0) & (j < last) & (den < 0.0)
    delta = np.where(curved, 0.5 * (c0 - c2) / np.where(curved, den, -1.0), 0.0)
    live = (na > _SILENT) & (nb.max(axis=1) > _SILENT)
    return np.where(live, np.abs(j - L + delta), 0.0)


def fluctogram_from_shifts(shifts) -> np.ndarray:
    shifts = np.asarray(shifts, dtype=np.float64).reshape(-1, FLUCT_BANDS)
    if len(shifts) == 0:
        return np.zeros(FLUCT_BANDS)
    return shifts.mean(axis=0)


def fluctogram(block, sample_rate: int = SAMPLE_RATE) -> np.ndarray:
    """Mean per-band frame-to-frame spectral shift over consecutive pairs of the block."""
    block = [np.asarray(m) for m in block]
    if len(block) < 2:
        return np.zeros(FLUCT_BANDS)
    logs = [log_spectrum(m, sample_rate) for m in block]
    shifts = [band_shifts(logs[i - 1], logs[i], sample_rate, len(block[0]))
              for i in range(1, len(logs))]
    return fluctogram_from_shifts(shifts)
