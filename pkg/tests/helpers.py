"""Synthetic alignment-feature pairs shared by the OLTW tests and the acceptance suite."""

import numpy as np
from scipy.signal import lfilter


def smooth_features(rng, n, dim=100, pole=0.9):
    """Temporally correlated feature rows around a random offset (music-like texture)."""
    z = rng.normal(size=(n, dim))
    return lfilter([1 - pole], [1, -pole], z, axis=0) * 3 + rng.normal(size=dim)


def warped_pair(seed, min_len=500, max_len=2000, tempo_lo=0.75, tempo_hi=1.33, noise=0.3):
    """Reference features, a tempo-warped noisy target, and the true reference index per target frame."""
    rng = np.random.default_rng(seed)
    R = int(rng.integers(min_len, max_len + 1))
    x = smooth_features(rng, R)
    n = int(R * rng.uniform(0.8, 1.2))
    knots = rng.uniform(np.log(tempo_lo), np.log(tempo_hi), size=6)
    tempo = np.exp(np.interp(np.linspace(0, 1, n), np.linspace(0, 1, 6), knots))
    pos = np.concatenate([[0.0], np.cumsum(tempo)[:-1]])
    pos *= (R - 1) / pos[-1]
    idx = np.round(pos).astype(int)
    y = x[idx] + rng.normal(size=(n, x.shape[1])) * noise
    return x.astype(np.float32), y.astype(np.float32), idx


def path_distance(path, emitted):
    """Per target frame, distance of the emitted reference frame from the offline path's cells."""
    n = len(emitted)
    lo = np.full(n, np.iinfo(np.int64).max)
    hi = np.full(n, -1)
    np.minimum.at(lo, path[:, 0], path[:, 1])
    np.maximum.at(hi, path[:, 0], path[:, 1])
    return np.maximum(0, np.maximum(lo - emitted, emitted - hi))
