"""Magnitude spectra, mel filterbanks and MFCCs."""

from __future__ import annotations

from functools import lru_cache

import numpy as np
import scipy.fft
from scipy.signal.windows import hann

from ..audio_io import SAMPLE_RATE, FrameBuffer
from ..errors import InvalidConfig

LOG_FLOOR = 1e-10

ALIGN_N_MELS = 140
ALIGN_N_COEFFS = 120
ALIGN_DROP = 20
ALIGN_DIM = ALIGN_N_COEFFS - ALIGN_DROP


def fft_size(n_samples: int) -> int:
    """Smallest power of two holding the frame (882 -> 1024, 4410 -> 8192)."""
    n = 1
    while n < n_samples:
        n *= 2
    return n


@lru_cache(maxsize=None)
def _window(n: int) -> np.ndarray:
    w = hann(n, sym=False)
    w.setflags(write=False)
    return w


def _samples(frame) -> tuple[np.ndarray, int]:
    if isinstance(frame, FrameBuffer):
        return frame.samples, frame.sample_rate
    return np.asarray(frame, dtype=np.float64), SAMPLE_RATE


def magnitude_spectrum(samples: np.ndarray, n_fft: int | None = None) -> np.ndarray:
    """|rfft| of the Hann-windowed frame, zero-padded to ``n_fft``."""
    samples = np.asarray(samples, dtype=np.float64)
    if n_fft is None:
        n_fft = fft_size(len(samples))
    return np.abs(np.fft.rfft(samples * _window(len(samples)), n_fft))


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


@lru_cache(maxsize=None)
def mel_filterbank(n_mels: int, n_fft: int, sample_rate: int = SAMPLE_RATE) -> np.ndarray:
    """Triangular filters on the HTK mel scale spanning 0 Hz to Nyquist.

    Each triangle's half-width is at least one FFT bin so that no filter is
    empty; empty filters would pin their log energy to the floor and break the
    gain invariance of the upper coefficients.
    """
    nyq = sample_rate / 2.0
    freqs = np.arange(n_fft // 2 + 1) * sample_rate / n_fft
    df = sample_rate / n_fft
    edges = mel_to_hz(np.linspace(0.0, hz_to_mel(nyq), n_mels + 2))
    fb = np.zeros((n_mels, len(freqs)))
    for i in range(n_mels):
        lo, c, hi = edges[i], edges[i + 1], edges[i + 2]
        lo = min(lo, c - df)
        hi = max(hi, c + df)
        up = (freqs - lo) / (c - lo)
        down = (hi - freqs) / (hi - c)
        fb[i] = np.maximum(0.0, np.minimum(up, down))
    fb.setflags(write=False)
    return fb


def mfcc_from_spectrum(mag: np.ndarray, n_mels: int, n_coeffs: int,
                       sample_rate: int = SAMPLE_RATE) -> np.ndarray:
    if n_coeffs > n_mels:
        raise InvalidConfig(f"n_coeffs={n_coeffs} exceeds n_mels={n_mels}")
    n_fft = 2 * (len(mag) - 1)
    energies = mel_filterbank(n_mels, n_fft, sample_rate) @ mag
    logmel = np.log(np.maximum(energies, LOG_FLOOR))
    return scipy.fft.dct(logmel, type=2, norm="ortho")[:n_coeffs]


def mfcc(frame, n_mels: int, n_coeffs: int) -> np.ndarray:
    """DCT-II (orthonormal) of the log mel magnitude spectrum, first ``n_coeffs`` terms."""
    if n_coeffs > n_mels:
        raise InvalidConfig(f"n_coeffs={n_coeffs} exceeds n_mels={n_mels}")
    x, sr = _samples(frame)
    if len(x) == 0:
        raise InvalidConfig("empty frame")
    return mfcc_from_spectrum(magnitude_spectrum(x), n_mels, n_coeffs, sr)


def alignment_features(frame) -> np.ndarray:
    """MFCCs 21..120 of a 20 ms frame (the first 20 carry loudness and are dropped)."""
    return mfcc(frame, ALIGN_N_MELS, ALIGN_N_COEFFS)[ALIGN_DROP:]
