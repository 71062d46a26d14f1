"""Detector feature vectors and the per-stream streaming extractors.

The functional forms (``applause_features`` etc.) recompute everything from a
block of spectra; the extractor classes keep rolling state so that each new
frame costs a constant amount of work.  Both produce identical numbers.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from ..audio_io import (
    ALIGN_HOP_MS, ALIGN_WINDOW_MS, DETECT_HOP_MS, DETECT_WINDOW_MS, SAMPLE_RATE,
    AudioStream, FrameBuffer, frame_stream,
)
from .mfcc import _samples, alignment_features, magnitude_spectrum, mfcc_from_spectrum
from .spectral import (
    DEFAULT_BANDS, FLUCT_BANDS, band_shifts, cfa, cfa_activation, cfa_from_counts, cft,
    cft_from_track, dominant_peak_hz, fluctogram, fluctogram_from_shifts, log_spectrum,
    spectral_measures,
)

KINDS = ("applause", "music", "speech")
DIMS = {"applause": 25, "music": 26, "speech": 46}

BLOCK_FRAMES = 50          # 1 s of detector frames
DETECT_N_MELS = 20
APPLAUSE_N_MFCC = 9
DELTA_LO, DELTA_HI = 2, 20  # MFCCs 2..19 -> 18 deltas


@dataclass
class AlignmentFeature:
    time: float
    values: np.ndarray


@dataclass
class DetectorFeature:
    time: float
    kind: str
    values: np.ndarray

    def __post_init__(self):
        if len(self.values) != DIMS[self.kind]:
            raise ValueError(f"{self.kind} feature must have length {DIMS[self.kind]}")


def _spectrum(item) -> np.ndarray:
    if isinstance(item, FrameBuffer):
        return magnitude_spectrum(item.samples)
    arr = np.asarray(item, dtype=np.float64)
    return arr


def _detector_mfcc(mag: np.ndarray, sr: int = SAMPLE_RATE) -> np.ndarray:
    return mfcc_from_spectrum(mag, DETECT_N_MELS, DETECT_N_MELS, sr)


def applause_features(frame, prev_spectrum=None, bands=DEFAULT_BANDS) -> np.ndarray:
    """16 band measures followed by the first 9 MFCCs of a 20-band filterbank."""
    x, sr = _samples(frame)
    mag = magnitude_spectrum(x)
    return np.concatenate([spectral_measures(mag, prev_spectrum, bands, sr),
                           _detector_mfcc(mag, sr)[:APPLAUSE_N_MFCC]])


def delta_mfcc(frames) -> np.ndarray:
    """Difference of MFCCs 2..19 between the last two frames (zeros for a single frame)."""
    frames = list(frames)
    return _delta_from_spectra([magnitude_spectrum(_samples(f)[0]) for f in frames[-2:]])


def _delta_from_spectra(spectra) -> np.ndarray:
    if len(spectra) < 2:
        return np.zeros(DELTA_HI - DELTA_LO)
    cur = _detector_mfcc(spectra[-1])
    prev = _detector_mfcc(spectra[-2])
    return cur[DELTA_LO:DELTA_HI] - prev[DELTA_LO:DELTA_HI]


def _block_spectra(frame, block):
    """``block`` (preceding frames, oldest first) plus ``frame``, cut to the last second."""
    spectra = [_spectrum(m) for m in block] if block is not None else []
    spectra.append(magnitude_spectrum(_samples(frame)[0]))
    return spectra[-BLOCK_FRAMES:]


def music_features(frame, block) -> np.ndarray:
    """Applause features plus continuous frequency activation over the block (26 values).

    ``block`` holds the spectra (or frames) preceding ``frame``, oldest first.
    """
    spectra = _block_spectra(frame, block)
    prev = spectra[-2] if len(spectra) > 1 else None
    return np.concatenate([applause_features(frame, prev), [cfa(spectra)]])


def speech_features(frame, block) -> np.ndarray:
    """Band measures, CFT, 11-band fluctogram and 18 delta-MFCCs (46 values)."""
    x, sr = _samples(frame)
    spectra = _block_spectra(frame, block)
    mag = spectra[-1]
    prev = spectra[-2] if len(spectra) > 1 else None
    return np.concatenate([spectral_measures(mag, prev, DEFAULT_BANDS, sr),
                           [cft(spectra, sr)], fluctogram(spectra, sr),
                           _delta_from_spectra(spectra[-2:])])


@dataclass
class DetectorFrameFeatures:
    time: float
    applause: np.ndarray
    music: np.ndarray
    speech: np.ndarray

    def __getitem__(self, kind: str) -> np.ndarray:
        return getattr(self, kind)


class DetectorExtractor:
    """Rolling-state extractor for the three detector vectors of one stream.

    Not safe for concurrent calls; use one instance per stream.
    """

    def __init__(self, block_frames: int = BLOCK_FRAMES, sample_rate: int = SAMPLE_RATE):
        self.block_frames = block_frames
        self.sample_rate = sample_rate
        self.reset()

    def reset(self):
        B = self.block_frames
        self._prev_mag = None
        self._prev_mfcc = None
        self._prev_log = None
        self._active = deque(maxlen=B)
        self._counts = None
        self._track = deque(maxlen=B)
        self._shifts = deque(maxlen=B - 1)

    def push(self, frame: FrameBuffer) -> DetectorFrameFeatures:
        sr = self.sample_rate
        mag = magnitude_spectrum(frame.samples)
        measures = spectral_measures(mag, self._prev_mag, DEFAULT_BANDS, sr)
        coeffs = _detector_mfcc(mag, sr)

        act = cfa_activation(mag)
        if self._counts is None:
            self._counts = np.zeros(len(mag), dtype=np.int64)
        if len(self._active) == self._active.maxlen:
            self._counts -= self._active[0]
        self._active.append(act)
        self._counts += act
        cfa_value = cfa_from_counts(self._counts, len(self._active))

        self._track.append(dominant_peak_hz(mag, sr))
        cft_value = cft_from_track(np.array(self._track), sr)

        logmag = log_spectrum(mag, sr)
        if self._prev_log is not None:
            self._shifts.append(band_shifts(self._prev_log, logmag, sr, len(mag)))
        fluct = fluctogram_from_shifts(list(self._shifts)) if self._shifts else np.zeros(FLUCT_BANDS)

        if self._prev_mfcc is None:
            delta = np.zeros(DELTA_HI - DELTA_LO)
        else:
            delta = coeffs[DELTA_LO:DELTA_HI] - self._prev_mfcc[DELTA_LO:DELTA_HI]

        applause = np.concatenate([measures, coeffs[:APPLAUSE_N_MFCC]])
        music = np.concatenate([applause, [cfa_value]])
        speech = np.concatenate([measures, [cft_value], fluct, delta])

        self._prev_mag = mag
        self._prev_mfcc = coeffs
        self._prev_log = logmag
        return DetectorFrameFeatures(frame.start_time, applause, music, speech)


class AlignmentExtractor:
    """Stateless per-frame wrapper around :func:`alignment_features`."""

    def push(self, frame: FrameBuffer) -> AlignmentFeature:
        return AlignmentFeature(frame.start_time, alignment_features(frame))


def iter_alignment_features(stream: AudioStream) -> Iterator[AlignmentFeature]:
    ext = AlignmentExtractor()
    for frame in frame_stream(stream, ALIGN_WINDOW_MS, ALIGN_HOP_MS):
        yield ext.push(frame)


def iter_detector_features(stream: AudioStream) -> Iterator[DetectorFrameFeatures]:
    ext = DetectorExtractor(sample_rate=stream.sample_rate)
    for frame in frame_stream(stream, DETECT_WINDOW_MS, DETECT_HOP_MS):
        yield ext.push(frame)


def alignment_matrix(stream: AudioStream) -> np.ndarray:
    """All alignment features of a stream as a (frames x 100) matrix."""
    return np.array([f.values for f in iter_alignment_features(stream)])


def detector_matrices(stream: AudioStream) -> dict[str, np.ndarray]:
    """Detector features of a stream, one (frames x dim) matrix per kind."""
    rows = {k: [] for k in KINDS}
    for f in iter_detector_features(stream):
        for k in KINDS:
            rows[k].append(f[k])
    return {k: np.array(v).reshape(-1, DIMS[k]) for k, v in rows.items()}
