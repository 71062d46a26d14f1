"""Annotated reference performance: alignment features, bar times and sections.

A reference bundle is a directory holding ``features.otf`` (feature dump),
``bars.csv`` and ``sections.csv``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .annotations import BarAnnotation, Section, read_bars, read_sections, write_bars, write_sections
from .audio_io import ALIGN_HOP_MS
from .errors import AnnotationError, CorruptFile, ReferenceEmpty
from .features.dump import read_features, write_features
from .features.mfcc import ALIGN_DIM

FEATURES_FILE = "features.otf"
BARS_FILE = "bars.csv"
SECTIONS_FILE = "sections.csv"

_NORM_EPS = 1e-12


def frame_time(frame: int | np.ndarray, hop_ms: float = ALIGN_HOP_MS):
    """Start time in seconds of an alignment frame."""
    return frame / (1000.0 / hop_ms)


@dataclass
class ReferenceIndex:
    features: np.ndarray
    bar_times: np.ndarray
    sections: list[Section] = field(default_factory=list)
    hop_ms: float = ALIGN_HOP_MS
    bar_indices: np.ndarray | None = None

    def __post_init__(self):
        self.features = np.ascontiguousarray(self.features, dtype=np.float32)
        if self.features.ndim != 2 or self.features.shape[1] != ALIGN_DIM:
            raise ValueError(f"reference features must be (frames x {ALIGN_DIM})")
        if len(self.features) == 0:
            raise ReferenceEmpty("reference has no feature frames")
        self.bar_times = np.asarray(self.bar_times, dtype=np.float64)
        if len(self.bar_times) > 1 and np.any(np.diff(self.bar_times) <= 0):
            raise AnnotationError("bar times must be strictly increasing")
        if self.bar_indices is None:
            self.bar_indices = np.arange(1, len(self.bar_times) + 1)
        self.bar_indices = np.asarray(self.bar_indices, dtype=np.int64)
        if len(self.bar_indices) != len(self.bar_times):
            raise AnnotationError("bar_indices and bar_times differ in length")
        for s in self.sections:
            if not 0.0 <= s.ref_start_s <= self.duration:
                raise AnnotationError(
                    f"section {s.section_id} starts at {s.ref_start_s} s, outside [0, {self.duration}]")
        f = self.features.astype(np.float64)
        norms = np.linalg.norm(f, axis=1)
        ok = norms >= _NORM_EPS
        self.unit = np.zeros_like(f)
        self.unit[ok] = f[ok] / norms[ok, None]
        self.degenerate = ~ok

    def __len__(self):
        return len(self.features)

    @property
    def duration(self) -> float:
        return frame_time(len(self.features), self.hop_ms)

    @property
    def transitions(self) -> list[tuple[float, int]]:
        """(reference time, section id) of every section boundary after the start."""
        return [(s.ref_start_s, s.section_id) for s in self.sections if s.ref_start_s > 0.0]

    @property
    def voice_start(self) -> dict[int, bool]:
        return {s.section_id: s.voice_start for s in self.sections}

    def frame_of(self, t: float) -> int:
        return int(min(max(round(t * 1000.0 / self.hop_ms), 0), len(self) - 1))

    def with_sections(self, sections) -> "ReferenceIndex":
        return ReferenceIndex(self.features, self.bar_times, list(sections), self.hop_ms, self.bar_indices)


def bars_to_times(bars: list[BarAnnotation]) -> np.ndarray:
    return np.array([b.time_s for b in bars], dtype=np.float64)


def save_reference(ref: ReferenceIndex, out_dir) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_features(out / FEATURES_FILE, ref.features, "alignment", ref.hop_ms)
    write_bars(out / BARS_FILE, [BarAnnotation(int(i), float(t)) for i, t in zip(ref.bar_indices, ref.bar_times)])
    write_sections(out / SECTIONS_FILE, ref.sections)
    return out


def load_reference(bundle_dir) -> ReferenceIndex:
    d = Path(bundle_dir)
    if not (d / FEATURES_FILE).exists():
        raise CorruptFile(f"{d}: not a reference bundle (no {FEATURES_FILE})")
    header, feats = read_features(d / FEATURES_FILE)
    if header.get("kind") != "alignment":
        raise CorruptFile(f"{d / FEATURES_FILE}: expected alignment features, got {header.get('kind')!r}")
    bars = read_bars(d / BARS_FILE)
    sections = read_sections(d / SECTIONS_FILE) if (d / SECTIONS_FILE).exists() else []
    return ReferenceIndex(feats, bars_to_times(bars), sections, float(header["hop_ms"]),
                          np.array([b.bar_index for b in bars], dtype=np.int64))
