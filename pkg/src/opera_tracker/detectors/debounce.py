"""Hysteresis debouncing of per-frame detector probabilities."""

from __future__ import annotations

from dataclasses import dataclass

from ..audio_io import DETECT_HOP_MS

THRESHOLD = 0.5
MIN_ACTIVE_MS = 400.0
RELEASE_MS = 200.0


@dataclass(frozen=True)
class EventDecision:
    time: float
    kind: str
    active: bool
    raw_prob: float


def ms_to_frames(ms: float, hop_ms: float = DETECT_HOP_MS) -> int:
    return int(round(ms / hop_ms))


class Debouncer:
    """ON after ``on_frames`` consecutive probs above threshold, OFF after ``off_frames`` at or below."""

    def __init__(self, kind: str = "", threshold: float = THRESHOLD,
                 min_active_ms: float = MIN_ACTIVE_MS, release_ms: float = RELEASE_MS,
                 hop_ms: float = DETECT_HOP_MS):
        self.kind = kind
        self.threshold = threshold
        self.on_frames = max(1, ms_to_frames(min_active_ms, hop_ms))
        self.off_frames = max(1, ms_to_frames(release_ms, hop_ms))
        self.hop_ms = hop_ms
        self.reset()

    def reset(self):
        self.active = False
        self._run = 0
        self._frame = 0

    def update(self, prob: float, time: float | None = None) -> EventDecision:
        if time is None:
            time = self._frame * self.hop_ms / 1000.0
        self._frame += 1
        above = prob > self.threshold
        if above != self.active:
            self._run += 1
            if self._run >= (self.off_frames if self.active else self.on_frames):
                self.active = above
                self._run = 0
        else:
            self._run = 0
        return EventDecision(time, self.kind, self.active, float(prob))


def debounce(probs, kind: str = "", threshold: float = THRESHOLD,
             min_active_ms: float = MIN_ACTIVE_MS, release_ms: float = RELEASE_MS,
             hop_ms: float = DETECT_HOP_MS, times=None) -> list[EventDecision]:
    d = Debouncer(kind, threshold, min_active_ms, release_ms, hop_ms)
    if times is None:
        return [d.update(p) for p in probs]
    return [d.update(p, t) for p, t in zip(probs, times)]
