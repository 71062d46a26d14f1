"""Integrated tracker: OLTW gated top-down by the applause, music and speech detectors.

Three gates can halt the tracker near a section transition:

* applause: debounced applause while the estimate is within ``tol`` of a
  transition clamps the position to that transition until the applause stops;
* pause: neither music nor speech for ``min_active_ms`` near a transition
  clamps until either comes back;
* interlude: entering a section whose reference starts with voice clamps at
  the section start until the target's speech detector fires (or a timeout).

While halted the OLTW state is frozen.  On release the tracker restarts from
the clamp with a fresh window.  Alignment frames (10 ms) and detector frames
(20 ms) are merged by time: detector frame ``m`` ends together with
alignment frame ``2 m + 8`` and is consumed at that step.
"""

from __future__ import annotations

import csv
import enum
import logging
from dataclasses import dataclass

import numpy as np

from .annotations import Section, iter_rows, parse_number
from .audio_io import ALIGN_HOP_MS, ALIGN_WINDOW_MS, DETECT_HOP_MS, DETECT_WINDOW_MS, AudioStream
from .detectors.debounce import MIN_ACTIVE_MS, RELEASE_MS, THRESHOLD, Debouncer, debounce, ms_to_frames
from .detectors.lstm import LstmModel, StreamingDetector, predict
from .errors import AnnotationError, DimensionMismatch
from .features.extractors import KINDS, detector_matrices
from .oltw import WINDOW_RADIUS, init_tracker, step
from .reference import ReferenceIndex, frame_time

log = logging.getLogger(__name__)

DETECTOR_LAG = int(round((DETECT_WINDOW_MS - ALIGN_WINDOW_MS) / ALIGN_HOP_MS))   # 8 alignment frames
DETECTOR_RATIO = int(round(DETECT_HOP_MS / ALIGN_HOP_MS))                        # 2 alignment frames
TRANSITION_TOL_S = 1.0
VOICE_WINDOW_S = 4.0
VOICE_TIMEOUT_S = 120.0
TRACE_HEADER = ("target_time_s", "ref_time_s", "mode", "applause_p", "music_p", "speech_p")


class Mode(enum.Enum):
    TRACKING = "TRACKING"
    HALT_APPLAUSE = "HALT_APPLAUSE"
    HALT_PAUSE = "HALT_PAUSE"
    AWAIT_VOICE = "AWAIT_VOICE"


class Variant(enum.Enum):
    BASE = "BASE"
    A = "A"
    AS = "AS"
    ASI = "ASI"

    @property
    def gates(self) -> tuple[bool, bool, bool]:
        return {"BASE": (False, False, False), "A": (True, False, False),
                "AS": (True, True, False), "ASI": (True, True, True)}[self.value]


@dataclass
class GateConfig:
    applause: bool = True
    pause: bool = True
    interlude: bool = True
    transition_tol_s: float = TRANSITION_TOL_S
    voice_timeout_s: float = VOICE_TIMEOUT_S
    threshold: float = THRESHOLD
    min_active_ms: float = MIN_ACTIVE_MS
    release_ms: float = RELEASE_MS
    window_radius: int = WINDOW_RADIUS

    @classmethod
    def for_variant(cls, variant, **kw) -> "GateConfig":
        a, s, i = Variant(variant).gates
        return cls(applause=a, pause=s, interlude=i, **kw)


@dataclass
class GateState:
    mode: Mode = Mode.TRACKING
    clamp_pos: int | None = None      # reference frame of the governing transition
    since: float = 0.0                # target time the mode began


@dataclass
class TrackedPosition:
    target_time: float
    ref_time: float
    mode: Mode
    detector_probs: dict


@dataclass
class Trace:
    target_times: np.ndarray
    ref_times: np.ndarray
    modes: list
    probs: np.ndarray                 # (rows x 3): applause, music, speech

    def __len__(self):
        return len(self.target_times)

    def rows(self):
        for t, r, m, p in zip(self.target_times, self.ref_times, self.modes, self.probs):
            yield TrackedPosition(float(t), float(r), m, dict(zip(KINDS, map(float, p))))

    def identical(self, other: "Trace") -> bool:
        return (np.array_equal(self.target_times, other.target_times)
                and np.array_equal(self.ref_times, other.ref_times)
                and self.modes == other.modes)


class IntegratedTracker:
    """One control loop over one target stream.

    ``models`` maps detector kind to an LstmModel; without models the caller
    must hand probabilities to :meth:`integrated_step` directly.
    """

    def __init__(self, ref: ReferenceIndex, config: GateConfig | None = None,
                 models: dict[str, LstmModel] | None = None, start_pos: int = 0):
        self.ref = ref
        self.config = cfg = config or GateConfig()
        self.detectors = {k: StreamingDetector(m) for k, m in (models or {}).items()}
        self.debouncers = {k: Debouncer(k, cfg.threshold, cfg.min_active_ms, cfg.release_ms) for k in KINDS}
        self.pause_frames = max(1, ms_to_frames(cfg.min_active_ms))
        self.tracker = init_tracker(ref, start_pos, cfg.window_radius)
        self.gate = GateState(Mode.TRACKING, None, 0.0)
        self.estimate = frame_time(start_pos, ref.hop_ms)
        self.probs = np.full(len(KINDS), np.nan)
        self.active = dict.fromkeys(KINDS, False)
        self.quiet_run = 0            # detector frames with music and speech both inactive
        self.transition_times = np.array([t for t, _ in ref.transitions], dtype=np.float64)
        self.voice_sections = [s for s in ref.sections if s.voice_start]
        self.voice_done: set[int] = set()
        self.engagements: list[tuple[float, Mode, float, float]] = []   # (time, mode, estimate, clamp time)

    # -- detector side -----------------------------------------------------------

    def update_detectors(self, probs=None, features=None, time=None) -> None:
        """Consume one detector frame, as probabilities or as raw feature vectors."""
        if probs is None:
            if not self.detectors:
                raise ValueError("no detector models loaded; pass probabilities")
            probs = [self.detectors[k].push(features[k]) if k in self.detectors else 0.0 for k in KINDS]
        probs = np.asarray(probs, dtype=np.float64)
        if probs.shape != (len(KINDS),):
            raise DimensionMismatch("expected one probability per detector kind")
        self.probs = probs
        for k, p in zip(KINDS, probs):
            self.active[k] = self.debouncers[k].update(float(p), time).active
        if self.active["music"] or self.active["speech"]:
            self.quiet_run = 0
        else:
            self.quiet_run += 1

    # -- gates -------------------------------------------------------------------

    def _near_transition(self, est: float):
        if len(self.transition_times) == 0:
            return None
        d = np.abs(self.transition_times - est)
        k = int(np.argmin(d))
        return float(self.transition_times[k]) if d[k] <= self.config.transition_tol_s + 1e-9 else None

    def _voice_section(self, est: float) -> Section | None:
        tol = self.config.transition_tol_s
        for s in self.voice_sections:
            if s.section_id in self.voice_done:
                continue
            if est > s.ref_start_s + tol + 1e-9:
                self.voice_done.add(s.section_id)      # crossed without a chance to engage
                continue
            if s.ref_start_s - 1e-9 <= est:
                return s
        return None

    def _gate_decision(self, est: float, now: float):
        """Mode and clamp time demanded by the gates at estimate ``est``, or None."""
        cfg = self.config
        if cfg.applause and self.active["applause"]:
            tr = self._near_transition(est)
            if tr is not None:
                return Mode.HALT_APPLAUSE, tr
        if cfg.pause and self.quiet_run >= self.pause_frames:
            tr = self._near_transition(est)
            if tr is not None:
                return Mode.HALT_PAUSE, tr
        if cfg.interlude:
            sec = self._voice_section(est)
            if sec is not None:
                waited = now - self.gate.since if self.gate.mode is Mode.AWAIT_VOICE else 0.0
                if self.active["speech"] or waited >= cfg.voice_timeout_s:
                    self.voice_done.add(sec.section_id)
                else:
                    return Mode.AWAIT_VOICE, sec.ref_start_s
        return None

    # -- main step ---------------------------------------------------------------

    def integrated_step(self, align_feature, detector_features=None, probs=None,
                        time: float | None = None) -> TrackedPosition:
        """Process one alignment frame, optionally preceded by one detector frame."""
        if time is None:
            time = getattr(align_feature, "time", None)
        if time is None:
            time = frame_time(self.tracker.frame_clock, self.ref.hop_ms)
        if probs is not None or (detector_features is not None and self.detectors):
            self.update_detectors(probs, detector_features, time)

        halted = self.gate.mode is not Mode.TRACKING
        decision = self._gate_decision(self.estimate, time)
        if decision is not None:
            mode, clamp_t = decision
            clamp = self.ref.frame_of(clamp_t)
            if mode is not self.gate.mode:
                if not halted:
                    self.engagements.append((time, mode, self.estimate, clamp_t))
                    log.debug("%.2f s: %s at %.2f s (estimate %.2f s)", time, mode.value, clamp_t, self.estimate)
                self.gate = GateState(mode, clamp, time)
            self.estimate = float(clamp_t)
            return TrackedPosition(float(time), self.estimate, mode, self._prob_dict())

        if halted:
            log.debug("%.2f s: release from %s", time, self.gate.mode.value)
            self.tracker = init_tracker(self.ref, self.gate.clamp_pos, self.config.window_radius)
            self.gate = GateState(Mode.TRACKING, None, time)
        est = step(self.tracker, getattr(align_feature, "values", align_feature))
        self.estimate = est.ref_time
        return TrackedPosition(float(time), est.ref_time, Mode.TRACKING, self._prob_dict())

    def _prob_dict(self) -> dict:
        return dict(zip(KINDS, map(float, self.probs)))


def detector_slot(k: int) -> int | None:
    """Index of the detector frame consumed at alignment frame ``k`` (or None)."""
    j = k - DETECTOR_LAG
    return j // DETECTOR_RATIO if j >= 0 and j % DETECTOR_RATIO == 0 else None


def detector_probabilities(stream: AudioStream, models: dict[str, LstmModel]) -> np.ndarray:
    """(detector frames x 3) probabilities for a whole stream; missing kinds give 0."""
    feats = detector_matrices(stream)
    n = len(feats[KINDS[0]])
    out = np.zeros((n, len(KINDS)))
    for c, k in enumerate(KINDS):
        if k in models:
            out[:, c] = predict(models[k], feats[k])
    return out


def run_variant(variant, target_features: np.ndarray, ref: ReferenceIndex, probs: np.ndarray | None = None,
                config: GateConfig | None = None, frame_times=None) -> Trace:
    """Track precomputed alignment features with the gates of ``variant``.

    ``probs`` holds per-detector-frame probabilities (applause, music,
    speech); BASE ignores them.
    """
    if config is None:
        config = GateConfig.for_variant(variant)
    else:
        a, s, i = Variant(variant).gates
        config = GateConfig(**{**config.__dict__, "applause": a, "pause": s, "interlude": i})
    tracker = IntegratedTracker(ref, config)
    feats = np.asarray(target_features, dtype=np.float32)
    n = len(feats)
    times = frame_time(np.arange(n), ref.hop_ms) if frame_times is None else np.asarray(frame_times)
    ref_t = np.empty(n)
    modes = []
    probs_out = np.full((n, len(KINDS)), np.nan)
    gated = any(Variant(variant).gates)
    for k in range(n):
        p = None
        if gated and probs is not None:
            m = detector_slot(k)
            if m is not None and m < len(probs):
                p = probs[m]
        pos = tracker.integrated_step(feats[k], probs=p, time=float(times[k]))
        ref_t[k] = pos.ref_time
        modes.append(pos.mode)
        probs_out[k] = tracker.probs
    trace = Trace(np.asarray(times, dtype=np.float64), ref_t, modes, probs_out)
    trace.engagements = tracker.engagements
    return trace


def annotate_reference_voice(ref_audio: AudioStream, speech_model: LstmModel, sections,
                             window_s: float = VOICE_WINDOW_S, threshold: float = THRESHOLD,
                             min_active_ms: float = MIN_ACTIVE_MS) -> list[Section]:
    """Flag sections whose first ``window_s`` of reference audio contain debounced speech."""
    sections = sorted(sections, key=lambda s: s.ref_start_s)
    sr = ref_audio.sample_rate
    out = []
    for i, s in enumerate(sections):
        end = s.ref_start_s + window_s
        if i + 1 < len(sections):
            end = min(end, sections[i + 1].ref_start_s)
        a, b = int(round(s.ref_start_s * sr)), int(round(end * sr))
        clip = ref_audio.samples[a:min(b, len(ref_audio.samples))]
        voice = False
        if len(clip) >= int(sr * DETECT_HOP_MS / 1000):
            feats = detector_matrices(AudioStream(clip, sr))["speech"]
            if len(feats):
                probs = predict(speech_model, feats)
                voice = any(d.active for d in debounce(probs, "speech", threshold, min_active_ms))
        out.append(Section(s.section_id, s.start_bar, s.ref_start_s, voice))
    return out


# -- trace files -------------------------------------------------------------------

def write_trace(trace: Trace, path, decimation: int = 1) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRACE_HEADER)
        for k in range(0, len(trace), max(1, int(decimation))):
            p = trace.probs[k]
            w.writerow([repr(float(trace.target_times[k])), repr(float(trace.ref_times[k])),
                        trace.modes[k].value, *(repr(float(v)) for v in p)])


def read_trace(path) -> Trace:
    tt, rt, modes, probs = [], [], [], []
    for lineno, row in iter_rows(path, TRACE_HEADER):
        tt.append(parse_number(row[0], float, path, lineno, "target_time_s"))
        rt.append(parse_number(row[1], float, path, lineno, "ref_time_s"))
        try:
            modes.append(Mode(row[2]))
        except ValueError:
            raise AnnotationError(f"unknown mode {row[2]!r}", path, lineno) from None
        probs.append([float(v) for v in row[3:6]])
    return Trace(np.array(tt), np.array(rt), modes, np.array(probs).reshape(-1, len(KINDS)))
