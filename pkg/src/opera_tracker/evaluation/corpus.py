"""Deterministic labelled corpus for detector training.

Each clip is a short recording of one class.  ``music`` mixes orchestral
sections with plucked interludes, ``speech`` mixes bare speech with
recitative over sparse chords, ``applause`` varies crowd density and
``none`` is audience noise with coughs.  On disk a corpus is a directory of
``clip_NNNN.wav`` / ``clip_NNNN.csv`` pairs (``start_s,end_s,label``).
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..annotations import LabelSpan, read_labels, write_labels
from ..audio_io import DETECT_HOP_MS, DETECT_WINDOW_MS, SAMPLE_RATE, AudioStream, open_audio, write_wav
from ..errors import EmptyDataset
from ..features.extractors import KINDS, detector_matrices
from .synth import (
    audience_silence, applause, interlude, music_score, recitative_score, render_section,
    render_speech, room_noise, _rms_normalize, SPEECH_RMS,
)

log = logging.getLogger(__name__)

CLASSES = ("applause", "music", "speech", "none")
CLIP_S = 10.0
HOLDOUT_EVERY = 5
MANIFEST = "corpus.json"
CLEAN_FRACTION = 0.25      # music/speech clips rendered without a room noise floor


@dataclass
class Clip:
    name: str
    features: dict          # kind -> (frames x dim)
    labels: np.ndarray      # per detector frame, one of LABELS

    def targets(self, kind: str) -> np.ndarray:
        return (self.labels == kind).astype(np.float64)


def synth_clip(cls: str, rng: np.random.Generator, clip_s: float = CLIP_S,
               sr: int = SAMPLE_RATE) -> np.ndarray:
    """One clip of class ``cls``; the whole clip carries that label."""
    if cls == "applause":
        x = applause(rng, clip_s, float(rng.uniform(15, 80)), sr)
    elif cls == "none":
        x = audience_silence(rng, clip_s, float(rng.uniform(0.1, 1.0)), sr)
    else:
        bar_s = float(rng.uniform(2.0, 3.0))
        bars = int(np.ceil(clip_s * 1.2 / bar_s))
        tempo = float(rng.uniform(0.85, 1.2))
        key = int(rng.integers(55, 67))
        seed = int(rng.integers(0, 2 ** 31))
        if cls == "music":
            if rng.random() < 0.3:
                x = interlude(rng, clip_s, sr)
            else:
                x = render_section("music", music_score(rng, bars, bar_s, key), bars * bar_s, tempo, sr, seed)
        elif cls == "speech":
            syl, chords = recitative_score(rng, bars, bar_s, key)
            if rng.random() < 0.5:
                x = _rms_normalize(render_speech(syl, bars * bar_s, tempo, sr, seed), SPEECH_RMS)
            else:
                x = render_section("recitative", (syl, chords), bars * bar_s, tempo, sr, seed)
        else:
            raise ValueError(f"unknown class {cls!r}")
        n = int(round(clip_s * sr))
        x = np.pad(x, (0, max(0, n - len(x))))[:n]
        x = x * float(rng.uniform(0.5, 1.5))
        if rng.random() >= CLEAN_FRACTION:
            x = x + room_noise(rng, clip_s, sr)
    return np.clip(x, -1.0, 1.0)


def iter_corpus(clips_per_class: int, seed: int = 0, clip_s: float = CLIP_S, sr: int = SAMPLE_RATE,
                classes=CLASSES):
    """Yield ``(name, audio, label)`` in a fixed interleaved class order."""
    for k in range(clips_per_class):
        for c, cls in enumerate(classes):
            rng = np.random.default_rng([seed, k, c])
            yield f"clip_{k * len(classes) + c:04d}", synth_clip(cls, rng, clip_s, sr), cls


def generate_corpus(out_dir, clips_per_class: int = 180, seed: int = 0, clip_s: float = CLIP_S,
                    classes=CLASSES) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    names = []
    for name, x, cls in iter_corpus(clips_per_class, seed, clip_s, classes=classes):
        write_wav(out / f"{name}.wav", AudioStream(x, SAMPLE_RATE), "int16")
        write_labels(out / f"{name}.csv", [LabelSpan(0.0, clip_s, cls)])
        names.append(name)
    (out / MANIFEST).write_text(json.dumps({"seed": seed, "clip_s": clip_s, "clips": names}, indent=2))
    return out


def frame_labels(spans, n_frames: int) -> np.ndarray:
    """Label of each detector frame, taken at the frame centre; uncovered frames are ``none``."""
    centres = np.arange(n_frames) * (DETECT_HOP_MS / 1000) + DETECT_WINDOW_MS / 2000
    out = np.full(n_frames, "none", dtype=object)
    for s in spans:
        out[(centres >= s.start_s) & (centres < s.end_s)] = s.label
    return out.astype(str)


def clip_from_audio(name: str, stream: AudioStream, spans) -> Clip:
    feats = detector_matrices(stream)
    return Clip(name, feats, frame_labels(spans, len(feats[KINDS[0]])))


def load_corpus(corpus_dir) -> list[Clip]:
    """Extract detector features and frame labels for every WAV/CSV pair in a directory."""
    d = Path(corpus_dir)
    if not d.is_dir():
        raise EmptyDataset(f"{d} is not a directory")
    clips = []
    for wav in sorted(d.glob("*.wav")):
        csv_path = wav.with_suffix(".csv")
        if not csv_path.exists():
            log.warning("skipping %s: no label file", wav.name)
            continue
        clips.append(clip_from_audio(wav.stem, open_audio(wav), read_labels(csv_path)))
    if not clips:
        raise EmptyDataset(f"no labelled clips in {d}")
    return clips


def synth_clips(clips_per_class: int, seed: int = 0, clip_s: float = CLIP_S) -> list[Clip]:
    """In-memory equivalent of generate_corpus + load_corpus (int16 quantisation aside)."""
    return [clip_from_audio(name, AudioStream(x, SAMPLE_RATE), [LabelSpan(0.0, clip_s, cls)])
            for name, x, cls in iter_corpus(clips_per_class, seed, clip_s)]


def split(clips, holdout_every: int = HOLDOUT_EVERY):
    """Every ``holdout_every``-th clip (by position) is held out."""
    train = [c for i, c in enumerate(clips) if i % holdout_every != holdout_every - 1]
    held = [c for i, c in enumerate(clips) if i % holdout_every == holdout_every - 1]
    return train, held


def sequences(clips, kind: str) -> list[tuple[np.ndarray, np.ndarray]]:
    return [(c.features[kind], c.targets(kind)) for c in clips]

