"""Scripted reference/target scenario pairs with analytic bar annotations.

A script is a JSON object::

    {
      "sections": [{"name": "aria", "kind": "music", "bars": 12, "bar_s": 2.5, "key": 62}, ...],
      "reference": [{"type": "section", "name": "aria", "tempo_scale": 1.0}, ...],
      "target": [{"type": "section", "name": "aria", "tempo_scale": 1.1},
                 {"type": "applause", "duration": 15},
                 {"type": "silence", "duration": 54, "cough_density": 0.3},
                 {"type": "interlude", "duration": 17}, ...]
    }

``tempo_scale`` is a speed factor: a section of D score seconds lasts
D / tempo_scale seconds in that stream.  Both streams must play the same
sections in the same order; only the target may contain applause, silence
and interludes.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..annotations import (
    BarAnnotation, LabelSpan, Section, read_bars, read_labels, read_sections, write_bars,
    write_labels, write_sections,
)
from ..audio_io import SAMPLE_RATE, AudioStream, open_audio, write_wav
from ..errors import InvalidScript
from .synth import applause, audience_silence, interlude, music_score, recitative_score, render_section

SECTION_KINDS = ("music", "recitative")
GAP_TYPES = ("applause", "silence", "interlude")
GAP_LABEL = {"applause": "applause", "silence": "none", "interlude": "music"}
SECTION_LABEL = {"music": "music", "recitative": "speech"}
GRID = 100.0      # annotations live on the 10 ms alignment grid


@dataclass
class SectionDef:
    name: str
    kind: str
    bars: int
    bar_s: float
    key: int

    @property
    def duration(self) -> float:
        return self.bars * self.bar_s


@dataclass
class Gap:
    kind: str
    start_s: float
    end_s: float


@dataclass
class Scenario:
    reference: AudioStream
    target: AudioStream
    reference_bars: list[BarAnnotation]
    target_bars: list[BarAnnotation]
    sections: list[Section]
    target_labels: list[LabelSpan]
    gaps: list[Gap] = field(default_factory=list)
    voice_truth: dict = field(default_factory=dict)
    script: dict = field(default_factory=dict)
    seed: int = 0

    @property
    def transitions(self) -> list[tuple[float, int]]:
        return [(s.ref_start_s, s.section_id) for s in self.sections if s.ref_start_s > 0]

    @property
    def gap_duration(self) -> float:
        return sum(g.end_s - g.start_s for g in self.gaps)


def _grid(t: float) -> float:
    return round(t * GRID) / GRID


def parse_script(script) -> tuple[dict[str, SectionDef], list[dict], list[dict]]:
    if isinstance(script, (str, Path)):
        try:
            script = json.loads(Path(script).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise InvalidScript(f"cannot read script: {exc}") from exc
    if not isinstance(script, dict):
        raise InvalidScript("script must be a JSON object")
    for key in ("sections", "reference", "target"):
        if key not in script:
            raise InvalidScript(f"script lacks {key!r}")
    defs = {}
    for i, s in enumerate(script["sections"]):
        try:
            name, kind = str(s["name"]), s.get("kind", "music")
            bar_s = float(s.get("bar_s", 2.5))
            bars = int(s["bars"]) if "bars" in s else int(round(float(s["duration"]) / bar_s))
        except (KeyError, TypeError, ValueError) as exc:
            raise InvalidScript(f"section {i}: {exc}") from exc
        if kind not in SECTION_KINDS:
            raise InvalidScript(f"section {name!r}: unknown kind {kind!r}")
        if bars < 1 or bar_s <= 0:
            raise InvalidScript(f"section {name!r}: needs at least one bar of positive length")
        if name in defs:
            raise InvalidScript(f"duplicate section name {name!r}")
        defs[name] = SectionDef(name, kind, bars, bar_s, int(s.get("key", 60 + 2 * i)))

    def segments(which):
        out = []
        for seg in script[which]:
            kind = seg.get("type", "section")
            if kind == "section":
                if seg.get("name") not in defs:
                    raise InvalidScript(f"{which}: unknown section {seg.get('name')!r}")
                if float(seg.get("tempo_scale", 1.0)) <= 0:
                    raise InvalidScript(f"{which}: tempo_scale must be positive")
            elif kind in GAP_TYPES:
                if which == "reference":
                    raise InvalidScript(f"reference may not contain {kind} segments")
                if float(seg.get("duration", 0)) <= 0:
                    raise InvalidScript(f"{which}: {kind} segment needs a positive duration")
            else:
                raise InvalidScript(f"{which}: unknown segment type {kind!r}")
            out.append(dict(seg, type=kind))
        return out

    ref, tgt = segments("reference"), segments("target")
    order = lambda segs: [s["name"] for s in segs if s["type"] == "section"]
    if not order(ref):
        raise InvalidScript("reference has no sections")
    if order(ref) != order(tgt):
        raise InvalidScript("reference and target must play the same sections in the same order")
    if len(set(order(ref))) != len(order(ref)):
        raise InvalidScript("each section may be played once")
    return defs, ref, tgt


def _render_stream(defs, segs, scores, seed, sr, section_seed):
    """Concatenate rendered segments; return audio, bar times, section starts and label spans."""
    rng = np.random.default_rng([seed, 7])
    parts, bars, starts, labels, gaps = [], [], {}, [], []
    pos = 0
    for seg in segs:
        if seg["type"] == "section":
            d = defs[seg["name"]]
            tempo = float(seg.get("tempo_scale", 1.0))
            x = render_section(d.kind, scores[d.name], d.duration, tempo, sr, section_seed[d.name])
            starts[d.name] = pos
            for k in range(d.bars):
                bars.append(_grid((pos + round(k * d.bar_s / tempo * sr)) / sr))
            label = SECTION_LABEL[d.kind]
        else:
            dur = float(seg["duration"])
            if seg["type"] == "applause":
                x = applause(rng, dur, float(seg.get("density", 40.0)), sr)
            elif seg["type"] == "silence":
                x = audience_silence(rng, dur, float(seg.get("cough_density", 0.3)), sr)
            else:
                x = interlude(rng, dur, sr)
            gaps.append(Gap(seg["type"], pos / sr, (pos + len(x)) / sr))
            label = GAP_LABEL[seg["type"]]
        labels.append(LabelSpan(pos / sr, (pos + len(x)) / sr, label))
        parts.append(x)
        pos += len(x)
    audio = np.clip(np.concatenate(parts), -1.0, 1.0)
    return audio, bars, starts, labels, gaps


def generate_scenario(script, seed: int = 0, sr: int = SAMPLE_RATE) -> Scenario:
    defs, ref_segs, tgt_segs = parse_script(script)
    scores, section_seed = {}, {}
    for i, d in enumerate(defs.values()):
        rng = np.random.default_rng([seed, i, 1])
        section_seed[d.name] = int(rng.integers(0, 2 ** 31))
        if d.kind == "music":
            scores[d.name] = music_score(rng, d.bars, d.bar_s, d.key)
        else:
            scores[d.name] = recitative_score(rng, d.bars, d.bar_s, d.key)

    ref_audio, ref_bar_t, ref_starts, _, _ = _render_stream(defs, ref_segs, scores, seed, sr, section_seed)
    tgt_audio, tgt_bar_t, _, tgt_labels, gaps = _render_stream(defs, tgt_segs, scores, seed + 1, sr, section_seed)

    ref_bars = [BarAnnotation(k + 1, t) for k, t in enumerate(ref_bar_t)]
    tgt_bars = [BarAnnotation(k + 1, t) for k, t in enumerate(tgt_bar_t)]
    sections, first_bar, voice = [], 1, {}
    for sid, seg in enumerate(s for s in ref_segs if s["type"] == "section"):
        d = defs[seg["name"]]
        sections.append(Section(sid, first_bar, _grid(ref_starts[d.name] / sr), False))
        voice[sid] = d.kind == "recitative"
        first_bar += d.bars
    raw = script if isinstance(script, dict) else json.loads(Path(script).read_text())
    return Scenario(AudioStream(ref_audio, sr), AudioStream(tgt_audio, sr), ref_bars, tgt_bars,
                    sections, tgt_labels, gaps, voice, copy.deepcopy(raw), seed)


# -- persistence -----------------------------------------------------------------

FILES = {
    "reference": "reference.wav", "target": "target.wav",
    "reference_bars": "reference_bars.csv", "target_bars": "target_bars.csv",
    "sections": "sections.csv", "target_labels": "target_labels.csv", "meta": "scenario.json",
}


def write_scenario(scn: Scenario, out_dir) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_wav(out / FILES["reference"], scn.reference, "float32")
    write_wav(out / FILES["target"], scn.target, "float32")
    write_bars(out / FILES["reference_bars"], scn.reference_bars)
    write_bars(out / FILES["target_bars"], scn.target_bars)
    write_sections(out / FILES["sections"], scn.sections)
    write_labels(out / FILES["target_labels"], scn.target_labels)
    meta = {
        "seed": scn.seed,
        "script": scn.script,
        "transitions": [{"ref_time_s": t, "section_id": s} for t, s in scn.transitions],
        "gaps": [{"type": g.kind, "start_s": g.start_s, "end_s": g.end_s} for g in scn.gaps],
        "voice_truth": {str(k): v for k, v in scn.voice_truth.items()},
    }
    (out / FILES["meta"]).write_text(json.dumps(meta, indent=2))
    return out


def read_scenario(path) -> Scenario:
    d = Path(path)
    meta = json.loads((d / FILES["meta"]).read_text())
    return Scenario(open_audio(d / FILES["reference"]), open_audio(d / FILES["target"]),
                    read_bars(d / FILES["reference_bars"]), read_bars(d / FILES["target_bars"]),
                    read_sections(d / FILES["sections"]), read_labels(d / FILES["target_labels"]),
                    [Gap(g["type"], g["start_s"], g["end_s"]) for g in meta["gaps"]],
                    {int(k): v for k, v in meta["voice_truth"].items()}, meta["script"], meta["seed"])


# -- the four failure structures ----------------------------------------------------

JUMP_GAPS = {
    1: [("applause", 15.0), ("silence", 54.0)],
    2: [("applause", 14.0), ("silence", 17.0)],
    3: [("applause", 12.0), ("silence", 51.0), ("interlude", 17.0)],
    4: [("applause", 26.0), ("silence", 24.0), ("interlude", 18.0)],
}


def jump_script(n: int, aria_bars: int = 12, recit_bars: int = 16, bar_s: float = 2.5,
                aria_tempo: float = 1.08, recit_tempo: float = 0.94) -> dict:
    """Aria, inserted non-musical gap, then a recitative (the structure of jump ``n``)."""
    gaps = [{"type": k, "duration": d} for k, d in JUMP_GAPS[n]]
    for g in gaps:
        if g["type"] == "silence":
            g["cough_density"] = 0.3
    return {
        "sections": [
            {"name": "aria", "kind": "music", "bars": aria_bars, "bar_s": bar_s, "key": 62},
            {"name": "recit", "kind": "recitative", "bars": recit_bars, "bar_s": bar_s, "key": 57},
        ],
        "reference": [{"type": "section", "name": "aria", "tempo_scale": 1.0},
                      {"type": "section", "name": "recit", "tempo_scale": 1.0}],
        "target": [{"type": "section", "name": "aria", "tempo_scale": aria_tempo}, *gaps,
                   {"type": "section", "name": "recit", "tempo_scale": recit_tempo}],
    }
