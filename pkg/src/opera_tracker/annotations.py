"""CSV formats for bar annotations, sections, event labels and alignment traces.

Times are written with ``repr`` so that a write/read round trip is exact.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import AnnotationError

BAR_HEADER = ("bar_index", "time_s")
SECTION_HEADER = ("section_id", "start_bar", "ref_start_s", "voice_start")
LABEL_HEADER = ("start_s", "end_s", "label")
LABELS = ("applause", "music", "speech", "none")


@dataclass(frozen=True)
class BarAnnotation:
    bar_index: int
    time_s: float


@dataclass(frozen=True)
class Section:
    section_id: int
    start_bar: int
    ref_start_s: float
    voice_start: bool = False


@dataclass(frozen=True)
class LabelSpan:
    start_s: float
    end_s: float
    label: str


def iter_rows(path, header):
    path = Path(path)
    if not path.exists():
        raise AnnotationError("file not found", path)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            first = next(reader)
        except StopIteration:
            raise AnnotationError("empty file (missing header)", path, 1) from None
        cols = [c.strip() for c in first]
        missing = [h for h in header if h not in cols]
        if missing:
            raise AnnotationError(f"missing column(s) {', '.join(missing)}", path, 1)
        pos = [cols.index(h) for h in header]
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) < len(cols):
                raise AnnotationError(f"expected {len(cols)} fields, got {len(row)}", path, lineno)
            yield lineno, [row[p].strip() for p in pos]


def parse_number(text, cast, path, lineno, name):
    try:
        value = cast(text)
    except ValueError:
        raise AnnotationError(f"bad {name} value {text!r}", path, lineno) from None
    if cast is float and not np.isfinite(value):
        raise AnnotationError(f"non-finite {name}", path, lineno)
    return value


def read_bars(path) -> list[BarAnnotation]:
    bars = []
    for lineno, (idx, t) in iter_rows(path, BAR_HEADER):
        bar = BarAnnotation(parse_number(idx, int, path, lineno, "bar_index"),
                            parse_number(t, float, path, lineno, "time_s"))
        if bars and (bar.time_s <= bars[-1].time_s or bar.bar_index <= bars[-1].bar_index):
            raise AnnotationError("bar times must increase strictly with bar_index", path, lineno)
        bars.append(bar)
    return bars


def write_bars(path, bars) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(BAR_HEADER)
        for b in bars:
            w.writerow([int(b.bar_index), repr(float(b.time_s))])


def read_sections(path) -> list[Section]:
    out = []
    for lineno, (sid, bar, t, voice) in iter_rows(path, SECTION_HEADER):
        if voice not in ("0", "1"):
            raise AnnotationError(f"voice_start must be 0 or 1, got {voice!r}", path, lineno)
        sec = Section(parse_number(sid, int, path, lineno, "section_id"),
                      parse_number(bar, int, path, lineno, "start_bar"),
                      parse_number(t, float, path, lineno, "ref_start_s"), voice == "1")
        if out and sec.ref_start_s <= out[-1].ref_start_s:
            raise AnnotationError("sections must be in increasing time order", path, lineno)
        out.append(sec)
    return out


def write_sections(path, sections) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SECTION_HEADER)
        for s in sections:
            w.writerow([s.section_id, s.start_bar, repr(float(s.ref_start_s)), int(bool(s.voice_start))])


def read_labels(path) -> list[LabelSpan]:
    out = []
    for lineno, (a, b, label) in iter_rows(path, LABEL_HEADER):
        if label not in LABELS:
            raise AnnotationError(f"unknown label {label!r}", path, lineno)
        span = LabelSpan(parse_number(a, float, path, lineno, "start_s"),
                         parse_number(b, float, path, lineno, "end_s"), label)
        if span.end_s < span.start_s:
            raise AnnotationError("end_s before start_s", path, lineno)
        out.append(span)
    return out


def write_labels(path, spans) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(LABEL_HEADER)
        for s in spans:
            w.writerow([repr(float(s.start_s)), repr(float(s.end_s)), s.label])
