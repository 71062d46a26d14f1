"""Bar-level alignment errors and their summary statistics.

Sign convention: the error of bar b is ``t_b - t_hat_b``, the annotated
target time minus the target time at which the tracker first reached the
bar's reference position.  A positive error means the tracker got there
early (it is ahead in the score), a negative one that it lags.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ..annotations import BarAnnotation, iter_rows, parse_number
from ..errors import AnnotationError, EmptyTrace

CROSS_TOL = 1e-9
THRESHOLDS = (1.0, 2.0, 5.0)
ERROR_CURVE_HEADER = ("bar_index", "error_s")


@dataclass
class BarErrors:
    bar_index: np.ndarray
    errors: np.ndarray
    detected: np.ndarray      # target time at which the bar was reached (end of trace if never)
    reached: np.ndarray

    def __len__(self):
        return len(self.errors)


@dataclass
class EvaluationReport:
    mean_s: float
    std_s: float
    frac_le_1s: float
    frac_le_2s: float
    frac_le_5s: float
    err_max_s: float
    per_bar_errors: list = field(default_factory=list)
    n_bars: int = 0
    n_unreached: int = 0
    mean_abs_s: float = 0.0

    def row(self) -> tuple:
        """Table-style row: mean, std, <=1 s, <=2 s, <=5 s, err_max."""
        return (self.mean_s, self.std_s, self.frac_le_1s, self.frac_le_2s, self.frac_le_5s,
                self.err_max_s)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "EvaluationReport":
        known = {k: d[k] for k in cls.__dataclass_fields__ if k in d}
        return cls(**known)


def _trace_arrays(trace):
    if hasattr(trace, "target_times") and hasattr(trace, "ref_times"):
        tt, rt = trace.target_times, trace.ref_times
    elif isinstance(trace, np.ndarray) and trace.ndim == 2:
        tt, rt = trace[:, 0], trace[:, 1]
    else:
        rows = list(trace)
        if rows and hasattr(rows[0], "ref_time"):
            tt = [r.target_time for r in rows]
            rt = [r.ref_time for r in rows]
        else:
            tt = [r[0] for r in rows]
            rt = [r[1] for r in rows]
    return np.asarray(tt, dtype=np.float64), np.asarray(rt, dtype=np.float64)


def _bar_map(bars):
    if isinstance(bars, dict):
        return dict(bars)
    return {int(b.bar_index): float(b.time_s) for b in bars}


def align_errors(trace, target_bars, ref_bars) -> BarErrors:
    """Per-bar errors of a trace of (target_time, ref_time) pairs.

    Bars present in both annotation lists are evaluated.  A bar the trace
    never reaches is scored against the last trace time and flagged.
    """
    tt, rt = _trace_arrays(trace)
    if len(tt) == 0:
        raise EmptyTrace("trace has no rows")
    tgt, ref = _bar_map(target_bars), _bar_map(ref_bars)
    common = sorted(set(tgt) & set(ref))
    idx = np.array(common, dtype=np.int64)
    r = np.array([ref[k] for k in common])
    t = np.array([tgt[k] for k in common])
    # first crossing: the trace is monotone in ref_time, so a running max makes it searchable
    running = np.maximum.accumulate(rt)
    pos = np.searchsorted(running, r - CROSS_TOL, side="left")
    reached = pos < len(tt)
    detected = np.where(reached, tt[np.minimum(pos, len(tt) - 1)], tt[-1])
    return BarErrors(idx, t - detected, detected, reached)


def summarize(errors) -> EvaluationReport:
    if isinstance(errors, BarErrors):
        e = np.asarray(errors.errors, dtype=np.float64)
        per_bar = [{"bar_index": int(b), "error_s": float(x), "reached": bool(ok)}
                   for b, x, ok in zip(errors.bar_index, errors.errors, errors.reached)]
        unreached = int(np.sum(~errors.reached))
    else:
        e = np.asarray(errors, dtype=np.float64)
        per_bar = [{"bar_index": i, "error_s": float(x), "reached": True} for i, x in enumerate(e)]
        unreached = 0
    if len(e) == 0:
        return EvaluationReport(0.0, 0.0, 1.0, 1.0, 1.0, 0.0, [], 0, 0, 0.0)
    a = np.abs(e)
    fr = [float(np.mean(a <= th)) for th in THRESHOLDS]
    return EvaluationReport(float(e.mean()), float(e.std()), fr[0], fr[1], fr[2], float(a.max()),
                            per_bar, len(e), unreached, float(a.mean()))


def write_report(report: EvaluationReport, path) -> None:
    Path(path).write_text(json.dumps(report.to_dict(), indent=2))


def read_report(path) -> EvaluationReport:
    return EvaluationReport.from_dict(json.loads(Path(path).read_text()))


def error_curve_csv(errors, path) -> None:
    if isinstance(errors, BarErrors):
        rows = zip(errors.bar_index, errors.errors)
    else:
        rows = enumerate(np.asarray(errors, dtype=np.float64), start=1)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(ERROR_CURVE_HEADER)
        for b, e in rows:
            w.writerow([int(b), repr(float(e))])


def read_error_curve(path) -> tuple[np.ndarray, np.ndarray]:
    idx, err = [], []
    for lineno, (b, e) in iter_rows(path, ERROR_CURVE_HEADER):
        idx.append(parse_number(b, int, path, lineno, "bar_index"))
        err.append(parse_number(e, float, path, lineno, "error_s"))
    return np.array(idx, dtype=np.int64), np.array(err, dtype=np.float64)


def bars_from_times(times, first_index: int = 1) -> list[BarAnnotation]:
    return [BarAnnotation(first_index + k, float(t)) for k, t in enumerate(times)]


def check_annotations(bars) -> None:
    prev = None
    for b in bars:
        if prev is not None and (b.time_s <= prev.time_s or b.bar_index <= prev.bar_index):
            raise AnnotationError(f"bar {b.bar_index}: times must increase strictly")
        prev = b
