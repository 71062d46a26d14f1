from .corpus import Clip, generate_corpus, load_corpus, split, synth_clips
from .metrics import (
    BarErrors, EvaluationReport, align_errors, error_curve_csv, read_error_curve, read_report,
    summarize, write_report,
)
from .scenario import Gap, Scenario, generate_scenario, jump_script, parse_script, read_scenario, write_scenario

__all__ = [
    "BarErrors", "Clip", "EvaluationReport", "Gap", "Scenario", "align_errors", "error_curve_csv",
    "generate_corpus", "generate_scenario", "jump_script", "load_corpus", "parse_script",
    "read_error_curve", "read_report", "read_scenario", "split", "summarize", "synth_clips",
    "write_report", "write_scenario",
]
