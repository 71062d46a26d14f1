"""Command-line front end.

    opera-tracker prepare-reference --audio ref.wav --bars bars.csv --sections sections.csv \\
        --speech-model speech.otm --out ref_bundle/
    opera-tracker train-detector --kind applause --data corpus/ --out applause.otm
    opera-tracker track --reference ref_bundle/ --target live.wav --out trace.csv --models-dir models/
    opera-tracker evaluate --trace trace.csv --target-bars t.csv --ref-bars r.csv --out report.json
    opera-tracker synth --script jump4.json --seed 4 --out scenario/

Exit codes: 0 success, 1 usage error, 2 data error, 3 runtime failure.
Log verbosity comes from OPERA_TRACKER_LOG (DEBUG, INFO, WARNING, ...).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path

from .annotations import read_bars, read_sections
from .audio_io import ALIGN_HOP_MS, open_audio
from .control import GateConfig, IntegratedTracker, Variant, annotate_reference_voice, read_trace, write_trace
from .detectors.debounce import MIN_ACTIVE_MS, RELEASE_MS, THRESHOLD
from .detectors.modelio import load_model, save_model
from .detectors.training import TrainConfig, frame_accuracy, train
from .errors import AnnotationError, InvalidConfig, TrackerError
from .evaluation.corpus import generate_corpus, load_corpus, sequences, split
from .evaluation.metrics import align_errors, error_curve_csv, summarize, write_report
from .evaluation.scenario import generate_scenario, jump_script, write_scenario
from .features.extractors import KINDS, alignment_matrix
from .pipeline import run_stream
from .reference import ReferenceIndex, load_reference, save_reference

log = logging.getLogger("opera_tracker")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_RUNTIME = 0, 1, 2, 3
LOG_ENV = "OPERA_TRACKER_LOG"
DURATION_SLACK_S = 2.0
MODEL_SUFFIX = ".otm"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


@dataclass
class RunConfig:
    window_s: float = 40.0
    applause: bool = True
    pause: bool = True
    interlude: bool = True
    transition_tol_s: float = 1.0
    voice_timeout_s: float = 120.0
    threshold: float = THRESHOLD
    min_active_ms: float = MIN_ACTIVE_MS
    release_ms: float = RELEASE_MS
    models: dict = field(default_factory=dict)     # kind -> model path
    realtime: bool = False
    decimation: int = 1

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            raw = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise InvalidConfig(f"cannot read config {path}: {exc}") from exc
        if not isinstance(raw, dict):
            raise InvalidConfig("config must be a JSON object")
        gates = raw.pop("gates", {})
        raw.update({k: bool(v) for k, v in gates.items() if k in ("applause", "pause", "interlude")})
        unknown = set(raw) - {f.name for f in fields(cls)}
        if unknown:
            raise InvalidConfig(f"unknown config keys: {', '.join(sorted(unknown))}")
        return cls(**raw)

    def gate_config(self) -> GateConfig:
        if self.window_s <= 0:
            raise InvalidConfig("window_s must be positive")
        radius = int(round(self.window_s / 2 * 1000.0 / ALIGN_HOP_MS))
        return GateConfig(self.applause, self.pause, self.interlude, self.transition_tol_s,
                          self.voice_timeout_s, self.threshold, self.min_active_ms, self.release_ms, radius)


# -- commands ---------------------------------------------------------------------

def cmd_prepare_reference(args) -> int:
    stream = open_audio(args.audio)
    bars = read_bars(args.bars)
    if not bars:
        raise AnnotationError("no bars", args.bars)
    if bars[-1].time_s > stream.duration + DURATION_SLACK_S:
        raise AnnotationError(f"last bar at {bars[-1].time_s:.2f} s but audio lasts {stream.duration:.2f} s",
                              args.bars)
    sections = read_sections(args.sections) if args.sections else []
    if args.speech_model and sections:
        sections = annotate_reference_voice(stream, load_model(args.speech_model, "speech"), sections)
    elif sections:
        log.warning("no speech model given; voice_start flags kept from %s", args.sections)
    feats = alignment_matrix(stream)
    ref = ReferenceIndex(feats, [b.time_s for b in bars], sections,
                         bar_indices=[b.bar_index for b in bars])
    save_reference(ref, args.out)
    flags = ", ".join(f"{s.section_id}:{int(s.voice_start)}" for s in sections) or "none"
    print(f"reference bundle {args.out}: {len(ref)} frames, {len(bars)} bars, voice flags {flags}")
    return EXIT_OK


def cmd_train(args) -> int:
    clips = load_corpus(args.data)
    tr, held = split(clips)
    if not held:
        held = tr
    cfg = TrainConfig(lr=args.lr, epochs=args.epochs, seed=args.seed, target_loss=args.target_loss)
    model = train(args.kind, sequences(tr, args.kind), cfg)
    save_model(model, args.out)
    acc = frame_accuracy(model, sequences(held, args.kind))
    print(f"{args.kind}: {len(model.history)} epochs, final loss {model.history[-1]:.5f}, "
          f"held-out accuracy {acc:.4f}")
    return EXIT_OK


def _load_models(cfg: RunConfig, models_dir) -> dict:
    paths = dict(cfg.models)
    if models_dir:
        for k in KINDS:
            p = Path(models_dir) / f"{k}{MODEL_SUFFIX}"
            if p.exists():
                paths.setdefault(k, str(p))
    need = {"applause": cfg.applause, "music": cfg.pause, "speech": cfg.pause or cfg.interlude}
    missing = [k for k, on in need.items() if on and k not in paths]
    if missing:
        raise UsageError(f"enabled gates need detector model(s): {', '.join(missing)} "
                         "(pass --models-dir / --model, or disable the gates)")
    return {k: load_model(p, k) for k, p in paths.items() if need.get(k)}


def _run_config(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    if args.variant:
        cfg.applause, cfg.pause, cfg.interlude = Variant(args.variant).gates
    for gate in ("applause", "pause", "interlude"):
        flag = getattr(args, gate)
        if flag is not None:
            setattr(cfg, gate, flag)
    for name in ("window_s", "decimation", "transition_tol_s", "voice_timeout_s"):
        if getattr(args, name) is not None:
            setattr(cfg, name, getattr(args, name))
    if args.realtime:
        cfg.realtime = True
    for spec in args.model or []:
        kind, _, path = spec.partition("=")
        if kind not in KINDS or not path:
            raise UsageError(f"--model expects KIND=PATH with KIND in {KINDS}, got {spec!r}")
        cfg.models[kind] = path
    return cfg


def cmd_track(args) -> int:
    cfg = _run_config(args)
    ref = load_reference(args.reference)
    models = _load_models(cfg, args.models_dir)
    target = open_audio(args.target)
    tracker = IntegratedTracker(ref, cfg.gate_config(), models)
    result = run_stream(tracker, target, realtime=cfg.realtime)
    write_trace(result.trace, args.out, cfg.decimation)
    msg = f"trace {args.out}: {len(result.trace)} frames, {len(tracker.engagements)} gate engagements"
    if cfg.realtime:
        pct = result.latency_percentiles()
        msg += f"; step latency ms p50 {pct[50]:.2f} p90 {pct[90]:.2f} p99 {pct[99]:.2f}"
    print(msg)
    return EXIT_OK


def cmd_evaluate(args) -> int:
    trace = read_trace(args.trace)
    errors = align_errors(trace, read_bars(args.target_bars), read_bars(args.ref_bars))
    report = summarize(errors)
    write_report(report, args.out)
    if args.curve:
        error_curve_csv(errors, args.curve)
    print("mean {:.2f} s  std {:.2f} s  <=1s {:.2f}  <=2s {:.2f}  <=5s {:.2f}  err_max {:.2f} s".format(
        *report.row()))
    return EXIT_OK


def cmd_synth(args) -> int:
    if args.corpus is not None:
        generate_corpus(args.out, args.corpus, args.seed)
        print(f"corpus {args.out}: {args.corpus} clips per class")
        return EXIT_OK
    if args.jump is not None:
        if args.jump not in (1, 2, 3, 4):
            raise UsageError("--jump must be 1, 2, 3 or 4")
        script = jump_script(args.jump)
    elif args.script:
        script = args.script
    else:
        raise UsageError("synth needs --script, --jump or --corpus")
    scn = generate_scenario(script, args.seed)
    write_scenario(scn, args.out)
    print(f"scenario {args.out}: reference {scn.reference.duration:.1f} s, "
          f"target {scn.target.duration:.1f} s, gaps {scn.gap_duration:.1f} s")
    return EXIT_OK


# -- parser -------------------------------------------------------------------------

def _gate_flag(p, name):
    p.add_argument(f"--{name}", dest=name, action="store_true", default=None, help=f"enable the {name} gate")
    p.add_argument(f"--no-{name}", dest=name, action="store_false", help=f"disable the {name} gate")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="opera-tracker", description="Real-time opera score following.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("prepare-reference", help="precompute a reference bundle")
    p.add_argument("--audio", required=True)
    p.add_argument("--bars", required=True)
    p.add_argument("--sections")
    p.add_argument("--speech-model")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_prepare_reference)

    p = sub.add_parser("train-detector", help="train one detector from a WAV+CSV corpus")
    p.add_argument("--kind", required=True, choices=KINDS)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--lr", type=float, default=0.01)
    p.add_argument("--target-loss", type=float, default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("track", help="track a target recording against a reference bundle")
    p.add_argument("--reference", required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.add_argument("--variant", choices=("BASE", "A", "AS", "ASI"))
    for gate in ("applause", "pause", "interlude"):
        _gate_flag(p, gate)
    p.add_argument("--models-dir")
    p.add_argument("--model", action="append", metavar="KIND=PATH")
    p.add_argument("--window-s", type=float)
    p.add_argument("--transition-tol-s", type=float)
    p.add_argument("--voice-timeout-s", type=float)
    p.add_argument("--decimation", type=int)
    p.add_argument("--realtime", action="store_true")
    p.set_defaults(func=cmd_track)

    p = sub.add_parser("evaluate", help="bar-level errors of a trace")
    p.add_argument("--trace", required=True)
    p.add_argument("--target-bars", required=True)
    p.add_argument("--ref-bars", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--curve")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("synth", help="generate a scenario or a detector corpus")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--script")
    g.add_argument("--jump", type=int)
    g.add_argument("--corpus", type=int, metavar="CLIPS_PER_CLASS")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)
    return parser


def setup_logging():
    name = os.environ.get(LOG_ENV, "WARNING").upper()
    level = getattr(logging, name, None)
    if not isinstance(level, int):
        level = logging.WARNING
    log.setLevel(level)
    if not log.handlers:
        handler = logging.StreamHandler()
        handler.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
        log.addHandler(handler)


def main(argv=None) -> int:
    setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"opera-tracker: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (TrackerError, OSError, json.JSONDecodeError) as exc:
        print(f"opera-tracker: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:      # anything else is a bug or an environment failure
        log.debug("runtime failure", exc_info=True)
        print(f"opera-tracker: runtime failure: {exc!r}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
