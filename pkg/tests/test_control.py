import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings, strategies as st

from helpers import smooth_features
from opera_tracker.annotations import Section
from opera_tracker.audio_io import SAMPLE_RATE, AudioStream
from opera_tracker.control import (
    DETECTOR_LAG, GateConfig, IntegratedTracker, Mode, Variant, annotate_reference_voice,
    detector_slot, read_trace, run_variant, write_trace,
)
from opera_tracker.detectors.lstm import init_model
from opera_tracker.errors import AnnotationError
from opera_tracker.evaluation.synth import (
    audience_silence, music_score, recitative_score, render_section,
)
from opera_tracker.features.extractors import KINDS
from opera_tracker.oltw import track
from opera_tracker.pipeline import Producer, frame_events, run_stream
from opera_tracker.reference import ReferenceIndex

N_REF = 3000          # 30 s of reference frames
TRANSITION = 10.0
RADIUS = 300
A, M, S = 0, 1, 2     # probability columns


def _reference(voice=False, n=N_REF, transitions=(TRANSITION,), seed=0):
    feats = smooth_features(np.random.default_rng(seed), n)
    sections = [Section(0, 1, 0.0, False)]
    for i, t in enumerate(transitions, start=1):
        sections.append(Section(i, 1 + 10 * i, float(t), voice if isinstance(voice, bool) else voice[i - 1]))
    return ReferenceIndex(feats, np.arange(0, n / 100.0, 1.0), sections)


def _probs(n_det=1500, music=1.0, speech=0.0, applause=0.0):
    p = np.zeros((n_det, 3))
    p[:, A], p[:, M], p[:, S] = applause, music, speech
    return p


def _run(ref, probs, config=None, feats=None):
    """Identity target: the target replays the reference features."""
    cfg = config or GateConfig(window_radius=RADIUS)
    tracker = IntegratedTracker(ref, cfg)
    feats = ref.features if feats is None else feats
    out = []
    for k in range(len(feats)):
        m = detector_slot(k)
        p = probs[m] if m is not None and m < len(probs) else None
        out.append(tracker.integrated_step(feats[k], probs=p, time=k / 100.0))
    return out, tracker


def _alignment_frame(det_frame):
    return 2 * det_frame + DETECTOR_LAG


def _modes(rows):
    return [r.mode for r in rows]


def _check_clamps(rows, clamp_times):
    for r in rows:
        if r.mode is not Mode.TRACKING:
            assert r.ref_time in clamp_times


# -- inactive gates ---------------------------------------------------------------------

def test_inactive_gates_match_bare_oltw():
    ref = _reference()
    rows, tracker = _run(ref, _probs())
    assert set(_modes(rows)) == {Mode.TRACKING}
    bare = track(ref, ref.features, 0, RADIUS)
    np.testing.assert_array_equal([r.ref_time for r in rows], bare / 100.0)
    assert tracker.engagements == []


def test_detector_slot_schedule():
    assert [detector_slot(k) for k in range(7, 13)] == [None, 0, None, 1, None, 2]


# -- applause gate ------------------------------------------------------------------------

def _applause_burst(start, frames, n_det=1500):
    p = _probs(n_det)
    p[start:start + frames, A] = 1.0
    return p


def test_applause_near_transition_clamps():
    # debounced ON at detector frame 456 -> alignment frame 920, estimate 9.2 s
    ref = _reference()
    rows, tracker = _run(ref, _applause_burst(437, 25))
    assert Mode.HALT_APPLAUSE in _modes(rows)
    _check_clamps(rows, {TRANSITION})
    t, mode, est, clamp = tracker.engagements[0]
    assert mode is Mode.HALT_APPLAUSE and clamp == TRANSITION
    assert abs(est - TRANSITION) <= 1.0
    first = _modes(rows).index(Mode.HALT_APPLAUSE)
    assert first == _alignment_frame(437 + 19)
    # released after 10 quiet frames, then tracking resumes from the transition
    assert _modes(rows)[-1] is Mode.TRACKING
    assert all(r.ref_time >= TRANSITION for r in rows[first:])


def test_short_applause_does_not_clamp():
    rows, tracker = _run(_reference(), _applause_burst(437, 15))     # 300 ms
    assert set(_modes(rows)) == {Mode.TRACKING} and not tracker.engagements


def test_applause_away_from_transition_does_not_clamp():
    rows, tracker = _run(_reference(), _applause_burst(402, 25))     # estimate ~8.5 s
    assert set(_modes(rows)) == {Mode.TRACKING}


def test_applause_gate_releases_when_applause_stops():
    rows, _ = _run(_reference(), _applause_burst(437, 100))
    modes = _modes(rows)
    last_halt = max(i for i, m in enumerate(modes) if m is Mode.HALT_APPLAUSE)
    assert last_halt == _alignment_frame(437 + 100 + 9) - 1


# -- pause gate -------------------------------------------------------------------------------

def test_pause_near_transition_clamps_until_music_returns():
    p = _probs()
    p[443:700, M] = 0.0
    rows, tracker = _run(_reference(), p)
    modes = _modes(rows)
    assert Mode.HALT_PAUSE in modes
    _check_clamps(rows, {TRANSITION})
    first = modes.index(Mode.HALT_PAUSE)
    assert first == _alignment_frame(443 + 9 + 19)
    last = max(i for i, m in enumerate(modes) if m is Mode.HALT_PAUSE)
    assert last == _alignment_frame(700 + 19) - 1


def test_brief_dip_does_not_clamp():
    p = _probs()
    p[460:467, M] = 0.0            # 140 ms: shorter than the release hysteresis
    rows, _ = _run(_reference(), p)
    assert set(_modes(rows)) == {Mode.TRACKING}


def test_silence_mid_aria_does_not_clamp():
    p = _probs()
    p[100:300, M] = 0.0            # long quiet, but 7 s away from the transition
    rows, _ = _run(_reference(), p)
    assert Mode.HALT_PAUSE not in _modes(rows[:700])


def test_speech_during_break_is_not_a_pause():
    p = _probs()
    p[443:700, M] = 0.0
    p[430:700, S] = 1.0
    rows, _ = _run(_reference(), p)
    assert Mode.HALT_PAUSE not in _modes(rows)


def test_applause_takes_precedence_over_pause():
    p = _probs()
    p[380:700, M] = 0.0
    p[440:600, A] = 1.0
    rows, _ = _run(_reference(), p)
    modes = _modes(rows)
    k = _alignment_frame(500)
    assert modes[k] is Mode.HALT_APPLAUSE
    # when the applause stops the pause gate keeps the clamp without a gap
    after = modes[_alignment_frame(600 + 10)]
    assert after is Mode.HALT_PAUSE


# -- interlude gate -----------------------------------------------------------------------------

def test_interlude_gate_waits_for_voice():
    p = _probs()
    p[600:, S] = 1.0
    rows, tracker = _run(_reference(voice=True), p)
    modes = _modes(rows)
    assert modes.index(Mode.AWAIT_VOICE) == 1001      # estimate reaches 10.0 s at frame 1000
    last = max(i for i, m in enumerate(modes) if m is Mode.AWAIT_VOICE)
    assert last == _alignment_frame(600 + 19) - 1
    _check_clamps(rows, {TRANSITION})


def test_interlude_passes_when_speech_already_active():
    p = _probs(speech=1.0)
    rows, _ = _run(_reference(voice=True), p)
    assert Mode.AWAIT_VOICE not in _modes(rows)


def test_interlude_gate_ignores_unflagged_sections():
    rows, _ = _run(_reference(voice=False), _probs())
    assert Mode.AWAIT_VOICE not in _modes(rows)


def test_interlude_timeout_releases():
    cfg = GateConfig(window_radius=RADIUS, voice_timeout_s=2.0)
    rows, _ = _run(_reference(voice=True), _probs(), cfg)
    modes = _modes(rows)
    held = [i for i, m in enumerate(modes) if m is Mode.AWAIT_VOICE]
    assert held[0] == 1001 and len(held) == 200
    assert modes[-1] is Mode.TRACKING


# -- properties over random event streams ----------------------------------------------------

_segment = st.tuples(st.integers(1, 60), st.sampled_from([0.0, 1.0]), st.sampled_from([0.0, 1.0]),
                     st.sampled_from([0.0, 1.0]))


@settings(max_examples=25, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(segments=st.lists(_segment, min_size=1, max_size=30),
       transitions=st.lists(st.integers(150, 1350), min_size=1, max_size=3, unique=True),
       voice=st.lists(st.booleans(), min_size=3, max_size=3))
def test_gate_invariants_on_random_streams(segments, transitions, voice):
    n = 1500
    transitions = sorted(t / 100.0 for t in transitions)
    ref = _reference(voice=voice[:len(transitions)], n=n, transitions=transitions, seed=len(segments))
    n_det = (n - DETECTOR_LAG) // 2 + 1
    p = np.zeros((n_det, 3))
    m = 0
    for length, a, mu, s in segments:
        p[m:m + length] = (a, mu, s)
        m += length
        if m >= n_det - 150:
            break
    p[n_det - 150:] = (0.0, 1.0, 1.0)          # release signals for every gate
    cfg = GateConfig(window_radius=150)
    rows, tracker = _run(ref, p, cfg)
    clamps = set(transitions)
    _check_clamps(rows, clamps)
    for _, _, est, clamp in tracker.engagements:
        assert abs(est - clamp) <= cfg.transition_tol_s + 1e-9
    ref_t = np.array([r.ref_time for r in rows])
    assert np.all(np.diff(ref_t) >= -cfg.transition_tol_s - 1e-9)
    assert rows[-1].mode is Mode.TRACKING


# -- variants -------------------------------------------------------------------------------------

def test_variant_gate_flags():
    assert [Variant(v).gates for v in ("BASE", "A", "AS", "ASI")] == [
        (False, False, False), (True, False, False), (True, True, False), (True, True, True)]


def test_variants_identical_on_gate_silent_input():
    ref = _reference()
    traces = [run_variant(v, ref.features, ref, _probs(), GateConfig(window_radius=RADIUS))
              for v in ("BASE", "A", "AS", "ASI")]
    for t in traces[1:]:
        assert t.identical(traces[0])


def test_base_equals_a_without_applause():
    ref = _reference()
    p = _probs()
    p[443:700, M] = 0.0                       # a pause, but no applause
    cfg = GateConfig(window_radius=RADIUS)
    base, a, as_ = (run_variant(v, ref.features, ref, p, cfg) for v in ("BASE", "A", "AS"))
    assert a.identical(base)
    assert not as_.identical(base)


def test_asi_equals_as_without_voice_sections():
    ref = _reference(voice=False)
    p = _applause_burst(437, 25)
    cfg = GateConfig(window_radius=RADIUS)
    as_, asi = (run_variant(v, ref.features, ref, p, cfg) for v in ("AS", "ASI"))
    assert asi.identical(as_)
    assert Mode.HALT_APPLAUSE in as_.modes


# -- trace files ---------------------------------------------------------------------------------

def test_trace_csv_round_trip(tmp_path):
    ref = _reference()
    tr = run_variant("ASI", ref.features[:400], ref, _probs(), GateConfig(window_radius=RADIUS))
    write_trace(tr, tmp_path / "t.csv")
    back = read_trace(tmp_path / "t.csv")
    assert back.identical(tr)
    np.testing.assert_array_equal(np.nan_to_num(back.probs, nan=-1), np.nan_to_num(tr.probs, nan=-1))
    assert (tmp_path / "t.csv").read_text().splitlines()[0] == \
        "target_time_s,ref_time_s,mode,applause_p,music_p,speech_p"
    write_trace(tr, tmp_path / "d.csv", decimation=10)
    assert len(read_trace(tmp_path / "d.csv")) == 40


def test_trace_with_unknown_mode_rejected(tmp_path):
    (tmp_path / "t.csv").write_text(
        "target_time_s,ref_time_s,mode,applause_p,music_p,speech_p\n0.0,0.0,DANCING,0,0,0\n")
    with pytest.raises(AnnotationError) as exc:
        read_trace(tmp_path / "t.csv")
    assert exc.value.line == 2


# -- streaming pipeline -------------------------------------------------------------------------

def test_frame_events_pair_detector_frames_in_order():
    x = np.random.default_rng(0).standard_normal(SAMPLE_RATE) * 0.1
    events = list(frame_events(AudioStream(x, SAMPLE_RATE)))
    assert len(events) == 100
    with_det = [k for k, (_, d) in enumerate(events) if d is not None]
    assert with_det == list(range(8, 100, 2))
    for k in with_det:
        align, det = events[k]
        # both frames end at the same sample
        assert align.time + 0.02 == pytest.approx(det.time + 0.1)


def test_producer_propagates_errors():
    def boom():
        yield 1
        raise RuntimeError("decoder failed")

    got = []
    with pytest.raises(RuntimeError, match="decoder failed"):
        for item in Producer(boom(), maxsize=1):
            got.append(item)
    assert got == [1]


def test_realtime_and_batch_traces_identical():
    rng = np.random.default_rng(3)
    notes = music_score(rng, 1, 1.5, 60)
    x = render_section("music", notes, 1.5, 1.0, SAMPLE_RATE, 1)
    stream = AudioStream(x, SAMPLE_RATE)
    from opera_tracker.features.extractors import alignment_matrix
    ref = ReferenceIndex(alignment_matrix(stream), [0.0, 0.75], [Section(0, 1, 0.0, False)])
    models = {k: init_model(k, seed=i) for i, k in enumerate(KINDS)}
    results = [run_stream(IntegratedTracker(ref, GateConfig(), models), stream, realtime=rt)
               for rt in (False, True)]
    assert results[0].trace.identical(results[1].trace)
    np.testing.assert_array_equal(results[0].trace.probs, results[1].trace.probs)
    assert len(results[1].latencies_ms) == len(results[1].trace)


# -- reference voice annotation ------------------------------------------------------------------

def test_annotate_reference_voice(trained_detectors):
    rng = np.random.default_rng(11)
    sr = SAMPLE_RATE
    music = render_section("music", music_score(rng, 3, 2.0, 62), 6.0, 1.0, sr, 1)
    recit = render_section("recitative", recitative_score(rng, 3, 2.0, 57), 6.0, 1.0, sr, 2)
    tail = audience_silence(rng, 2.0, 0.0, sr)[: int(1.5 * sr)]
    music2 = render_section("music", music_score(rng, 1, 2.0, 60), 2.0, 1.0, sr, 3)
    x = np.concatenate([music, recit, tail, music2])
    sections = [Section(0, 1, 0.0, True), Section(1, 4, 6.0, False),
                Section(2, 7, 12.0, True), Section(3, 8, 13.5, True)]
    flags = annotate_reference_voice(AudioStream(x, sr), trained_detectors.models["speech"], sections)
    assert [s.voice_start for s in flags] == [False, True, False, False]
    assert [s.section_id for s in flags] == [0, 1, 2, 3]
