import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from opera_tracker.annotations import (
    BarAnnotation, LabelSpan, Section, read_bars, read_labels, read_sections, write_bars,
    write_labels, write_sections,
)
from opera_tracker.errors import AnnotationError, EmptyTrace, InvalidScript
from opera_tracker.evaluation.corpus import (
    CLASSES, frame_labels, generate_corpus, load_corpus, sequences, split, synth_clips,
)
from opera_tracker.evaluation.metrics import (
    align_errors, bars_from_times, error_curve_csv, read_error_curve,
    read_report, summarize, write_report,
)
from opera_tracker.evaluation.scenario import (
    generate_scenario, jump_script, parse_script, read_scenario, write_scenario,
)
from opera_tracker.evaluation.synth import music_score


def _bars(times):
    return bars_from_times(times)


# -- align_errors / summarize --------------------------------------------------------

def test_perfect_trace_has_zero_errors():
    t = np.arange(0, 2001) / 100.0
    trace = np.column_stack([t, t * 1.25])          # target plays 25 % faster than reference
    tb = [2.0 * b for b in range(10)]
    rb = [2.5 * b for b in range(10)]
    e = align_errors(trace, _bars(tb), _bars(rb))
    assert np.all(e.errors == 0.0)
    assert e.reached.all()


def test_trace_ahead_gives_positive_errors():
    # ref = 1.25 t + 2: the reference position of bar b is reached 1.6 s before t_b
    t = np.arange(0, 2501) / 100.0
    trace = np.column_stack([t, t * 1.25 + 2.0])
    tb = [2.0 * b for b in range(2, 10)]
    rb = [2.5 * b for b in range(2, 10)]
    e = align_errors(trace, _bars(tb), _bars(rb))
    np.testing.assert_allclose(e.errors, 1.6, atol=0.01)


def test_trace_behind_gives_negative_errors():
    t = np.arange(0, 3001) / 100.0
    trace = np.column_stack([t, np.maximum(t * 1.25 - 2.0, 0.0)])
    tb = [2.0 * b for b in range(1, 10)]
    rb = [2.5 * b for b in range(1, 10)]
    e = align_errors(trace, _bars(tb), _bars(rb))
    np.testing.assert_allclose(e.errors, -1.6, atol=0.01)


def test_skipped_region_takes_jump_crossing_time():
    # identity until 3.00 s, then a jump of 4 s in the reference
    t = np.arange(0, 1001) / 100.0
    ref = np.where(t <= 3.0, t, t + 4.0)
    bars = [float(b) for b in range(10)]
    e = align_errors(np.column_stack([t, ref]), _bars(bars), _bars(bars))
    skipped = (np.array(bars) > 3.0) & (np.array(bars) <= 7.01)
    np.testing.assert_allclose(e.detected[skipped], 3.01)
    np.testing.assert_allclose(e.errors[skipped], np.array(bars)[skipped] - 3.01)
    np.testing.assert_allclose(e.errors[np.array(bars) >= 8], 4.0, atol=1e-9)


def test_unreached_bars_are_flagged_and_end_clamped():
    t = np.arange(0, 501) / 100.0
    e = align_errors(np.column_stack([t, t]), _bars([1.0, 3.0, 7.0, 9.0]), _bars([1.0, 3.0, 7.0, 9.0]))
    assert e.reached.tolist() == [True, True, False, False]
    np.testing.assert_allclose(e.errors[2:], [7.0 - 5.0, 9.0 - 5.0])
    assert summarize(e).n_unreached == 2


def test_empty_trace_raises():
    with pytest.raises(EmptyTrace):
        align_errors(np.zeros((0, 2)), _bars([1.0]), _bars([1.0]))


def test_only_common_bar_indices_are_scored():
    t = np.arange(0, 501) / 100.0
    tgt = [BarAnnotation(1, 1.0), BarAnnotation(2, 2.0), BarAnnotation(5, 4.0)]
    ref = [BarAnnotation(1, 1.0), BarAnnotation(5, 4.0), BarAnnotation(6, 4.5)]
    e = align_errors(np.column_stack([t, t]), tgt, ref)
    assert e.bar_index.tolist() == [1, 5]


def test_summarize_hand_fixture():
    r = summarize([1.5, -0.5, 3.0])
    assert r.mean_s == pytest.approx(4.0 / 3.0, abs=1e-12)
    assert (r.frac_le_1s, r.frac_le_2s, r.frac_le_5s) == (1 / 3, 2 / 3, 1.0)
    assert r.err_max_s == 3.0
    assert r.std_s == pytest.approx(np.std([1.5, -0.5, 3.0]))


def test_summarize_zeros():
    r = summarize([0.0, 0.0, 0.0])
    assert r.row() == (0.0, 0.0, 1.0, 1.0, 1.0, 0.0)


@given(st.lists(st.floats(-100, 100, allow_nan=False), min_size=1, max_size=60))
def test_summary_invariants(errors):
    r = summarize(errors)
    assert 0.0 <= r.frac_le_1s <= r.frac_le_2s <= r.frac_le_5s <= 1.0
    assert r.err_max_s >= abs(r.mean_s) - 1e-12


def test_report_round_trip(tmp_path):
    r = summarize([1.5, -0.5, 3.0])
    write_report(r, tmp_path / "r.json")
    back = read_report(tmp_path / "r.json")
    assert back == r
    assert set(json.loads((tmp_path / "r.json").read_text())) >= {
        "mean_s", "std_s", "frac_le_1s", "frac_le_2s", "frac_le_5s", "err_max_s", "per_bar_errors"}


def test_error_curve_round_trip(tmp_path):
    errs = np.array([0.1, -2.25, 1e-7])
    error_curve_csv(errs, tmp_path / "c.csv")
    idx, back = read_error_curve(tmp_path / "c.csv")
    assert idx.tolist() == [1, 2, 3]
    np.testing.assert_allclose(back, errs, atol=1e-9)


def test_error_curve_empty_is_header_only(tmp_path):
    error_curve_csv([], tmp_path / "c.csv")
    assert (tmp_path / "c.csv").read_text().strip() == "bar_index,error_s"


# -- annotation files ------------------------------------------------------------------

def test_annotation_round_trips(tmp_path):
    bars = [BarAnnotation(1, 0.0), BarAnnotation(2, 2.3148148148148149)]
    write_bars(tmp_path / "b.csv", bars)
    assert read_bars(tmp_path / "b.csv") == bars
    secs = [Section(0, 1, 0.0, False), Section(1, 13, 30.0, True)]
    write_sections(tmp_path / "s.csv", secs)
    assert read_sections(tmp_path / "s.csv") == secs
    spans = [LabelSpan(0.0, 1.5, "music"), LabelSpan(1.5, 3.0, "applause")]
    write_labels(tmp_path / "l.csv", spans)
    assert read_labels(tmp_path / "l.csv") == spans


def test_missing_column_reports_line_one(tmp_path):
    (tmp_path / "b.csv").write_text("bar_index,time\n1,0.5\n")
    with pytest.raises(AnnotationError) as exc:
        read_bars(tmp_path / "b.csv")
    assert exc.value.line == 1 and "time_s" in str(exc.value)


def test_bad_value_reports_its_line(tmp_path):
    (tmp_path / "b.csv").write_text("bar_index,time_s\n1,0.5\n2,abc\n")
    with pytest.raises(AnnotationError) as exc:
        read_bars(tmp_path / "b.csv")
    assert exc.value.line == 3


def test_non_monotone_bars_rejected(tmp_path):
    (tmp_path / "b.csv").write_text("bar_index,time_s\n1,0.5\n2,0.4\n")
    with pytest.raises(AnnotationError):
        read_bars(tmp_path / "b.csv")


def test_bad_voice_flag_and_label(tmp_path):
    (tmp_path / "s.csv").write_text("section_id,start_bar,ref_start_s,voice_start\n0,1,0.0,yes\n")
    with pytest.raises(AnnotationError):
        read_sections(tmp_path / "s.csv")
    (tmp_path / "l.csv").write_text("start_s,end_s,label\n0,1,cheering\n")
    with pytest.raises(AnnotationError):
        read_labels(tmp_path / "l.csv")


# -- scenarios ----------------------------------------------------------------------

def _small_script(target_tempo=1.0, gaps=()):
    return {
        "sections": [{"name": "a", "kind": "music", "bars": 2, "bar_s": 2.0, "key": 60},
                     {"name": "b", "kind": "recitative", "bars": 2, "bar_s": 2.0, "key": 57}],
        "reference": [{"type": "section", "name": "a"}, {"type": "section", "name": "b"}],
        "target": [{"type": "section", "name": "a", "tempo_scale": target_tempo}, *gaps,
                   {"type": "section", "name": "b", "tempo_scale": target_tempo}],
    }


def test_single_tempo_scenario_streams_identical():
    scn = generate_scenario(_small_script(), seed=5)
    assert np.array_equal(scn.reference.samples, scn.target.samples)
    assert scn.reference_bars == scn.target_bars


def test_inserted_applause_lengthens_target():
    scn = generate_scenario(_small_script(gaps=[{"type": "applause", "duration": 10}]), seed=1)
    assert abs(scn.target.duration - (scn.reference.duration + 10.0)) <= 0.01
    assert [g.kind for g in scn.gaps] == ["applause"]
    assert scn.transitions == [(4.0, 1)]


def test_scenario_is_deterministic():
    s1 = generate_scenario(_small_script(1.1, [{"type": "silence", "duration": 2}]), seed=3)
    s2 = generate_scenario(_small_script(1.1, [{"type": "silence", "duration": 2}]), seed=3)
    assert np.array_equal(s1.target.samples, s2.target.samples)
    assert s1.target_bars == s2.target_bars


def test_bar_annotations_follow_rendered_downbeats():
    # each bar's first pad note starts at onset/tempo; annotations sit on the 10 ms grid
    script = _small_script(0.9)
    scn = generate_scenario(script, seed=2)
    rng = np.random.default_rng([2, 0, 1])
    rng.integers(0, 2 ** 31)
    notes = music_score(rng, 2, 2.0, 60)
    downbeats = sorted({n.onset for n in notes if n.timbre == 0})
    for bar, onset in zip(scn.target_bars, downbeats):
        assert abs(bar.time_s - onset / 0.9) <= 0.01
    # and the audio actually starts sounding at the first bar
    x = scn.target.samples
    assert np.sqrt(np.mean(x[:441] ** 2)) < np.sqrt(np.mean(x[4410:8820] ** 2))


def test_identity_trace_of_scenario_scores_zero():
    scn = generate_scenario(_small_script(1.2, [{"type": "applause", "duration": 3}]), seed=0)
    tb = np.array([b.time_s for b in scn.target_bars])
    rb = np.array([b.time_s for b in scn.reference_bars])
    grid = np.union1d(np.arange(0, scn.target.duration, 0.01), tb)
    trace = np.column_stack([grid, np.interp(grid, tb, rb)])
    e = align_errors(trace, scn.target_bars, scn.reference_bars)
    assert np.all(e.errors == 0.0)


def test_scenario_write_read(tmp_path):
    scn = generate_scenario(_small_script(1.1, [{"type": "interlude", "duration": 2}]), seed=4)
    write_scenario(scn, tmp_path)
    back = read_scenario(tmp_path)
    assert back.target_bars == scn.target_bars and back.sections == scn.sections
    assert back.gaps == scn.gaps and back.voice_truth == scn.voice_truth
    np.testing.assert_allclose(back.target.samples, scn.target.samples, atol=1e-7)


@pytest.mark.parametrize("mutate, message", [
    (lambda s: s["reference"].insert(1, {"type": "applause", "duration": 3}), "reference may not"),
    (lambda s: s["target"].reverse(), "same order"),
    (lambda s: s["target"].insert(1, {"type": "fireworks", "duration": 3}), "unknown segment"),
    (lambda s: s["target"].insert(1, {"type": "silence", "duration": 0}), "positive duration"),
    (lambda s: s["sections"][0].update(kind="ballet"), "unknown kind"),
    (lambda s: s.pop("target"), "lacks"),
])
def test_invalid_scripts(mutate, message):
    script = _small_script()
    mutate(script)
    with pytest.raises(InvalidScript, match=message):
        parse_script(script)


def test_jump_scripts_have_documented_gaps():
    totals = {n: sum(g["duration"] for g in jump_script(n)["target"] if g["type"] != "section")
              for n in (1, 2, 3, 4)}
    assert totals == {1: 69.0, 2: 31.0, 3: 80.0, 4: 68.0}
    kinds = [g["type"] for g in jump_script(4)["target"]]
    assert kinds == ["section", "applause", "silence", "interlude", "section"]


# -- corpus ---------------------------------------------------------------------------

def test_frame_labels_use_frame_centres():
    spans = [LabelSpan(0.0, 0.1, "music"), LabelSpan(0.1, 0.2, "applause")]
    labels = frame_labels(spans, 10)
    # frame k covers [0.02k, 0.02k + 0.1): centre 0.02k + 0.05
    assert labels.tolist() == ["music", "music", "music", "applause", "applause",
                               "applause", "applause", "applause", "none", "none"]


def test_split_holds_out_every_fifth_clip_of_every_class():
    clips = list(range(40))
    train, held = split(clips)
    assert held == [4, 9, 14, 19, 24, 29, 34, 39]
    assert sorted({c % len(CLASSES) for c in held}) == list(range(len(CLASSES)))
    assert len(train) == 32


def test_corpus_on_disk_matches_in_memory(tmp_path):
    generate_corpus(tmp_path, clips_per_class=1, seed=9, clip_s=1.0)
    disk = load_corpus(tmp_path)
    mem = synth_clips(1, seed=9, clip_s=1.0)
    assert [c.name for c in disk] == [c.name for c in mem]
    for a, b in zip(disk, mem):
        assert a.labels.tolist() == b.labels.tolist()
        assert a.features["speech"].shape == b.features["speech"].shape == (50, 46)
    X, y = sequences(disk, "applause")[0]
    assert X.shape == (50, 25) and set(np.unique(y)) <= {0.0, 1.0}
