import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from islandalign.corpus import DEID, AlignedWord, Conversation, Metadata, Provenance, Speaker, Turn
from islandalign.forcealign import AlignmentError
from islandalign.pipeline import (
    CoverageReport,
    PipelineConfig,
    Role,
    SimAcoustics,
    Segment,
    Source,
    align_simulated,
    chunk_spans,
    cut_turns,
    filter_segments,
    interpolate_residual,
    original_align,
    pass1,
    pass2,
    turn_boundary_errors,
    two_pass_align,
)
from islandalign.sim import (
    ErrorModel,
    SimCorpusConfig,
    SimRecognizer,
    TimedWord,
    TrueTimeline,
    generate_corpus,
    synth_frame_scores,
)
from islandalign.textalign import ConfidenceIsland

ZERO = ErrorModel(0.0, 0.0, 0.0, 0.0)
MD = Metadata("d1", "F", "visit", "Oncology")


def spoken(tokens, word=0.3, gap=0.1, lead=0.4, min_duration=10.0):
    t, words = lead, []
    for k, tok in enumerate(tokens):
        words.append(TimedWord(k, round(t, 3), round(t + word, 3), tok))
        t += word + gap
    tl = TrueTimeline(tuple(words), max(round(t + lead, 3), min_duration))
    turn = Turn(Speaker.DOCTOR, words[0].start_sec, words[-1].end_sec, tuple(tokens))
    return Conversation("c", MD, (turn,), tl.audio_duration_sec), tl


def words20():
    return [f"w{k:02d}" for k in range(20)]


@pytest.mark.parametrize("dur, want", [
    (25, [(0, 10), (10, 20), (20, 25)]),
    (10, [(0, 10)]),
    (9.5, [(0, 9.5)]),
])
def test_chunk_spans(dur, want):
    assert chunk_spans(dur) == want


def test_pass1_zero_error_single_chunk():
    conv, tl = spoken(words20())
    islands, cov = pass1(conv, SimRecognizer(tl, ZERO))
    assert cov.words_pass1 == 18 and cov.pass1_fraction == pytest.approx(0.9)
    assert [(i.ref_start, i.ref_stop) for i in islands] == [(1, 19)]


def test_pass1_short_transcript_has_no_islands():
    conv, tl = spoken(["a", "b", "c", "d"])
    islands, cov = pass1(conv, SimRecognizer(tl, ZERO))
    assert islands == [] and cov.words_pass1 == 0


def test_pass1_survives_recognizer_failure():
    conv, tl = spoken(words20())

    def broken(span, grammar):
        raise RuntimeError("decoder crashed")

    islands, cov = pass1(conv, broken)
    assert islands == [] and cov.words_interpolated == 20


def island(a, b, t0, step=0.5):
    return ConfidenceIsland(a, b, tuple((a + k, t0 + k * step, t0 + k * step + 0.4) for k in range(b - a)))


def test_pass2_partitions_two_second_gap():
    tokens = [f"w{k}" for k in range(13)]
    conv, tl = spoken(tokens)
    fs = synth_frame_scores(tl, seed=1)
    left = island(0, 5, 2.6)   # last word ends at 5.0
    right = island(8, 13, 7.0)
    forced, cov = pass2(conv, [left, right], fs, pad_sec=0.0)
    assert [w.global_index for w in forced] == [5, 6, 7]
    assert all(w.provenance is Provenance.FORCED for w in forced)
    assert forced[0].start_sec == pytest.approx(5.0) and forced[-1].end_sec == pytest.approx(7.0)
    assert all(a.end_sec == b.start_sec for a, b in zip(forced, forced[1:]))
    assert (cov.words_pass1, cov.words_pass2, cov.words_interpolated) == (10, 3, 0)


def test_pass2_inverted_bounds_deferred():
    tokens = [f"w{k}" for k in range(13)]
    conv, tl = spoken(tokens)
    fs = synth_frame_scores(tl, seed=1)
    islands = [island(0, 5, 2.6), island(8, 13, 4.9)]  # 4.9 < 5.0
    forced, cov = pass2(conv, islands, fs)
    assert forced == [] and cov.words_interpolated == 3
    full = interpolate_residual(_island_words(conv, islands), conv)
    assert all(full.words[k].provenance is Provenance.INTERPOLATED for k in (5, 6, 7))


def _island_words(conv, islands):
    stream = conv.tokens()
    return [AlignedWord(gi, stream[gi], s, e, Provenance.ISLAND) for isl in islands for gi, s, e in isl.words]


def test_interpolate_single_word():
    conv, _ = spoken(["a", "b", "c"])
    words = [AlignedWord(0, "a", 1.0, 2.0, Provenance.ISLAND), AlignedWord(2, "c", 3.0, 3.5, Provenance.ISLAND)]
    at = interpolate_residual(words, conv)
    assert (at.words[1].start_sec, at.words[1].end_sec) == (2.0, 3.0)


def test_interpolate_by_characters():
    conv, _ = spoken(["x", "a", "abc", "y"], word=1.0, gap=1.0)
    words = [AlignedWord(0, "x", 0.0, 1.0, Provenance.FORCED), AlignedWord(3, "y", 5.0, 5.5, Provenance.FORCED)]
    at = interpolate_residual(words, conv)
    assert [(w.start_sec, w.end_sec) for w in at.words[1:3]] == [(1.0, 2.0), (2.0, 5.0)]
    uni = interpolate_residual(words, conv, mode="uniform")
    assert [(w.start_sec, w.end_sec) for w in uni.words[1:3]] == [(1.0, 3.0), (3.0, 5.0)]


def test_interpolate_zero_gap():
    conv, _ = spoken(["x", "a", "b", "y"])
    words = [AlignedWord(0, "x", 1.0, 2.0, Provenance.ISLAND), AlignedWord(3, "y", 2.0, 2.5, Provenance.ISLAND)]
    at = interpolate_residual(words, conv)
    for w in at.words[1:3]:
        assert w.end_sec - w.start_sec == pytest.approx(0.01)
        assert abs(w.start_sec - 2.0) <= 0.01


def test_interpolate_rejects_duplicates():
    conv, _ = spoken(["x", "y"])
    w = AlignedWord(0, "x", 0.0, 1.0, Provenance.ISLAND)
    with pytest.raises(ValueError):
        interpolate_residual([w, w], conv)


@settings(max_examples=12)
@given(st.integers(0, 10**6), st.sampled_from([0.0, 0.1]))
def test_two_pass_invariants(seed, pad):
    (conv, tl), = generate_corpus(SimCorpusConfig(n_conversations=1, mean_conversation_min=1.0, seed=seed))
    cfg = PipelineConfig(gap_pad_sec=pad)
    seen = []

    class Recording(SimRecognizer):
        def __call__(self, span, grammar=None):
            out = super().__call__(span, grammar)
            seen.extend(out)
            return out

    aligned, cov = two_pass_align(conv, Recording(tl, ErrorModel(seed=seed)), synth_frame_scores(tl, seed=seed), cfg)
    assert [w.global_index for w in aligned.words] == list(range(conv.n_words))
    starts = [w.start_sec for w in aligned.words]
    assert starts == sorted(starts)
    assert all(0 <= w.start_sec < w.end_sec <= conv.audio_duration_sec for w in aligned.words)
    assert aligned.coverage_pass2 >= aligned.coverage_pass1
    assert cov.pass2_fraction == pytest.approx(aligned.coverage_pass2)
    by_time = {(h.start_sec, h.end_sec): h.token for h in seen}
    for w in aligned.words:
        if w.provenance is Provenance.ISLAND:
            assert by_time[(w.start_sec, w.end_sec)] == w.token


def test_default_conversation_coverage():
    (conv, tl), = generate_corpus(SimCorpusConfig(n_conversations=1, seed=3))
    res = align_simulated(conv, tl, "two-pass")
    assert 0.7 <= res.coverage.pass1_fraction <= 0.95
    assert res.coverage.pass2_fraction >= 0.95


def two_turn_conv():
    turns = (Turn(Speaker.DOCTOR, 0.0, 1.0, ("a", "b")), Turn(Speaker.PATIENT, 1.5, 2.0, (DEID,)),
             Turn(Speaker.PATIENT, 2.5, 3.0, ("c",)))
    return Conversation("c", MD, turns, 4.0)


def test_cut_turns_interpolated_turn_and_deid_turn():
    conv = two_turn_conv()
    at = interpolate_residual([], conv)
    segs = cut_turns(at, conv)
    assert [s.turn_index for s in segs] == [0, 2]
    assert all(s.source is Source.TWO_PASS for s in segs)


def _seg(n, deid=False):
    toks = [f"t{k}" for k in range(n)]
    if deid:
        toks[0] = DEID
    return Segment("c", n, Speaker.DOCTOR, 0.0, 1.0, toks, Source.TWO_PASS)


@pytest.mark.parametrize("n, role, kept", [(4, Role.TEST, False), (5, Role.TEST, True), (1, Role.TRAIN, False),
                                           (4, Role.TRAIN, True), (2, "train", True)])
def test_filter_rules(n, role, kept):
    assert (filter_segments([_seg(n)], role) != []) is kept


def test_filter_drops_deid():
    assert filter_segments([_seg(8, deid=True)], Role.TRAIN) == []


def test_segment_dict_round_trip():
    s = _seg(3)
    assert Segment.from_dict(s.to_dict()) == s
    with pytest.raises(ValueError):
        Segment("c", 0, Speaker.DOCTOR, 1.0, 1.0, ("a",), Source.ORIGINAL)


def test_original_copies_annotations():
    conv = two_turn_conv()
    words, segs = original_align(conv)
    assert [(s.start_sec, s.end_sec) for s in segs] == [(0.0, 1.0), (2.5, 3.0)]
    assert len(words) == conv.n_words


def test_non_original_needs_truth():
    with pytest.raises(AlignmentError):
        align_simulated(two_turn_conv(), None, "buffered")


def test_coverage_report_arithmetic():
    a = CoverageReport(10, 7, 2, 1)
    assert (a + a).pass2_fraction == pytest.approx(0.9)
    with pytest.raises(ValueError):
        CoverageReport(10, 7, 2, 2)


def test_strategy_ordering_on_one_conversation():
    (conv, tl), = generate_corpus(SimCorpusConfig(n_conversations=1, mean_conversation_min=3.0, seed=8))
    med = {}
    for strat in ("original", "buffered", "two-pass"):
        res = align_simulated(conv, tl, strat, seed=8)
        med[strat] = float(np.median(turn_boundary_errors(res.segments, conv, tl)))
    assert med["two-pass"] < med["buffered"] < med["original"]


def test_buffered_scores_one_per_segment():
    (conv, tl), = generate_corpus(SimCorpusConfig(n_conversations=1, mean_conversation_min=1.0, seed=2))
    res = align_simulated(conv, tl, "buffered", acoustics=SimAcoustics())
    assert len(res.turn_scores) == len(res.segments)
    assert all(math.isfinite(s) for s in res.turn_scores)


def test_pass2_leaves_leading_silence_out():
    conv, tl = spoken([f"w{k}" for k in range(10)], lead=3.0)
    fs = synth_frame_scores(tl, noise_sd=0.3, seed=2, speech_bias=0.6)
    right = ConfidenceIsland(3, 10, tuple((w.global_index, w.start_sec, w.end_sec) for w in tl.words[3:]))
    forced, _ = pass2(conv, [right], fs)
    assert [w.global_index for w in forced] == [0, 1, 2]
    assert forced[0].start_sec == pytest.approx(tl.words[0].start_sec, abs=0.05)
