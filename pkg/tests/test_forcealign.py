import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from islandalign.corpus import Speaker, Turn
from islandalign.forcealign import (
    AlignmentError,
    WordSpan,
    buffered_realign,
    buffered_word_spans,
    drop_worst_tail,
    normalized_path_score,
    viterbi_segment,
)
from islandalign.sim import FrameScores, TimedWord, TrueTimeline, synth_frame_scores
from oracles import best_partition


def dense(emit):
    emit = np.asarray(emit, dtype=np.float64)
    vocab = [f"t{k}" for k in range(emit.shape[1])]
    return FrameScores(vocab, scores=emit), vocab


def test_single_token_takes_everything():
    fs, vocab = dense(np.random.default_rng(0).normal(size=(10, 1)))
    (span,) = viterbi_segment(fs, vocab, (0, 10))
    assert (span.f0, span.f1) == (0, 10)


def test_two_token_boundary():
    emit = np.zeros((10, 2))
    emit[:4, 0] = 1.0
    emit[4:, 1] = 1.0
    fs, vocab = dense(emit)
    a, b = viterbi_segment(fs, vocab, (0, 10))
    assert (a.f1, b.f0) == (4, 4)
    _, arg = best_partition(emit)
    assert arg == [(0, 4, 10)]


def test_one_frame_each_when_tight():
    fs, vocab = dense(np.random.default_rng(1).normal(size=(5, 5)))
    spans = viterbi_segment(fs, vocab, (0, 5))
    assert [(s.f0, s.f1) for s in spans] == [(k, k + 1) for k in range(5)]


def test_too_short_range():
    fs, vocab = dense(np.zeros((3, 4)))
    with pytest.raises(AlignmentError):
        viterbi_segment(fs, vocab, (0, 3))


def test_unknown_token():
    fs, _ = dense(np.zeros((3, 1)))
    with pytest.raises(AlignmentError):
        viterbi_segment(fs, ["nope"], (0, 3))


matrices = st.integers(1, 6).flatmap(
    lambda k: st.integers(k, 20).flatmap(
        lambda f: arrays(np.float64, (f, k), elements=st.floats(-5, 5, allow_nan=False, width=32))))


@given(matrices, st.integers(0, 5))
def test_partition_and_optimality(emit, offset):
    F, K = emit.shape
    padded = np.vstack([np.zeros((offset, K)), emit])
    fs, vocab = dense(padded)
    spans = viterbi_segment(fs, vocab, (offset, offset + F), indices=range(10, 10 + K))
    assert spans[0].f0 == offset and spans[-1].f1 == offset + F
    assert all(a.f1 == b.f0 for a, b in zip(spans, spans[1:]))
    assert [s.global_index for s in spans] == list(range(10, 10 + K))
    best, arg = best_partition(emit)
    assert sum(s.score for s in spans) == pytest.approx(best, abs=1e-6)
    assert tuple([s.f0 - offset for s in spans] + [F]) in arg


@given(matrices, st.floats(-10, 10))
def test_uniform_shift_keeps_boundaries(emit, c):
    fs1, vocab = dense(emit)
    fs2, _ = dense(emit + c)
    b1 = [(s.f0, s.f1) for s in viterbi_segment(fs1, vocab, (0, emit.shape[0]))]
    b2 = [(s.f0, s.f1) for s in viterbi_segment(fs2, vocab, (0, emit.shape[0]))]
    best, arg = best_partition(emit)
    if len(arg) == 1:
        assert b1 == b2


def test_normalized_score():
    spans = [WordSpan(0, 0, 4, 4 * 0.7), WordSpan(1, 4, 10, 6 * 0.7)]
    assert normalized_path_score(spans) == pytest.approx(0.7)
    doubled = [WordSpan(s.global_index, s.f0, s.f1, 2 * s.score) for s in spans]
    assert normalized_path_score(doubled) == pytest.approx(1.4)
    with pytest.raises(ValueError):
        normalized_path_score([])


def centred(tokens, lead=3.0):
    t, words = lead, []
    for k, tok in enumerate(tokens):
        words.append(TimedWord(k, round(t, 3), round(t + 0.4, 3), tok))
        t += 0.5
    return TrueTimeline(tuple(words), round(words[-1].end_sec + lead, 3))


def test_buffered_recovers_true_span():
    tl = centred(["ka", "lo", "mi", "ru"])
    fs = synth_frame_scores(tl, noise_sd=0.0, speech_bias=0.3)
    true0, true1 = tl.words[0].start_sec, tl.words[-1].end_sec
    turn = Turn(Speaker.DOCTOR, true0 + 0.6, true1 - 0.5, tuple(tl.tokens()))
    start, end, _ = buffered_realign(turn, fs, buffer_sec=1.0)
    assert start >= turn.ann_start_sec - 1.0 and end <= turn.ann_end_sec + 1.0
    assert abs(start - true0) <= 0.01 and abs(end - true1) <= 0.01


def test_zero_buffer_exact_annotation():
    tl = centred(["ka", "lo", "mi"])
    fs = synth_frame_scores(tl, noise_sd=0.0)
    turn = Turn(Speaker.PATIENT, tl.words[0].start_sec, tl.words[-1].end_sec, tuple(tl.tokens()))
    start, end, _ = buffered_realign(turn, fs, buffer_sec=0.0)
    assert abs(start - turn.ann_start_sec) <= 0.01 and abs(end - turn.ann_end_sec) <= 0.01


def test_turn_at_audio_start_clamps():
    tl = centred(["ka", "lo"], lead=0.2)
    fs = synth_frame_scores(tl, noise_sd=0.0)
    turn = Turn(Speaker.DOCTOR, 0.0, 1.0, tuple(tl.tokens()))
    spans = buffered_word_spans(turn, fs, buffer_sec=1.0, edge_gap=False)
    assert spans[0].f0 == 0


def test_drop_tail_lowest_one_of_ten():
    scored = [(f"s{k}", float(s)) for k, s in enumerate([5, 3, 9, 1, 7, 2, 8, 4, 6, 10])]
    kept = drop_worst_tail(scored, 0.1)
    assert kept == [s for s, _ in scored if s != "s3"]


def test_drop_tail_zero_fraction_is_identity():
    scored = [("a", 1.0), ("b", 0.0)]
    assert drop_worst_tail(scored, 0.0) == ["a", "b"]


def test_drop_tail_tie_drops_earlier():
    scored = [("a", 2.0), ("b", 1.0), ("c", 1.0), ("d", 3.0)]
    assert drop_worst_tail(scored, 0.25) == ["a", "c", "d"]
    assert drop_worst_tail(scored, 0.5) == ["a", "d"]


def test_drop_tail_rejects_bad_fraction():
    with pytest.raises(ValueError):
        drop_worst_tail([("a", 1.0)], 1.0)
