import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from islandalign.corpus import DEID, GAP, serialize_conversation
from islandalign.grammar import accepts, build_island_grammar
from islandalign.sim import (
    ErrorModel,
    FrameScores,
    SimCorpusConfig,
    TimedWord,
    TrueTimeline,
    corrupt_tokens,
    format_truth,
    frame_noise,
    generate_corpus,
    make_rng,
    parse_truth,
    simulate_recognizer,
    sub_seed,
    synth_frame_scores,
)
from islandalign.textalign import edit_align

ZERO = ErrorModel(0.0, 0.0, 0.0, 0.0)


def timeline(tokens, word=0.3, gap=0.1, lead=0.5):
    t, words = lead, []
    for k, tok in enumerate(tokens):
        words.append(TimedWord(k, round(t, 3), round(t + word, 3), tok))
        t += word + gap
    return TrueTimeline(tuple(words), round(t + lead, 3))


TL = timeline("alpha beta gamma delta alpha epsilon beta zeta".split())


def test_rng_streams_are_keyed():
    a = make_rng(5, 1, 2).random(4)
    assert np.array_equal(a, make_rng(5, 1, 2).random(4))
    assert not np.array_equal(a, make_rng(5, 2, 1).random(4))
    assert sub_seed(5, 1) == sub_seed(5, 1) != sub_seed(5, 2)


def test_frame_noise_is_window_independent():
    full = frame_noise(9, np.arange(100), np.arange(4))
    part = frame_noise(9, np.arange(40, 60), np.array([2, 3]))
    np.testing.assert_array_equal(full[40:60, 2:], part)


def test_noiseless_argmax_inside_words():
    fs = synth_frame_scores(TL, noise_sd=0.0, speech_bias=0.5)
    s = fs.scores
    for w in TL.words:
        for t in range(int(np.ceil(w.start_sec * 100)), int(w.end_sec * 100)):
            assert fs.vocab[int(np.argmax(s[t]))] == w.token


def test_noiseless_argmax_in_silence_is_gap():
    fs = synth_frame_scores(TL, noise_sd=0.0, speech_bias=0.5)
    s = fs.scores
    for a, b in zip(TL.words, TL.words[1:]):
        t = int(round((a.end_sec + b.start_sec) / 2 * 100))
        assert fs.vocab[int(np.argmax(s[t]))] == GAP
    assert fs.vocab[int(np.argmax(s[0]))] == GAP


def test_deid_frames_carry_no_signal():
    tl = timeline(["one", DEID, "two"])
    fs = synth_frame_scores(tl, noise_sd=0.0, speech_bias=0.5)
    w = tl.words[1]
    mid = int((w.start_sec + w.end_sec) / 2 * 100)
    assert np.all(fs.scores[mid] == 0.0)


def test_frame_scores_deterministic():
    a = synth_frame_scores(TL, seed=4).scores
    b = synth_frame_scores(TL, seed=4).scores
    assert np.array_equal(a, b)
    assert not np.array_equal(a, synth_frame_scores(TL, seed=5).scores)


def test_explicit_scores_validated():
    with pytest.raises(ValueError):
        FrameScores(["a", "b"], scores=np.zeros((3, 3)))
    with pytest.raises(ValueError):
        FrameScores(["a"], scores=np.array([[np.nan]]))


def test_zero_error_recognizer_is_identity():
    out = simulate_recognizer(TL, (0.0, TL.audio_duration_sec), ZERO)
    assert [(h.token, h.start_sec, h.end_sec) for h in out] == [(w.token, w.start_sec, w.end_sec) for w in TL.words]


def test_zero_error_under_grammar_is_unchanged():
    g = build_island_grammar(TL.tokens())
    span = (1.0, 2.5)
    assert simulate_recognizer(TL, span, ZERO, g) == simulate_recognizer(TL, span, ZERO)


def test_span_selects_by_midpoint():
    out = simulate_recognizer(TL, (0.0, 1.1), ZERO)
    assert [h.token for h in out] == ["alpha", "beta"]
    assert [h.token for h in simulate_recognizer(TL, (0.0, 1.0), ZERO)] == ["alpha"]


@given(st.integers(0, 2**32), st.floats(0, 3.0))
def test_full_substitution_still_accepted(seed, t0):
    em = ErrorModel(1.0, 0.0, 0.3, 0.05, seed)
    g = build_island_grammar(TL.tokens())
    out = simulate_recognizer(TL, (t0, t0 + 2.0), em, g, vocab=["x", "y"])
    assert accepts(g, [h.token for h in out])
    assert all(h.start_sec < h.end_sec for h in out)
    assert all(a.end_sec <= b.start_sec + 1e-9 for a, b in zip(out, out[1:]))


@given(st.integers(0, 2**32), st.floats(0, 3.0))
def test_grammar_output_is_accepted_default_em(seed, t0):
    g = build_island_grammar(TL.tokens())
    out = simulate_recognizer(TL, (t0, t0 + 1.5), ErrorModel(seed=seed), g)
    assert accepts(g, [h.token for h in out])


def test_corruption_rate_matches_planted():
    rng = np.random.default_rng(0)
    vocab = [f"w{k}" for k in range(300)]
    tokens = [vocab[k] for k in rng.integers(0, 300, 12000)]
    tl = timeline(tokens, word=0.2, gap=0.05)
    em = ErrorModel(0.10, 0.03, 0.02, 0.0, seed=11)
    out = simulate_recognizer(tl, (0.0, tl.audio_duration_sec), em)
    measured = edit_align(tokens, [h.token for h in out]).cost / len(tokens)
    assert measured == pytest.approx(0.15, abs=0.02)


def test_corrupt_tokens_always_drops_deid():
    em = ErrorModel(0.0, 0.0, 0.0)
    out = corrupt_tokens(["a", DEID, "b"], em, make_rng(0), ["a", "b"])
    assert [t for t, _, _ in out] == ["a", "b"]


def test_corpus_ids_distinct():
    convs = generate_corpus(SimCorpusConfig(n_conversations=3, mean_conversation_min=0.5))
    assert len({c.conversation_id for c, _ in convs}) == 3
    for conv, tl in convs:
        assert conv.tokens() == tl.tokens()


def test_zero_jitter_annotations_are_true():
    for conv, tl in generate_corpus(SimCorpusConfig(n_conversations=2, mean_conversation_min=0.5,
                                                    turn_jitter_sec=0.0)):
        for (a, b), turn in zip(conv.turn_word_ranges(), conv.turns):
            assert turn.ann_start_sec == tl.words[a].start_sec
            assert turn.ann_end_sec == tl.words[b - 1].end_sec


def test_corpus_bytes_deterministic():
    cfg = SimCorpusConfig(n_conversations=2, mean_conversation_min=0.5, seed=42)
    one = [(serialize_conversation(c), format_truth(t)) for c, t in generate_corpus(cfg)]
    two = [(serialize_conversation(c), format_truth(t)) for c, t in generate_corpus(cfg)]
    assert one == two


def test_truth_round_trip():
    assert parse_truth(format_truth(TL), TL.audio_duration_sec) == TL


@pytest.mark.parametrize("bad", [dict(n_conversations=0), dict(male_fraction=1.5), dict(deid_rate=-0.1)])
def test_bad_config_rejected(bad):
    with pytest.raises(ValueError, match="infeasible"):
        generate_corpus(SimCorpusConfig(**bad))


def test_error_model_validation():
    with pytest.raises(ValueError):
        ErrorModel(p_sub=0.8, p_del=0.5)
