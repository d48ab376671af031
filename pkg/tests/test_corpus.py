import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from islandalign.corpus import (
    DEID,
    AlignedTranscript,
    AlignedWord,
    Conversation,
    FormatError,
    Metadata,
    Provenance,
    Speaker,
    Turn,
    conversation_from_dict,
    format_alignment,
    normalize_token,
    normalize_words,
    parse_alignment,
    parse_conversation,
    serialize_conversation,
    word_stream,
)


def minimal(**over):
    doc = {
        "conversation_id": "c1",
        "audio_duration_sec": 5.0,
        "metadata": {"doctor_id": "d1", "doctor_gender": "F", "interaction_type": "visit",
                     "disease_area": "Cardiology"},
        "turns": [{"speaker": "DR", "start_sec": 0.5, "end_sec": 2.0, "words": ["Hello,", "there"]}],
    }
    doc.update(over)
    return doc


@pytest.mark.parametrize("raw, want", [("Hello,", "hello"), ("that's", "that's"), ("[DEID]", DEID),
                                       ("  ", ""), ("...", ""), ("<deid>", DEID)])
def test_normalize_token(raw, want):
    assert normalize_token(raw) == want


@given(st.text(max_size=12))
def test_normalize_idempotent(raw):
    once = normalize_token(raw)
    assert normalize_token(once) == once


def test_normalize_words_splits_and_drops():
    assert normalize_words(["Blood work", "--", "[deid]"]) == ("blood", "work", DEID)


def test_parse_minimal_file():
    conv = parse_conversation(json.dumps(minimal()))
    assert len(conv.turns) == 1
    assert conv.turns[0].words == ("hello", "there")
    assert conv.turns[0].speaker is Speaker.DOCTOR
    assert conv.metadata.disease_area == "Cardiology"


def test_parse_rejects_inverted_turn():
    doc = minimal(turns=[{"speaker": "PT", "start_sec": 3.0, "end_sec": 1.0, "words": ["x"]}])
    with pytest.raises(FormatError):
        parse_conversation(json.dumps(doc))


def test_parse_rejects_turn_past_audio_end():
    doc = minimal(turns=[{"speaker": "PT", "start_sec": 3.0, "end_sec": 9.0, "words": ["x"]}])
    with pytest.raises(FormatError):
        parse_conversation(json.dumps(doc))


@pytest.mark.parametrize("bad", [b"{", b"[]", json.dumps(minimal(turns="x")).encode()])
def test_parse_rejects_garbage(bad):
    with pytest.raises(FormatError):
        parse_conversation(bad)


def test_deid_tag_sets_flag():
    doc = minimal(turns=[{"speaker": "PT", "start_sec": 0, "end_sec": 1, "words": ["my", "name", "[DEID]"]}])
    turn = parse_conversation(json.dumps(doc)).turns[0]
    assert turn.has_deid
    assert turn.words[-1] == DEID


def _conv(*word_lists):
    turns = [Turn(Speaker.DOCTOR, float(i), float(i) + 0.5, w) for i, w in enumerate(word_lists)]
    return Conversation("c", Metadata("d", "M", "visit"), turns, 10.0)


def test_word_stream_two_turns():
    assert word_stream(_conv(("a", "b"), ("c",))) == [(0, 0, "a"), (1, 0, "b"), (2, 1, "c")]


def test_word_stream_single_turn():
    assert [t for _, _, t in word_stream(_conv(("x", "y", "z")))] == ["x", "y", "z"]


def test_empty_deid_turn_contributes_tag():
    conv = _conv(("a",), Turn(Speaker.PATIENT, 1, 1.5, (), has_deid=True).words)
    assert word_stream(conv)[-1] == (1, 1, DEID)
    assert Turn(Speaker.PATIENT, 0, 1, (), has_deid=True).words == (DEID,)


def test_empty_turn_without_deid_rejected():
    with pytest.raises(FormatError):
        Turn(Speaker.PATIENT, 0, 1, ())


word_st = st.text(alphabet="abcxyz'", min_size=1, max_size=6).map(normalize_token).filter(bool)


@st.composite
def conversations(draw):
    n = draw(st.integers(1, 5))
    t = 0.0
    turns = []
    for _ in range(n):
        t += draw(st.integers(0, 2000)) / 1000
        dur = draw(st.integers(0, 3000)) / 1000
        words = tuple(draw(st.lists(st.one_of(word_st, st.just(DEID)), min_size=1, max_size=6)))
        turns.append(Turn(draw(st.sampled_from(list(Speaker))), t, t + dur, words))
    area = draw(st.one_of(st.none(), st.sampled_from(["Oncology", "Urology"])))
    md = Metadata(draw(st.sampled_from(["d1", "d2"])), draw(st.sampled_from("MF")), "visit", area)
    return Conversation(draw(st.sampled_from(["c1", "conv 2"])), md, turns, t + 5.0)


@given(conversations())
def test_round_trip(conv):
    assert parse_conversation(serialize_conversation(conv)) == conv


@given(conversations())
def test_stream_length_matches_turns(conv):
    assert len(word_stream(conv)) == sum(len(t.words) for t in conv.turns) == conv.n_words


def test_from_dict_matches_parse():
    assert conversation_from_dict(minimal()) == parse_conversation(json.dumps(minimal()))


def test_alignment_text_round_trip():
    words = [AlignedWord(0, "a", 0.0, 0.25, Provenance.ISLAND),
             AlignedWord(1, "b", 0.25, 0.5, Provenance.INTERPOLATED)]
    back = parse_alignment(format_alignment("c9", words))
    assert back == {"c9": words}


def test_aligned_transcript_checks_order():
    words = (AlignedWord(0, "a", 1.0, 1.5, Provenance.FORCED), AlignedWord(1, "b", 0.5, 0.7, Provenance.FORCED))
    with pytest.raises(ValueError):
        AlignedTranscript("c", words, 0.0, 1.0, 10.0)
