"""Conversation data model, token normalization and file I/O."""
from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Sequence

DEID = "<deid>"
GAP = "<gap>"

_DEID_RE = re.compile(r"^[\[<{(]\s*de[-_ ]?id[^\]>})]*[\]>})]$", re.IGNORECASE)
# edge punctuation; internal apostrophes and hyphens survive
_EDGE_RE = re.compile(r"^[^\w]+|[^\w]+$", re.UNICODE)
_WS_RE = re.compile(r"\s+")


class FormatError(ValueError):
    """Malformed or invalid conversation / alignment data."""


class Speaker(str, Enum):
    DOCTOR = "DR"
    PATIENT = "PT"
    CAREGIVER = "CG"
    OTHER = "OT"


class Provenance(str, Enum):
    ISLAND = "ISLAND"
    FORCED = "FORCED"
    INTERPOLATED = "INTERP"


def normalize_token(raw: str) -> str:
    """Canonical token form used for every comparison.

    Returns ``""`` for non-lexical input; callers drop those.

    >>> normalize_token("Hello,")
    'hello'
    >>> normalize_token("[DEID]")
    '<deid>'
    """
    text = raw.strip()
    if not text:
        return ""
    if text == DEID or _DEID_RE.match(text):
        return DEID
    return _WS_RE.sub("_", _EDGE_RE.sub("", text.lower()))


def normalize_words(raw_words: Iterable[str]) -> tuple[str, ...]:
    out = []
    for raw in raw_words:
        if _DEID_RE.match(raw.strip()):
            out.append(DEID)
            continue
        for piece in raw.split():
            tok = normalize_token(piece)
            if tok:
                out.append(tok)
    return tuple(out)


@dataclass(frozen=True)
class Metadata:
    doctor_id: str
    doctor_gender: str
    interaction_type: str
    disease_area: str | None = None

    def __post_init__(self):
        if not self.doctor_id:
            raise FormatError("doctor_id must be non-empty")
        if self.doctor_gender not in ("M", "F"):
            raise FormatError(f"doctor_gender must be 'M' or 'F', got {self.doctor_gender!r}")


@dataclass(frozen=True)
class Turn:
    speaker: Speaker
    ann_start_sec: float
    ann_end_sec: float
    words: tuple[str, ...]
    has_deid: bool = False

    def __post_init__(self):
        words = tuple(self.words)
        # a turn that is nothing but redacted audio still owns one token
        if not words and self.has_deid:
            words = (DEID,)
        if not words:
            raise FormatError("turn has no words")
        object.__setattr__(self, "words", words)
        object.__setattr__(self, "has_deid", DEID in words)
        object.__setattr__(self, "speaker", Speaker(self.speaker))
        if self.ann_start_sec > self.ann_end_sec:
            raise FormatError(
                f"turn end {self.ann_end_sec} precedes start {self.ann_start_sec}"
            )


@dataclass(frozen=True)
class Conversation:
    conversation_id: str
    metadata: Metadata
    turns: tuple[Turn, ...]
    audio_duration_sec: float

    def __post_init__(self):
        object.__setattr__(self, "turns", tuple(self.turns))
        if not self.conversation_id:
            raise FormatError("conversation_id must be non-empty")
        if self.audio_duration_sec < 0:
            raise FormatError("audio_duration_sec must be non-negative")
        prev = float("-inf")
        for i, turn in enumerate(self.turns):
            if turn.ann_start_sec < prev:
                raise FormatError(f"turn {i} is out of start-time order")
            prev = turn.ann_start_sec
            if turn.ann_start_sec < 0 or turn.ann_end_sec > self.audio_duration_sec:
                raise FormatError(
                    f"turn {i} [{turn.ann_start_sec}, {turn.ann_end_sec}] lies outside "
                    f"audio of {self.audio_duration_sec} s"
                )

    @property
    def n_words(self) -> int:
        return sum(len(t.words) for t in self.turns)

    def tokens(self) -> list[str]:
        return [tok for t in self.turns for tok in t.words]

    def turn_word_ranges(self) -> list[tuple[int, int]]:
        """Half-open global-index range of every turn."""
        out = []
        pos = 0
        for t in self.turns:
            out.append((pos, pos + len(t.words)))
            pos += len(t.words)
        return out


@dataclass(frozen=True)
class AlignedWord:
    global_index: int
    token: str
    start_sec: float
    end_sec: float
    provenance: Provenance

    def __post_init__(self):
        if not self.start_sec < self.end_sec:
            raise FormatError(
                f"word {self.global_index} has start {self.start_sec} >= end {self.end_sec}"
            )


@dataclass(frozen=True)
class AlignedTranscript:
    conversation_id: str
    words: tuple[AlignedWord, ...]
    coverage_pass1: float
    coverage_pass2: float
    audio_duration_sec: float = field(default=float("inf"))

    def __post_init__(self):
        object.__setattr__(self, "words", tuple(self.words))
        prev = float("-inf")
        for i, w in enumerate(self.words):
            if w.global_index != i:
                raise FormatError(f"word {i} missing or out of place")
            if w.start_sec < prev:
                raise FormatError(f"start times decrease at word {i}")
            if w.start_sec < 0 or w.end_sec > self.audio_duration_sec + 1e-9:
                raise FormatError(f"word {i} lies outside the audio")
            prev = w.start_sec


def word_stream(conversation: Conversation) -> list[tuple[int, int, str]]:
    """``(global_index, turn_index, token)`` for every word, in turn order."""
    out = []
    for ti, turn in enumerate(conversation.turns):
        for tok in turn.words:
            out.append((len(out), ti, tok))
    return out


# ---------------------------------------------------------------------------
# conversation JSON


def _require(obj, key, kind, where):
    if not isinstance(obj, dict) or key not in obj:
        raise FormatError(f"{where}: missing required field {key!r}")
    value = obj[key]
    if kind is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise FormatError(f"{where}: field {key!r} must be a number")
        return float(value)
    if not isinstance(value, kind):
        raise FormatError(f"{where}: field {key!r} has wrong type")
    return value


def conversation_from_dict(obj) -> Conversation:
    if not isinstance(obj, dict):
        raise FormatError("conversation must be a JSON object")
    cid = _require(obj, "conversation_id", str, "conversation")
    duration = _require(obj, "audio_duration_sec", float, cid)
    meta_obj = _require(obj, "metadata", dict, cid)
    area = meta_obj.get("disease_area")
    if area is not None and not isinstance(area, str):
        raise FormatError(f"{cid}: disease_area must be a string or null")
    metadata = Metadata(
        doctor_id=_require(meta_obj, "doctor_id", str, cid),
        doctor_gender=_require(meta_obj, "doctor_gender", str, cid),
        interaction_type=_require(meta_obj, "interaction_type", str, cid),
        disease_area=area,
    )
    turns = []
    for i, t in enumerate(_require(obj, "turns", list, cid)):
        where = f"{cid} turn {i}"
        code = _require(t, "speaker", str, where)
        try:
            speaker = Speaker(code)
        except ValueError:
            raise FormatError(f"{where}: unknown speaker code {code!r}") from None
        raw = _require(t, "words", list, where)
        if not all(isinstance(w, str) for w in raw):
            raise FormatError(f"{where}: words must be strings")
        turns.append(
            Turn(
                speaker=speaker,
                ann_start_sec=_require(t, "start_sec", float, where),
                ann_end_sec=_require(t, "end_sec", float, where),
                words=normalize_words(raw),
            )
        )
    return Conversation(cid, metadata, tuple(turns), duration)


def parse_conversation(data: bytes | str) -> Conversation:
    """Parse and validate one conversation file."""
    try:
        obj = json.loads(data)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise FormatError(f"malformed conversation JSON: {exc}") from exc
    return conversation_from_dict(obj)


def conversation_to_dict(c: Conversation) -> dict:
    return {
        "conversation_id": c.conversation_id,
        "audio_duration_sec": c.audio_duration_sec,
        "metadata": {
            "doctor_id": c.metadata.doctor_id,
            "doctor_gender": c.metadata.doctor_gender,
            "interaction_type": c.metadata.interaction_type,
            "disease_area": c.metadata.disease_area,
        },
        "turns": [
            {
                "speaker": t.speaker.value,
                "start_sec": t.ann_start_sec,
                "end_sec": t.ann_end_sec,
                "words": list(t.words),
            }
            for t in c.turns
        ],
    }


def serialize_conversation(c: Conversation) -> bytes:
    return (json.dumps(conversation_to_dict(c), indent=1, ensure_ascii=False) + "\n").encode("utf-8")


# ---------------------------------------------------------------------------
# alignment lines: "conversation_id global_index start end token provenance"


def format_alignment(conversation_id: str, words: Sequence[AlignedWord]) -> str:
    return "".join(
        f"{conversation_id} {w.global_index} {w.start_sec:.3f} {w.end_sec:.3f} "
        f"{w.token} {Provenance(w.provenance).value}\n"
        for w in words
    )


def parse_alignment(text: str) -> dict[str, list[AlignedWord]]:
    out: dict[str, list[AlignedWord]] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        parts = line.split(" ")
        if len(parts) != 6:
            raise FormatError(f"alignment line {lineno}: expected 6 fields")
        cid, gi, start, end, token, prov = parts
        try:
            word = AlignedWord(int(gi), token, float(start), float(end), Provenance(prov))
        except ValueError as exc:
            raise FormatError(f"alignment line {lineno}: {exc}") from exc
        out.setdefault(cid, []).append(word)
    return out
