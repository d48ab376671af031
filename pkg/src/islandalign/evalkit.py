"""Word error rate, category breakdowns and phrase-level metrics."""
from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Mapping, Sequence

from .corpus import Conversation, Speaker, normalize_words
from .pipeline import Segment
from .textalign import Op, edit_align

DASH = "\u2014"  # shown for undefined ratios


class EvalError(ValueError):
    pass


@dataclass(frozen=True)
class WerResult:
    n_ref_words: int
    substitutions: int
    deletions: int
    insertions: int

    @property
    def errors(self) -> int:
        return self.substitutions + self.deletions + self.insertions

    @property
    def wer(self) -> float | None:
        return self.errors / self.n_ref_words if self.n_ref_words else None

    def __add__(self, other: "WerResult") -> "WerResult":
        return WerResult(
            self.n_ref_words + other.n_ref_words,
            self.substitutions + other.substitutions,
            self.deletions + other.deletions,
            self.insertions + other.insertions,
        )


ZERO = WerResult(0, 0, 0, 0)


@dataclass(frozen=True)
class HypSegment:
    """Recognizer output for one turn. Unlike a reference segment it may be empty."""
    conversation_id: str
    turn_index: int
    tokens: tuple[str, ...]

    @property
    def key(self) -> tuple[str, int]:
        return self.conversation_id, self.turn_index

    @classmethod
    def from_dict(cls, d: dict) -> "HypSegment":
        return cls(d["conversation_id"], int(d["turn_index"]), normalize_words(d.get("tokens", ())))


def wer_pair(ref: Sequence[str], hyp: Sequence[str]) -> WerResult:
    path = edit_align(ref, hyp)
    return WerResult(len(ref), path.count(Op.SUB), path.count(Op.DEL), path.count(Op.INS))


def pair_segments(ref_segments: Iterable[Segment], hyp_segments: Iterable[Segment]) -> list[tuple[Segment, Segment]]:
    """Pair by (conversation_id, turn_index); any unpaired key is an error."""
    ref = {s.key: s for s in ref_segments}
    hyp = {s.key: s for s in hyp_segments}
    missing = sorted(set(ref) ^ set(hyp))
    if missing:
        shown = ", ".join(f"{c}/{t}" for c, t in missing[:10])
        raise EvalError(f"{len(missing)} unpaired segment(s): {shown}")
    return [(ref[k], hyp[k]) for k in sorted(ref)]


def wer(ref_segments: Iterable[Segment], hyp_segments: Iterable[Segment]) -> WerResult:
    """Corpus WER pooled over segment pairs."""
    total = ZERO
    for r, h in pair_segments(ref_segments, hyp_segments):
        total = total + wer_pair(r.tokens, h.tokens)
    return total


# ---------------------------------------------------------------------------
# breakdown


class Category(str, Enum):
    ALL = "ALL"
    SPEAKER = "SPEAKER"
    GENDER = "GENDER"
    DISEASE_AREA = "DISEASE_AREA"


@dataclass(frozen=True)
class BreakdownRow:
    category: Category
    label: str
    n_segments: int
    result: WerResult

    @property
    def n_words(self) -> int:
        return self.result.n_ref_words

    @property
    def wer(self) -> float | None:
        return self.result.wer


@dataclass(frozen=True)
class BreakdownReport:
    rows: tuple[BreakdownRow, ...]

    def row(self, category: Category, label: str) -> BreakdownRow:
        for r in self.rows:
            if r.category is category and r.label == label:
                return r
        raise KeyError((category, label))

    def to_dict(self) -> list[dict]:
        return [
            {
                "category": r.category.value,
                "label": r.label,
                "segments": r.n_segments,
                "words": r.n_words,
                "substitutions": r.result.substitutions,
                "deletions": r.result.deletions,
                "insertions": r.result.insertions,
                "wer": None if r.wer is None else round(r.wer, 6),
            }
            for r in self.rows
        ]


_SPEAKER_LABEL = {Speaker.DOCTOR: "Doctor", Speaker.PATIENT: "Patient"}
_GENDER_LABEL = {"M": "Male", "F": "Female"}


def breakdown(pairs: Sequence[tuple[Segment, Segment]], conversations: Mapping[str, Conversation]) -> BreakdownReport:
    """WER rows by speaker, doctor gender and disease area, in the order
    ALL, Doctor, Patient, Male, Female, then areas alphabetically."""
    acc: dict[tuple[Category, str], list] = {}

    def add(cat, label, res):
        slot = acc.setdefault((cat, label), [0, ZERO])
        slot[0] += 1
        slot[1] = slot[1] + res

    for cat, label in [(Category.ALL, "All"), (Category.SPEAKER, "Doctor"), (Category.SPEAKER, "Patient"),
                       (Category.GENDER, "Male"), (Category.GENDER, "Female")]:
        acc[(cat, label)] = [0, ZERO]
    for ref, hyp in pairs:
        conv = conversations.get(ref.conversation_id)
        if conv is None:
            raise EvalError(f"no metadata for conversation {ref.conversation_id}")
        res = wer_pair(ref.tokens, hyp.tokens)
        add(Category.ALL, "All", res)
        if ref.speaker in _SPEAKER_LABEL:
            add(Category.SPEAKER, _SPEAKER_LABEL[Speaker(ref.speaker)], res)
        add(Category.GENDER, _GENDER_LABEL[conv.metadata.doctor_gender], res)
        if conv.metadata.disease_area is not None:
            add(Category.DISEASE_AREA, conv.metadata.disease_area, res)
    order = {c: k for k, c in enumerate(Category)}
    keys = sorted(acc, key=lambda k: (order[k[0]], k[1] if k[0] is Category.DISEASE_AREA else ""))
    return BreakdownReport(tuple(BreakdownRow(c, l, acc[(c, l)][0], acc[(c, l)][1]) for c, l in keys))


def render_table(report: BreakdownReport) -> str:
    """Plain-text table: Category | Segments | Words | WER."""
    names = {Category.ALL: "All", Category.SPEAKER: "Speaker", Category.GENDER: "Gender",
             Category.DISEASE_AREA: "Disease area"}
    lines = [f"{'Category':<14}{'Segments':<16}{'Words':>10}{'WER':>8}", "-" * 48]
    prev = None
    for r in report.rows:
        if prev is not None and r.category is not prev:
            lines.append("-" * 48)
        cat = names[r.category] if r.category is not prev else ""
        w = DASH if r.wer is None else f"{100 * r.wer:.1f}"
        lines.append(f"{cat:<14}{r.label:<16}{r.n_words:>10,}{w:>8}")
        prev = r.category
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# phrases


@dataclass(frozen=True)
class PhraseCounts:
    ref_occurrences: int
    hyp_occurrences: int
    matched: int

    @property
    def precision(self) -> float | None:
        return self.matched / self.hyp_occurrences if self.hyp_occurrences else None

    @property
    def recall(self) -> float | None:
        return self.matched / self.ref_occurrences if self.ref_occurrences else None


@dataclass(frozen=True)
class PhraseMetrics:
    per_phrase: dict[tuple[str, ...], PhraseCounts]
    total: PhraseCounts

    @property
    def precision(self) -> float | None:
        return self.total.precision

    @property
    def recall(self) -> float | None:
        return self.total.recall

    def to_dict(self) -> dict:
        def fmt(c: PhraseCounts) -> dict:
            return {"ref": c.ref_occurrences, "hyp": c.hyp_occurrences, "matched": c.matched,
                    "precision": c.precision, "recall": c.recall}

        return {"total": fmt(self.total),
                "phrases": {" ".join(p): fmt(c) for p, c in sorted(self.per_phrase.items())}}


def count_occurrences(tokens: Sequence[str], phrase: Sequence[str]) -> int:
    """Greedy non-overlapping left-to-right count."""
    k = len(phrase)
    if k == 0:
        raise EvalError("empty phrase")
    phrase = tuple(phrase)
    n, i, count = len(tokens), 0, 0
    while i + k <= n:
        if tuple(tokens[i:i + k]) == phrase:
            count += 1
            i += k
        else:
            i += 1
    return count


def phrase_metrics(phrases: Iterable[Sequence[str]], ref_segments: Iterable[Segment],
                   hyp_segments: Iterable[Segment]) -> PhraseMetrics:
    """Segment-scoped phrase precision and recall.

    Per segment and phrase, ``matched = min(ref count, hyp count)``.
    Hypothesis occurrences in segments whose reference lacks the phrase count
    against precision.
    """
    phrases = [tuple(p) for p in phrases]
    if any(len(p) == 0 for p in phrases):
        raise EvalError("empty phrase")
    phrases = list(dict.fromkeys(phrases))
    pairs = pair_segments(ref_segments, hyp_segments)
    per = {}
    for p in phrases:
        r_tot = h_tot = m_tot = 0
        for ref, hyp in pairs:
            rc = count_occurrences(ref.tokens, p)
            hc = count_occurrences(hyp.tokens, p)
            r_tot += rc
            h_tot += hc
            m_tot += min(rc, hc)
        per[p] = PhraseCounts(r_tot, h_tot, m_tot)
    total = PhraseCounts(
        sum(c.ref_occurrences for c in per.values()),
        sum(c.hyp_occurrences for c in per.values()),
        sum(c.matched for c in per.values()),
    )
    return PhraseMetrics(per, total)


def lexicon_recall(lexicon: Iterable[Sequence[str]], ref_segments: Iterable[Segment],
                   hyp_segments: Iterable[Segment]) -> float | None:
    """Recall over lexicon entries that occur in the reference; None if none do."""
    lexicon = [tuple(e) for e in lexicon]
    if not lexicon:
        raise EvalError("empty lexicon")
    metrics = phrase_metrics(lexicon, ref_segments, hyp_segments)
    present = [c for c in metrics.per_phrase.values() if c.ref_occurrences]
    ref = sum(c.ref_occurrences for c in present)
    return sum(c.matched for c in present) / ref if ref else None


def read_phrase_file(text: str) -> list[tuple[str, ...]]:
    """One phrase per line, tokens space-separated; normalized like transcripts."""
    out = []
    for line in text.splitlines():
        toks = normalize_words(line.split())
        if toks:
            out.append(toks)
    return out


def fmt_ratio(x: float | None) -> str:
    return DASH if x is None else f"{x:.4f}"


def report_json(result: WerResult, report: BreakdownReport, phrases: PhraseMetrics | None = None,
                lexicon: float | None = None, has_lexicon: bool = False) -> str:
    doc = {
        "wer": {
            "n_ref_words": result.n_ref_words,
            "substitutions": result.substitutions,
            "deletions": result.deletions,
            "insertions": result.insertions,
            "wer": result.wer,
        },
        "breakdown": report.to_dict(),
    }
    if phrases is not None:
        doc["phrases"] = phrases.to_dict()
    if has_lexicon:
        doc["lexicon_recall"] = lexicon
    return json.dumps(doc, indent=1, sort_keys=False) + "\n"
