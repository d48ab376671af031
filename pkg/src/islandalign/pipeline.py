"""Two-pass conversation alignment and speaker-turn segmentation.

Pass 1 recognizes fixed-length chunks under the island grammar and keeps the
timestamps of long exact-match runs (confidence islands). Pass 2 force-aligns
every gap between islands on the frames the islands leave free. Whatever is
still untimed is interpolated from its neighbours.
"""
from __future__ import annotations

import logging
import math
import zlib
from dataclasses import dataclass, replace
from enum import Enum
from typing import Callable, Sequence

import numpy as np

from .corpus import (
    DEID,
    GAP,
    AlignedTranscript,
    AlignedWord,
    Conversation,
    Provenance,
    Speaker,
)
from .forcealign import AlignmentError, buffered_word_spans, normalized_path_score, viterbi_segment
from .grammar import LinearIslandGrammar, build_island_grammar
from .sim import ErrorModel, FrameScores, SimRecognizer, TrueTimeline, sub_seed, synth_frame_scores
from .textalign import ConfidenceIsland, HypWord, detect_islands, edit_align, monotone_island_chain

log = logging.getLogger(__name__)

Recognizer = Callable[[tuple[float, float], "LinearIslandGrammar | None"], list[HypWord]]


class Source(str, Enum):
    ORIGINAL = "ORIGINAL"
    BUFFERED = "BUFFERED"
    TWO_PASS = "TWO_PASS"


class Role(str, Enum):
    TRAIN = "TRAIN"
    TEST = "TEST"


STRATEGIES = {"original": Source.ORIGINAL, "buffered": Source.BUFFERED, "two-pass": Source.TWO_PASS}


@dataclass(frozen=True)
class Segment:
    conversation_id: str
    turn_index: int
    speaker: Speaker
    start_sec: float
    end_sec: float
    tokens: tuple[str, ...]
    source: Source

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(self.tokens))
        if not self.start_sec < self.end_sec:
            raise ValueError(f"segment {self.conversation_id}/{self.turn_index} has start >= end")
        if not self.tokens:
            raise ValueError(f"segment {self.conversation_id}/{self.turn_index} has no tokens")

    @property
    def key(self) -> tuple[str, int]:
        return self.conversation_id, self.turn_index

    def to_dict(self) -> dict:
        return {
            "conversation_id": self.conversation_id,
            "turn_index": self.turn_index,
            "speaker": Speaker(self.speaker).value,
            "start_sec": round(self.start_sec, 3),
            "end_sec": round(self.end_sec, 3),
            "tokens": list(self.tokens),
            "source": Source(self.source).value,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Segment":
        return cls(d["conversation_id"], int(d["turn_index"]), Speaker(d["speaker"]),
                   float(d["start_sec"]), float(d["end_sec"]), tuple(d["tokens"]), Source(d["source"]))


@dataclass(frozen=True)
class CoverageReport:
    words_total: int
    words_pass1: int
    words_pass2: int
    words_interpolated: int

    def __post_init__(self):
        if self.words_pass1 + self.words_pass2 + self.words_interpolated != self.words_total:
            raise ValueError("coverage counts do not add up")

    def _frac(self, n):
        return n / self.words_total if self.words_total else 0.0

    @property
    def pass1_fraction(self) -> float:
        return self._frac(self.words_pass1)

    @property
    def pass2_fraction(self) -> float:
        """Share timed after both passes (islands plus forced)."""
        return self._frac(self.words_pass1 + self.words_pass2)

    @property
    def interpolated_fraction(self) -> float:
        return self._frac(self.words_interpolated)

    def __add__(self, other: "CoverageReport") -> "CoverageReport":
        return CoverageReport(
            self.words_total + other.words_total,
            self.words_pass1 + other.words_pass1,
            self.words_pass2 + other.words_pass2,
            self.words_interpolated + other.words_interpolated,
        )


@dataclass(frozen=True)
class PipelineConfig:
    chunk_sec: float = 10.0
    min_island_len: int = 5
    buffer_sec: float = 1.0
    tail_fraction: float = 0.10
    gap_pad_sec: float = 0.1
    interpolation: str = "chars"  # or "uniform"

    def __post_init__(self):
        if self.chunk_sec <= 0:
            raise ValueError("chunk_sec must be positive")
        if self.min_island_len < 1:
            raise ValueError("min_island_len must be >= 1")
        if self.buffer_sec < 0 or self.gap_pad_sec < 0:
            raise ValueError("buffer_sec and gap_pad_sec must be non-negative")
        if not 0 <= self.tail_fraction < 1:
            raise ValueError("tail_fraction must be in [0, 1)")
        if self.interpolation not in ("chars", "uniform"):
            raise ValueError("interpolation must be 'chars' or 'uniform'")


@dataclass(frozen=True)
class SimAcoustics:
    """Simulated acoustic conditions used when a true timeline is available."""
    gain: float = 1.0
    noise_sd: float = 1.0
    speech_bias: float = 0.6
    em: ErrorModel = ErrorModel()


# ---------------------------------------------------------------------------
# pass 1


def chunk_spans(duration_sec: float, chunk_sec: float = 10.0) -> list[tuple[float, float]]:
    if duration_sec <= 0:
        raise ValueError("duration must be positive")
    n = max(1, math.ceil(duration_sec / chunk_sec - 1e-9))
    return [(k * chunk_sec, min((k + 1) * chunk_sec, duration_sec)) for k in range(n)]


def pass1(conversation: Conversation, recognizer: Recognizer, grammar: LinearIslandGrammar | None = None,
          chunk_sec: float = 10.0, min_island_len: int = 5) -> tuple[list[ConfidenceIsland], CoverageReport]:
    """Confidence islands for a conversation."""
    stream = conversation.tokens()
    if grammar is None:
        grammar = build_island_grammar(stream)
    hyp: list[HypWord] = []
    for cid, span in enumerate(chunk_spans(conversation.audio_duration_sec, chunk_sec)):
        try:
            words = recognizer(span, grammar)
        except Exception:
            log.warning("%s: recognizer failed on chunk %d %s", conversation.conversation_id, cid, span,
                        exc_info=True)
            continue
        last = len(words) - 1
        hyp.extend(
            replace(w, chunk_id=cid, is_chunk_first=k == 0, is_chunk_last=k == last)
            for k, w in enumerate(words)
        )
    path = edit_align(stream, [w.token for w in hyp])
    islands = monotone_island_chain(detect_islands(path, hyp, min_island_len))
    n1 = sum(len(isl) for isl in islands)
    n = len(stream)
    return islands, CoverageReport(n, n1, 0, n - n1)


# ---------------------------------------------------------------------------
# pass 2


def _island_words(conversation: Conversation, islands: Sequence[ConfidenceIsland]) -> list[AlignedWord]:
    stream = conversation.tokens()
    return [
        AlignedWord(gi, stream[gi], s, e, Provenance.ISLAND)
        for isl in islands
        for gi, s, e in isl.words
    ]


def _untimed_runs(timed: Sequence[bool]):
    k, n = 0, len(timed)
    while k < n:
        if timed[k]:
            k += 1
            continue
        j = k
        while j < n and not timed[j]:
            j += 1
        yield k, j
        k = j


def pass2(conversation: Conversation, islands: Sequence[ConfidenceIsland], frame_scores: FrameScores,
          pad_sec: float = 0.1, backend=None) -> tuple[list[AlignedWord], CoverageReport]:
    """Force-align each run of words left between islands.

    Returns only the new FORCED words. A run whose bounding islands are
    inverted, or whose frame range is shorter than the run, is left for
    interpolation.
    """
    stream = conversation.tokens()
    n = len(stream)
    duration = conversation.audio_duration_sec
    rate = frame_scores.frame_rate_hz
    times: list = [None] * n
    for w in _island_words(conversation, islands):
        times[w.global_index] = (w.start_sec, w.end_sec)
    forced = []
    for a, b in _untimed_runs([t is not None for t in times]):
        lo = times[a - 1][1] if a > 0 else 0.0
        hi = times[b][0] if b < n else duration
        if hi < lo:
            continue
        f0 = int(round((lo - pad_sec) * rate))
        f1 = int(round((hi + pad_sec) * rate))
        if a > 0:
            f0 = max(f0, int(math.floor(times[a - 1][0] * rate)) + 1)
        if b < n:
            f1 = min(f1, int(math.ceil(times[b][1] * rate)) - 1)
        f0 = max(f0, 0)
        f1 = min(f1, frame_scores.n_frames, int(math.floor(duration * rate + 1e-9)))
        if f1 - f0 < b - a:
            continue
        # a run that reaches either end of the audio may leave silence there
        lead, trail = [GAP] * (a == 0), [GAP] * (b == n)
        tokens = lead + list(stream[a:b]) + trail
        if f1 - f0 < len(tokens):
            tokens, lead, trail = list(stream[a:b]), [], []
        indices = [-1] * len(lead) + list(range(a, b)) + [-1] * len(trail)
        try:
            spans = viterbi_segment(frame_scores, tokens, (f0, f1), indices=indices, backend=backend)
        except AlignmentError:
            log.warning("%s: forced alignment failed for words %d-%d", conversation.conversation_id, a, b)
            continue
        for sp in spans[len(lead):len(spans) - len(trail)]:
            start = min(sp.f0 / rate, hi)  # a padded span must not start after the next island
            forced.append(AlignedWord(sp.global_index, stream[sp.global_index], start, sp.f1 / rate,
                                      Provenance.FORCED))
    n1 = sum(len(isl) for isl in islands)
    return forced, CoverageReport(n, n1, len(forced), n - n1 - len(forced))


# ---------------------------------------------------------------------------
# interpolation


def interpolate_residual(words: Sequence[AlignedWord], conversation: Conversation, mode: str = "chars",
                         frame_sec: float = 0.01) -> AlignedTranscript:
    """Complete an alignment by spreading every untimed run over the gap between
    its timed neighbours, proportional to token length (or evenly)."""
    stream = conversation.tokens()
    n = len(stream)
    duration = conversation.audio_duration_sec
    slots: list[AlignedWord | None] = [None] * n
    for w in words:
        if slots[w.global_index] is not None:
            raise ValueError(f"word {w.global_index} aligned twice")
        slots[w.global_index] = w
    n_island = sum(w.provenance is Provenance.ISLAND for w in words)
    n_forced = sum(w.provenance is Provenance.FORCED for w in words)
    for a, b in _untimed_runs([s is not None for s in slots]):
        lo = slots[a - 1].end_sec if a > 0 else 0.0
        hi = slots[b].start_sec if b < n else duration
        weights = [len(stream[k]) if mode == "chars" else 1 for k in range(a, b)]
        if hi - lo >= frame_sec * (b - a):
            total = float(sum(weights))
            pos = lo
            for k, wt in zip(range(a, b), weights):
                end = hi if k == b - 1 else pos + (hi - lo) * wt / total
                slots[k] = AlignedWord(k, stream[k], pos, end, Provenance.INTERPOLATED)
                pos = end
        else:
            # no room: stack one-frame words at the shared boundary
            base = min(lo, hi, duration - frame_sec)
            for k in range(a, b):
                slots[k] = AlignedWord(k, stream[k], base, base + frame_sec, Provenance.INTERPOLATED)
    return AlignedTranscript(
        conversation.conversation_id,
        tuple(slots),
        n_island / n if n else 0.0,
        (n_island + n_forced) / n if n else 0.0,
        duration,
    )


def two_pass_align(conversation: Conversation, recognizer: Recognizer, frame_scores: FrameScores,
                   cfg: PipelineConfig = PipelineConfig(), backend=None) -> tuple[AlignedTranscript, CoverageReport]:
    grammar = build_island_grammar(conversation.tokens())
    islands, _ = pass1(conversation, recognizer, grammar, cfg.chunk_sec, cfg.min_island_len)
    forced, coverage = pass2(conversation, islands, frame_scores, cfg.gap_pad_sec, backend=backend)
    aligned = interpolate_residual(_island_words(conversation, islands) + forced, conversation,
                                   cfg.interpolation, 1.0 / frame_scores.frame_rate_hz)
    return aligned, coverage


# ---------------------------------------------------------------------------
# segments


def cut_turns(aligned: AlignedTranscript, conversation: Conversation) -> list[Segment]:
    """One TWO_PASS segment per turn, spanning its first to last aligned word."""
    out = []
    for ti, (a, b) in enumerate(conversation.turn_word_ranges()):
        turn = conversation.turns[ti]
        if all(tok == DEID for tok in turn.words):
            continue
        start = aligned.words[a].start_sec
        end = max(aligned.words[b - 1].end_sec, start + 0.001)
        out.append(Segment(conversation.conversation_id, ti, turn.speaker, start, end, turn.words,
                           Source.TWO_PASS))
    return out


def filter_segments(segments: Sequence[Segment], role: Role | str) -> list[Segment]:
    """Drop de-identified segments always; short ones by role (TEST < 5 words, TRAIN < 2)."""
    role = Role(str(role).upper()) if not isinstance(role, Role) else role
    min_words = 5 if role is Role.TEST else 2
    return [s for s in segments if DEID not in s.tokens and len(s.tokens) >= min_words]


def _spread(lo: float, hi: float, tokens: Sequence[str], first_index: int) -> list[AlignedWord]:
    if hi - lo < 0.001 * len(tokens):
        hi = lo + 0.001 * len(tokens)
    weights = [len(t) for t in tokens]
    total = float(sum(weights))
    pos = lo
    out = []
    for k, (tok, wt) in enumerate(zip(tokens, weights)):
        end = hi if k == len(tokens) - 1 else pos + (hi - lo) * wt / total
        out.append(AlignedWord(first_index + k, tok, pos, end, Provenance.INTERPOLATED))
        pos = end
    return out


def original_align(conversation: Conversation) -> tuple[list[AlignedWord], list[Segment]]:
    """Annotated turn stamps as-is; words spread evenly by length within each turn."""
    words, segs = [], []
    for ti, ((a, _), turn) in enumerate(zip(conversation.turn_word_ranges(), conversation.turns)):
        lo, hi = turn.ann_start_sec, max(turn.ann_end_sec, turn.ann_start_sec + 0.01)
        words.extend(_spread(lo, hi, turn.words, a))
        if not all(tok == DEID for tok in turn.words):
            segs.append(Segment(conversation.conversation_id, ti, turn.speaker, lo, hi, turn.words,
                                Source.ORIGINAL))
    return words, segs


def buffered_align(conversation: Conversation, frame_scores: FrameScores, buffer_sec: float = 1.0,
                   backend=None) -> tuple[list[AlignedWord], list[tuple[Segment, float]]]:
    """Per-turn buffered realignment. Returns word timings and (segment, score) pairs."""
    rate = frame_scores.frame_rate_hz
    words, scored = [], []
    for ti, ((a, _), turn) in enumerate(zip(conversation.turn_word_ranges(), conversation.turns)):
        try:
            spans = buffered_word_spans(turn, frame_scores, buffer_sec, backend=backend)
        except AlignmentError:
            log.warning("%s: buffered realignment failed for turn %d", conversation.conversation_id, ti)
            lo, hi = turn.ann_start_sec, max(turn.ann_end_sec, turn.ann_start_sec + 0.01)
            words.extend(_spread(lo, hi, turn.words, a))
            score = -math.inf
        else:
            words.extend(
                AlignedWord(a + sp.global_index, turn.words[sp.global_index], sp.f0 / rate, sp.f1 / rate,
                            Provenance.FORCED)
                for sp in spans
            )
            lo, hi = spans[0].f0 / rate, spans[-1].f1 / rate
            score = normalized_path_score(spans)
        if not all(tok == DEID for tok in turn.words):
            scored.append((Segment(conversation.conversation_id, ti, turn.speaker, lo, hi, turn.words,
                                   Source.BUFFERED), score))
    return words, scored


# ---------------------------------------------------------------------------
# simulated end-to-end


@dataclass(frozen=True)
class AlignmentResult:
    conversation_id: str
    source: Source
    words: tuple[AlignedWord, ...]
    segments: tuple[Segment, ...]
    coverage: CoverageReport | None = None
    turn_scores: tuple[float, ...] | None = None


def conversation_seed(seed: int, conversation_id: str) -> int:
    return sub_seed(seed, zlib.crc32(conversation_id.encode("utf-8")))


def align_simulated(conversation: Conversation, timeline: TrueTimeline | None, strategy: str | Source,
                    cfg: PipelineConfig = PipelineConfig(), acoustics: SimAcoustics = SimAcoustics(),
                    seed: int = 0, backend=None) -> AlignmentResult:
    """Align one conversation with a strategy, using the simulator as acoustic model and recognizer."""
    source = STRATEGIES[strategy] if isinstance(strategy, str) else Source(strategy)
    cid = conversation.conversation_id
    if source is Source.ORIGINAL:
        words, segs = original_align(conversation)
        return AlignmentResult(cid, source, tuple(words), tuple(segs))
    if timeline is None:
        raise AlignmentError(f"{cid}: strategy {source.value} needs an acoustic source (truth timeline)")
    if len(timeline.words) != conversation.n_words:
        raise AlignmentError(f"{cid}: truth timeline does not match the transcript")
    cseed = conversation_seed(seed, cid)
    fs = synth_frame_scores(timeline, gain=acoustics.gain, noise_sd=acoustics.noise_sd, seed=cseed,
                            speech_bias=acoustics.speech_bias)
    if source is Source.BUFFERED:
        words, scored = buffered_align(conversation, fs, cfg.buffer_sec, backend=backend)
        return AlignmentResult(cid, source, tuple(words), tuple(s for s, _ in scored),
                               turn_scores=tuple(sc for _, sc in scored))
    em = replace(acoustics.em, seed=sub_seed(cseed, 1))
    recognizer = SimRecognizer(timeline, em)
    aligned, coverage = two_pass_align(conversation, recognizer, fs, cfg, backend=backend)
    return AlignmentResult(cid, source, aligned.words, tuple(cut_turns(aligned, conversation)), coverage)


def turn_boundary_errors(segments: Sequence[Segment], conversation: Conversation,
                         timeline: TrueTimeline) -> np.ndarray:
    """Absolute start and end errors (seconds) of segments against the true turn spans."""
    ranges = conversation.turn_word_ranges()
    errs = []
    for seg in segments:
        a, b = ranges[seg.turn_index]
        errs.append(abs(seg.start_sec - timeline.words[a].start_sec))
        errs.append(abs(seg.end_sec - timeline.words[b - 1].end_sec))
    return np.asarray(errs, dtype=np.float64)
