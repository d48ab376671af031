"""Forced alignment of a known word sequence onto a frame range."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence, TypeVar

from .corpus import GAP, Turn
from .kernels import segment_frames
from .sim import FrameScores

T = TypeVar("T")


class AlignmentError(ValueError):
    pass


@dataclass(frozen=True)
class WordSpan:
    global_index: int
    f0: int
    f1: int
    score: float

    def __post_init__(self):
        if self.f1 <= self.f0:
            raise ValueError("word span must cover at least one frame")

    @property
    def n_frames(self) -> int:
        return self.f1 - self.f0


def viterbi_segment(fs: FrameScores, tokens: Sequence[str], frames: tuple[int, int],
                    min_frames_per_word: int = 1, indices: Sequence[int] | None = None,
                    backend=None) -> list[WordSpan]:
    """Split ``frames`` into one contiguous span per token, in order, maximizing
    the summed frame score of each span under its token."""
    f0, f1 = int(frames[0]), int(frames[1])
    if not tokens:
        raise AlignmentError("nothing to align")
    if f1 - f0 < len(tokens) * min_frames_per_word:
        raise AlignmentError(
            f"range of {f1 - f0} frames is too short for {len(tokens)} words"
        )
    try:
        emit = fs.window(f0, f1, tokens)
    except KeyError as exc:
        raise AlignmentError(str(exc)) from None
    bounds, _ = segment_frames(emit, min_frames_per_word, backend=backend)
    if indices is None:
        indices = range(len(tokens))
    out = []
    for k, gi in enumerate(indices):
        a, b = int(bounds[k]), int(bounds[k + 1])
        out.append(WordSpan(int(gi), f0 + a, f0 + b, float(emit[a:b, k].sum())))
    return out


def normalized_path_score(spans: Sequence[WordSpan], fs: FrameScores | None = None) -> float:
    """Total span score per aligned frame."""
    if not spans:
        raise ValueError("no spans to score")
    frames = sum(s.n_frames for s in spans)
    return sum(s.score for s in spans) / frames


def buffered_word_spans(turn: Turn, fs: FrameScores, buffer_sec: float = 1.0,
                        edge_gap: bool = True, backend=None) -> list[WordSpan]:
    """Force-align a turn's words inside its annotated span widened by ``buffer_sec``.

    With ``edge_gap`` a ``<gap>`` filler is allowed before the first and after
    the last word, so audio of neighbouring turns can be left out.
    """
    if not turn.words:
        raise AlignmentError("turn has no words")
    rate = fs.frame_rate_hz
    f0 = max(0, int(math.floor((turn.ann_start_sec - buffer_sec) * rate)))
    f1 = min(fs.n_frames, int(math.ceil((turn.ann_end_sec + buffer_sec) * rate)))
    tokens = list(turn.words)
    if edge_gap:
        tokens = [GAP] + tokens + [GAP]
    spans = viterbi_segment(fs, tokens, (f0, f1), backend=backend)
    if edge_gap:
        spans = spans[1:-1]
    return [WordSpan(k, s.f0, s.f1, s.score) for k, s in enumerate(spans)]


def buffered_realign(turn: Turn, fs: FrameScores, buffer_sec: float = 1.0,
                     edge_gap: bool = True, backend=None) -> tuple[float, float, float]:
    """``(new_start_sec, new_end_sec, normalized score)`` for one turn."""
    spans = buffered_word_spans(turn, fs, buffer_sec, edge_gap, backend)
    rate = fs.frame_rate_hz
    return spans[0].f0 / rate, spans[-1].f1 / rate, normalized_path_score(spans)


def drop_worst_tail(scored_segments: Sequence[tuple[T, float]], fraction: float = 0.10) -> list[T]:
    """Drop the ``floor(fraction * N)`` lowest-scoring segments; keep input order.

    Among equal scores the earlier segment goes first.
    """
    if not 0.0 <= fraction < 1.0:
        raise ValueError("fraction must be in [0, 1)")
    n_drop = int(math.floor(fraction * len(scored_segments) + 1e-9))
    ranked = sorted(range(len(scored_segments)), key=lambda k: (scored_segments[k][1], k))
    dropped = set(ranked[:n_drop])
    return [seg for k, (seg, _) in enumerate(scored_segments) if k not in dropped]
