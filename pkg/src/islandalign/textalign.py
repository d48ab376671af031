"""Word-level edit alignment and confidence-island detection."""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import NamedTuple, Sequence

import numpy as np

from .kernels import edit_cost_matrix


class Op(str, Enum):
    MATCH = "MATCH"
    SUB = "SUB"
    DEL = "DEL"
    INS = "INS"


class EditOp(NamedTuple):
    kind: Op
    ref_index: int | None
    hyp_index: int | None


@dataclass(frozen=True)
class EditPath:
    ops: tuple[EditOp, ...]

    @property
    def cost(self) -> int:
        return sum(op.kind is not Op.MATCH for op in self.ops)

    def count(self, kind: Op) -> int:
        return sum(op.kind is kind for op in self.ops)


@dataclass(frozen=True)
class HypWord:
    token: str
    start_sec: float
    end_sec: float
    chunk_id: int = 0
    is_chunk_first: bool = False
    is_chunk_last: bool = False

    def __post_init__(self):
        if not self.start_sec < self.end_sec:
            raise ValueError(f"hypothesis word {self.token!r} has start >= end")


@dataclass(frozen=True)
class ConfidenceIsland:
    ref_start: int
    ref_stop: int
    # (global_index, start_sec, end_sec) per word in ref order
    words: tuple[tuple[int, float, float], ...]

    def __len__(self):
        return self.ref_stop - self.ref_start

    @property
    def start_sec(self) -> float:
        return self.words[0][1]

    @property
    def end_sec(self) -> float:
        return self.words[-1][2]


def _encode(ref, hyp):
    ids: dict[str, int] = {}
    r = np.array([ids.setdefault(t, len(ids)) for t in ref], dtype=np.int64)
    h = np.array([ids.setdefault(t, len(ids)) for t in hyp], dtype=np.int64)
    return r, h


def edit_align(ref: Sequence[str], hyp: Sequence[str], backend=None) -> EditPath:
    """Minimal unit-cost alignment of ``hyp`` against ``ref``.

    At each cell of the backtrace MATCH is preferred over SUB over DEL
    (ref word missing from hyp) over INS (extra hyp word).
    """
    r, h = _encode(ref, hyp)
    D = edit_cost_matrix(r, h, backend=backend)
    i, j = len(r), len(h)
    ops = []
    while i > 0 or j > 0:
        here = D[i, j]
        if i > 0 and j > 0:
            if r[i - 1] == h[j - 1] and here == D[i - 1, j - 1]:
                ops.append(EditOp(Op.MATCH, i - 1, j - 1))
                i -= 1
                j -= 1
                continue
            if r[i - 1] != h[j - 1] and here == D[i - 1, j - 1] + 1:
                ops.append(EditOp(Op.SUB, i - 1, j - 1))
                i -= 1
                j -= 1
                continue
        if i > 0 and here == D[i - 1, j] + 1:
            ops.append(EditOp(Op.DEL, i - 1, None))
            i -= 1
        else:
            ops.append(EditOp(Op.INS, None, j - 1))
            j -= 1
    ops.reverse()
    return EditPath(tuple(ops))


def _runs(flags: Sequence[bool]):
    """Half-open index runs of consecutive True values."""
    start = None
    for k, flag in enumerate(flags):
        if flag and start is None:
            start = k
        elif not flag and start is not None:
            yield start, k
            start = None
    if start is not None:
        yield start, len(flags)


def find_match_runs(path: EditPath, min_len: int) -> list[tuple[int, int]]:
    """Maximal runs of consecutive MATCH ops, as ref-index intervals."""
    if min_len < 1:
        raise ValueError("min_len must be >= 1")
    out = []
    for a, b in _runs([op.kind is Op.MATCH for op in path.ops]):
        if b - a >= min_len:
            out.append((path.ops[a].ref_index, path.ops[b - 1].ref_index + 1))
    return out


def detect_islands(
    path: EditPath, hyp_words: Sequence[HypWord], min_island_len: int = 5
) -> list[ConfidenceIsland]:
    """Confidence islands from an alignment of concatenated chunk hypotheses.

    Hypothesis words at either edge of a recognition chunk never enter an
    island; they split the run they sit in and fragments shorter than
    ``min_island_len`` are dropped.
    """
    islands = []
    ops = path.ops
    for a, b in _runs([op.kind is Op.MATCH for op in ops]):
        if b - a < min_island_len:
            continue
        trusted = []
        for op in ops[a:b]:
            hw = hyp_words[op.hyp_index]
            trusted.append(not (hw.is_chunk_first or hw.is_chunk_last))
        for c, d in _runs(trusted):
            if d - c < min_island_len:
                continue
            run = ops[a + c:a + d]
            words = tuple(
                (op.ref_index, hyp_words[op.hyp_index].start_sec, hyp_words[op.hyp_index].end_sec)
                for op in run
            )
            islands.append(ConfidenceIsland(run[0].ref_index, run[-1].ref_index + 1, words))
    return islands


def _compatible(a: ConfidenceIsland, b: ConfidenceIsland) -> bool:
    return a.ref_stop <= b.ref_start and a.end_sec <= b.start_sec


def monotone_island_chain(islands: Sequence[ConfidenceIsland]) -> list[ConfidenceIsland]:
    """Heaviest subset (by word count) increasing in both transcript and time."""
    order = sorted(range(len(islands)), key=lambda k: (islands[k].ref_start, islands[k].start_sec))
    isl = [islands[k] for k in order]
    n = len(isl)
    best = [0] * n
    prev = [-1] * n
    for k in range(n):
        best[k] = len(isl[k])
        for p in range(k):
            if _compatible(isl[p], isl[k]) and best[p] + len(isl[k]) > best[k]:
                best[k] = best[p] + len(isl[k])
                prev[k] = p
    if n == 0:
        return []
    k = max(range(n), key=lambda q: (best[q], -q))
    chain = []
    while k >= 0:
        chain.append(isl[k])
        k = prev[k]
    chain.reverse()
    return chain
