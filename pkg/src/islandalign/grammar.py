"""Constrained decoding grammar over a transcript.

The grammar is a linear chain: state ``i`` moves to ``i + 1`` on
``tokens[i]``, the start state has an epsilon arc to every other state, and
every state is final. Its language is exactly the set of contiguous
subsequences of the transcript, so it is stored as the token list and
queried with index arithmetic.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .kernels import substring_projection


# Normalized tokens never contain this (it counts as whitespace), so joined
# token strings can be searched for joined candidate strings directly.
_SEP = "\x1f"


@dataclass(frozen=True)
class LinearIslandGrammar:
    tokens: tuple[str, ...]
    _joined: str | None = field(init=False, repr=False, compare=False, default=None)

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(self.tokens))
        if not any(_SEP in t for t in self.tokens):
            object.__setattr__(self, "_joined", _SEP + _SEP.join(self.tokens) + _SEP)

    @property
    def n_states(self) -> int:
        return len(self.tokens) + 1

    @property
    def final_states(self) -> range:
        return range(self.n_states)

    def word_arcs(self) -> list[tuple[int, int, str]]:
        return [(i, i + 1, tok) for i, tok in enumerate(self.tokens)]

    def epsilon_arcs(self) -> list[tuple[int, int]]:
        # 0 -> 0 is implicit
        return [(0, i) for i in range(1, self.n_states)]

    def encode(self, seq: Sequence[str]) -> tuple[np.ndarray, np.ndarray]:
        """Integer ids for the grammar tokens and ``seq``; out-of-grammar words get fresh ids."""
        ids: dict[str, int] = {}
        ref = np.array([ids.setdefault(t, len(ids)) for t in self.tokens], dtype=np.int64)
        hyp = np.array([ids.setdefault(t, len(ids)) for t in seq], dtype=np.int64)
        return ref, hyp


def build_island_grammar(tokens: Sequence[str]) -> LinearIslandGrammar:
    tokens = tuple(tokens)
    if not tokens:
        raise ValueError("cannot build a grammar over an empty transcript")
    return LinearIslandGrammar(tokens)


def accepts(grammar: LinearIslandGrammar, seq: Sequence[str]) -> bool:
    """True iff ``seq`` is a contiguous run of the grammar's tokens."""
    k = len(seq)
    if k == 0:
        return True
    joined = grammar._joined
    if joined is not None:
        inner = _SEP.join(seq)
        if inner.count(_SEP) == k - 1:
            return f"{_SEP}{inner}{_SEP}" in joined
    seq = tuple(seq)
    toks = grammar.tokens
    for anchor in range(len(toks) - k + 1):
        if toks[anchor:anchor + k] == seq:
            return True
    return False


def grammar_project(grammar: LinearIslandGrammar, hyp: Sequence[str], backend=None) -> tuple[int, int, int]:
    """Accepted sequence nearest to ``hyp`` as ``(ref_start, ref_len, distance)``.

    Stands in for grammar-constrained decoding. Ties prefer the earlier start,
    then the shorter span.
    """
    if len(hyp) == 0:
        return 0, 0, 0
    ref_ids, hyp_ids = grammar.encode(hyp)
    return substring_projection(ref_ids, hyp_ids, backend=backend)
