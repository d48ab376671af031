"""Deterministic acoustic simulator and synthetic corpus generator.

Nothing here touches audio. A conversation is a ground-truth word timeline;
an "acoustic model" is a per-frame score matrix synthesized from it, and a
"recognizer" is an error channel applied to the timeline words that fall in
a time span.

Randomness comes from numpy's PCG64 seeded through ``SeedSequence`` with a
per-unit spawn key (conversation ordinal, chunk start), so every unit of
work can be regenerated independently. Frame noise uses a SplitMix64 counter
hash, so any frame window can be materialized without generating the rest.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .corpus import DEID, GAP, Conversation, Metadata, Speaker, Turn
from .grammar import LinearIslandGrammar, grammar_project
from .textalign import HypWord, Op, edit_align

FRAME_RATE_HZ = 100
MIN_WORD_SEC = 0.02
TURN_GAP_SEC = (0.1, 0.6)  # silence between turns

TARGET_AREAS = (
    "Cardiology",
    "Dermatology",
    "Diabetes",
    "Mental health",
    "Oncology",
    "Primary care",
    "Pulmonology",
    "Urology",
)
NONTARGET_AREAS = ("Gastroenterology", "Neurology", "Orthopedics", "Rheumatology")
INTERACTION_TYPES = {
    "Cardiology": ("Hypertension", "Atrial fibrillation", "Heart failure"),
    "Dermatology": ("Eczema", "Melanoma", "Acne"),
    "Diabetes": ("Type II Diabetes", "Type I Diabetes"),
    "Mental health": ("Depression", "Anxiety"),
    "Oncology": ("Breast cancer", "Lymphoma"),
    "Primary care": ("Annual physical", "Upper respiratory infection"),
    "Pulmonology": ("Asthma", "COPD"),
    "Urology": ("Kidney stones", "Prostate exam"),
    "Gastroenterology": ("Reflux", "Colonoscopy follow-up"),
    "Neurology": ("Migraine", "Epilepsy"),
    "Orthopedics": ("Knee pain", "Back pain"),
    "Rheumatology": ("Rheumatoid Arthritis", "Gout"),
    None: ("Wellness Visit",),
}


def make_rng(seed: int, *key: int) -> np.random.Generator:
    """PCG64 stream for ``seed`` and an integer spawn key."""
    ss = np.random.SeedSequence(int(seed) & 0xFFFFFFFFFFFFFFFF, spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.PCG64(ss))


def sub_seed(seed: int, *key: int) -> int:
    """64-bit seed for a unit of work, e.g. ``sub_seed(seed, conversation_ordinal)``."""
    ss = np.random.SeedSequence(int(seed) & 0xFFFFFFFFFFFFFFFF, spawn_key=tuple(int(k) for k in key))
    lo, hi = ss.generate_state(2, dtype=np.uint32)
    return int(hi) << 32 | int(lo)


def _ms(x: float) -> float:
    return round(float(x), 3)


# ---------------------------------------------------------------------------
# data types


@dataclass(frozen=True)
class TimedWord:
    global_index: int
    start_sec: float
    end_sec: float
    token: str


@dataclass(frozen=True)
class TrueTimeline:
    words: tuple[TimedWord, ...]
    audio_duration_sec: float

    def __post_init__(self):
        object.__setattr__(self, "words", tuple(self.words))
        prev_end = 0.0
        for k, w in enumerate(self.words):
            if w.global_index != k:
                raise ValueError(f"timeline index {w.global_index} at position {k}")
            if not (prev_end <= w.start_sec < w.end_sec):
                raise ValueError(f"timeline word {k} overlaps or is empty")
            prev_end = w.end_sec
        if prev_end > self.audio_duration_sec:
            raise ValueError("timeline runs past the audio")

    def tokens(self) -> list[str]:
        return [w.token for w in self.words]


@dataclass(frozen=True)
class ErrorModel:
    p_sub: float = 0.10
    p_del: float = 0.03
    p_ins: float = 0.02
    jitter_sd_sec: float = 0.05
    seed: int = 0

    def __post_init__(self):
        for name in ("p_sub", "p_del", "p_ins"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name} must be in [0, 1]")
        if self.p_sub + self.p_del > 1.0:
            raise ValueError("p_sub + p_del must not exceed 1")
        if self.jitter_sd_sec < 0:
            raise ValueError("jitter_sd_sec must be non-negative")


@dataclass(frozen=True)
class SimCorpusConfig:
    n_conversations: int = 20
    vocab_size: int = 800
    mean_turn_words: float = 12.0
    mean_conversation_min: float = 10.0
    turn_jitter_sec: float = 2.0
    deid_rate: float = 0.02
    n_doctors: int = 10
    male_fraction: float = 0.5
    target_areas: tuple[str, ...] = TARGET_AREAS
    nontarget_areas: tuple[str, ...] = NONTARGET_AREAS
    seed: int = 0

    def validate(self):
        problems = []
        if self.n_conversations < 1:
            problems.append("n_conversations must be >= 1")
        if self.vocab_size < 2:
            problems.append("vocab_size must be >= 2")
        if self.mean_turn_words < 1:
            problems.append("mean_turn_words must be >= 1")
        if self.mean_conversation_min <= 0:
            problems.append("mean_conversation_min must be > 0")
        if self.turn_jitter_sec < 0:
            problems.append("turn_jitter_sec must be >= 0")
        if not 0 <= self.deid_rate <= 1:
            problems.append("deid_rate must be in [0, 1]")
        if self.n_doctors < 1:
            problems.append("n_doctors must be >= 1")
        if not 0 <= self.male_fraction <= 1:
            problems.append("male_fraction must be in [0, 1]")
        if not self.target_areas and not self.nontarget_areas:
            problems.append("at least one disease area is required")
        if problems:
            raise ValueError("infeasible simulation config: " + "; ".join(problems))


# ---------------------------------------------------------------------------
# frame scores


_M1 = np.uint64(0x9E3779B97F4A7C15)
_M2 = np.uint64(0xBF58476D1CE4E5B9)
_M3 = np.uint64(0x94D049BB133111EB)
_COL = np.uint64(0xD1B54A32D192ED03)
_SALT = np.uint64(0x632BE59BD9B4E019)


def _splitmix64(x: np.ndarray) -> np.ndarray:
    z = x + _M1
    z = (z ^ (z >> np.uint64(30))) * _M2
    z = (z ^ (z >> np.uint64(27))) * _M3
    return z ^ (z >> np.uint64(31))


def frame_noise(seed: int, frames: np.ndarray, cols: np.ndarray) -> np.ndarray:
    """Standard normal draws indexed by (frame, column); pure function of its inputs."""
    frames = np.asarray(frames, dtype=np.uint64)
    cols = np.asarray(cols, dtype=np.uint64)
    key = _splitmix64(np.array([int(seed) & 0xFFFFFFFFFFFFFFFF], dtype=np.uint64))
    x = key ^ (frames[:, None] * _M1 + cols[None, :] * _COL)
    a = _splitmix64(x)
    b = _splitmix64(x ^ _SALT)
    scale = 1.0 / 9007199254740992.0  # 2**-53
    u1 = ((a >> np.uint64(11)).astype(np.float64) + 1.0) * scale  # (0, 1]
    u2 = (b >> np.uint64(11)).astype(np.float64) * scale
    return np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)


class FrameScores:
    """Per-frame, per-token log-scores at a fixed frame rate.

    Either wraps an explicit ``scores`` matrix or synthesizes scores on demand
    from a frame label track (``labels[t]`` is the vocab column that carries
    the signal at frame ``t``, or -1 for none). ``speech_bias`` is added to
    every word column on frames flagged in ``speech``: any word model fits
    speech better than it fits silence, whoever is talking.
    """

    def __init__(self, vocab: Sequence[str], frame_rate_hz: int = FRAME_RATE_HZ, scores=None, *,
                 labels=None, gain: float = 1.0, noise_sd: float = 1.0, seed: int = 0,
                 speech=None, speech_bias: float = 0.0):
        if frame_rate_hz <= 0:
            raise ValueError("frame_rate_hz must be positive")
        self.vocab = tuple(vocab)
        self.frame_rate_hz = int(frame_rate_hz)
        self._col = {tok: k for k, tok in enumerate(self.vocab)}
        if scores is not None:
            scores = np.asarray(scores, dtype=np.float64)
            if scores.ndim != 2 or scores.shape[1] != len(self.vocab):
                raise ValueError("scores must be n_frames x len(vocab)")
            if not np.all(np.isfinite(scores)):
                raise ValueError("scores must be finite")
            self._dense = scores
            self.n_frames = scores.shape[0]
        else:
            if labels is None:
                raise ValueError("need either scores or labels")
            self._dense = None
            self._labels = np.asarray(labels, dtype=np.int64)
            self.n_frames = self._labels.shape[0]
            self.gain = float(gain)
            self.noise_sd = float(noise_sd)
            self.seed = int(seed)
            self.speech_bias = float(speech_bias)
            self._speech = None if speech is None else np.asarray(speech, dtype=bool)

    @property
    def duration_sec(self) -> float:
        return self.n_frames / self.frame_rate_hz

    def column(self, token: str) -> int:
        try:
            return self._col[token]
        except KeyError:
            raise KeyError(f"token {token!r} is not in the score vocabulary") from None

    def window(self, f0: int, f1: int, tokens: Sequence[str]) -> np.ndarray:
        """Scores for frames ``[f0, f1)`` restricted to ``tokens`` (one column each)."""
        cols = np.array([self.column(t) for t in tokens], dtype=np.int64)
        if not 0 <= f0 <= f1 <= self.n_frames:
            raise IndexError(f"frame window [{f0}, {f1}) outside [0, {self.n_frames})")
        if self._dense is not None:
            return self._dense[f0:f1][:, cols]
        frames = np.arange(f0, f1, dtype=np.int64)
        out = frame_noise(self.seed, frames, cols) * self.noise_sd
        out += self.gain * (self._labels[f0:f1, None] == cols[None, :])
        if self.speech_bias and self._speech is not None:
            is_word = np.array([self.vocab[c] != GAP for c in cols])
            out += self.speech_bias * (self._speech[f0:f1, None] & is_word[None, :])
        return out

    @property
    def scores(self) -> np.ndarray:
        if self._dense is None:
            if getattr(self, "_full", None) is None:
                self._full = self.window(0, self.n_frames, self.vocab)
            return self._full
        return self._dense


def score_vocab(tokens: Sequence[str]) -> tuple[str, ...]:
    """Sorted distinct tokens plus the gap and de-identification symbols."""
    return tuple(sorted(set(tokens) - {GAP, DEID})) + (GAP, DEID)


def synth_frame_scores(timeline: TrueTimeline, vocab: Sequence[str] | None = None, gain: float = 1.0,
                       noise_sd: float = 1.0, seed: int = 0,
                       frame_rate_hz: int = FRAME_RATE_HZ, speech_bias: float = 0.0) -> FrameScores:
    """Scores = N(0, noise_sd) + gain on the true token (or ``<gap>`` between words).

    ``<deid>`` frames get no gain and no speech bias: that audio was zeroed.
    """
    if gain <= 0:
        raise ValueError("gain must be positive")
    if vocab is None:
        vocab = score_vocab(timeline.tokens())
    vocab = tuple(vocab)
    col = {tok: k for k, tok in enumerate(vocab)}
    if GAP not in col:
        raise ValueError("vocab must contain <gap>")
    n_frames = int(round(timeline.audio_duration_sec * frame_rate_hz))
    labels = np.full(n_frames, col[GAP], dtype=np.int64)
    if timeline.words:
        centers = (np.arange(n_frames) + 0.5) / frame_rate_hz
        starts = np.array([w.start_sec for w in timeline.words])
        ends = np.array([w.end_sec for w in timeline.words])
        owner = np.searchsorted(starts, centers, side="right") - 1
        inside = (owner >= 0) & (centers < ends[np.clip(owner, 0, None)])
        word_cols = np.array([col.get(w.token, -1) if w.token != DEID else -1 for w in timeline.words])
        labels[inside] = word_cols[owner[inside]]
        speech = inside.copy()
        speech[inside] = word_cols[owner[inside]] >= 0
    else:
        speech = np.zeros(n_frames, dtype=bool)
    return FrameScores(vocab, frame_rate_hz, labels=labels, gain=gain, noise_sd=noise_sd, seed=seed,
                       speech=speech, speech_bias=speech_bias)


# ---------------------------------------------------------------------------
# recognizer


def corrupt_tokens(tokens: Sequence[str], em: ErrorModel, rng: np.random.Generator,
                   vocab: Sequence[str]) -> list[tuple[str, int, str]]:
    """Apply the word error channel.

    Returns ``(token, source_index, kind)`` with kind in ``keep``, ``sub``,
    ``ins``. Every input word consumes the same number of draws whatever
    happens to it, so outcomes for a word do not depend on its neighbours.
    """
    vocab = list(vocab)
    out = []
    for k, tok in enumerate(tokens):
        u, u_ins = rng.random(2)
        pick_sub, pick_ins = rng.integers(0, max(len(vocab), 1), size=2)
        if u < em.p_del or tok == DEID:
            pass
        elif u < em.p_del + em.p_sub and len(vocab) > 1:
            sub = vocab[pick_sub]
            if sub == tok:
                sub = vocab[(pick_sub + 1) % len(vocab)]
            out.append((sub, k, "sub"))
        else:
            out.append((tok, k, "keep"))
        if u_ins < em.p_ins and vocab:
            out.append((vocab[pick_ins], k, "ins"))
    return out


def _fit_monotone(starts, ends, t0, t1, min_dur=MIN_WORD_SEC):
    n = len(starts)
    s = list(starts)
    e = list(ends)
    prev = t0
    for k in range(n):
        s[k] = max(s[k], prev)
        e[k] = max(e[k], s[k] + min_dur)
        prev = e[k]
    nxt = t1
    for k in range(n - 1, -1, -1):
        e[k] = min(e[k], nxt)
        s[k] = min(s[k], e[k] - min_dur)
        nxt = s[k]
    return s, e


def _interpolate_gaps(times, weights, t0, t1):
    """Fill ``None`` entries of ``times`` by spreading each untimed run over
    the gap between its timed neighbours, proportional to ``weights``."""
    n = len(times)
    out = list(times)
    k = 0
    while k < n:
        if out[k] is not None:
            k += 1
            continue
        j = k
        while j < n and out[j] is None:
            j += 1
        lo = out[k - 1][1] if k > 0 else t0
        hi = out[j][0] if j < n else t1
        hi = max(hi, lo)
        total = sum(weights[k:j])
        pos = lo
        for q in range(k, j):
            step = (hi - lo) * weights[q] / total
            out[q] = (pos, pos + step)
            pos += step
        k = j
    return out


def simulate_recognizer(timeline: TrueTimeline, span: tuple[float, float], em: ErrorModel,
                        grammar: LinearIslandGrammar | None = None,
                        vocab: Sequence[str] | None = None,
                        rng: np.random.Generator | None = None) -> list[HypWord]:
    """Noisy recognition of the timeline words whose midpoint lies in ``span``.

    With a grammar the corrupted word string is replaced by the nearest
    accepted sequence; its words take timestamps from the hypothesis words
    they align to and are interpolated otherwise.
    """
    t0, t1 = float(span[0]), float(span[1])
    if t1 <= t0:
        return []
    if rng is None:
        rng = make_rng(em.seed, int(round(t0 * 1000)))
    if vocab is None:
        vocab = sorted(set(timeline.tokens()) - {DEID})
    inside = [w for w in timeline.words if t0 <= 0.5 * (w.start_sec + w.end_sec) < t1]
    noisy = corrupt_tokens([w.token for w in inside], em, rng, vocab)
    toks, starts, ends = [], [], []
    for k, (tok, src, kind) in enumerate(noisy):
        w = inside[src]
        s, e = w.start_sec, w.end_sec
        host_kept = k > 0 and noisy[k - 1][1] == src and noisy[k - 1][2] != "ins"
        if kind == "ins" and host_kept:
            s = w.start_sec + 0.6 * (w.end_sec - w.start_sec)
            ends[-1] = s
        toks.append(tok)
        starts.append(s)
        ends.append(e)
    if em.jitter_sd_sec > 0 and toks:
        starts = list(np.asarray(starts) + rng.normal(0.0, em.jitter_sd_sec, len(toks)))
        ends = list(np.asarray(ends) + rng.normal(0.0, em.jitter_sd_sec, len(toks)))
    starts, ends = _fit_monotone(starts, ends, t0, t1)

    if grammar is not None:
        start, length, _ = grammar_project(grammar, toks)
        proj = list(grammar.tokens[start:start + length])
        times: list = [None] * len(proj)
        for op in edit_align(proj, toks).ops:
            if op.kind in (Op.MATCH, Op.SUB):
                times[op.ref_index] = (starts[op.hyp_index], ends[op.hyp_index])
        times = _interpolate_gaps(times, [len(t) for t in proj], t0, t1)
        toks = proj
        starts, ends = _fit_monotone([a for a, _ in times], [b for _, b in times], t0, t1)
    return [HypWord(tok, float(s), float(e)) for tok, s, e in zip(toks, starts, ends)]


class SimRecognizer:
    """Recognizer interface backed by ``simulate_recognizer``.

    Each span draws from its own stream keyed by the span start, so chunks
    can be recognized in any order.
    """

    def __init__(self, timeline: TrueTimeline, em: ErrorModel, vocab: Sequence[str] | None = None):
        self.timeline = timeline
        self.em = em
        self.vocab = sorted(set(timeline.tokens()) - {DEID}) if vocab is None else list(vocab)

    def __call__(self, span, grammar=None) -> list[HypWord]:
        return simulate_recognizer(self.timeline, span, self.em, grammar, vocab=self.vocab)


# ---------------------------------------------------------------------------
# corpus generator

_ONSETS = ("b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "ch", "sh", "th", "br", "st", "tr")
_VOWELS = ("a", "e", "i", "o", "u", "ai", "ea", "oo")
_CODAS = ("", "", "", "n", "r", "s", "t", "l", "m")


def make_vocab(size: int, rng: np.random.Generator) -> list[str]:
    """Distinct pronounceable pseudo-words, shortest first (frequent ranks get short words)."""
    words: set[str] = set()
    while len(words) < size:
        n_syl = 1 + int(rng.integers(0, 4))
        w = "".join(
            _ONSETS[rng.integers(len(_ONSETS))] + _VOWELS[rng.integers(len(_VOWELS))]
            + _CODAS[rng.integers(len(_CODAS))]
            for _ in range(n_syl)
        )
        words.add(w)
    return sorted(words, key=lambda w: (len(w), w))


def _zipf_weights(n: int) -> np.ndarray:
    w = 1.0 / (np.arange(n) + 2.7)
    return w / w.sum()


def _word_duration(token: str, rng) -> float:
    return (0.08 + 0.06 * len(token)) * rng.uniform(0.8, 1.2)


def _speaker(k: int, rng) -> Speaker:
    if k % 2 == 0:
        return Speaker.DOCTOR
    u = rng.random()
    if u < 0.06:
        return Speaker.CAREGIVER
    if u < 0.08:
        return Speaker.OTHER
    return Speaker.PATIENT


def _turn_length(mean: float, rng) -> int:
    # a quarter of turns are backchannels of 1-3 words; the rest keep the mean
    short = rng.random() < 0.25
    if mean <= 2:
        return max(1, int(round(mean)))
    if short:
        return int(rng.integers(1, 4))
    lam = (mean - 0.25 * 2.0) / 0.75
    return int(rng.poisson(lam - 1)) + 1


def generate_conversation(cfg: SimCorpusConfig, ordinal: int, vocab: Sequence[str],
                          doctors: Sequence[tuple[str, str]]) -> tuple[Conversation, TrueTimeline]:
    rng = make_rng(cfg.seed, 1, ordinal)
    weights = _zipf_weights(len(vocab))
    target = cfg.mean_conversation_min * 60.0 * rng.uniform(0.85, 1.15)

    t = _ms(rng.uniform(0.3, 1.5))
    raw_turns = []  # (speaker, [(token, start, end)])
    words: list[TimedWord] = []
    k = 0
    while t < target or not raw_turns:
        n = _turn_length(cfg.mean_turn_words, rng)
        toks = [vocab[i] for i in rng.choice(len(vocab), size=n, p=weights)]
        if rng.random() < cfg.deid_rate:
            toks[int(rng.integers(n))] = DEID
        timed = []
        for tok in toks:
            dur = _word_duration(tok if tok != DEID else "xxxxx", rng)
            start, end = t, _ms(t + max(dur, 0.05))
            timed.append((tok, start, end))
            words.append(TimedWord(len(words), start, end, tok))
            t = _ms(end + rng.uniform(0.02, 0.15))
        raw_turns.append((_speaker(k, rng), timed))
        t = _ms(words[-1].end_sec + rng.uniform(*TURN_GAP_SEC))
        k += 1
    duration = _ms(words[-1].end_sec + rng.uniform(0.5, 1.5))

    turns = []
    prev_start = 0.0
    jit = cfg.turn_jitter_sec
    for speaker, timed in raw_turns:
        a = min(max(timed[0][1] + rng.uniform(-jit, jit), 0.0), duration)
        b = min(max(timed[-1][2] + rng.uniform(-jit, jit), 0.0), duration)
        a = _ms(max(a, prev_start))
        b = _ms(max(b, a))
        prev_start = a
        turns.append(Turn(speaker, a, b, tuple(tok for tok, _, _ in timed)))

    doctor_id, gender = doctors[int(rng.integers(len(doctors)))]
    areas = list(cfg.target_areas) + list(cfg.nontarget_areas)
    area = areas[int(rng.integers(len(areas)))] if areas else None
    kinds = INTERACTION_TYPES.get(area, (f"{area} visit",))
    meta = Metadata(doctor_id, gender, kinds[int(rng.integers(len(kinds)))], area)
    conv = Conversation(f"conv{ordinal:05d}", meta, tuple(turns), duration)
    return conv, TrueTimeline(tuple(words), duration)


def doctor_pool(cfg: SimCorpusConfig) -> list[tuple[str, str]]:
    rng = make_rng(cfg.seed, 0, 1)
    n_male = int(round(cfg.n_doctors * cfg.male_fraction))
    genders = np.array(["M"] * n_male + ["F"] * (cfg.n_doctors - n_male))
    rng.shuffle(genders)
    return [(f"dr{i:04d}", str(g)) for i, g in enumerate(genders)]


def generate_corpus(cfg: SimCorpusConfig) -> list[tuple[Conversation, TrueTimeline]]:
    """Synthetic conversations with jittered turn stamps and their true timelines."""
    cfg.validate()
    vocab = make_vocab(cfg.vocab_size, make_rng(cfg.seed, 0, 0))
    doctors = doctor_pool(cfg)
    return [generate_conversation(cfg, i, vocab, doctors) for i in range(cfg.n_conversations)]


# ---------------------------------------------------------------------------
# truth files: "global_index start_sec end_sec token"


def format_truth(timeline: TrueTimeline) -> str:
    return "".join(f"{w.global_index} {w.start_sec:.3f} {w.end_sec:.3f} {w.token}\n" for w in timeline.words)


def parse_truth(text: str, audio_duration_sec: float) -> TrueTimeline:
    words = []
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        parts = line.split(" ")
        if len(parts) != 4:
            raise ValueError(f"truth line {lineno}: expected 4 fields")
        words.append(TimedWord(int(parts[0]), float(parts[1]), float(parts[2]), parts[3]))
    return TrueTimeline(tuple(words), audio_duration_sec)
