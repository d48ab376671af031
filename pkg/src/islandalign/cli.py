"""Command-line entry point: ``islandalign {simulate,align,segment,split,eval}``.

Every knob has a default; a JSON config file (``--config``, keys are the
snake_case field names of :class:`RunConfig`) overrides the defaults and
explicit flags override the file.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import tempfile
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

import numpy as np

from . import corpus as cm
from . import evalkit, pipeline, sim
from .forcealign import AlignmentError, drop_worst_tail
from .split import SplitInfeasible, SplitSpec, split_corpus

log = logging.getLogger("islandalign")

EXIT_OK, EXIT_PARTIAL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    seed: int = 0
    corpus: str | None = None
    out: str | None = None
    jobs: int = 1
    # simulate
    n_conversations: int = 20
    vocab_size: int = 800
    mean_turn_words: float = 12.0
    mean_conversation_min: float = 10.0
    turn_jitter_sec: float = 2.0
    deid_rate: float = 0.02
    n_doctors: int = 10
    male_fraction: float = 0.5
    # align
    strategy: str = "two-pass"
    chunk_sec: float = 10.0
    min_island_len: int = 5
    buffer_sec: float = 1.0
    tail_fraction: float = 0.10
    gap_pad_sec: float = 0.1
    interpolation: str = "chars"
    p_sub: float = 0.10
    p_del: float = 0.03
    p_ins: float = 0.02
    jitter_sd_sec: float = 0.05
    gain: float = 1.0
    noise_sd: float = 1.0
    speech_bias: float = 0.6
    # segment
    align_dir: str | None = None
    role: str = "train"
    # split
    k_test: int = 100
    target_areas: list[str] | None = None
    n_target_test: int = 64
    n_nontarget_test: int = 36
    gender_balance: bool = True
    # eval
    ref: str | None = None
    hyp: str | None = None
    simulate_errors: bool = False
    phrases: str | None = None
    lexicon: str | None = None

    def pipeline_config(self) -> pipeline.PipelineConfig:
        return pipeline.PipelineConfig(self.chunk_sec, self.min_island_len, self.buffer_sec,
                                       self.tail_fraction, self.gap_pad_sec, self.interpolation)

    def error_model(self) -> sim.ErrorModel:
        return sim.ErrorModel(self.p_sub, self.p_del, self.p_ins, self.jitter_sd_sec, self.seed)

    def acoustics(self) -> pipeline.SimAcoustics:
        return pipeline.SimAcoustics(self.gain, self.noise_sd, self.speech_bias, self.error_model())

    def sim_config(self) -> sim.SimCorpusConfig:
        return sim.SimCorpusConfig(
            n_conversations=self.n_conversations, vocab_size=self.vocab_size,
            mean_turn_words=self.mean_turn_words, mean_conversation_min=self.mean_conversation_min,
            turn_jitter_sec=self.turn_jitter_sec, deid_rate=self.deid_rate, n_doctors=self.n_doctors,
            male_fraction=self.male_fraction, seed=self.seed,
        )

    def split_spec(self) -> SplitSpec:
        areas = sim.TARGET_AREAS if self.target_areas is None else tuple(self.target_areas)
        return SplitSpec(self.k_test, areas, self.n_target_test, self.n_nontarget_test, self.gender_balance)


# ---------------------------------------------------------------------------
# file helpers


def write_atomic(path: Path, data: bytes | str):
    if isinstance(data, str):
        data = data.encode("utf-8")
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def dump_json(obj) -> str:
    return json.dumps(obj, indent=1, sort_keys=True) + "\n"


def load_corpus(corpus_dir: Path) -> list[tuple[cm.Conversation, sim.TrueTimeline | None]]:
    if not corpus_dir.is_dir():
        raise UsageError(f"corpus directory {corpus_dir} does not exist")
    files = sorted(corpus_dir.glob("*.json"))
    if not files:
        raise UsageError(f"no conversation files in {corpus_dir}")
    out = []
    for f in files:
        conv = cm.parse_conversation(f.read_bytes())
        truth = f.with_suffix(".truth")
        tl = sim.parse_truth(truth.read_text("utf-8"), conv.audio_duration_sec) if truth.exists() else None
        out.append((conv, tl))
    return out


def read_segments(path: Path) -> list[dict]:
    if not path.exists():
        raise UsageError(f"segment file {path} does not exist")
    return [json.loads(line) for line in path.read_text("utf-8").splitlines() if line.strip()]


def segments_jsonl(segments) -> str:
    return "".join(json.dumps(s.to_dict(), ensure_ascii=False) + "\n" for s in segments)


# ---------------------------------------------------------------------------
# commands


def cmd_simulate(cfg: RunConfig) -> int:
    if not cfg.out:
        raise UsageError("simulate needs --out")
    scfg = cfg.sim_config()
    try:
        scfg.validate()
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    out = Path(cfg.out)
    for conv, tl in sim.generate_corpus(scfg):
        write_atomic(out / f"{conv.conversation_id}.json", cm.serialize_conversation(conv))
        write_atomic(out / f"{conv.conversation_id}.truth", sim.format_truth(tl))
    log.info("wrote %d conversations to %s", scfg.n_conversations, out)
    return EXIT_OK


def _align_one(args):
    conv, tl, cfg = args
    try:
        res = pipeline.align_simulated(conv, tl, cfg.strategy, cfg.pipeline_config(), cfg.acoustics(), cfg.seed)
    except (AlignmentError, ValueError) as exc:
        return conv.conversation_id, None, str(exc)
    return conv.conversation_id, res, None


def cmd_align(cfg: RunConfig) -> int:
    if cfg.strategy not in pipeline.STRATEGIES:
        raise UsageError(f"unknown strategy {cfg.strategy!r}; choose from {', '.join(pipeline.STRATEGIES)}")
    if not cfg.corpus or not cfg.out:
        raise UsageError("align needs --corpus and --out")
    try:
        cfg.pipeline_config()
        cfg.acoustics()
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    items = load_corpus(Path(cfg.corpus))
    out = Path(cfg.out)
    work = [(conv, tl, cfg) for conv, tl in items]
    if cfg.jobs > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            results = list(pool.map(_align_one, work))
    else:
        results = [_align_one(w) for w in work]

    failed = 0
    coverage = {}
    scores = {}
    errors = {}
    total = None
    timelines = {conv.conversation_id: (conv, tl) for conv, tl in items}
    for cid, res, err in results:
        if res is None:
            log.error("%s: %s", cid, err)
            failed += 1
            continue
        write_atomic(out / f"{cid}.align", cm.format_alignment(cid, res.words))
        if res.coverage is not None:
            c = res.coverage
            coverage[cid] = {"words_total": c.words_total, "pass1": c.words_pass1, "pass2": c.words_pass2,
                             "interpolated": c.words_interpolated}
            total = c if total is None else total + c
        if res.turn_scores is not None:
            scores[cid] = {str(s.turn_index): round(sc, 6) for s, sc in zip(res.segments, res.turn_scores)}
        conv, tl = timelines[cid]
        if tl is not None:
            errors[cid] = pipeline.turn_boundary_errors(res.segments, conv, tl)

    # knobs only: paths and --jobs must not leak into the output tree
    knobs = {k: v for k, v in asdict(cfg).items() if k not in _NOT_KNOBS}
    manifest = {"strategy": cfg.strategy, "config": knobs}
    write_atomic(out / "run.json", dump_json(manifest))
    if total is not None:
        write_atomic(out / "coverage.json", dump_json({
            "words_total": total.words_total, "pass1": total.words_pass1, "pass2": total.words_pass2,
            "interpolated": total.words_interpolated,
            "fraction_pass1": round(total.pass1_fraction, 6),
            "fraction_pass2": round(total.pass2_fraction, 6),
            "conversations": coverage,
        }))
        log.info("coverage: pass1 %.3f, pass1+2 %.3f", total.pass1_fraction, total.pass2_fraction)
    if scores:
        write_atomic(out / "turn_scores.json", dump_json(scores))
    if errors:
        pooled = np.concatenate(list(errors.values()))
        report = {
            "strategy": cfg.strategy,
            "boundaries": int(pooled.size),
            "median_abs_error_sec": round(float(np.median(pooled)), 6),
            "mean_abs_error_sec": round(float(np.mean(pooled)), 6),
            "conversations": {cid: round(float(np.median(e)), 6) for cid, e in errors.items()},
        }
        write_atomic(out / "boundary_errors.json", dump_json(report))
        log.info("median turn-boundary error %.3f s", report["median_abs_error_sec"])
    return EXIT_PARTIAL if failed else EXIT_OK


def cmd_segment(cfg: RunConfig) -> int:
    if not cfg.corpus or not cfg.align_dir or not cfg.out:
        raise UsageError("segment needs --corpus, --align-dir and --out")
    try:
        role = pipeline.Role(cfg.role.upper())
    except ValueError:
        raise UsageError(f"unknown role {cfg.role!r}; use train or test") from None
    align_dir = Path(cfg.align_dir)
    run_file = align_dir / "run.json"
    if not run_file.exists():
        raise UsageError(f"{align_dir} has no run.json; run align first")
    source = pipeline.STRATEGIES[json.loads(run_file.read_text("utf-8"))["strategy"]]
    scores_file = align_dir / "turn_scores.json"
    scores = json.loads(scores_file.read_text("utf-8")) if scores_file.exists() else {}

    segments, scored, failed = [], [], 0
    for conv, _ in load_corpus(Path(cfg.corpus)):
        cid = conv.conversation_id
        f = align_dir / f"{cid}.align"
        if not f.exists():
            log.error("%s: no alignment file", cid)
            failed += 1
            continue
        words = cm.parse_alignment(f.read_text("utf-8")).get(cid, [])
        if len(words) != conv.n_words:
            log.error("%s: alignment has %d words, transcript %d", cid, len(words), conv.n_words)
            failed += 1
            continue
        words.sort(key=lambda w: w.global_index)
        for ti, (a, b) in enumerate(conv.turn_word_ranges()):
            turn = conv.turns[ti]
            if all(t == cm.DEID for t in turn.words):
                continue
            start = words[a].start_sec
            end = max(words[b - 1].end_sec, start + 0.001)
            seg = pipeline.Segment(cid, ti, turn.speaker, start, end, turn.words, source)
            if source is pipeline.Source.BUFFERED and cid in scores:
                scored.append((seg, float(scores[cid].get(str(ti), float("-inf")))))
            else:
                segments.append(seg)
    n_cut = len(segments) + len(scored)
    if scored:
        kept = drop_worst_tail(scored, cfg.tail_fraction)
        log.info("tail drop: removed %d of %d buffered segments", len(scored) - len(kept), len(scored))
        segments.extend(kept)
        segments.sort(key=lambda s: s.key)
    deid = sum(cm.DEID in s.tokens for s in segments)
    kept = pipeline.filter_segments(segments, role)
    log.info("segments: %d cut, %d after tail drop, %d with de-id tag, %d too short for %s, %d kept",
             n_cut, len(segments), deid, len(segments) - deid - len(kept), role.value, len(kept))
    write_atomic(Path(cfg.out), segments_jsonl(kept))
    return EXIT_PARTIAL if failed else EXIT_OK


def cmd_split(cfg: RunConfig) -> int:
    if not cfg.corpus or not cfg.out:
        raise UsageError("split needs --corpus and --out")
    try:
        spec = cfg.split_spec()
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    convs = [c for c, _ in load_corpus(Path(cfg.corpus))]
    try:
        train, test = split_corpus(convs, spec, cfg.seed)
    except SplitInfeasible as exc:
        log.error("split infeasible: %s", exc)
        return EXIT_USAGE
    out = Path(cfg.out)
    write_atomic(out / "train.ids", "".join(f"{i}\n" for i in train))
    write_atomic(out / "test.ids", "".join(f"{i}\n" for i in test))
    log.info("split: %d test, %d train, %d excluded", len(test), len(train), len(convs) - len(test) - len(train))
    return EXIT_OK


def simulate_hypotheses(refs: list[pipeline.Segment], em: sim.ErrorModel) -> list[evalkit.HypSegment]:
    vocab = sorted({t for s in refs for t in s.tokens} - {cm.DEID})
    out = []
    for s in refs:
        rng = sim.make_rng(em.seed, 3, zlib.crc32(s.conversation_id.encode("utf-8")), s.turn_index)
        toks = [t for t, _, _ in sim.corrupt_tokens(s.tokens, em, rng, vocab)]
        out.append(evalkit.HypSegment(s.conversation_id, s.turn_index, tuple(toks)))
    return out


def cmd_eval(cfg: RunConfig) -> int:
    if not cfg.ref or not cfg.corpus or not cfg.out:
        raise UsageError("eval needs --ref, --corpus and --out")
    if bool(cfg.hyp) == bool(cfg.simulate_errors):
        raise UsageError("eval needs exactly one of --hyp or --simulate-errors")
    refs = [pipeline.Segment.from_dict(d) for d in read_segments(Path(cfg.ref))]
    if cfg.simulate_errors:
        try:
            hyps = simulate_hypotheses(refs, cfg.error_model())
        except ValueError as exc:
            raise UsageError(str(exc)) from None
    else:
        hyps = [evalkit.HypSegment.from_dict(d) for d in read_segments(Path(cfg.hyp))]
    convs = {c.conversation_id: c for c, _ in load_corpus(Path(cfg.corpus))}
    result = evalkit.wer(refs, hyps)
    report = evalkit.breakdown(evalkit.pair_segments(refs, hyps), convs)
    phrases = lexicon = None
    if cfg.phrases:
        phrases = evalkit.phrase_metrics(evalkit.read_phrase_file(Path(cfg.phrases).read_text("utf-8")), refs, hyps)
    if cfg.lexicon:
        lexicon = evalkit.lexicon_recall(evalkit.read_phrase_file(Path(cfg.lexicon).read_text("utf-8")), refs, hyps)
    out = Path(cfg.out)
    table = evalkit.render_table(report)
    write_atomic(out / "report.json", evalkit.report_json(result, report, phrases, lexicon, bool(cfg.lexicon)))
    write_atomic(out / "report.txt", table)
    sys.stdout.write(table)
    log.info("WER %s over %d words (S=%d D=%d I=%d)", evalkit.fmt_ratio(result.wer), result.n_ref_words,
             result.substitutions, result.deletions, result.insertions)
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "align": cmd_align,
    "segment": cmd_segment,
    "split": cmd_split,
    "eval": cmd_eval,
}

_NOT_KNOBS = {"corpus", "out", "jobs", "align_dir", "ref", "hyp", "phrases", "lexicon"}

_HELP = {
    "simulate": "generate a synthetic corpus with truth timelines",
    "align": "align every conversation with one strategy",
    "segment": "cut aligned turns into filtered segments (JSONL)",
    "split": "doctor-disjoint train/test split",
    "eval": "WER breakdown and phrase metrics",
}
_FLAGS = {
    "simulate": ["out", "n_conversations", "vocab_size", "mean_turn_words", "mean_conversation_min",
                 "turn_jitter_sec", "deid_rate", "n_doctors", "male_fraction"],
    "align": ["corpus", "out", "strategy", "jobs", "chunk_sec", "min_island_len", "buffer_sec", "gap_pad_sec",
              "interpolation", "p_sub", "p_del", "p_ins", "jitter_sd_sec", "gain", "noise_sd", "speech_bias"],
    "segment": ["corpus", "align_dir", "out", "role", "tail_fraction"],
    "split": ["corpus", "out", "k_test", "target_areas", "n_target_test", "n_nontarget_test", "gender_balance"],
    "eval": ["corpus", "ref", "hyp", "simulate_errors", "out", "phrases", "lexicon", "p_sub", "p_del", "p_ins"],
}


def _add_flag(p: argparse.ArgumentParser, name: str):
    f = {f.name: f for f in fields(RunConfig)}[name]
    flag = "--" + name.replace("_", "-")
    default = f.default
    if name == "gender_balance":
        p.add_argument(flag, action=argparse.BooleanOptionalAction, default=argparse.SUPPRESS,
                       help="require equal male/female doctors in test (default on)")
    elif name == "simulate_errors":
        p.add_argument(flag, action="store_true", default=argparse.SUPPRESS,
                       help="score error-channel hypotheses generated from --ref")
    elif name == "target_areas":
        p.add_argument(flag, type=lambda s: [a.strip() for a in s.split(",") if a.strip()],
                       default=argparse.SUPPRESS, help="comma-separated target disease areas")
    elif name == "strategy":
        p.add_argument(flag, choices=sorted(pipeline.STRATEGIES), default=argparse.SUPPRESS,
                       help=f"alignment strategy (default {default})")
    else:
        kind = {int: int, float: float}.get(type(default), str)
        p.add_argument(flag, type=kind, default=argparse.SUPPRESS,
                       help=f"default: {default}" if default is not None else None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="islandalign", description=__doc__.splitlines()[0], allow_abbrev=False)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, flags in _FLAGS.items():
        p = sub.add_parser(name, help=_HELP[name], allow_abbrev=False)
        p.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="random seed (default 0)")
        p.add_argument("--config", default=None, help="JSON config file with RunConfig fields")
        for flag in flags:
            _add_flag(p, flag)
    return parser


def resolve_config(ns: argparse.Namespace) -> RunConfig:
    cfg = RunConfig()
    known = {f.name for f in fields(RunConfig)}
    if ns.config:
        try:
            data = json.loads(Path(ns.config).read_text("utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {ns.config}: {exc}") from None
        unknown = sorted(set(data) - known)
        if unknown:
            raise UsageError(f"unknown config keys: {', '.join(unknown)}")
        cfg = replace(cfg, **data)
    given = {k: v for k, v in vars(ns).items() if k in known}
    return replace(cfg, **given)


def main(argv=None) -> int:
    parser = build_parser()
    ns = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if ns.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        cfg = resolve_config(ns)
        return COMMANDS[ns.command](cfg)
    except UsageError as exc:
        log.error("%s", exc)
        return EXIT_USAGE
    except cm.FormatError as exc:
        log.error("bad input: %s", exc)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
