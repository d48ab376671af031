"""Long-audio transcript alignment with confidence islands."""
from .corpus import AlignedTranscript, AlignedWord, Conversation, Metadata, Provenance, Speaker, Turn
from .evalkit import WerResult, breakdown, lexicon_recall, phrase_metrics, wer
from .grammar import LinearIslandGrammar, accepts, build_island_grammar, grammar_project
from .pipeline import CoverageReport, PipelineConfig, Role, Segment, Source, align_simulated, two_pass_align
from .split import SplitInfeasible, SplitSpec, split_corpus
from .textalign import ConfidenceIsland, EditOp, EditPath, Op, edit_align

__version__ = "0.1.0"

__all__ = [
    "AlignedTranscript", "AlignedWord", "Conversation", "Metadata", "Provenance", "Speaker", "Turn",
    "WerResult", "breakdown", "lexicon_recall", "phrase_metrics", "wer",
    "LinearIslandGrammar", "accepts", "build_island_grammar", "grammar_project",
    "CoverageReport", "PipelineConfig", "Role", "Segment", "Source", "align_simulated", "two_pass_align",
    "SplitInfeasible", "SplitSpec", "split_corpus",
    "ConfidenceIsland", "EditOp", "EditPath", "Op", "edit_align",
]
