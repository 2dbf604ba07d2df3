"""Factual-consistency scoring, filtration and evaluation for summarization corpora."""

from .backend import (
    Backend,
    BackendDescriptor,
    DependencyArc,
    MockBackend,
    TokenEmbeddings,
    available_backends,
    create_backend,
    register_backend,
)
from .corpus import (
    Corpus,
    CorpusStats,
    Pair,
    corpus_stats,
    load_corpus,
    save_corpus,
    toy_corpus_path,
    word_count,
)
from .filtration import (
    FilterManifest,
    apply_manifest,
    intersect_filter,
    percentile_keep_set,
    random_selection,
)
from .metrics import BlancScore, EvalReport, RougeScore, blanc_help, evaluate_outputs, rouge2
from .scorers import (
    SCORERS,
    FactualityScore,
    ScoreFailure,
    ScoreTable,
    load_scores,
    score_arc_entailment,
    score_conditional_likelihood,
    score_corpus,
    score_greedy_precision,
    write_scores,
)
from .stats import (
    PartialCorrelationResult,
    WilcoxonResult,
    partial_pearson,
    pearson,
    wilcoxon_signed_rank,
)
from .validation import (
    CATEGORIES,
    FactualityAnnotation,
    FlipReport,
    flip_analysis,
    flip_labels,
    load_annotations,
    validate_scorer,
)

__version__ = "0.1.0"

__all__ = [
    "Backend",
    "BackendDescriptor",
    "BlancScore",
    "CATEGORIES",
    "Corpus",
    "CorpusStats",
    "DependencyArc",
    "EvalReport",
    "FactualityAnnotation",
    "FactualityScore",
    "FilterManifest",
    "FlipReport",
    "MockBackend",
    "Pair",
    "PartialCorrelationResult",
    "RougeScore",
    "SCORERS",
    "ScoreFailure",
    "ScoreTable",
    "TokenEmbeddings",
    "WilcoxonResult",
    "apply_manifest",
    "available_backends",
    "blanc_help",
    "corpus_stats",
    "create_backend",
    "evaluate_outputs",
    "flip_analysis",
    "flip_labels",
    "intersect_filter",
    "load_annotations",
    "load_corpus",
    "load_scores",
    "partial_pearson",
    "pearson",
    "percentile_keep_set",
    "random_selection",
    "register_backend",
    "rouge2",
    "save_corpus",
    "score_arc_entailment",
    "score_conditional_likelihood",
    "score_corpus",
    "score_greedy_precision",
    "toy_corpus_path",
    "validate_scorer",
    "wilcoxon_signed_rank",
    "word_count",
    "write_scores",
]
