"""Summary-quality evaluation: bigram overlap (ROUGE-2) and BLANC-help.

ROUGE-2 preprocessing is deliberately minimal and documented: lowercase,
Unicode-whitespace tokenization, no stemming, no stopword removal. BLANC-help
measures how much a summary (versus a neutral filler) improves a model's
masked-token reconstruction on each document sentence; the mask schedule is
deterministic so regression tests are byte-stable.
"""

from __future__ import annotations

import csv
import re
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .backend import Backend
from .corpus import Corpus
from .errors import (
    BackendError,
    CoverageError,
    DomainError,
    IntegrityError,
    ParseError,
    ScoringError,
)
from .filtration import FilterManifest
from .scorers import (
    arc_entailment_value,
    conditional_likelihood_value,
    greedy_precision_value,
)

# Mask token positions 0, 4, 8, ... but only tokens long enough to carry
# content; the filler is shorter than any maskable token, so it can never
# leak an answer to a token-identity backend.
MASK_STRIDE = 4
MIN_MASK_TOKEN_CHARS = 4
FILLER_TOKEN = "the"

_SENTENCE_BOUNDARY = re.compile(r"(?<=[.!?])\s+")

REFERENCE_FREE_METRICS = ("greedy", "condll", "dae", "blanc")
REFERENCE_BASED_METRICS = ("rouge2",)
ALL_METRICS = REFERENCE_BASED_METRICS + REFERENCE_FREE_METRICS


@dataclass(frozen=True)
class RougeScore:
    precision: float
    recall: float
    f1: float

    def __post_init__(self) -> None:
        for name, v in (("precision", self.precision), ("recall", self.recall),
                        ("f1", self.f1)):
            if not 0.0 <= v <= 1.0:
                raise DomainError(f"rouge {name} {v} outside [0, 1]")


@dataclass(frozen=True)
class BlancScore:
    value: float
    n_sentences: int
    n_masked_tokens: int

    def __post_init__(self) -> None:
        if abs(self.value) > 1.0:
            raise DomainError(f"blanc value {self.value} outside [-1, 1]")


def _tokenize(text: str) -> list[str]:
    return text.lower().split()


def _bigrams(tokens: Sequence[str]) -> Counter:
    return Counter(zip(tokens, tokens[1:]))


def rouge2(candidate: str, reference: str) -> RougeScore:
    """Clipped bigram-overlap precision/recall/F1 between two texts.

    Texts with fewer than two tokens have no bigrams and score zero.
    """
    cand = _bigrams(_tokenize(candidate))
    ref = _bigrams(_tokenize(reference))
    n_cand = sum(cand.values())
    n_ref = sum(ref.values())
    overlap = sum(min(count, ref[bigram]) for bigram, count in cand.items())
    precision = overlap / n_cand if n_cand else 0.0
    recall = overlap / n_ref if n_ref else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return RougeScore(precision=precision, recall=recall, f1=f1)


def split_sentences(text: str) -> list[str]:
    """Split on sentence-final punctuation followed by whitespace."""
    parts = [part.strip() for part in _SENTENCE_BOUNDARY.split(text)]
    return [part for part in parts if part]


def mask_schedule(tokens: Sequence[str]) -> list[int]:
    """Deterministic mask positions: every MASK_STRIDE-th token of enough length."""
    return [i for i, token in enumerate(tokens)
            if i % MASK_STRIDE == 0 and len(token) >= MIN_MASK_TOKEN_CHARS]


def blanc_help(document: str, summary: str, backend: Backend) -> BlancScore:
    """Reconstruction-accuracy gain from prefixing each sentence with the summary.

    value = mean over document sentences of
        fill_accuracy(summary ++ sentence) - fill_accuracy(filler ++ sentence)
    where the filler repeats a fixed neutral token, length-matched to the
    summary. Sentences with no maskable token are skipped; if none remain the
    score is 0 with zero masked tokens.
    """
    summary_tokens = backend.tokenize(summary)
    if not summary_tokens:
        raise DomainError("summary is empty")
    sentences = split_sentences(document)
    if not sentences:
        raise DomainError("document does not split into sentences")
    filler = " ".join([FILLER_TOKEN] * len(summary_tokens))
    gains: list[float] = []
    n_masked = 0
    for sentence in sentences:
        tokens = backend.tokenize(sentence)
        positions = mask_schedule(tokens)
        if not positions:
            continue
        with_summary = backend.masked_fill_accuracy(summary, sentence, positions)
        with_filler = backend.masked_fill_accuracy(filler, sentence, positions)
        gains.append(with_summary - with_filler)
        n_masked += len(positions)
    if not gains:
        return BlancScore(value=0.0, n_sentences=len(sentences), n_masked_tokens=0)
    return BlancScore(value=float(np.mean(gains)), n_sentences=len(sentences),
                      n_masked_tokens=n_masked)


class EvalReport:
    """Per-pair and aggregate metric values for a set of generated summaries."""

    def __init__(self, corpus_name: str, metrics: Sequence[str]):
        self.corpus_name = corpus_name
        self.metrics = list(metrics)
        self.per_pair: dict[str, dict[str, float]] = {m: {} for m in self.metrics}
        self.failures: dict[str, dict[str, str]] = {m: {} for m in self.metrics}

    def add(self, metric: str, pair_id: str, value: float) -> None:
        self.per_pair[metric][pair_id] = value

    def add_failure(self, metric: str, pair_id: str, reason: str) -> None:
        self.failures[metric][pair_id] = reason

    def n(self, metric: str) -> int:
        return len(self.per_pair[metric])

    def mean(self, metric: str) -> float:
        values = self.per_pair[metric]
        if not values:
            raise DomainError(f"no values for metric {metric!r}")
        ordered = [values[pid] for pid in sorted(values)]
        return float(np.mean(np.asarray(ordered, dtype=np.float64)))

    def headline(self, metric: str) -> float:
        """Aggregate number as conventionally reported (bigram F1 scaled x100)."""
        mean = self.mean(metric)
        return mean * 100.0 if metric == "rouge2" else mean

    def to_csv(self, path: str | Path) -> None:
        with Path(path).open("w", encoding="utf-8", newline="") as handle:
            writer = csv.writer(handle, lineterminator="\n")
            writer.writerow(["record", "pair_id", "metric", "value", "n", "headline", "note"])
            writer.writerow(["meta", "", "corpus_name", "", "", "", self.corpus_name])
            for metric in self.metrics:
                for pair_id in sorted(self.per_pair[metric]):
                    writer.writerow(["pair", pair_id, metric,
                                     repr(float(self.per_pair[metric][pair_id])),
                                     "", "", ""])
                for pair_id in sorted(self.failures[metric]):
                    writer.writerow(["failure", pair_id, metric, "", "", "",
                                     self.failures[metric][pair_id]])
            for metric in self.metrics:
                if self.per_pair[metric]:
                    writer.writerow(["aggregate", "", metric,
                                     repr(float(self.mean(metric))),
                                     str(self.n(metric)),
                                     repr(float(self.headline(metric))), ""])
                else:
                    writer.writerow(["aggregate", "", metric, "", "0", "", "no values"])

    @classmethod
    def from_csv(cls, path: str | Path) -> "EvalReport":
        p = Path(path)
        corpus_name = ""
        per_pair: dict[str, dict[str, float]] = {}
        failures: dict[str, dict[str, str]] = {}
        metric_order: list[str] = []
        with p.open("r", encoding="utf-8", newline="") as handle:
            reader = csv.reader(handle)
            header = next(reader, None)
            if header is None or header[0] != "record":
                raise ParseError("not an evaluation report CSV", path=str(p))
            for row in reader:
                record, pair_id, metric = row[0], row[1], row[2]
                if record == "meta" and metric == "corpus_name":
                    corpus_name = row[6]
                elif record in ("pair", "failure") and metric not in metric_order:
                    metric_order.append(metric)
                if record == "pair":
                    per_pair.setdefault(metric, {})[pair_id] = float(row[3])
                elif record == "failure":
                    failures.setdefault(metric, {})[pair_id] = row[6]
                elif record == "aggregate" and metric not in metric_order:
                    metric_order.append(metric)
        report = cls(corpus_name, metric_order)
        for metric in metric_order:
            report.per_pair[metric] = per_pair.get(metric, {})
            report.failures[metric] = failures.get(metric, {})
        return report


def _scorer_metric(metric: str, backend: Backend) -> Callable[[str, str], float]:
    cores = {
        "greedy": greedy_precision_value,
        "condll": conditional_likelihood_value,
        "dae": arc_entailment_value,
    }
    core = cores[metric]

    def run(document: str, summary: str) -> float:
        value, _ = core(document, summary, backend)
        return value

    return run


def evaluate_outputs(generated: Mapping[str, str], corpus: Corpus,
                     backend: Backend | None = None,
                     manifest: FilterManifest | None = None,
                     metrics: Iterable[str] = ALL_METRICS) -> EvalReport:
    """Evaluate generated summaries over the corpus test split.

    The reference-based bigram metric is restricted to manifest-kept test
    pairs when a manifest is supplied (misleading references would otherwise
    contaminate it); reference-free metrics always cover the full test split,
    so per-metric sample counts can legitimately differ.
    """
    metric_list = list(metrics)
    unknown = [m for m in metric_list if m not in ALL_METRICS]
    if unknown:
        raise DomainError(f"unknown metrics {unknown}; available: {list(ALL_METRICS)}")
    needs_backend = [m for m in metric_list if m in REFERENCE_FREE_METRICS]
    if needs_backend and backend is None:
        raise DomainError(f"metrics {needs_backend} require a backend")
    test_pairs = corpus.split_pairs("test")
    if not test_pairs:
        raise DomainError(f"corpus {corpus.name!r} has no test pairs")
    missing = [p.id for p in test_pairs if p.id not in generated]
    if missing:
        raise CoverageError("generated summaries missing for test pairs", missing)

    rouge_pairs = test_pairs
    if manifest is not None:
        if manifest.corpus_name != corpus.name:
            raise IntegrityError(
                f"manifest is for corpus {manifest.corpus_name!r}, got {corpus.name!r}"
            )
        kept = manifest.kept_id_set()
        rouge_pairs = tuple(p for p in test_pairs if p.id in kept)
        if not rouge_pairs:
            raise DomainError("manifest keeps no test pairs; bigram metric undefined")

    report = EvalReport(corpus.name, metric_list)
    for metric in metric_list:
        if metric == "rouge2":
            for pair in rouge_pairs:
                report.add(metric, pair.id, rouge2(generated[pair.id], pair.summary).f1)
        elif metric == "blanc":
            assert backend is not None
            for pair in test_pairs:
                try:
                    report.add(metric, pair.id,
                               blanc_help(pair.document, generated[pair.id], backend).value)
                except (DomainError, ScoringError, BackendError) as exc:
                    report.add_failure(metric, pair.id, f"{type(exc).__name__}: {exc}")
        else:
            assert backend is not None
            run = _scorer_metric(metric, backend)
            for pair in test_pairs:
                try:
                    report.add(metric, pair.id, run(pair.document, generated[pair.id]))
                except (DomainError, ScoringError, BackendError) as exc:
                    report.add_failure(metric, pair.id, f"{type(exc).__name__}: {exc}")
    return report
