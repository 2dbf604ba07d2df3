"""The three factual-consistency scorers and the corpus-scale scoring driver.

Scorers (all reference-free; they compare a summary to its source document):

  greedy  - mean over summary tokens of the best embedding similarity to any
            document token (precision-style greedy matching).
  condll  - mean log-probability of summary tokens conditioned on the
            document under a sequence model.
  dae     - mean entailment probability over the summary's dependency arcs.

Documents longer than the backend's token limit are truncated (summaries
never are) and the truncation is recorded on the score. Per-pair failures at
corpus scale become explicit sentinel rows instead of aborting the run.
"""

from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence, Union

import numpy as np

from .backend import Backend
from .corpus import Corpus, Pair
from .errors import (
    BackendError,
    ConfigurationError,
    DomainError,
    EmptySummaryError,
    IntegrityError,
    NoArcsError,
    ParseError,
    ScoringError,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class FactualityScore:
    """One scorer's value for one pair, qualified by backend provenance."""

    pair_id: str
    scorer: str
    backend_name: str
    backend_version: str
    value: float
    truncated: bool

    def __post_init__(self) -> None:
        if not np.isfinite(self.value):
            raise DomainError(f"score for pair {self.pair_id!r} is not finite")
        check = _VALUE_RANGES.get(self.scorer)
        if check is not None and not check(self.value):
            raise DomainError(
                f"score {self.value} outside the valid range for scorer {self.scorer!r}"
            )


@dataclass(frozen=True)
class ScoreFailure:
    """Sentinel row recording that a pair could not be scored."""

    pair_id: str
    scorer: str
    backend_name: str
    backend_version: str
    reason: str


ScoreCell = Union[FactualityScore, ScoreFailure]

_VALUE_RANGES: dict[str, Callable[[float], bool]] = {
    "greedy": lambda v: -1.0 <= v <= 1.0,
    "condll": lambda v: v <= 0.0,
    "dae": lambda v: 0.0 <= v <= 1.0,
}


def truncate_document(backend: Backend, document: str) -> tuple[str, bool]:
    """Clip a document to the backend's token limit; summaries are never clipped."""
    limit = backend.descriptor.max_tokens
    tokens = backend.tokenize(document)
    if len(tokens) <= limit:
        return document, False
    return " ".join(tokens[:limit]), True


def greedy_precision_value(document: str, summary: str, backend: Backend) -> tuple[float, bool]:
    """Mean over summary tokens of max similarity to any document token.

    Similarity of unit vectors u, v is computed as 1 - |u - v|^2 / 2, which
    equals their cosine up to rounding and is exactly 1.0 when the embeddings
    are bitwise identical (so a summary copied from the document scores 1.0).
    """
    document, truncated = truncate_document(backend, document)
    if not backend.tokenize(summary):
        raise EmptySummaryError("summary tokenizes to nothing")
    doc_emb = backend.embed_tokens(document)
    sum_emb = backend.embed_tokens(summary)
    doc_vecs = _unit_rows(doc_emb.vectors)
    sum_vecs = _unit_rows(sum_emb.vectors)
    best = np.empty(sum_vecs.shape[0], dtype=np.float64)
    for i in range(sum_vecs.shape[0]):
        d2 = np.sum((doc_vecs - sum_vecs[i]) ** 2, axis=1)
        best[i] = np.max(1.0 - d2 / 2.0)
    value = float(np.mean(np.clip(best, -1.0, 1.0)))
    return value, truncated


def conditional_likelihood_value(document: str, summary: str,
                                 backend: Backend) -> tuple[float, bool]:
    """Mean token log-probability of the summary conditioned on the document.

    The mean (not the sum) removes the length confound, so the downstream
    filter does not mechanically favor short summaries.
    """
    document, truncated = truncate_document(backend, document)
    if not backend.tokenize(summary):
        raise EmptySummaryError("summary tokenizes to nothing")
    logprobs = backend.conditional_token_logprobs(document, summary)
    arr = np.asarray(logprobs, dtype=np.float64)
    if arr.size == 0:
        raise EmptySummaryError("backend produced no target token log-probabilities")
    if not np.all(np.isfinite(arr)) or np.any(arr > 0.0):
        raise BackendError("token log-probabilities must be finite and <= 0")
    return float(np.mean(arr)), truncated


def arc_entailment_value(document: str, summary: str, backend: Backend) -> tuple[float, bool]:
    """Mean entailment probability over the summary's dependency arcs."""
    document, truncated = truncate_document(backend, document)
    if not backend.tokenize(summary):
        raise EmptySummaryError("summary tokenizes to nothing")
    arcs = backend.parse_dependencies(summary)
    if not arcs:
        raise NoArcsError("summary yields no dependency arcs (single token)")
    probs = np.asarray(backend.arc_entailment_probs(document, arcs), dtype=np.float64)
    if probs.shape[0] != len(arcs):
        raise BackendError("entailment output length does not match arc count")
    if np.any(probs < 0.0) or np.any(probs > 1.0):
        raise BackendError("arc entailment probabilities must lie in [0, 1]")
    return float(np.mean(probs)), truncated


def _unit_rows(vectors: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(vectors, axis=1, keepdims=True)
    return vectors / norms


def _make_score(pair_id: str, scorer: str, backend: Backend,
                value: float, truncated: bool) -> FactualityScore:
    d = backend.descriptor
    return FactualityScore(pair_id=pair_id, scorer=scorer, backend_name=d.name,
                           backend_version=d.version, value=value, truncated=truncated)


def score_greedy_precision(pair: Pair, backend: Backend) -> FactualityScore:
    value, truncated = greedy_precision_value(pair.document, pair.summary, backend)
    return _make_score(pair.id, "greedy", backend, value, truncated)


def score_conditional_likelihood(pair: Pair, backend: Backend) -> FactualityScore:
    value, truncated = conditional_likelihood_value(pair.document, pair.summary, backend)
    return _make_score(pair.id, "condll", backend, value, truncated)


def score_arc_entailment(pair: Pair, backend: Backend) -> FactualityScore:
    value, truncated = arc_entailment_value(pair.document, pair.summary, backend)
    return _make_score(pair.id, "dae", backend, value, truncated)


SCORERS: dict[str, Callable[[Pair, Backend], FactualityScore]] = {
    "greedy": score_greedy_precision,
    "condll": score_conditional_likelihood,
    "dae": score_arc_entailment,
}


class ScoreTable:
    """Per-pair, per-scorer scores with provenance checks.

    Every column covers one value (score or failure sentinel) per pair and
    refuses to mix values produced under different backend descriptors.
    """

    def __init__(self, corpus_name: str):
        self.corpus_name = corpus_name
        self._columns: dict[str, dict[str, ScoreCell]] = {}

    @property
    def scorers(self) -> list[str]:
        return list(self._columns)

    def add(self, cell: ScoreCell) -> None:
        column = self._columns.setdefault(cell.scorer, {})
        if cell.pair_id in column:
            raise IntegrityError(
                f"duplicate score for pair {cell.pair_id!r}, scorer {cell.scorer!r}"
            )
        if column:
            existing = next(iter(column.values()))
            if (existing.backend_name, existing.backend_version) != (
                    cell.backend_name, cell.backend_version):
                raise IntegrityError(
                    f"column {cell.scorer!r} mixes backends "
                    f"{existing.backend_name}:{existing.backend_version} and "
                    f"{cell.backend_name}:{cell.backend_version}"
                )
        column[cell.pair_id] = cell

    def has(self, pair_id: str, scorer: str) -> bool:
        return pair_id in self._columns.get(scorer, {})

    def column(self, scorer: str) -> Mapping[str, ScoreCell]:
        try:
            return self._columns[scorer]
        except KeyError:
            raise ConfigurationError(f"no scores for scorer {scorer!r}") from None

    def values(self, scorer: str) -> dict[str, float]:
        """Successful scores only; sentinel rows are excluded."""
        return {pid: cell.value for pid, cell in self.column(scorer).items()
                if isinstance(cell, FactualityScore)}

    def failures(self, scorer: str) -> dict[str, str]:
        return {pid: cell.reason for pid, cell in self.column(scorer).items()
                if isinstance(cell, ScoreFailure)}

    def ids(self) -> set[str]:
        out: set[str] = set()
        for column in self._columns.values():
            out.update(column)
        return out

    def backend_descriptors(self) -> dict[str, dict[str, str]]:
        out: dict[str, dict[str, str]] = {}
        for scorer, column in self._columns.items():
            if column:
                cell = next(iter(column.values()))
                out[scorer] = {"name": cell.backend_name, "version": cell.backend_version}
        return out

    def ensure_aligned(self) -> None:
        """Check that every column covers the same pair id set."""
        if not self._columns:
            raise IntegrityError("score table has no columns")
        reference: set[str] | None = None
        for scorer, column in self._columns.items():
            if not column:
                raise IntegrityError(f"scorer column {scorer!r} is empty")
            ids = set(column)
            if reference is None:
                reference = ids
            elif ids != reference:
                raise IntegrityError(
                    f"scorer column {scorer!r} covers a different pair id set"
                )

    def ensure_complete(self, pair_ids: Iterable[str]) -> None:
        wanted = set(pair_ids)
        for scorer, column in self._columns.items():
            missing = wanted - set(column)
            if missing:
                raise IntegrityError(
                    f"scorer column {scorer!r} missing {len(missing)} pairs "
                    f"(e.g. {sorted(missing)[:5]})"
                )


def _cell_to_row(cell: ScoreCell) -> dict:
    row = {
        "pair_id": cell.pair_id,
        "scorer": cell.scorer,
        "backend_name": cell.backend_name,
        "backend_version": cell.backend_version,
    }
    if isinstance(cell, FactualityScore):
        row["value"] = cell.value
        row["truncated"] = cell.truncated
    else:
        row["value"] = None
        row["truncated"] = False
        row["error"] = cell.reason
    return row


def _cell_from_row(row: Mapping) -> ScoreCell:
    common = dict(
        pair_id=row["pair_id"],
        scorer=row["scorer"],
        backend_name=row["backend_name"],
        backend_version=row["backend_version"],
    )
    if row.get("value") is None:
        return ScoreFailure(reason=str(row.get("error", "unknown failure")), **common)
    return FactualityScore(value=float(row["value"]),
                           truncated=bool(row.get("truncated", False)), **common)


def write_scores(cells: Iterable[ScoreCell], path: str | Path, append: bool = False) -> None:
    """Append-only JSONL score rows; see the scores-file schema in the README."""
    mode = "a" if append else "w"
    with Path(path).open(mode, encoding="utf-8", newline="\n") as handle:
        for cell in cells:
            handle.write(json.dumps(_cell_to_row(cell), ensure_ascii=False) + "\n")


def load_scores(path: str | Path, corpus_name: str) -> ScoreTable:
    table = ScoreTable(corpus_name)
    p = Path(path)
    with p.open("r", encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                row = json.loads(line)
                cell = _cell_from_row(row)
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise ParseError(f"bad score row: {exc}", path=str(p), line=lineno) from exc
            table.add(cell)
    return table


def _score_one(scorer: str, pair: Pair, backend: Backend) -> ScoreCell:
    d = backend.descriptor
    try:
        return SCORERS[scorer](pair, backend)
    except (ScoringError, BackendError, DomainError) as exc:
        return ScoreFailure(pair_id=pair.id, scorer=scorer, backend_name=d.name,
                            backend_version=d.version,
                            reason=f"{type(exc).__name__}: {exc}")


def score_corpus(corpus: Corpus, scorer_names: Sequence[str], backend: Backend,
                 parallelism: int = 1,
                 skip: Callable[[str, str], bool] | None = None) -> list[ScoreCell]:
    """Score every (pair, scorer) cell; failures become sentinel rows.

    Results come back in canonical order (scorer-major, corpus pair order)
    regardless of execution schedule, so parallel runs are byte-identical to
    serial ones. `skip(pair_id, scorer)` filters out already-scored cells for
    resumable runs.
    """
    if len(corpus) == 0:
        raise DomainError(f"corpus {corpus.name!r} is empty")
    unknown = [s for s in scorer_names if s not in SCORERS]
    if unknown:
        raise ConfigurationError(
            f"unknown scorers {unknown}; available: {sorted(SCORERS)}"
        )
    jobs = [(scorer, pair) for scorer in scorer_names for pair in corpus
            if skip is None or not skip(pair.id, scorer)]
    if not jobs:
        return []
    use_threads = parallelism > 1 and backend.descriptor.thread_safe
    if parallelism > 1 and not backend.descriptor.thread_safe:
        logger.info("backend %s is not thread-safe; scoring serially",
                    backend.descriptor.name)
    if use_threads:
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            cells = list(pool.map(lambda job: _score_one(job[0], job[1], backend), jobs))
    else:
        cells = [_score_one(scorer, pair, backend) for scorer, pair in jobs]
    return cells


def score_corpus_to_file(corpus: Corpus, scorer_names: Sequence[str], backend: Backend,
                         path: str | Path, parallelism: int = 1) -> int:
    """Resumable scoring: skip (pair, scorer) keys already present in `path`.

    Returns the number of newly scored cells appended.
    """
    p = Path(path)
    existing = ScoreTable(corpus.name)
    if p.exists():
        existing = load_scores(p, corpus.name)
        done = sum(len(existing.column(s)) for s in existing.scorers)
        logger.info("resuming: %d cells already scored in %s", done, p)
    cells = score_corpus(corpus, scorer_names, backend, parallelism=parallelism,
                         skip=existing.has)
    for cell in cells:  # refuses duplicates and mixed backend provenance
        existing.add(cell)
    write_scores(cells, p, append=p.exists())
    logger.info("scored %d new cells for corpus %s", len(cells), corpus.name)
    return len(cells)
