"""Experiment orchestration: distribution reports, threshold sweeps, paired comparisons.

Training lives behind an "eval hook" boundary: the bundled mock-train proxy
evaluates a selection's reference summaries directly (no learning), so sweep
scaffolding runs at desk scale; a real fine-tuning harness plugs in through
the same callable signature.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from .backend import Backend
from .corpus import Corpus
from .errors import CoverageError, DegenerateInputError, DomainError
from .filtration import intersect_filter, percentile_keep_set, random_selection
from .metrics import EvalReport, blanc_help
from .scorers import (
    ScoreTable,
    arc_entailment_value,
    conditional_likelihood_value,
    greedy_precision_value,
)
from .stats import WilcoxonResult, wilcoxon_signed_rank

logger = logging.getLogger(__name__)

SIGNIFICANCE_LEVEL = 0.05
DEFAULT_THRESHOLDS = (0.1, 0.25, 0.4, 0.55)
DEFAULT_HISTOGRAM_BINS = 10

EvalHook = Callable[[Corpus], Mapping[str, float]]


@dataclass(frozen=True)
class SweepSpec:
    """Grid of drop fractions and selection strategies for one sweep run.

    Strategies: "combined" (percentile intersection over all scorers),
    "single:<scorer>" (one scorer's percentile cut), "random" (uniform
    baseline of matching size, seeded).
    """

    thresholds: tuple[float, ...] = DEFAULT_THRESHOLDS
    strategies: tuple[str, ...] = ("combined", "random")
    seed: int = 0

    def __post_init__(self) -> None:
        if not self.thresholds:
            raise DomainError("sweep needs at least one threshold")
        if any(not 0.0 < t < 1.0 for t in self.thresholds):
            raise DomainError("thresholds must lie in (0, 1)")
        if list(self.thresholds) != sorted(self.thresholds):
            raise DomainError("thresholds must be sorted ascending")
        for strategy in self.strategies:
            if strategy in ("combined", "random"):
                continue
            if strategy.startswith("single:") and strategy.split(":", 1)[1]:
                continue
            raise DomainError(f"unknown sweep strategy {strategy!r}")


@dataclass(frozen=True)
class DistributionSummary:
    """Five-number summary plus fixed-width histogram bins for one scorer column."""

    scorer: str
    minimum: float
    q1: float
    median: float
    q3: float
    maximum: float
    bins: tuple[tuple[float, float, int], ...]


def distribution_report(table: ScoreTable,
                        n_bins: int = DEFAULT_HISTOGRAM_BINS) -> list[DistributionSummary]:
    """Per-scorer score distributions (linear-interpolation quantiles)."""
    table.ensure_aligned()
    summaries: list[DistributionSummary] = []
    for scorer in table.scorers:
        values = table.values(scorer)
        if not values:
            raise DomainError(f"scorer column {scorer!r} has no successful scores")
        arr = np.asarray([values[pid] for pid in sorted(values)], dtype=np.float64)
        q = np.quantile(arr, [0.0, 0.25, 0.5, 0.75, 1.0])
        counts, edges = np.histogram(arr, bins=n_bins)
        bins = tuple((float(edges[i]), float(edges[i + 1]), int(counts[i]))
                     for i in range(len(counts)))
        summaries.append(DistributionSummary(
            scorer=scorer, minimum=float(q[0]), q1=float(q[1]), median=float(q[2]),
            q3=float(q[3]), maximum=float(q[4]), bins=bins))
    return summaries


def write_distribution_csv(summaries: Sequence[DistributionSummary],
                           path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["scorer", "stat", "bin_left", "bin_right", "value"])
        for summary in summaries:
            for stat, value in (("min", summary.minimum), ("q1", summary.q1),
                                ("median", summary.median), ("q3", summary.q3),
                                ("max", summary.maximum)):
                writer.writerow([summary.scorer, stat, "", "", repr(float(value))])
            for left, right, count in summary.bins:
                writer.writerow([summary.scorer, "bin", repr(float(left)),
                                 repr(float(right)), str(count)])


@dataclass(frozen=True)
class SweepRow:
    strategy: str
    threshold: float
    n_selected: int
    ratio: float
    status: str  # "ok" | "failed"
    metrics: Mapping[str, float] = field(default_factory=dict)
    note: str = ""


def mock_train_eval_hook(backend: Backend,
                         metrics: Sequence[str] = ("greedy", "condll", "dae", "blanc"),
                         ) -> EvalHook:
    """No-learning proxy: metric means over the selection's reference summaries.

    Stands in for a fine-tune-then-evaluate harness so sweeps run without a
    GPU; pairs that fail a metric are excluded from that metric's mean.
    """
    cores: dict[str, Callable[[str, str], float]] = {
        "greedy": lambda d, s: greedy_precision_value(d, s, backend)[0],
        "condll": lambda d, s: conditional_likelihood_value(d, s, backend)[0],
        "dae": lambda d, s: arc_entailment_value(d, s, backend)[0],
        "blanc": lambda d, s: blanc_help(d, s, backend).value,
    }
    unknown = [m for m in metrics if m not in cores]
    if unknown:
        raise DomainError(f"mock-train hook cannot compute {unknown}")

    def hook(selection: Corpus) -> dict[str, float]:
        out: dict[str, float] = {}
        for metric in metrics:
            values = []
            for pair in selection:
                try:
                    values.append(cores[metric](pair.document, pair.summary))
                except Exception:
                    continue
            if values:
                out[metric] = float(np.mean(np.asarray(values, dtype=np.float64)))
        return out

    return hook


def _select(strategy: str, threshold: float, corpus: Corpus, table: ScoreTable,
            seed: int) -> set[str]:
    if strategy == "combined":
        return intersect_filter(table, threshold).kept_id_set()
    if strategy == "random":
        size = math.ceil((1.0 - threshold) * len(corpus))
        return random_selection(corpus, size, seed)
    scorer = strategy.split(":", 1)[1]
    return percentile_keep_set(table.values(scorer), threshold)


def run_sweep(corpus: Corpus, table: ScoreTable, spec: SweepSpec,
              eval_hook: EvalHook) -> list[SweepRow]:
    """One row per (strategy, threshold): selection size, ratio, hook metrics.

    A threshold that yields an empty selection becomes a failed row and the
    sweep continues. Rows are ordered by (strategy, threshold) regardless of
    execution order; random cells derive their seed from (spec.seed,
    threshold index) so each cell is independently reproducible.
    """
    rows: list[SweepRow] = []
    for strategy in sorted(spec.strategies):
        for index, threshold in enumerate(spec.thresholds):
            cell_seed = spec.seed * 1_000_003 + index
            try:
                kept = _select(strategy, threshold, corpus, table, cell_seed)
                selection = corpus.subset(kept)
                metrics = dict(eval_hook(selection))
                rows.append(SweepRow(
                    strategy=strategy, threshold=threshold, n_selected=len(kept),
                    ratio=len(kept) / len(corpus), status="ok", metrics=metrics))
            except DomainError as exc:
                logger.warning("sweep cell (%s, %s) failed: %s", strategy, threshold, exc)
                rows.append(SweepRow(
                    strategy=strategy, threshold=threshold, n_selected=0, ratio=0.0,
                    status="failed", metrics={}, note=str(exc)))
    return rows


def write_sweep_csv(rows: Sequence[SweepRow], path: str | Path) -> None:
    metric_names = sorted({name for row in rows for name in row.metrics})
    with Path(path).open("w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["strategy", "threshold", "n_selected", "ratio", "status"]
                        + metric_names + ["note"])
        for row in rows:
            values = [repr(float(row.metrics[name])) if name in row.metrics else ""
                      for name in metric_names]
            writer.writerow([row.strategy, repr(float(row.threshold)),
                             str(row.n_selected), repr(float(row.ratio)), row.status]
                            + values + [row.note])


@dataclass(frozen=True)
class ComparisonRow:
    metric: str
    mean_a: float
    mean_b: float
    n: int
    wilcoxon: WilcoxonResult | None
    winner: str  # "a" | "b" | "tie"
    note: str = ""


class ComparisonReport:
    """Paired significance comparison of two evaluation reports."""

    def __init__(self, rows: Sequence[ComparisonRow]):
        self.rows = list(rows)

    def row(self, metric: str) -> ComparisonRow:
        for row in self.rows:
            if row.metric == metric:
                return row
        raise KeyError(metric)

    def to_csv(self, path: str | Path) -> None:
        with Path(path).open("w", encoding="utf-8", newline="") as handle:
            writer = csv.writer(handle, lineterminator="\n")
            writer.writerow(["metric", "mean_a", "mean_b", "n",
                             "w_statistic", "p_value", "winner", "note"])
            for row in self.rows:
                w = repr(float(row.wilcoxon.w_statistic)) if row.wilcoxon else ""
                p = repr(float(row.wilcoxon.p_value)) if row.wilcoxon else ""
                writer.writerow([row.metric, repr(float(row.mean_a)),
                                 repr(float(row.mean_b)), str(row.n), w, p,
                                 row.winner, row.note])


def compare_selections(report_a: EvalReport, report_b: EvalReport,
                       alpha: float = SIGNIFICANCE_LEVEL) -> ComparisonReport:
    """Paired Wilcoxon per metric; the winner needs p < alpha, otherwise tie.

    Both reports must cover identical metrics and identical pair ids per
    metric. Identical values produce a degenerate signed-rank test, reported
    as a tie with an annotation rather than a p-value.
    """
    if set(report_a.metrics) != set(report_b.metrics):
        only_a = sorted(set(report_a.metrics) - set(report_b.metrics))
        only_b = sorted(set(report_b.metrics) - set(report_a.metrics))
        raise CoverageError(f"metric sets differ (a-only {only_a}, b-only {only_b})")
    rows: list[ComparisonRow] = []
    for metric in report_a.metrics:
        ids_a = set(report_a.per_pair[metric])
        ids_b = set(report_b.per_pair[metric])
        if ids_a != ids_b:
            raise CoverageError(f"pair id sets differ for metric {metric!r}",
                                sorted(ids_a ^ ids_b))
        ids = sorted(ids_a)
        if not ids:
            raise DomainError(f"no per-pair values for metric {metric!r}")
        a = np.array([report_a.per_pair[metric][pid] for pid in ids], dtype=np.float64)
        b = np.array([report_b.per_pair[metric][pid] for pid in ids], dtype=np.float64)
        mean_a = float(np.mean(a))
        mean_b = float(np.mean(b))
        try:
            result = wilcoxon_signed_rank(a, b)
        except DegenerateInputError:
            rows.append(ComparisonRow(metric=metric, mean_a=mean_a, mean_b=mean_b,
                                      n=len(ids), wilcoxon=None, winner="tie",
                                      note="identical per-pair values"))
            continue
        if result.p_value >= alpha or mean_a == mean_b:
            winner = "tie"
        else:
            winner = "a" if mean_a > mean_b else "b"
        rows.append(ComparisonRow(metric=metric, mean_a=mean_a, mean_b=mean_b,
                                  n=len(ids), wilcoxon=result, winner=winner))
    return ComparisonReport(rows)
