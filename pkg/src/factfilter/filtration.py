"""Percentile-intersection corpus filtration plus the random baseline.

The selection rule: per scorer, drop the bottom `q` fraction of pairs; keep
only the pairs surviving every scorer's cut (the intersection of the top
1 - q sets). Pairs that failed any scorer are dropped before percentiles are
taken, so the thresholds are computed over the common successfully-scored
population.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

from .corpus import Corpus
from .errors import DomainError, IntegrityError, ParseError
from .scorers import ScoreTable


@dataclass(frozen=True)
class FilterManifest:
    """Reproducible record of which pair ids survive filtration and why.

    Serialized as canonical JSON (sorted keys, sorted kept_ids) so the
    manifest's content hash is stable across runs and platforms.
    """

    corpus_name: str
    scorer_names: tuple[str, ...]
    q: float
    per_scorer_thresholds: Mapping[str, float]
    kept_ids: tuple[str, ...]
    n_pairs: int
    selection_ratio: float
    created_with: Mapping[str, Mapping[str, str]]
    seedless: bool = True
    seed: int | None = field(default=None)

    def __post_init__(self) -> None:
        if not 0.0 < self.q < 1.0:
            raise DomainError(f"drop fraction q={self.q} outside (0, 1)")
        if self.n_pairs <= 0:
            raise DomainError("manifest population must be positive")
        if list(self.kept_ids) != sorted(self.kept_ids):
            raise IntegrityError("manifest kept_ids must be sorted")
        ratio = len(self.kept_ids) / self.n_pairs
        if abs(ratio - self.selection_ratio) > 1e-12:
            raise IntegrityError("selection_ratio inconsistent with kept_ids / n_pairs")
        if self.seedless and len(self.scorer_names) >= 1:
            # Exact set-algebra bounds for a k-scorer intersection with
            # ceiling keep-counts: each scorer drops floor(q*n) pairs, so at
            # least n - k*floor(q*n) survive; no more than one scorer's keep
            # count ever survives. (The idealized 1-k*q <= ratio <= 1-q holds
            # up to this rounding.)
            k = len(self.scorer_names)
            keep_count = math.ceil((1.0 - self.q) * self.n_pairs)
            lower = self.n_pairs - k * (self.n_pairs - keep_count)
            if not max(lower, 0) <= len(self.kept_ids) <= keep_count:
                raise IntegrityError(
                    f"kept {len(self.kept_ids)} of {self.n_pairs} violates the "
                    f"intersection bounds [{max(lower, 0)}, {keep_count}] for "
                    f"k={k}, q={self.q}"
                )

    def kept_id_set(self) -> set[str]:
        return set(self.kept_ids)

    def to_canonical_json(self) -> str:
        obj = {
            "corpus_name": self.corpus_name,
            "scorer_names": list(self.scorer_names),
            "q": self.q,
            "per_scorer_thresholds": {k: v for k, v in sorted(self.per_scorer_thresholds.items())},
            "kept_ids": list(self.kept_ids),
            "n_pairs": self.n_pairs,
            "selection_ratio": self.selection_ratio,
            "created_with": {k: dict(v) for k, v in sorted(self.created_with.items())},
            "seedless": self.seedless,
            "seed": self.seed,
        }
        return json.dumps(obj, ensure_ascii=False, sort_keys=True, separators=(",", ":"))

    def content_hash(self) -> str:
        return hashlib.sha256(self.to_canonical_json().encode("utf-8")).hexdigest()

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_canonical_json() + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "FilterManifest":
        p = Path(path)
        try:
            obj = json.loads(p.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid manifest JSON: {exc.msg}", path=str(p)) from exc
        try:
            return cls(
                corpus_name=obj["corpus_name"],
                scorer_names=tuple(obj["scorer_names"]),
                q=float(obj["q"]),
                per_scorer_thresholds={k: float(v)
                                       for k, v in obj["per_scorer_thresholds"].items()},
                kept_ids=tuple(obj["kept_ids"]),
                n_pairs=int(obj["n_pairs"]),
                selection_ratio=float(obj["selection_ratio"]),
                created_with=obj.get("created_with", {}),
                seedless=bool(obj.get("seedless", True)),
                seed=obj.get("seed"),
            )
        except KeyError as exc:
            raise ParseError(f"manifest missing field {exc}", path=str(p)) from exc


def percentile_keep_set(scores: Mapping[str, float], q: float) -> set[str]:
    """Ids of the ceil((1-q) * n) highest-scored entries.

    Ties at the cutoff are broken deterministically by ascending id: among
    equal scores, smaller ids are dropped first.
    """
    if not 0.0 < q < 1.0:
        raise DomainError(f"drop fraction q={q} outside (0, 1)")
    if not scores:
        raise DomainError("cannot take percentiles of an empty score map")
    n = len(scores)
    keep_count = math.ceil((1.0 - q) * n)
    ranked = sorted(scores, key=lambda pid: (scores[pid], pid))
    return set(ranked[n - keep_count:])


def intersect_filter(table: ScoreTable, q: float,
                     scorers: Sequence[str] | None = None) -> FilterManifest:
    """Keep the intersection of every scorer's top (1-q) percentile set.

    Pairs with a failure sentinel in any requested scorer column are dropped
    before percentiles are computed; thresholds record the lowest kept score
    per scorer.
    """
    names = list(scorers) if scorers is not None else table.scorers
    if len(names) < 2:
        raise DomainError("intersection filtering needs at least two scorers")
    table.ensure_aligned()
    columns = {name: table.values(name) for name in names}
    for name, column in columns.items():
        if not column:
            raise IntegrityError(f"scorer column {name!r} has no successful scores")
    population = set.intersection(*(set(col) for col in columns.values()))
    if not population:
        raise DomainError("no pair was successfully scored by every scorer")
    kept: set[str] | None = None
    thresholds: dict[str, float] = {}
    for name in names:
        restricted = {pid: columns[name][pid] for pid in population}
        keep = percentile_keep_set(restricted, q)
        thresholds[name] = min(restricted[pid] for pid in keep)
        kept = keep if kept is None else kept & keep
    assert kept is not None
    if not kept:
        raise DomainError(
            f"q={q} leaves an empty intersection over {len(population)} pairs"
        )
    n = len(population)
    return FilterManifest(
        corpus_name=table.corpus_name,
        scorer_names=tuple(names),
        q=q,
        per_scorer_thresholds=thresholds,
        kept_ids=tuple(sorted(kept)),
        n_pairs=n,
        selection_ratio=len(kept) / n,
        created_with=table.backend_descriptors(),
    )


def random_selection(corpus: Corpus, size: int, seed: int) -> set[str]:
    """Uniform without-replacement sample of pair ids.

    Implemented by ranking ids under a seeded hash, which makes the draw
    independent of RNG library versions: identical (corpus, size, seed)
    always reproduces the identical set, on any platform.
    """
    n = len(corpus)
    if size <= 0 or size > n:
        raise DomainError(f"sample size {size} outside [1, {n}]")
    seed_bytes = str(int(seed)).encode("ascii")

    def rank(pair_id: str) -> tuple[bytes, str]:
        digest = hashlib.blake2b(pair_id.encode("utf-8"), digest_size=16,
                                 key=seed_bytes[:64]).digest()
        return digest, pair_id

    ordered = sorted(corpus.ids(), key=rank)
    return set(ordered[:size])


def apply_manifest(corpus: Corpus, manifest: FilterManifest) -> Corpus:
    """Filtered corpus in original pair order; pairs gain a manifest reference.

    Re-applying the same manifest to its own output is the identity.
    """
    if corpus.name != manifest.corpus_name:
        raise IntegrityError(
            f"manifest is for corpus {manifest.corpus_name!r}, got {corpus.name!r}"
        )
    if not manifest.kept_ids:
        raise DomainError("manifest keeps no pairs; refusing to emit an empty corpus")
    corpus_ids = set(corpus.ids())
    unknown = manifest.kept_id_set() - corpus_ids
    if unknown:
        raise IntegrityError(
            f"manifest ids not present in corpus: {sorted(unknown)[:10]}"
        )
    reference = manifest.content_hash()
    kept = manifest.kept_id_set()
    pairs = tuple(pair.with_meta(filter_manifest=reference)
                  for pair in corpus if pair.id in kept)
    return Corpus(name=corpus.name, pairs=pairs, schema_version=corpus.schema_version)
