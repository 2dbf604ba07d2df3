"""Inference contracts for the scorers plus a deterministic mock backend.

Real neural models (token embedders, conditional generators, arc entailment
classifiers, masked-token fillers) plug in behind the `Backend` interface.
The bundled mock backend is bit-deterministic across runs and platforms
(seeded hashing, fixed arithmetic order) so the whole pipeline is testable
without model weights.
"""

from __future__ import annotations

import hashlib
import math
import struct
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import ConfigurationError, DomainError, SequenceLengthError


@dataclass(frozen=True)
class BackendDescriptor:
    """Identity and operating limits of a backend.

    (name, version) uniquely identifies scorer provenance; score tables
    refuse to mix values produced under different descriptors in one column.
    """

    name: str
    version: str
    deterministic: bool
    max_tokens: int
    thread_safe: bool


@dataclass(frozen=True, eq=False)
class TokenEmbeddings:
    """Per-token vectors aligned index-wise with the token sequence."""

    tokens: tuple[str, ...]
    vectors: np.ndarray  # shape (n_tokens, dim)

    def __post_init__(self) -> None:
        if len(self.tokens) != self.vectors.shape[0]:
            raise DomainError(
                f"token/vector mismatch: {len(self.tokens)} tokens, "
                f"{self.vectors.shape[0]} vectors"
            )
        if not np.all(np.isfinite(self.vectors)):
            raise DomainError("embedding vectors contain non-finite entries")
        norms = np.linalg.norm(self.vectors, axis=1)
        if np.any(norms == 0.0):
            raise DomainError("embedding vectors must have nonzero norm")


@dataclass(frozen=True)
class DependencyArc:
    """One head->child dependency relation over summary token positions."""

    head_token: str
    child_token: str
    relation_label: str
    head_index: int
    child_index: int

    def __post_init__(self) -> None:
        if self.head_index == self.child_index:
            raise DomainError("dependency arc cannot attach a token to itself")
        if self.head_index < 0 or self.child_index < 0:
            raise DomainError("arc indices must be non-negative")


class Backend(ABC):
    """All neural inference the scorers and the informativeness metric need."""

    @property
    @abstractmethod
    def descriptor(self) -> BackendDescriptor: ...

    @abstractmethod
    def tokenize(self, text: str) -> list[str]: ...

    @abstractmethod
    def embed_tokens(self, text: str) -> TokenEmbeddings:
        """Per-token embeddings covering the input. Raises SequenceLengthError on overflow."""

    @abstractmethod
    def conditional_token_logprobs(self, source: str, target: str) -> list[float]:
        """Log-probability (<= 0) of each target token conditioned on the source."""

    @abstractmethod
    def arc_entailment_probs(self, document: str, arcs: Sequence[DependencyArc]) -> list[float]:
        """Probability in [0, 1] that the document entails each arc, order-aligned."""

    @abstractmethod
    def masked_fill_accuracy(self, prefix: str, sentence: str,
                             mask_positions: Iterable[int]) -> float:
        """Fraction of masked sentence tokens correctly reconstructed given the prefix."""

    @abstractmethod
    def parse_dependencies(self, summary: str) -> list[DependencyArc]:
        """Dependency arcs of the summary; empty for single-token input."""


class MockBackend(Backend):
    """Deterministic token-identity backend for model-free testing.

    Rules:
      * tokens are whitespace-split, case-sensitive;
      * each token embeds to a unit vector derived from a seeded hash of the
        token string (context-free), so identical tokens embed identically;
      * a target token gets log(0.9) if its string occurs among the source
        tokens, else log(0.1);
      * an arc is entailed (prob 1.0) iff both its head and child token
        strings occur among the document tokens, else 0.0;
      * a masked token is reconstructed iff it occurs among the prefix tokens;
      * the parser attaches every token to the middle token of the sentence.
    """

    LOGPROB_PRESENT = math.log(0.9)
    LOGPROB_ABSENT = math.log(0.1)

    def __init__(self, dim: int = 16, max_tokens: int = 512):
        if dim < 2 or dim > 16:
            raise ConfigurationError("mock embedding dim must be in [2, 16]")
        self._dim = dim
        self._max_tokens = max_tokens
        self._descriptor = BackendDescriptor(
            name="mock",
            version="1",
            deterministic=True,
            max_tokens=max_tokens,
            thread_safe=True,
        )

    @property
    def descriptor(self) -> BackendDescriptor:
        return self._descriptor

    def tokenize(self, text: str) -> list[str]:
        return text.split()

    def _check_length(self, tokens: Sequence[str], what: str) -> None:
        if len(tokens) > self._max_tokens:
            raise SequenceLengthError(f"{what} has {len(tokens)} tokens", self._max_tokens)

    def _token_vector(self, token: str) -> np.ndarray:
        # blake2b with a fixed person tag: stable across runs, platforms and
        # Python versions; little-endian unpack keeps the byte order fixed.
        digest = hashlib.blake2b(token.encode("utf-8"), digest_size=4 * self._dim,
                                 person=b"tokvec").digest()
        raw = struct.unpack(f"<{self._dim}I", digest)
        vec = np.array([(u / 2147483648.0) - 1.0 for u in raw], dtype=np.float64)
        norm = float(np.linalg.norm(vec))
        if norm == 0.0:  # vanishing hash vector; pin a basis direction
            vec[0] = 1.0
            norm = 1.0
        return vec / norm

    def embed_tokens(self, text: str) -> TokenEmbeddings:
        tokens = self.tokenize(text)
        if not tokens:
            raise DomainError("cannot embed empty text")
        self._check_length(tokens, "text")
        vectors = np.stack([self._token_vector(t) for t in tokens])
        return TokenEmbeddings(tokens=tuple(tokens), vectors=vectors)

    def conditional_token_logprobs(self, source: str, target: str) -> list[float]:
        source_tokens = self.tokenize(source)
        target_tokens = self.tokenize(target)
        if not source_tokens or not target_tokens:
            raise DomainError("source and target must be non-empty")
        self._check_length(source_tokens, "source")
        self._check_length(target_tokens, "target")
        vocabulary = set(source_tokens)
        return [self.LOGPROB_PRESENT if tok in vocabulary else self.LOGPROB_ABSENT
                for tok in target_tokens]

    def arc_entailment_probs(self, document: str,
                             arcs: Sequence[DependencyArc]) -> list[float]:
        if not arcs:
            raise DomainError("arc list must be non-empty")
        doc_tokens = self.tokenize(document)
        self._check_length(doc_tokens, "document")
        vocabulary = set(doc_tokens)
        return [1.0 if arc.head_token in vocabulary and arc.child_token in vocabulary
                else 0.0
                for arc in arcs]

    def masked_fill_accuracy(self, prefix: str, sentence: str,
                             mask_positions: Iterable[int]) -> float:
        positions = sorted(set(mask_positions))
        if not positions:
            raise DomainError("mask position set must be non-empty")
        sentence_tokens = self.tokenize(sentence)
        prefix_tokens = self.tokenize(prefix)
        self._check_length(prefix_tokens + sentence_tokens, "prefix + sentence")
        if positions[0] < 0 or positions[-1] >= len(sentence_tokens):
            raise DomainError(
                f"mask position out of range for a {len(sentence_tokens)}-token sentence"
            )
        known = set(prefix_tokens)
        hits = sum(1 for i in positions if sentence_tokens[i] in known)
        return hits / len(positions)

    def parse_dependencies(self, summary: str) -> list[DependencyArc]:
        tokens = self.tokenize(summary)
        if not tokens:
            raise DomainError("cannot parse empty text")
        self._check_length(tokens, "summary")
        if len(tokens) < 2:
            return []
        head = (len(tokens) - 1) // 2
        return [
            DependencyArc(head_token=tokens[head], child_token=tokens[i],
                          relation_label="dep", head_index=head, child_index=i)
            for i in range(len(tokens))
            if i != head
        ]


_BACKENDS: dict[str, Callable[..., Backend]] = {}


def register_backend(name: str, factory: Callable[..., Backend], *, replace: bool = False) -> None:
    """Register a backend constructor under a string id."""
    if name in _BACKENDS and not replace:
        raise ConfigurationError(f"backend {name!r} already registered")
    _BACKENDS[name] = factory


def create_backend(name: str, **options) -> Backend:
    """Instantiate a registered backend; ConfigurationError on unknown names."""
    try:
        factory = _BACKENDS[name]
    except KeyError:
        known = ", ".join(sorted(_BACKENDS)) or "(none)"
        raise ConfigurationError(f"unknown backend {name!r}; registered: {known}") from None
    return factory(**options)


def available_backends() -> list[str]:
    return sorted(_BACKENDS)


register_backend("mock", MockBackend)
