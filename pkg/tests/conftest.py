from __future__ import annotations

import pytest

from factfilter import Corpus, MockBackend, Pair


@pytest.fixture(scope="session")
def mock_backend() -> MockBackend:
    return MockBackend()


def make_pair(pair_id: str, document: str, summary: str, split: str = "train",
              **meta) -> Pair:
    return Pair(id=pair_id, document=document, summary=summary, split=split, meta=meta)


def make_corpus(name: str, *pairs: Pair) -> Corpus:
    return Corpus(name=name, pairs=tuple(pairs))
