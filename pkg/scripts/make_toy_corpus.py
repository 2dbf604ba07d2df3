#!/usr/bin/env python3
"""Regenerate the bundled 50-pair toy corpus.

Synthetic news-style pairs with a controlled amount of summary hallucination
(novel tokens absent from the document) so the mock scorers produce a spread
of values worth filtering. Documents are pre-tokenized (periods are separate
tokens) so whitespace tokenization lines up with sentence boundaries.

The output is checked in at src/factfilter/data/toy_corpus.jsonl; rerun only
if the corpus design changes, and expect downstream frozen hashes to move.
"""

import json
import random
from pathlib import Path

OUT = Path(__file__).resolve().parent.parent / "src" / "factfilter" / "data" / "toy_corpus.jsonl"

CONTENT_WORDS = [
    "mayor", "council", "budget", "river", "bridge", "storm", "harbor",
    "festival", "museum", "garden", "railway", "airport", "clinic", "school",
    "market", "tower", "castle", "valley", "farmer", "singer", "artist",
    "doctor", "police", "report", "summer", "winter", "monday", "friday",
    "morning", "evening", "village", "island", "forest", "meadow", "station",
    "library", "theater", "stadium", "parade", "contract", "election",
    "minister", "senator", "project", "tunnel", "orchard", "chapel",
    "opened", "closed", "visited", "announced", "approved", "rejected",
    "funded", "built", "painted", "repaired", "expanded", "planned",
    "hosted", "awarded", "signed", "launched", "near", "with", "after",
    "before", "during", "against",
]

NOVEL_WORDS = [
    "dragon", "wizard", "comet", "galaxy", "phantom", "miracle", "unicorn",
    "volcano", "pirate", "meteor", "sphinx", "griffin",
]

N_PAIRS = 50
SPLIT_PLAN = [("train", 30), ("validation", 10), ("test", 10)]
SEED = 20240601


def make_document(rng: random.Random) -> str:
    sentences = []
    for _ in range(rng.randint(3, 5)):
        words = [rng.choice(CONTENT_WORDS) for _ in range(rng.randint(6, 10))]
        sentences.append(" ".join(words) + " .")
    return " ".join(sentences)


def make_summary(rng: random.Random, document: str) -> str:
    doc_words = [w for w in document.split() if w != "."]
    length = rng.randint(6, 10)
    n_bad = rng.choices([0, 1, 2, 3, 4], weights=[35, 20, 20, 15, 10])[0]
    n_bad = min(n_bad, length - 2)
    words = [rng.choice(doc_words) for _ in range(length - n_bad)]
    words += [rng.choice(NOVEL_WORDS) for _ in range(n_bad)]
    rng.shuffle(words)
    return " ".join(words)


def main() -> None:
    rng = random.Random(SEED)
    splits = [name for name, count in SPLIT_PLAN for _ in range(count)]
    assert len(splits) == N_PAIRS
    OUT.parent.mkdir(parents=True, exist_ok=True)
    with OUT.open("w", encoding="utf-8", newline="\n") as handle:
        for i in range(N_PAIRS):
            document = make_document(rng)
            record = {
                "id": f"toy-{i + 1:04d}",
                "document": document,
                "summary": make_summary(rng, document),
                "split": splits[i],
                "meta": {"source": "synthetic-news"},
            }
            handle.write(json.dumps(record, ensure_ascii=False) + "\n")
    print(f"wrote {N_PAIRS} pairs to {OUT}")


if __name__ == "__main__":
    main()
