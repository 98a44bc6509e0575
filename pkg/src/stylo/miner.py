"""Select one training pair per author: the hard positive or a random baseline.

Hard mode picks the same-author pair with the lowest base-embedding cosine
similarity and drops the author entirely when even that pair is more
similar than the ceiling. Random mode picks a uniform seeded pair and never
drops anyone. Authors with fewer than two documents are skipped either way.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from itertools import combinations

from .corpus import Corpus, Document
from .geometry import cosine

DEFAULT_CEILING = 0.2


@dataclass(frozen=True)
class MinerConfig:
    mode: str = "hard"  # "hard" | "random"
    ceiling: float = DEFAULT_CEILING
    seed: int = 0

    def validate(self) -> None:
        if self.mode not in ("hard", "random"):
            raise ValueError(f"mode must be 'hard' or 'random', got {self.mode!r}")
        if self.mode == "hard" and not 0.0 < self.ceiling <= 1.0:
            raise ValueError(f"ceiling must be in (0, 1], got {self.ceiling}")


@dataclass(frozen=True)
class TrainingPair:
    author_id: str
    doc_a: str
    doc_b: str
    base_similarity: float

    def __post_init__(self):
        if self.doc_a >= self.doc_b:
            raise ValueError("pair must be in canonical order doc_a < doc_b")


def _canonical(x: Document, y: Document) -> tuple[str, str]:
    return (x.doc_id, y.doc_id) if x.doc_id < y.doc_id else (y.doc_id, x.doc_id)


def min_similarity_pair(author_docs: list[Document]) -> tuple[str, str, float]:
    """The unordered pair with the lowest base-embedding cosine similarity.

    Ties break to the lexicographically smallest canonical (doc_a, doc_b).
    Raises ValueError with fewer than two documents.
    """
    if len(author_docs) < 2:
        raise ValueError("need at least 2 documents to form a pair")
    best: tuple[float, str, str] | None = None
    for x, y in combinations(author_docs, 2):
        sim = cosine(x.base_embedding, y.base_embedding)
        key = (sim, *_canonical(x, y))
        if best is None or key < best:
            best = key
    sim, doc_a, doc_b = best
    return doc_a, doc_b, sim


def _random_pair(author_docs: list[Document], seed: int, author_id: str) -> tuple[str, str, float]:
    # string seeds hash deterministically inside random.Random (sha512 path)
    rng = random.Random(f"{seed}:{author_id}")
    pairs = sorted(_canonical(x, y) for x, y in combinations(author_docs, 2))
    doc_a, doc_b = pairs[rng.randrange(len(pairs))]
    by_id = {d.doc_id: d for d in author_docs}
    sim = cosine(by_id[doc_a].base_embedding, by_id[doc_b].base_embedding)
    return doc_a, doc_b, sim


def select_training_pairs(corpus: Corpus, config: MinerConfig) -> list[TrainingPair]:
    """One TrainingPair per eligible author, sorted by author_id.

    Hard mode keeps the min-similarity pair iff its similarity is at or
    below the ceiling (equality kept); the author is excluded otherwise.
    Random mode keeps a seeded uniform pair with no exclusion.
    """
    config.validate()
    pairs: list[TrainingPair] = []
    for author_id in sorted(corpus.author_index):
        docs = corpus.docs_for_author(author_id)
        if len(docs) < 2:
            continue
        if config.mode == "hard":
            doc_a, doc_b, sim = min_similarity_pair(docs)
            if sim > config.ceiling:
                continue
        else:
            doc_a, doc_b, sim = _random_pair(docs, config.seed, author_id)
        pairs.append(TrainingPair(author_id, doc_a, doc_b, sim))
    return pairs
