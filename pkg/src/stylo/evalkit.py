"""Ranked-retrieval evaluation: task construction, Success@8, and MRR.

A task holds per-author queries, their target sets, and the shared
haystack. Per-genre tasks keep targets in the query's genre; cross-genre
tasks forbid any genre overlap between query and target documents. The
haystack is every non-query document in the corpus, so ineligible authors
still contribute distractors.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

import numpy as np

from .corpus import Corpus
from .geometry import VectorMatrix, l2_normalize, normalize_rows, topk_by_cosine
from .trainer import ProjectionModel, project

SUCCESS_CUTOFF = 8

MODES = ("per_genre", "cross_genre")


@dataclass(frozen=True)
class RetrievalTask:
    # (query_id, author_id, query doc ids)
    queries: tuple[tuple[str, str, tuple[str, ...]], ...]
    targets: dict[str, frozenset[str]]
    haystack: frozenset[str]
    mode: str

    def validate(self, corpus: Corpus) -> None:
        for query_id, author_id, query_docs in self.queries:
            target_docs = self.targets[query_id]
            if not target_docs:
                raise ValueError(f"query {query_id} has no targets")
            if not target_docs <= self.haystack:
                raise ValueError(f"targets of {query_id} not all in haystack")
            if any(d in self.haystack for d in query_docs):
                raise ValueError(f"query docs of {query_id} leak into haystack")
            query_genres = {corpus[d].genre for d in query_docs}
            for t in target_docs:
                if corpus[t].author_id != author_id:
                    raise ValueError(f"target {t} not by query author {author_id}")
                if self.mode == "per_genre" and corpus[t].genre not in query_genres:
                    raise ValueError(f"per-genre target {t} outside query genre")
                if self.mode == "cross_genre" and corpus[t].genre in query_genres:
                    raise ValueError(f"cross-genre target {t} shares query genre")


@dataclass
class MetricsReport:
    success_at_8: float
    mrr: float
    num_queries: int
    per_query: list[dict] = field(default_factory=list)
    mode: str = ""


def build_task(
    corpus: Corpus,
    mode: str,
    seed: int,
    min_query_docs: int = 1,
) -> RetrievalTask:
    """Seeded split of each eligible author's documents into queries and targets.

    Per-genre: some genre must hold more than min_query_docs of the
    author's documents; query docs come from it and the rest of that genre
    are the targets. Cross-genre: the author must span at least two genres;
    query docs come from one seeded genre choice and every document of the
    author's other genres is a target. All non-query documents of the whole
    corpus form the haystack.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    if min_query_docs < 1:
        raise ValueError("min_query_docs must be >= 1")

    queries = []
    targets: dict[str, frozenset[str]] = {}
    all_query_docs: set[str] = set()

    for author_id in sorted(corpus.author_index):
        docs = corpus.docs_for_author(author_id)
        by_genre: dict[str, list[str]] = {}
        for d in docs:
            by_genre.setdefault(d.genre, []).append(d.doc_id)
        rng = random.Random(f"{seed}:{mode}:{author_id}")

        if mode == "per_genre":
            eligible = sorted(
                g for g, ids in by_genre.items() if len(ids) > min_query_docs
            )
            if not eligible:
                continue
            genre = eligible[rng.randrange(len(eligible))]
            pool = sorted(by_genre[genre])
            query_docs = rng.sample(pool, min_query_docs)
            target_docs = [d for d in pool if d not in query_docs]
        else:
            eligible = sorted(
                g
                for g, ids in by_genre.items()
                if len(ids) >= min_query_docs and len(docs) > len(ids)
            )
            if not eligible:
                continue
            genre = eligible[rng.randrange(len(eligible))]
            query_docs = rng.sample(sorted(by_genre[genre]), min_query_docs)
            target_docs = [d.doc_id for d in docs if d.genre != genre]

        query_id = f"q-{author_id}"
        queries.append((query_id, author_id, tuple(sorted(query_docs))))
        targets[query_id] = frozenset(target_docs)
        all_query_docs.update(query_docs)

    if not queries:
        raise ValueError(f"no eligible authors for mode {mode!r}")

    haystack = frozenset(
        d.doc_id for d in corpus.documents if d.doc_id not in all_query_docs
    )
    task = RetrievalTask(
        queries=tuple(queries), targets=targets, haystack=haystack, mode=mode
    )
    task.validate(corpus)
    return task


def rank_haystack(
    model: ProjectionModel,
    corpus: Corpus,
    query_doc_ids,
    haystack,
) -> list[str]:
    """Haystack ranked by cosine to the query vector, ties by ascending doc_id.

    The query vector is the renormalized mean of the query documents'
    normalized projections.
    """
    if not haystack:
        raise ValueError("empty haystack")
    for doc_id in list(query_doc_ids) + list(haystack):
        if doc_id not in corpus:
            raise ValueError(f"unknown document {doc_id!r}")

    query_vec = _query_vector(model, corpus, query_doc_ids)
    hay_ids = sorted(haystack)
    hay_base = np.stack([corpus[d].base_embedding for d in hay_ids])
    matrix = VectorMatrix(rows=project(model, hay_base), row_ids=tuple(hay_ids))
    ranked = topk_by_cosine(query_vec, matrix, len(hay_ids))
    return [doc_id for doc_id, _ in ranked]


def success_at_k(ranking, targets, k: int = SUCCESS_CUTOFF) -> int:
    """1 iff any of the first k ranked documents is a target."""
    if k < 1:
        raise ValueError("k must be >= 1")
    return int(any(doc in targets for doc in ranking[:k]))


def mrr(ranking, targets) -> float:
    """Reciprocal rank of the highest-ranked target, 0.0 if none present."""
    for rank, doc in enumerate(ranking, start=1):
        if doc in targets:
            return 1.0 / rank
    return 0.0


def _query_vector(model: ProjectionModel, corpus: Corpus, query_doc_ids) -> np.ndarray:
    base = np.stack([corpus[d].base_embedding for d in query_doc_ids])
    return l2_normalize(normalize_rows(project(model, base)).mean(axis=0))


def evaluate(model: ProjectionModel, corpus: Corpus, task: RetrievalTask) -> MetricsReport:
    """Score every query and average; aggregates are plain means over queries."""
    hay_ids = sorted(task.haystack)
    hay_base = np.stack([corpus[d].base_embedding for d in hay_ids])
    hay_matrix = VectorMatrix(rows=project(model, hay_base), row_ids=tuple(hay_ids))

    per_query = []
    for query_id, author_id, query_docs in task.queries:
        query_vec = _query_vector(model, corpus, query_docs)
        ranking = [d for d, _ in topk_by_cosine(query_vec, hay_matrix, len(hay_ids))]
        targets = task.targets[query_id]
        per_query.append(
            {
                "query_id": query_id,
                "author_id": author_id,
                "success_at_8": success_at_k(ranking, targets),
                "mrr": mrr(ranking, targets),
            }
        )
    return MetricsReport(
        success_at_8=float(np.mean([q["success_at_8"] for q in per_query])),
        mrr=float(np.mean([q["mrr"] for q in per_query])),
        num_queries=len(per_query),
        per_query=per_query,
        mode=task.mode,
    )


def average_runs(reports: list[MetricsReport]) -> MetricsReport:
    """Field-wise mean of aggregate metrics across runs over the same task."""
    if not reports:
        raise ValueError("need at least one report")
    first = reports[0]
    for other in reports[1:]:
        if other.num_queries != first.num_queries or other.mode != first.mode:
            raise ValueError("reports do not describe the same task")
        if [q["query_id"] for q in other.per_query] != [
            q["query_id"] for q in first.per_query
        ]:
            raise ValueError("reports do not describe the same task")
    per_query = [
        {
            "query_id": q["query_id"],
            "author_id": q["author_id"],
            "success_at_8": float(
                np.mean([r.per_query[i]["success_at_8"] for r in reports])
            ),
            "mrr": float(np.mean([r.per_query[i]["mrr"] for r in reports])),
        }
        for i, q in enumerate(first.per_query)
    ]
    return MetricsReport(
        success_at_8=float(np.mean([r.success_at_8 for r in reports])),
        mrr=float(np.mean([r.mrr for r in reports])),
        num_queries=first.num_queries,
        per_query=per_query,
        mode=first.mode,
    )
