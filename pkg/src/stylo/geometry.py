"""Shared vector math: cosine similarity, normalization, K-means, exact top-k search.

Everything here is a pure function over immutable inputs and is deterministic
for a fixed seed, so batch plans built on top of it are reproducible.
Distances inside K-means are Euclidean; ranking elsewhere is by cosine.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

DEFAULT_KMEANS_MAX_ITERS = 100


@dataclass(frozen=True)
class VectorMatrix:
    """N row vectors of equal dimension with a parallel list of unique row ids."""

    rows: np.ndarray
    row_ids: tuple[str, ...]

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=np.float64)
        if rows.ndim != 2:
            raise ValueError(f"rows must be a 2-d array, got ndim={rows.ndim}")
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "row_ids", tuple(self.row_ids))
        if len(self.row_ids) != rows.shape[0]:
            raise ValueError(
                f"{len(self.row_ids)} row_ids for {rows.shape[0]} rows"
            )
        if len(set(self.row_ids)) != len(self.row_ids):
            raise ValueError("row_ids must be unique")
        object.__setattr__(self, "_norms", None)
        object.__setattr__(self, "_id_rank", None)

    def __len__(self) -> int:
        return self.rows.shape[0]

    @property
    def dimension(self) -> int:
        return self.rows.shape[1]

    def row_norms(self) -> np.ndarray:
        if self._norms is None:
            object.__setattr__(self, "_norms", np.linalg.norm(self.rows, axis=1))
        return self._norms

    def id_rank(self) -> np.ndarray:
        """Rank of each row's id in lexicographic order (cached tie-break key)."""
        if self._id_rank is None:
            rank = np.empty(len(self), dtype=np.int64)
            rank[np.argsort(np.asarray(self.row_ids))] = np.arange(len(self))
            object.__setattr__(self, "_id_rank", rank)
        return self._id_rank


@dataclass
class KMeansResult:
    centroids: np.ndarray
    assignment: np.ndarray
    inertia: float
    iterations_run: int
    # inertia after each assignment step, monotone non-increasing
    inertia_history: list[float] = field(default_factory=list)


def cosine(u: np.ndarray, v: np.ndarray) -> float:
    """Cosine similarity of two vectors, clamped to [-1, 1] against rounding.

    Raises ValueError on dimension mismatch or a zero-norm input.
    """
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise ValueError(f"dimension mismatch: {u.shape} vs {v.shape}")
    nu = np.linalg.norm(u)
    nv = np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        raise ValueError("cosine undefined for zero-norm input")
    return float(np.clip(np.dot(u, v) / (nu * nv), -1.0, 1.0))


def l2_normalize(u: np.ndarray) -> np.ndarray:
    """Scale a vector to unit Euclidean norm. Raises ValueError on zero norm."""
    u = np.asarray(u, dtype=np.float64)
    n = np.linalg.norm(u)
    if n == 0.0:
        raise ValueError("cannot normalize a zero-norm vector")
    return u / n


def normalize_rows(matrix: np.ndarray) -> np.ndarray:
    """L2-normalize every row of a matrix. Raises ValueError if any row is zero."""
    matrix = np.asarray(matrix, dtype=np.float64)
    norms = np.linalg.norm(matrix, axis=1, keepdims=True)
    if np.any(norms == 0.0):
        raise ValueError("cannot normalize a zero-norm row")
    return matrix / norms


def _squared_distances(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    """Pairwise squared Euclidean distances, shape (N, K)."""
    # |x - c|^2 = |x|^2 - 2 x.c + |c|^2; clip the tiny negatives rounding produces
    p2 = np.einsum("ij,ij->i", points, points)[:, None]
    c2 = np.einsum("ij,ij->i", centroids, centroids)[None, :]
    d2 = p2 - 2.0 * points @ centroids.T + c2
    return np.maximum(d2, 0.0)


def _farthest_point_init(points: np.ndarray, k: int, seed: int) -> np.ndarray:
    """Greedy farthest-point seeding: seeded first pick, then max-min distance.

    Ties resolve to the lowest row index, so the result is a pure function of
    (points, k, seed).
    """
    n = points.shape[0]
    rng = np.random.default_rng(seed)
    chosen = [int(rng.integers(n))]
    min_d2 = _squared_distances(points, points[chosen[-1]][None, :]).ravel()
    while len(chosen) < k:
        nxt = int(np.argmax(min_d2))
        chosen.append(nxt)
        d2 = _squared_distances(points, points[nxt][None, :]).ravel()
        min_d2 = np.minimum(min_d2, d2)
    return points[chosen].copy()


def kmeans(
    points: VectorMatrix,
    k: int,
    seed: int,
    max_iters: int = DEFAULT_KMEANS_MAX_ITERS,
) -> KMeansResult:
    """Euclidean Lloyd's iterations from seeded farthest-point initialization.

    Runs until the assignment reaches a fixpoint (with no empty-cluster
    repairs) or max_iters. An empty cluster is reseeded to the point
    currently farthest from its assigned centroid. Deterministic for fixed
    (points, k, seed).
    """
    data = points.rows
    n = len(points)
    if n == 0:
        raise ValueError("kmeans requires a non-empty point set")
    if not 1 <= k <= n:
        raise ValueError(f"k must be in [1, {n}], got {k}")

    centroids = _farthest_point_init(data, k, seed)
    prev_assign = None
    history: list[float] = []
    assign = np.zeros(n, dtype=np.int64)
    iterations = 0

    for iterations in range(1, max_iters + 1):
        d2 = _squared_distances(data, centroids)
        assign = np.argmin(d2, axis=1)
        own = d2[np.arange(n), assign]

        repaired = False
        present = np.bincount(assign, minlength=k)
        for j in np.flatnonzero(present == 0):
            worst = int(np.argmax(own))
            if own[worst] == 0.0:
                break  # every point already fits exactly; empty clusters are harmless
            centroids[j] = data[worst]
            assign[worst] = j
            own[worst] = 0.0
            repaired = True

        history.append(float(own.sum()))
        if prev_assign is not None and not repaired and np.array_equal(assign, prev_assign):
            break
        prev_assign = assign.copy()

        for j in range(k):
            members = assign == j
            if members.any():
                centroids[j] = data[members].mean(axis=0)

    return KMeansResult(
        centroids=centroids,
        assignment=assign,
        inertia=history[-1],
        iterations_run=iterations,
        inertia_history=history,
    )


def topk_by_cosine(
    query: np.ndarray,
    matrix: VectorMatrix,
    k: int,
) -> list[tuple[str, float]]:
    """The min(k, N) rows most cosine-similar to the query, descending.

    Ties break by ascending row_id. Raises ValueError on dimension mismatch.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if len(matrix) == 0:
        raise ValueError("matrix must be non-empty")
    query = np.asarray(query, dtype=np.float64)
    if query.shape != (matrix.dimension,):
        raise ValueError(
            f"dimension mismatch: query {query.shape} vs matrix dim {matrix.dimension}"
        )
    qn = np.linalg.norm(query)
    if qn == 0.0:
        raise ValueError("cosine undefined for zero-norm query")
    norms = matrix.row_norms()
    if np.any(norms == 0.0):
        raise ValueError("cosine undefined for zero-norm row")
    sims = np.clip(matrix.rows @ query / (norms * qn), -1.0, 1.0)

    # lexsort is keyed last-first: primary similarity desc, then row_id asc
    order = np.lexsort((matrix.id_rank(), -sims))[: min(k, len(matrix))]
    return [(matrix.row_ids[i], float(sims[i])) for i in order]
