"""Epoch batch planning: dandelion author clusters grouped into fixed-size batches.

Each selected author contributes two documents. K-means over all of them
seeds one centroid per cluster slot; centroids are anchored to distinct
authors, then grown round-robin by claiming the author of the nearest
unassigned document from a capped precomputed neighbor list. Each claimed
author brings both documents: the claiming document sits near the dense
cluster center, its paired hard positive lands in the outer reaches. The
cluster centroids are grouped into batches by the same procedure, and the
result is rebalanced so every batch but the last holds exactly batch_size
authors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .geometry import VectorMatrix, kmeans, topk_by_cosine
from .miner import TrainingPair

DEFAULT_BATCH_SIZE = 74
DEFAULT_CLUSTERS_PER_BATCH = 5
DEFAULT_NEIGHBOR_CAP = 2024

# epoch-to-seed decorrelation stride for per-epoch k-means restarts
_EPOCH_SEED_STRIDE = 1000003


@dataclass(frozen=True)
class BatchConfig:
    batch_size: int = DEFAULT_BATCH_SIZE
    clusters_per_batch: int = DEFAULT_CLUSTERS_PER_BATCH
    neighbor_cap: int = DEFAULT_NEIGHBOR_CAP
    seed: int = 0

    def validate(self) -> None:
        if not self.batch_size >= self.clusters_per_batch >= 1:
            raise ValueError("need batch_size >= clusters_per_batch >= 1")
        if self.neighbor_cap < 1:
            raise ValueError("neighbor_cap must be >= 1")

    @property
    def cluster_capacity(self) -> int:
        """Authors per cluster; clusters_per_batch full clusters fill one batch."""
        return math.ceil(self.batch_size / self.clusters_per_batch)


@dataclass
class ClusterSpec:
    centroid: np.ndarray
    capacity: int
    member_authors: list[str] = field(default_factory=list)
    # the document that pulled each member in; parallel to member_authors
    member_center_docs: list[str] = field(default_factory=list)

    def has_room(self) -> bool:
        return len(self.member_authors) < self.capacity


@dataclass
class BatchPlan:
    batches: list[list[str]]
    epoch: int
    source: str
    # per batch, the cluster-side document of each author (parallel to batches)
    center_docs: list[list[str]] = field(default_factory=list)
    config: BatchConfig | None = None

    def all_authors(self) -> list[str]:
        return [a for batch in self.batches for a in batch]


def plan_dimensions(num_authors: int, config: BatchConfig) -> tuple[int, int]:
    """(number of batches, number of cluster centroids) for an epoch."""
    if num_authors < 1:
        raise ValueError("num_authors must be >= 1")
    num_batches = math.ceil(num_authors / config.batch_size)
    return num_batches, num_batches * config.clusters_per_batch


def seed_centroids(
    doc_vectors: VectorMatrix,
    doc_authors: Mapping[str, str],
    num_centroids: int,
    seed: int,
) -> list[tuple[np.ndarray, str]]:
    """K-means centroids over all selected documents, each anchored to the
    author of its nearest document. Anchors may collide; dedupe_centroids
    restores distinctness."""
    num_authors = len(set(doc_authors[r] for r in doc_vectors.row_ids))
    if num_centroids > num_authors:
        raise ValueError(
            f"{num_centroids} centroids for only {num_authors} authors"
        )
    result = kmeans(doc_vectors, num_centroids, seed)
    out = []
    for centroid in result.centroids:
        (nearest_doc, _), = topk_by_cosine(centroid, doc_vectors, 1)
        out.append((centroid, doc_authors[nearest_doc]))
    return out


def dedupe_centroids(
    centroids: list[tuple[np.ndarray, str]],
    doc_vectors: VectorMatrix,
    doc_authors: Mapping[str, str],
) -> list[tuple[np.ndarray, str]]:
    """Make anchor authors distinct.

    Walking in list order, a centroid whose anchor is already taken is
    replaced by the nearest document vector whose author is not yet an
    anchor, and that author becomes its anchor.
    """
    used: set[str] = set()
    out: list[tuple[np.ndarray, str]] = []
    row_of = {rid: i for i, rid in enumerate(doc_vectors.row_ids)}
    for centroid, anchor in centroids:
        if anchor not in used:
            used.add(anchor)
            out.append((centroid, anchor))
            continue
        ranking = topk_by_cosine(centroid, doc_vectors, len(doc_vectors))
        for doc_id, _ in ranking:
            candidate = doc_authors[doc_id]
            if candidate not in used:
                used.add(candidate)
                out.append((doc_vectors.rows[row_of[doc_id]].copy(), candidate))
                break
        else:
            raise ValueError("cannot dedupe: fewer authors than centroids")
    return out


def grow_clusters(
    centroids: list[tuple[np.ndarray, str]],
    doc_vectors: VectorMatrix,
    doc_authors: Mapping[str, str],
    config: BatchConfig,
) -> list[ClusterSpec]:
    """Round-robin growth from capped neighbor lists.

    At each visit a centroid claims the author owning the nearest unassigned
    document on its precomputed list; both of the author's documents join
    the cluster. A centroid is skipped once at capacity or once its list is
    exhausted; the loop ends when a full pass adds nothing. After dedup each
    centroid sits on (or at) a document of its own anchor, so anchors claim
    themselves on the first pass.
    """
    capacity = config.cluster_capacity
    cap = min(config.neighbor_cap, len(doc_vectors))
    clusters = [ClusterSpec(centroid=c, capacity=capacity) for c, _ in centroids]
    neighbor_lists = [
        [doc_id for doc_id, _ in topk_by_cosine(c, doc_vectors, cap)]
        for c, _ in centroids
    ]
    cursors = [0] * len(clusters)
    assigned: set[str] = set()

    grew = True
    while grew:
        grew = False
        for idx, cluster in enumerate(clusters):
            if not cluster.has_room():
                continue
            neighbors = neighbor_lists[idx]
            pos = cursors[idx]
            while pos < len(neighbors) and doc_authors[neighbors[pos]] in assigned:
                pos += 1
            cursors[idx] = pos
            if pos >= len(neighbors):
                continue  # list exhausted
            doc_id = neighbors[pos]
            author = doc_authors[doc_id]
            cluster.member_authors.append(author)
            cluster.member_center_docs.append(doc_id)
            assigned.add(author)
            cursors[idx] = pos + 1
            grew = True
    return clusters


def assign_leftovers(
    clusters: list[ClusterSpec],
    unassigned_authors: Sequence[str],
    doc_vectors: VectorMatrix,
    doc_authors: Mapping[str, str],
) -> list[ClusterSpec]:
    """Place every remaining author in the spare-capacity cluster whose
    centroid is nearest to either of their documents (ties to the lowest
    cluster index). When no spare capacity exists anywhere, every cluster's
    capacity relaxes by one and placement continues."""
    if not unassigned_authors:
        return clusters
    docs_by_author: dict[str, list[int]] = {}
    for row, doc_id in enumerate(doc_vectors.row_ids):
        docs_by_author.setdefault(doc_authors[doc_id], []).append(row)

    norms = doc_vectors.row_norms()
    for author in sorted(unassigned_authors):
        rows = docs_by_author[author]
        vecs = doc_vectors.rows[rows]
        vec_norms = norms[rows]
        while True:
            best_idx = None
            best_score = -np.inf
            best_doc = None
            for idx, cluster in enumerate(clusters):
                if not cluster.has_room():
                    continue
                c = cluster.centroid
                cn = np.linalg.norm(c)
                sims = vecs @ c / (vec_norms * cn)
                local = int(np.argmax(sims))
                if sims[local] > best_score:
                    best_score = float(sims[local])
                    best_idx = idx
                    best_doc = doc_vectors.row_ids[rows[local]]
            if best_idx is not None:
                clusters[best_idx].member_authors.append(author)
                clusters[best_idx].member_center_docs.append(best_doc)
                break
            for cluster in clusters:
                cluster.capacity += 1
    return clusters


def _chunk_rebalance(
    author_runs: list[tuple[str, str]], batch_size: int
) -> tuple[list[list[str]], list[list[str]]]:
    """Re-chunk the concatenated author sequence so every batch except
    possibly the last has exactly batch_size authors; overflow and underflow
    shift only across adjacent batch boundaries."""
    batches, center_docs = [], []
    for start in range(0, len(author_runs), batch_size):
        chunk = author_runs[start : start + batch_size]
        batches.append([a for a, _ in chunk])
        center_docs.append([d for _, d in chunk])
    return batches, center_docs


def group_into_batches(
    clusters: list[ClusterSpec],
    config: BatchConfig,
    seed: int,
    epoch: int = 1,
    source: str = "",
) -> BatchPlan:
    """Cluster the cluster centroids into batches with the same machinery.

    Super-centroids come from k-means over the cluster centroids (no anchor
    dedup at this level); each claims nearest unassigned clusters round-robin
    up to clusters_per_batch, leftovers join the nearest batch with room,
    and each batch concatenates its clusters' member authors before the
    final exact-size rebalance.
    """
    total_authors = sum(len(c.member_authors) for c in clusters)
    if total_authors == 0:
        raise ValueError("clusters contain no authors")
    num_batches = math.ceil(total_authors / config.batch_size)

    width = len(str(max(len(clusters) - 1, 1)))
    centroid_matrix = VectorMatrix(
        rows=np.stack([c.centroid for c in clusters]),
        row_ids=tuple(f"c{i:0{width}d}" for i in range(len(clusters))),
    )
    cluster_of_id = {rid: i for i, rid in enumerate(centroid_matrix.row_ids)}

    result = kmeans(centroid_matrix, num_batches, seed)
    cap = min(config.neighbor_cap, len(centroid_matrix))
    neighbor_lists = [
        [rid for rid, _ in topk_by_cosine(sc, centroid_matrix, cap)]
        for sc in result.centroids
    ]
    groups: list[list[int]] = [[] for _ in range(num_batches)]
    cursors = [0] * num_batches
    taken: set[str] = set()

    grew = True
    while grew:
        grew = False
        for b in range(num_batches):
            if len(groups[b]) >= config.clusters_per_batch:
                continue
            neighbors = neighbor_lists[b]
            pos = cursors[b]
            while pos < len(neighbors) and neighbors[pos] in taken:
                pos += 1
            cursors[b] = pos
            if pos >= len(neighbors):
                continue
            rid = neighbors[pos]
            groups[b].append(cluster_of_id[rid])
            taken.add(rid)
            cursors[b] = pos + 1
            grew = True

    # leftover clusters: nearest super-centroid with room, relax when saturated
    leftover = [rid for rid in centroid_matrix.row_ids if rid not in taken]
    group_cap = config.clusters_per_batch
    for rid in leftover:
        v = centroid_matrix.rows[cluster_of_id[rid]]
        vn = np.linalg.norm(v)
        while True:
            best_b, best_score = None, -np.inf
            for b in range(num_batches):
                if len(groups[b]) >= group_cap:
                    continue
                sc = result.centroids[b]
                score = float(v @ sc / (vn * np.linalg.norm(sc)))
                if score > best_score:
                    best_score, best_b = score, b
            if best_b is not None:
                groups[best_b].append(cluster_of_id[rid])
                taken.add(rid)
                break
            group_cap += 1

    author_runs: list[tuple[str, str]] = []
    for group in groups:
        for ci in group:
            author_runs.extend(
                zip(clusters[ci].member_authors, clusters[ci].member_center_docs)
            )
    batches, center_docs = _chunk_rebalance(author_runs, config.batch_size)
    return BatchPlan(
        batches=batches,
        epoch=epoch,
        source=source,
        center_docs=center_docs,
        config=config,
    )


def build_epoch_plan(
    pairs: Sequence[TrainingPair],
    vectors_for_epoch: VectorMatrix,
    config: BatchConfig,
    epoch: int,
) -> BatchPlan:
    """Full planning pipeline for one epoch.

    vectors_for_epoch must cover both documents of every pair; at epoch 1
    they come from the untrained projection, afterwards from the model
    state left by the previous epoch.
    """
    config.validate()
    if epoch < 1:
        raise ValueError("epoch must be >= 1")
    doc_authors: dict[str, str] = {}
    for pair in pairs:
        doc_authors[pair.doc_a] = pair.author_id
        doc_authors[pair.doc_b] = pair.author_id
    row_of = {rid: i for i, rid in enumerate(vectors_for_epoch.row_ids)}
    missing = [d for d in doc_authors if d not in row_of]
    if missing:
        raise ValueError(f"vectors missing for paired documents: {missing[:5]}")

    pair_doc_ids = [d for d in vectors_for_epoch.row_ids if d in doc_authors]
    doc_vectors = VectorMatrix(
        rows=vectors_for_epoch.rows[[row_of[d] for d in pair_doc_ids]],
        row_ids=tuple(pair_doc_ids),
    )

    num_authors = len({p.author_id for p in pairs})
    seed = config.seed + _EPOCH_SEED_STRIDE * epoch
    source = f"projection-epoch-{epoch - 1}"

    _, num_centroids = plan_dimensions(num_authors, config)
    seeded = seed_centroids(doc_vectors, doc_authors, num_centroids, seed)
    deduped = dedupe_centroids(seeded, doc_vectors, doc_authors)
    clusters = grow_clusters(deduped, doc_vectors, doc_authors, config)
    assigned = {a for c in clusters for a in c.member_authors}
    leftovers = [p.author_id for p in pairs if p.author_id not in assigned]
    clusters = assign_leftovers(clusters, leftovers, doc_vectors, doc_authors)
    return group_into_batches(clusters, config, seed + 1, epoch=epoch, source=source)


def build_random_plan(
    pairs: Sequence[TrainingPair],
    config: BatchConfig,
    epoch: int,
    seed: int | None = None,
) -> BatchPlan:
    """Baseline plan: seeded shuffle of authors chunked into batches.

    The center-doc slot is filled with each pair's doc_a so downstream
    consumers see the same plan shape as the clustered variant.
    """
    config.validate()
    rng = np.random.default_rng(
        (config.seed if seed is None else seed) + _EPOCH_SEED_STRIDE * epoch
    )
    ordered = sorted(pairs, key=lambda p: p.author_id)
    perm = rng.permutation(len(ordered))
    runs = [(ordered[i].author_id, ordered[i].doc_a) for i in perm]
    batches, center_docs = _chunk_rebalance(runs, config.batch_size)
    return BatchPlan(
        batches=batches,
        epoch=epoch,
        source=f"random-epoch-{epoch - 1}",
        center_docs=center_docs,
        config=config,
    )
