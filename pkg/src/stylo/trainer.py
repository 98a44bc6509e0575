"""Train the half-width linear projection with supervised contrastive loss.

The trainable part is a bias-free linear map halving the base embedding
dimension. The loss acts on L2-normalized projections with temperature
scaling; per-author positives are the mined document pairs. Shard losses
and gradients are computed independently and applied together in one
gradient-descent update, and each epoch's batch plan is rebuilt from the
previous epoch's vectors.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .batcher import BatchConfig, BatchPlan, build_epoch_plan, build_random_plan
from .corpus import Corpus
from .geometry import VectorMatrix, normalize_rows
from .miner import TrainingPair

DEFAULT_EPOCHS = 4
DEFAULT_SHARDS_PER_STEP = 4
DEFAULT_TEMPERATURE = 0.07
DEFAULT_LEARNING_RATE = 1e-3
# the dual-seed evaluation protocol averages models built with these two
PROTOCOL_SEEDS = (42, 1234)

_CHECKPOINT_MAGIC = "stylo-projection-v1"


@dataclass
class ProjectionModel:
    """Bias-free linear map from dimension input_dim to floor(input_dim/2)."""

    weight: np.ndarray
    input_dim: int
    output_dim: int

    @classmethod
    def initialize(cls, input_dim: int, seed: int) -> "ProjectionModel":
        if input_dim < 2:
            raise ValueError("input_dim must be >= 2")
        output_dim = input_dim // 2
        rng = np.random.default_rng(seed)
        bound = 1.0 / np.sqrt(input_dim)
        weight = rng.uniform(-bound, bound, size=(output_dim, input_dim))
        return cls(weight=weight, input_dim=input_dim, output_dim=output_dim)

    def copy(self) -> "ProjectionModel":
        return ProjectionModel(self.weight.copy(), self.input_dim, self.output_dim)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = DEFAULT_EPOCHS
    shards_per_step: int = DEFAULT_SHARDS_PER_STEP
    temperature: float = DEFAULT_TEMPERATURE
    learning_rate: float = DEFAULT_LEARNING_RATE
    seed: int = PROTOCOL_SEEDS[0]

    def validate(self) -> None:
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.shards_per_step < 1:
            raise ValueError("shards_per_step must be >= 1")
        if self.temperature <= 0.0:
            raise ValueError("temperature must be positive")
        if self.learning_rate < 0.0:
            raise ValueError("learning_rate must be non-negative")


@dataclass
class EpochState:
    epoch: int
    model: ProjectionModel
    validation_score: float
    plan_source: str
    mean_train_loss: float


def project(model: ProjectionModel, base: np.ndarray) -> np.ndarray:
    """Apply the projection to one vector or to a stack of row vectors."""
    base = np.asarray(base, dtype=np.float64)
    if base.shape[-1] != model.input_dim:
        raise ValueError(
            f"dimension mismatch: input dim {base.shape[-1]}, model expects {model.input_dim}"
        )
    return base @ model.weight.T


def _check_batch(labels: Sequence[str], temperature: float) -> np.ndarray:
    if temperature <= 0.0:
        raise ValueError("temperature must be positive")
    lab = np.asarray(labels)
    if lab.shape[0] < 4:
        raise ValueError("batch must contain at least 2 authors (4 vectors)")
    _, counts = np.unique(lab, return_counts=True)
    if not np.all(counts == 2):
        raise ValueError("every label must appear exactly twice")
    return lab


def _loss_and_grad(
    projected: np.ndarray, labels: Sequence[str], temperature: float
) -> tuple[float, np.ndarray]:
    """Supervised contrastive loss and its gradient w.r.t. the raw projections.

    Vectors are L2-normalized internally. Per anchor i with positive set
    P(i) (same label, excluding i) the loss term is the mean over p in P(i)
    of log-sum-exp_{a != i}(s_ia) - s_ip where s_ia is scaled cosine; the
    batch loss is the mean over anchors.
    """
    lab = _check_batch(labels, temperature)
    Z = np.asarray(projected, dtype=np.float64)
    n = Z.shape[0]
    norms = np.linalg.norm(Z, axis=1, keepdims=True)
    if np.any(norms == 0.0):
        raise ValueError("cannot normalize a zero-norm projection")
    Zh = Z / norms

    S = Zh @ Zh.T / temperature
    pos = (lab[:, None] == lab[None, :]) & ~np.eye(n, dtype=bool)
    off_diag = ~np.eye(n, dtype=bool)

    S_masked = np.where(off_diag, S, -np.inf)
    row_max = S_masked.max(axis=1, keepdims=True)
    exp_shift = np.exp(S_masked - row_max)
    denom = exp_shift.sum(axis=1, keepdims=True)
    lse = (row_max + np.log(denom)).ravel()

    pos_counts = pos.sum(axis=1)
    mean_pos_sim = (S * pos).sum(axis=1) / pos_counts
    loss = float(np.mean(lse - mean_pos_sim))

    # dL/dS then symmetrize through both occurrences of each vector in S
    softmax = exp_shift / denom
    G = (softmax - pos / pos_counts[:, None]) / n
    np.fill_diagonal(G, 0.0)
    grad_hat = (G + G.T) @ Zh / temperature
    # chain rule through row normalization: (I - zz^T)/|z|
    radial = (grad_hat * Zh).sum(axis=1, keepdims=True)
    grad = (grad_hat - radial * Zh) / norms
    return loss, grad


def supcon_loss(projected: np.ndarray, labels: Sequence[str], temperature: float) -> float:
    """Supervised contrastive loss over a paired-label batch."""
    loss, _ = _loss_and_grad(projected, labels, temperature)
    return loss


def supcon_grad(
    projected: np.ndarray, labels: Sequence[str], temperature: float
) -> np.ndarray:
    """Analytic gradient of supcon_loss w.r.t. the projected vectors."""
    _, grad = _loss_and_grad(projected, labels, temperature)
    return grad


Shard = tuple[np.ndarray, Sequence[str]]


def _shard_loss_and_weight_grad(
    model: ProjectionModel, shard: Shard, temperature: float
) -> tuple[float, np.ndarray]:
    base, labels = shard
    projected = project(model, base)
    loss, grad_z = _loss_and_grad(projected, labels, temperature)
    return loss, grad_z.T @ np.asarray(base, dtype=np.float64)


def train_step(
    model: ProjectionModel,
    shards: Sequence[Shard],
    config: TrainConfig,
    parallel: bool = False,
) -> tuple[ProjectionModel, float]:
    """One accumulated update: per-shard losses and gradients are computed
    independently (optionally concurrently), summed in shard order, and
    applied as a single gradient-descent step. Returns the updated model
    and the summed shard loss."""
    if not 1 <= len(shards) <= config.shards_per_step:
        raise ValueError(
            f"expected 1..{config.shards_per_step} shards, got {len(shards)}"
        )
    if parallel and len(shards) > 1:
        with ThreadPoolExecutor(max_workers=len(shards)) as pool:
            results = list(
                pool.map(
                    lambda s: _shard_loss_and_weight_grad(model, s, config.temperature),
                    shards,
                )
            )
    else:
        results = [
            _shard_loss_and_weight_grad(model, s, config.temperature) for s in shards
        ]
    total_grad = np.zeros_like(model.weight)
    total_loss = 0.0
    for loss, grad in results:  # fixed order keeps the reduction deterministic
        total_grad += grad
        total_loss += loss
    updated = ProjectionModel(
        weight=model.weight - config.learning_rate * total_grad,
        input_dim=model.input_dim,
        output_dim=model.output_dim,
    )
    return updated, total_loss


def _shards_for_plan(
    plan: BatchPlan, pairs_by_author: dict[str, TrainingPair], corpus: Corpus
) -> list[Shard]:
    shards = []
    for batch in plan.batches:
        rows, labels = [], []
        for author in batch:
            pair = pairs_by_author[author]
            for doc_id in (pair.doc_a, pair.doc_b):
                rows.append(corpus[doc_id].base_embedding)
                labels.append(author)
        shards.append((np.stack(rows), labels))
    return shards


def epoch_vectors(
    model: ProjectionModel, pairs: Sequence[TrainingPair], corpus: Corpus
) -> VectorMatrix:
    """Normalized projections of all paired documents under the given model."""
    doc_ids = sorted({d for p in pairs for d in (p.doc_a, p.doc_b)})
    base = np.stack([corpus[d].base_embedding for d in doc_ids])
    return VectorMatrix(rows=normalize_rows(project(model, base)), row_ids=tuple(doc_ids))


def run_training(
    corpus: Corpus,
    pairs: Sequence[TrainingPair],
    batch_config: BatchConfig,
    train_config: TrainConfig,
    validation_task,
    validation_corpus: Corpus | None = None,
    batching: str = "hard",
) -> tuple[EpochState, list[EpochState]]:
    """Train for the configured epochs, re-planning batches each epoch from
    the previous model's vectors, and return (best epoch by validation
    Success@8, full history). Ties go to the earliest epoch.

    batching "hard" uses the clustered plan; "random" shuffles authors.
    Validation authors must be disjoint from training authors when both
    draw on the same corpus.
    """
    from .evalkit import evaluate  # local import to avoid a module cycle

    train_config.validate()
    batch_config.validate()
    if batching not in ("hard", "random"):
        raise ValueError(f"batching must be 'hard' or 'random', got {batching!r}")
    if not pairs:
        raise ValueError("no training pairs supplied")
    val_corpus = validation_corpus if validation_corpus is not None else corpus
    train_authors = {p.author_id for p in pairs}
    val_authors = {author for _, author, _ in validation_task.queries}
    overlap = train_authors & val_authors
    if overlap:
        raise ValueError(
            f"validation authors overlap training authors: {sorted(overlap)[:5]}"
        )

    pairs_by_author = {p.author_id: p for p in pairs}
    model = ProjectionModel.initialize(corpus.dimension, train_config.seed)
    history: list[EpochState] = []

    for epoch in range(1, train_config.epochs + 1):
        if batching == "hard":
            vectors = epoch_vectors(model, pairs, corpus)
            plan = build_epoch_plan(pairs, vectors, batch_config, epoch)
        else:
            plan = build_random_plan(pairs, batch_config, epoch)

        shards = _shards_for_plan(plan, pairs_by_author, corpus)
        losses = []
        for start in range(0, len(shards), train_config.shards_per_step):
            group = shards[start : start + train_config.shards_per_step]
            model, step_loss = train_step(model, group, train_config)
            losses.append(step_loss / len(group))

        report = evaluate(model, val_corpus, validation_task)
        history.append(
            EpochState(
                epoch=epoch,
                model=model.copy(),
                validation_score=report.success_at_8,
                plan_source=plan.source,
                mean_train_loss=float(np.mean(losses)),
            )
        )

    best = max(history, key=lambda s: (s.validation_score, -s.epoch))
    return best, history


def save_model(
    model: ProjectionModel,
    path: str | Path,
    epoch: int = 0,
    seed: int = 0,
    temperature: float = DEFAULT_TEMPERATURE,
    learning_rate: float = DEFAULT_LEARNING_RATE,
) -> None:
    """Checkpoint: one JSON header line, then row-major little-endian float64."""
    header = {
        "format": _CHECKPOINT_MAGIC,
        "input_dim": model.input_dim,
        "output_dim": model.output_dim,
        "epoch": epoch,
        "seed": seed,
        "temperature": temperature,
        "learning_rate": learning_rate,
    }
    with Path(path).open("wb") as fh:
        fh.write((json.dumps(header) + "\n").encode("utf-8"))
        fh.write(np.ascontiguousarray(model.weight, dtype="<f8").tobytes())


def load_model(path: str | Path) -> tuple[ProjectionModel, dict]:
    with Path(path).open("rb") as fh:
        header = json.loads(fh.readline().decode("utf-8"))
        if header.get("format") != _CHECKPOINT_MAGIC:
            raise ValueError(f"not a projection checkpoint: {path}")
        out_dim, in_dim = header["output_dim"], header["input_dim"]
        weight = np.frombuffer(fh.read(), dtype="<f8").reshape(out_dim, in_dim)
    model = ProjectionModel(
        weight=weight.astype(np.float64), input_dim=in_dim, output_dim=out_dim
    )
    return model, header


def save_history(history: Sequence[EpochState], path: str | Path) -> None:
    """History file: one record per epoch with loss and validation score."""
    with Path(path).open("w", encoding="utf-8") as fh:
        for state in history:
            fh.write(
                json.dumps(
                    {
                        "epoch": state.epoch,
                        "mean_train_loss": state.mean_train_loss,
                        "validation_success_at_8": state.validation_score,
                    }
                )
                + "\n"
            )
