"""Authorship-attribution training toolkit over document embeddings.

Pipeline: ingest labeled documents with base embeddings, mine one
hard-positive (or random) pair per author, plan hard-negative dandelion
batches per epoch, train a half-width contrastive projection, and score
ranked retrieval with Success@8 and MRR under per-genre and cross-genre
task constructions.
"""

from .batcher import (
    BatchConfig,
    BatchPlan,
    ClusterSpec,
    build_epoch_plan,
    build_random_plan,
    plan_dimensions,
)
from .corpus import Corpus, CorpusError, Document, filter_min_words, load_corpus, save_corpus
from .evalkit import (
    MetricsReport,
    RetrievalTask,
    average_runs,
    build_task,
    evaluate,
    mrr,
    rank_haystack,
    success_at_k,
)
from .geometry import KMeansResult, VectorMatrix, cosine, kmeans, l2_normalize, topk_by_cosine
from .miner import MinerConfig, TrainingPair, min_similarity_pair, select_training_pairs
from .synth import SynthConfig, generate
from .trainer import (
    EpochState,
    ProjectionModel,
    TrainConfig,
    load_model,
    project,
    run_training,
    save_model,
    supcon_grad,
    supcon_loss,
    train_step,
)

__version__ = "0.1.0"

__all__ = [
    "BatchConfig",
    "BatchPlan",
    "ClusterSpec",
    "Corpus",
    "CorpusError",
    "Document",
    "EpochState",
    "KMeansResult",
    "MetricsReport",
    "MinerConfig",
    "ProjectionModel",
    "RetrievalTask",
    "SynthConfig",
    "TrainConfig",
    "TrainingPair",
    "VectorMatrix",
    "average_runs",
    "build_epoch_plan",
    "build_random_plan",
    "build_task",
    "cosine",
    "evaluate",
    "filter_min_words",
    "generate",
    "kmeans",
    "l2_normalize",
    "load_corpus",
    "load_model",
    "min_similarity_pair",
    "mrr",
    "plan_dimensions",
    "project",
    "rank_haystack",
    "run_training",
    "save_corpus",
    "save_model",
    "select_training_pairs",
    "success_at_k",
    "supcon_grad",
    "supcon_loss",
    "topk_by_cosine",
    "train_step",
]
