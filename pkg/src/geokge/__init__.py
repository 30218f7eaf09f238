"""Attention-combined knowledge graph embeddings on Euclidean space and the
Poincare ball, with training, filtered-ranking evaluation and synthetic
pattern datasets."""

__version__ = "0.1.0"

from .config import RunConfig, TrainConfig, load_run_config, run_config_from_dict
from .combiner import EnsembleModel, attention_weights, combine_euclidean, \
    score_sea, score_sepa, sphere_radius
from .evaluation import RankingReport, attention_by_relation, evaluate, filtered_rank
from .kg_data import KnowledgeGraph, RelationPattern, SyntheticSpec, Triple, \
    augment_reciprocal, generate_synthetic, load_tsv, write_dataset
from .query_models import CANONICAL_ORDER, ModelKind
from .training import GradientReport, TrainResult, grad_check, load_checkpoint, \
    loss_one_query, sample_negatives, save_checkpoint, train

__all__ = [
    "CANONICAL_ORDER",
    "EnsembleModel",
    "GradientReport",
    "KnowledgeGraph",
    "ModelKind",
    "RankingReport",
    "RelationPattern",
    "RunConfig",
    "SyntheticSpec",
    "TrainConfig",
    "TrainResult",
    "Triple",
    "attention_by_relation",
    "attention_weights",
    "augment_reciprocal",
    "combine_euclidean",
    "evaluate",
    "filtered_rank",
    "generate_synthetic",
    "grad_check",
    "load_checkpoint",
    "load_run_config",
    "load_tsv",
    "loss_one_query",
    "run_config_from_dict",
    "sample_negatives",
    "save_checkpoint",
    "score_sea",
    "score_sepa",
    "sphere_radius",
    "train",
    "write_dataset",
]
