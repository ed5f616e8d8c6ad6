"""cmtml: temporal moment localization with cross-modal recurrent fusion.

Given clip-level video features and a sentence query, the model fuses the
two modalities inside a recurrent cell, scores every candidate (start, end)
clip span in a 2D proposal map evaluated both globally and via boundary
scores, and returns the best-matching time interval.
"""

from .config import LossConfig, ModelConfig, OptimizerConfig, PathsConfig, RunConfig, default_stacks
from .data import (
    EmbeddingTable,
    LocalizationSample,
    MomentAnnotation,
    RawVideoFeatures,
    SyntheticSpec,
    generate_synthetic_dataset,
    interpolate_to_fixed_length,
    load_annotations,
    load_embeddings,
    load_feature_file,
    project_annotation,
    synthetic_embedding_table,
    tokenize,
    write_synthetic_dataset,
)
from .errors import (
    AnnotationError,
    CmtmlError,
    ConfigurationError,
    DataFormatError,
    InputError,
    TrainingDivergedError,
)
from .estimator import TemporalMomentLocalizer
from .metrics import EvalResult, recall_at, split_queries, uniform_chance_recall
from .network import MomentLocalizationNetwork
from .proposal import MomentPrediction, make_mask, rank_moments, select_moment

__version__ = "0.1.0"

__all__ = [
    "AnnotationError",
    "CmtmlError",
    "ConfigurationError",
    "DataFormatError",
    "EmbeddingTable",
    "EvalResult",
    "InputError",
    "LocalizationSample",
    "LossConfig",
    "ModelConfig",
    "MomentAnnotation",
    "MomentLocalizationNetwork",
    "MomentPrediction",
    "OptimizerConfig",
    "PathsConfig",
    "RawVideoFeatures",
    "RunConfig",
    "SyntheticSpec",
    "TemporalMomentLocalizer",
    "TrainingDivergedError",
    "default_stacks",
    "generate_synthetic_dataset",
    "interpolate_to_fixed_length",
    "load_annotations",
    "load_embeddings",
    "load_feature_file",
    "make_mask",
    "project_annotation",
    "rank_moments",
    "recall_at",
    "select_moment",
    "split_queries",
    "synthetic_embedding_table",
    "tokenize",
    "uniform_chance_recall",
    "write_synthetic_dataset",
]
