"""Training-free collaborative filtering with polynomial low-pass graph filters.

Pipeline: interactions -> item-item graph (asymmetric normalization + Hadamard
power) -> polynomial filter applied by Horner's rule -> masked top-K -> Recall/NDCG.
"""

__version__ = "0.1.0"

from ._kernels import BACKEND as KERNEL_BACKEND
from .errors import (
    CapacityError,
    DataError,
    DomainError,
    EmptyDatasetError,
    EmptyEvaluationError,
    FitError,
    FormatError,
    LowpassCFError,
    ParameterError,
    ParseError,
    ShapeError,
)
from .filters import FilterSpec, fit_ideal_lpf, fit_response, frequency_response, predefined_filter
from .graph import SimilarityGraph, build_graph, hadamard_power, item_similarity, normalize_asymmetric
from .interactions import InteractionMatrix, SplitSpec, dataset_stats, parse_interactions, split_holdout
from .metrics import EvalReport, evaluate, ndcg_at_k, recall_at_k
from .recommend import RankedList, score_users, top_k
