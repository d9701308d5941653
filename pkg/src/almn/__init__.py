"""Adaptive large-margin N-pair embedding learning with geometrically
generated virtual boundary points.

The toolkit covers the angular geometry of the virtual-point construction,
class-center maintenance, the loss family and its analytic gradients with
a finite-difference oracle, batch sampling and synthetic data, a small
MLP trainer, and retrieval/clustering evaluation.
"""

from .batch import EmbeddingBatch
from .centers import CenterBank, get_or_init_center, update_centers
from .data import BatchSpec, Dataset, gen_multimodal, load_csv, load_idx, sample_batch
from .geometry import (
    VpgContext,
    angle_between,
    generate_virtual_point,
    lower_bound_vector,
    nearest_negative_angle,
)
from .gradients import GradientBundle, almn_backward, finite_difference_oracle, run_grad_check
from .losses import (
    LossConfig,
    almn_loss,
    center_npair_loss,
    fixed_margin_loss,
    npair_loss,
)
from .metrics import RetrievalReport, cluster_and_score, recall_at_k
from .trainer import MlpModel, TrainConfig, forward, train

__version__ = "0.1.0"

__all__ = [
    "BatchSpec",
    "CenterBank",
    "Dataset",
    "EmbeddingBatch",
    "GradientBundle",
    "LossConfig",
    "MlpModel",
    "RetrievalReport",
    "TrainConfig",
    "VpgContext",
    "almn_backward",
    "almn_loss",
    "angle_between",
    "center_npair_loss",
    "cluster_and_score",
    "finite_difference_oracle",
    "fixed_margin_loss",
    "forward",
    "gen_multimodal",
    "generate_virtual_point",
    "get_or_init_center",
    "load_csv",
    "load_idx",
    "lower_bound_vector",
    "nearest_negative_angle",
    "npair_loss",
    "recall_at_k",
    "run_grad_check",
    "sample_batch",
    "train",
    "update_centers",
]
