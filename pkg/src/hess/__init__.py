"""Head-sensitivity-guided block-sparse attention for point-cloud readout models.

The package estimates how much each attention head matters for two geometric
error measures (camera pose and inlier point error), turns those scores into
per-layer block budgets via capped water-filling, and evaluates the resulting
block-sparse attention against uniform and deliberately reversed budgets.
"""

from .attention import (ApproxAttentionMap, BlockSelection, DegenerateRowError,
                        HeadParams, achieved_sparsity, approx_map,
                        dense_attention, masked_attention, project_qkv,
                        select_blocks, select_top_c)
from .autodiff import GraphTape, ShapeError, TapeError, Tensor
from .budget import (BudgetAllocation, InfeasibleBudgetError, allocate_layer,
                     realloc_weights, total_budget, waterfill)
from .geometry import (CameraSet, DegenerateGeometryError, EmptyInlierSetError,
                       PointCloud, SimilarityTransform, align_clouds,
                       camera_pose_error, icp_refine, inlier_set,
                       nearest_neighbors, point_cloud_error,
                       rotation_about_axis, umeyama)
from .gradcheck import GradCheckResult, check_gradients, relative_error
from .pipeline import (RunResult, SyntheticScene, ToyModel, TrainingDivergedError,
                       ablate_lambda, generate_scene, run_dense, run_sparse,
                       sweep, train_toy)
from .sensitivity import (CalibrationError, CalibrationMeta,
                          FingerprintMismatchError, HeadId, HessTable,
                          calibrate, combine, fim_trace, normalize_layer)

__version__ = "0.1.0"

__all__ = [
    "ApproxAttentionMap", "BlockSelection", "BudgetAllocation",
    "CalibrationError", "CalibrationMeta", "CameraSet",
    "DegenerateGeometryError", "DegenerateRowError", "EmptyInlierSetError",
    "FingerprintMismatchError", "GradCheckResult", "GraphTape", "HeadId",
    "HeadParams", "HessTable", "InfeasibleBudgetError", "PointCloud",
    "RunResult", "ShapeError", "SimilarityTransform", "SyntheticScene",
    "TapeError", "Tensor", "ToyModel", "TrainingDivergedError",
    "ablate_lambda", "achieved_sparsity", "align_clouds", "allocate_layer",
    "approx_map", "calibrate", "camera_pose_error", "check_gradients",
    "combine", "dense_attention", "fim_trace", "generate_scene", "icp_refine",
    "inlier_set", "masked_attention", "nearest_neighbors", "normalize_layer",
    "point_cloud_error", "project_qkv", "realloc_weights", "relative_error",
    "rotation_about_axis", "run_dense", "run_sparse", "select_blocks",
    "select_top_c", "sweep", "total_budget", "train_toy", "umeyama",
    "waterfill",
]
