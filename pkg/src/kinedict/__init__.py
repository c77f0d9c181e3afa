"""Sparse dictionaries of joint rotations and dictionary-constrained pose fitting."""

from ._jit import USE_JIT
from ._kernels import BACKEND
from ._version import __version__
from .cluster import CoverageReport, coverage, kmeans_quat
from .errors import (
    DataError,
    DegenerateCombinationError,
    InvalidInputError,
    KinedictError,
    NumericError,
    UnderConstrainedError,
)
from .fitting import FitConfig, FitProblem, FitResult, fit, loss, loss_and_grad, mpjpe
from .io import PoseDataset, export, ingest
from .kinematics import Camera, Skeleton, forward_kinematics, project, r6_to_rotation
from .obdl import (
    CodeBatch,
    Dictionary,
    InnerConfig,
    LearnConfig,
    LearnerState,
    accumulate_history,
    batch_objective,
    learn,
    reconstruct,
    update_codes,
    update_dictionary,
)
from .plot import emit_hull_plot
from .quat import AxisAngle, from_axis_angle, geodesic_distance, nlerp, slerp
from .simplex import sparsemax, sparsemax_jacobian

__all__ = [
    "AxisAngle", "BACKEND", "Camera", "CodeBatch", "CoverageReport", "DataError", "DegenerateCombinationError",
    "Dictionary", "FitConfig", "FitProblem", "FitResult", "InnerConfig", "InvalidInputError", "KinedictError",
    "LearnConfig", "LearnerState", "NumericError", "PoseDataset", "Skeleton", "USE_JIT", "UnderConstrainedError",
    "__version__", "accumulate_history", "batch_objective", "coverage", "emit_hull_plot", "export", "fit",
    "forward_kinematics", "from_axis_angle", "geodesic_distance", "ingest", "kmeans_quat", "learn", "loss",
    "loss_and_grad", "mpjpe", "nlerp", "project", "r6_to_rotation", "reconstruct", "slerp", "sparsemax",
    "sparsemax_jacobian", "update_codes", "update_dictionary",
]
