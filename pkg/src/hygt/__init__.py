"""
hygt: Hypercube-Givens Transforms for signal-adaptive transform coding

A HyGT is an orthogonal transform built from rounds of parallel Givens-rotation
passes whose index pairs follow the edges of a hypercube. It is trained to
approach the coding gain of the Karhunen-Loeve Transform while storing only
R*N*log2(N)/2 angles instead of an N x N matrix.

Architecture:
- transform / fixedpoint: float and integer transforms, angle quantization
- statistics / optimizer: correlation, KLT oracle, coding gain, angle training
- bundle / formats: per-class model sets and their file formats
- evaluation / report / cli: HyGT vs KLT comparison and the command-line tool
"""

__version__ = "0.1.0"

from hygt.bundle import ModelBundle, TrainingMetadata, apply_bundle, train_bundle
from hygt.dataset import ResidualDataset
from hygt.errors import (
    ArgumentError,
    FixedPointOverflowError,
    FormatError,
    HygtError,
    InvariantError,
    NumericalError,
)
from hygt.evaluation import evaluate, evaluate_bundle, scheme_memory_ratios
from hygt.fixedpoint import (
    QuantizedHyGTModel,
    TrigTable,
    build_trig_table,
    forward_fixed,
    inverse_fixed,
    memory_footprint,
    quantize_model,
)
from hygt.optimizer import OptimizerConfig, TrainingReport, optimize, variance_permutation
from hygt.statistics import (
    CorrelationMatrix,
    KLTResult,
    accumulate_correlation,
    ar1_covariance_2d,
    coding_gain_db,
    jacobi_eigen,
    transformed_variances,
)
from hygt.transform import (
    GivensRotation,
    HyGTModel,
    PassIndexing,
    forward,
    hypercube_indices,
    inverse,
    num_parameters,
    to_matrix,
)

__all__ = [
    "HyGTModel",
    "GivensRotation",
    "PassIndexing",
    "hypercube_indices",
    "forward",
    "inverse",
    "to_matrix",
    "num_parameters",
    "QuantizedHyGTModel",
    "TrigTable",
    "build_trig_table",
    "quantize_model",
    "forward_fixed",
    "inverse_fixed",
    "memory_footprint",
    "CorrelationMatrix",
    "KLTResult",
    "accumulate_correlation",
    "jacobi_eigen",
    "transformed_variances",
    "coding_gain_db",
    "ar1_covariance_2d",
    "OptimizerConfig",
    "TrainingReport",
    "optimize",
    "variance_permutation",
    "ResidualDataset",
    "ModelBundle",
    "TrainingMetadata",
    "train_bundle",
    "apply_bundle",
    "evaluate",
    "evaluate_bundle",
    "scheme_memory_ratios",
    "HygtError",
    "ArgumentError",
    "InvariantError",
    "NumericalError",
    "FixedPointOverflowError",
    "FormatError",
]
