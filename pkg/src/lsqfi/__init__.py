"""Locally sparse quantile estimation for partially functional interaction models."""
from .basis import BasisSpec, PenaltyMatrices, build_basis, eval_basis, local_gram, penalty_matrices, roughness_matrix
from .design import BasisCurves, Dataset, DesignMatrices, GridCurves, assemble, build_design, center_columns
from .penalty import PenaltyConfig, lqa_weights, mcp, mcp_deriv, penalty_value
from .solver import METHODS, FitOptions, FitResult, fit, objective, predict, reconstruct
from .tuning import TuningGrid, TuningResult, grid_search

__version__ = "0.1.0"
