"""Simulation and analysis toolkit for hierarchical Gaussian energy
landscapes: closed-form thermodynamics, recursive block sampling, exact and
statistical KL analysis against the Gibbs measure, and the steep-ancestor
hardness instrumentation."""

__version__ = "0.1.0"

from .covariance import (CovarianceSpec, block_free_energy_Ftilde,
                         concave_hull, free_energy_F, gap_G,
                         ground_state_levels, hardness_threshold, overlap_cdf,
                         spec_from_profile)
from .field import CremRealization, DenseTree, VertexId, materialize_tree
from .sampler import SamplerConfig, block_schedule, query_budget, sample_path

__all__ = [
    "CovarianceSpec", "spec_from_profile", "concave_hull", "free_energy_F",
    "block_free_energy_Ftilde", "gap_G", "hardness_threshold",
    "ground_state_levels", "overlap_cdf", "CremRealization", "DenseTree",
    "VertexId", "materialize_tree", "SamplerConfig", "block_schedule",
    "query_budget", "sample_path", "__version__",
]
