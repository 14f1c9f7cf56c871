"""Certified approximations of matrix and tensor spectral and nuclear p-norms."""

from .covering import HittingSet, build_H1, build_H2, build_H3, build_HB, build_HG, build_HH
from .matrix import DELTA_G, NormEstimate, matrix_pu, matrix_pv, matrix_pv_primal, spectral_pnorm_oracle
from .tensor import DenseTensor, ModePartition, RationalExponent
from .tensor_norms import (
    alg2_spectral,
    alg3_unfold_nuclear,
    alg4_partition_nuclear,
    alg5_cover_nuclear_order3,
    alg6_cover_nuclear,
    alg7_randomized,
    gen_identity_tensor,
    gen_known_nuclear_instance,
    vector_bounds,
    vector_estimate,
)
from .utils.errors import PNormError, SolverFailure, ValidationError

__version__ = "0.1.0"
