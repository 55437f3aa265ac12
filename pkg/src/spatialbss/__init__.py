"""Spatial blind source separation toolkit.

Estimates the unmixing matrix of the model X(s) = Omega Z(s) from
point-referenced multivariate data by diagonalizing kernel-weighted local
covariance matrices, with the matching asymptotic covariance machinery,
performance metrics, a Matern Gaussian random-field simulator, and a
replicated-experiment harness.
"""

__version__ = "0.1.0"

from .asymptotics import (
    AsymptoticCovariances,
    AsymptoticWorkspace,
    LimitSpectrum,
    build_workspace,
    f1_matrix,
    fk_matrix,
    mdi_limit_spectrum,
    sample_limit_nmdi,
    select_kernels,
    sigma_pair,
    v_matrix,
)
from .diagonalize import (
    JointDiagConfig,
    UnmixingResult,
    criterion,
    identifiability_check,
    joint_diagonalize,
    pair_diagonalize,
)
from .errors import (
    DataFormatError,
    DegenerateDensityError,
    EigenGapError,
    NonConvergenceWarning,
    NotPositiveDefiniteError,
    SpatialBssError,
)
from .fields import (
    LatentSampler,
    LatentSpec,
    MaternParams,
    latent_preset,
    matern,
    mix,
    simulate_latent,
)
from .kernels import Ball, Gauss, Identity, Kernel, Ring, parse_kernel, parse_kernel_list
from .local_cov import (
    LocalCovariance,
    local_cov_batch,
    local_covariance,
    population_local_cov,
    whitener,
)
from .locations import (
    FieldSample,
    LocationSet,
    distance_matrix,
    gen_diamond_grid,
    gen_nested_squares,
    gen_rectangle_grid,
    gen_uniform_rect,
    gen_weighted_region,
)
from .metrics import MdiValue, match_rows, max_abs_correlations, mdi, nmdi
from .pipeline import PreparedFit, SbssFit, fit, transform

__all__ = [
    "AsymptoticCovariances",
    "AsymptoticWorkspace",
    "Ball",
    "DataFormatError",
    "DegenerateDensityError",
    "EigenGapError",
    "FieldSample",
    "Gauss",
    "Identity",
    "JointDiagConfig",
    "Kernel",
    "LatentSampler",
    "LatentSpec",
    "LimitSpectrum",
    "LocalCovariance",
    "LocationSet",
    "MaternParams",
    "MdiValue",
    "NonConvergenceWarning",
    "NotPositiveDefiniteError",
    "PreparedFit",
    "Ring",
    "SbssFit",
    "SpatialBssError",
    "UnmixingResult",
    "build_workspace",
    "criterion",
    "distance_matrix",
    "f1_matrix",
    "fit",
    "fk_matrix",
    "gen_diamond_grid",
    "gen_nested_squares",
    "gen_rectangle_grid",
    "gen_uniform_rect",
    "gen_weighted_region",
    "identifiability_check",
    "joint_diagonalize",
    "latent_preset",
    "local_cov_batch",
    "local_covariance",
    "match_rows",
    "matern",
    "max_abs_correlations",
    "mdi",
    "mdi_limit_spectrum",
    "mix",
    "nmdi",
    "pair_diagonalize",
    "parse_kernel",
    "parse_kernel_list",
    "population_local_cov",
    "sample_limit_nmdi",
    "select_kernels",
    "sigma_pair",
    "simulate_latent",
    "transform",
    "v_matrix",
    "whitener",
]
