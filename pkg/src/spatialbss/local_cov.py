"""Kernel-weighted local covariance (scatter) matrices.

The estimator is the kernel-weighted double sum over location pairs

    (1/n) * sum_ij f(s_i - s_j) X(s_i) X(s_j)^T,

symmetrized as (M + M^T)/2.  The i = j diagonal term is always included, so
the point-mass kernel reproduces the plain (uncentered) covariance estimator.
The population counterpart replaces the outer products by their expectations
under the latent model with mixing matrix Omega.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.linalg import eigh

from .errors import NotPositiveDefiniteError
from .fields import LatentSpec
from .kernels import Identity, Kernel
from .locations import FieldSample, LocationSet, distance_matrix

# Row-block size for the compensated accumulation of the double sum.  Fixed so
# the reduction order (and hence the bit pattern) never depends on thread
# count or call site.
_BLOCK = 1024


@dataclass(frozen=True)
class LocalCovariance:
    """A symmetric p x p local covariance with its provenance."""

    matrix: np.ndarray
    kernel: Kernel
    n: int
    centered: bool

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=np.float64)
        scale = max(1.0, float(np.abs(m).max()))
        if np.abs(m - m.T).max() > 1e-12 * scale:
            raise ValueError("local covariance must be symmetric")
        m = m.copy()
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def p(self) -> int:
        return self.matrix.shape[0]


def _as_matrix(m) -> np.ndarray:
    return m.matrix if isinstance(m, LocalCovariance) else np.asarray(m, dtype=np.float64)


def _weighted_second_moment(values: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """values^T @ weights @ values with blockwise Kahan accumulation.

    Blocks of at most ``_BLOCK`` rows are reduced with BLAS; the p x p block
    partials are combined with compensated summation so long double sums
    (n >= 1e3) stay stable and bit-reproducible.
    """
    n, p = values.shape
    if n <= _BLOCK:
        out = values.T @ (weights @ values)
    else:
        acc = np.zeros((p, p))
        comp = np.zeros((p, p))
        for start in range(0, n, _BLOCK):
            stop = min(start + _BLOCK, n)
            part = values[start:stop].T @ (weights[start:stop] @ values)
            y = part - comp
            t = acc + y
            comp = (t - acc) - y
            acc = t
        out = acc
    if not np.all(np.isfinite(out)):
        raise FloatingPointError("non-finite accumulation in local covariance")
    return out


def _local_cov_from_weights(
    values: np.ndarray, weights: np.ndarray, kernel: Kernel, centered: bool
) -> LocalCovariance:
    n = values.shape[0]
    if centered:
        if n < 2:
            raise ValueError("centering needs at least two observations")
        values = values - values.mean(axis=0)
    m = _weighted_second_moment(values, weights) / n
    return LocalCovariance((m + m.T) / 2, kernel, n, centered)


def local_covariance(sample: FieldSample, k: Kernel, centered: bool = False) -> LocalCovariance:
    """Kernel-weighted local covariance of one sample.

    With ``centered=True`` the column means are removed first (the data
    workflow; the mean-zero simulation model uses the raw estimator).
    """
    return _local_cov_from_weights(
        sample.values, k.weight_matrix(sample.locations), k, centered
    )


def local_cov_batch(
    sample: FieldSample, kernels: Sequence[Kernel], centered: bool = False
) -> list[LocalCovariance]:
    """Local covariances for several kernels from a single distance-matrix pass."""
    dists = distance_matrix(sample.locations)
    return [
        _local_cov_from_weights(sample.values, k.eval(dists), k, centered)
        for k in kernels
    ]


def population_local_cov(
    locs: LocationSet, latent: LatentSpec, omega: np.ndarray, k: Kernel
) -> np.ndarray:
    """Expectation of the local covariance under the latent model.

    Independent unit-variance components make the expectation
    Omega diag(d) Omega^T with d_k = (1/n) sum_ij f(s_i - s_j) K_k(s_i - s_j).
    """
    omega = np.asarray(omega, dtype=np.float64)
    p = len(latent.components)
    if omega.shape != (p, p):
        raise ValueError(f"mixing matrix must be {p} x {p}")
    cond = np.linalg.cond(omega)
    if not np.isfinite(cond) or cond > 1e12:
        raise ValueError("mixing matrix is singular")
    weights = k.weight_matrix(locs)
    corr = latent.correlation_stack(locs)
    d = np.array([(weights * corr[j]).sum() for j in range(p)]) / locs.n
    m = (omega * d) @ omega.T
    return (m + m.T) / 2


def population_diagonal(locs: LocationSet, latent: LatentSpec, k: Kernel) -> np.ndarray:
    """Diagonal of the population local covariance of the latent field itself."""
    weights = k.weight_matrix(locs)
    corr = latent.correlation_stack(locs)
    return np.array([(weights * c).sum() for c in corr]) / locs.n


def whitener(m0) -> np.ndarray:
    """Symmetric inverse square root W with W M0 W = I.

    Computed from the symmetric eigendecomposition; eigenvalues below
    1e-10 times the largest reject M0 as not positive definite.
    """
    mat = _as_matrix(m0)
    vals, vecs = eigh(mat)
    if vals[-1] <= 0 or vals[0] <= 1e-10 * vals[-1]:
        raise NotPositiveDefiniteError(
            f"matrix not positive definite: eigenvalue range [{vals[0]:g}, {vals[-1]:g}]"
        )
    w = (vecs / np.sqrt(vals)) @ vecs.T
    return (w + w.T) / 2


def covariance_kernel() -> Kernel:
    """The lag-zero anchor kernel used as the whitening reference."""
    return Identity()
