"""End-to-end estimator: multivariate spatial data in, unmixing and scores out.

``fit`` estimates the unmixing matrix by diagonalizing the lag-zero scatter
against one or more kernel-weighted local covariances, then recovers the
latent component scores.  ``PreparedFit`` front-loads the kernel weight
matrices for repeated fits on the same location pattern (the replication
harness path).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .diagonalize import (
    JointDiagConfig,
    UnmixingResult,
    joint_diagonalize,
    pair_diagonalize,
)
from .kernels import Identity, Kernel
from .local_cov import LocalCovariance, _local_cov_from_weights
from .locations import FieldSample, LocationSet, distance_matrix


@dataclass(frozen=True)
class SbssFit:
    """Fitted unmixing plus the latent scores of the training sample."""

    unmixing: UnmixingResult
    kernels: tuple[Kernel, ...]
    column_means: np.ndarray
    scores: np.ndarray
    centered: bool

    @property
    def gamma(self) -> np.ndarray:
        return self.unmixing.gamma


class PreparedFit:
    """Kernel weight matrices precomputed for one location pattern.

    Fitting many replicated samples on fixed locations only needs the weight
    matrices once; ``fit_values`` then runs the scatter estimates and the
    diagonalizer per sample.
    """

    def __init__(self, locs: LocationSet, kernels: Sequence[Kernel]):
        kernels = tuple(kernels)
        if not kernels:
            raise ValueError("need at least one kernel")
        if any(isinstance(k, Identity) for k in kernels):
            raise ValueError("the lag-zero anchor is supplied internally; "
                             "kernels must not include the identity kernel")
        self.locations = locs
        self.kernels = kernels
        dists = distance_matrix(locs)
        self._weights = [k.eval(dists) for k in kernels]

    @staticmethod
    def _anchor_scatter(values: np.ndarray, centered: bool) -> LocalCovariance:
        # the lag-zero kernel weight matrix is the identity, so the double sum
        # collapses to the plain second-moment matrix; no n x n weights needed
        if centered:
            values = values - values.mean(axis=0)
        m = values.T @ values / values.shape[0]
        return LocalCovariance((m + m.T) / 2, Identity(), values.shape[0], centered)

    def fit_values(
        self,
        values: np.ndarray,
        centered: bool,
        cfg: Optional[JointDiagConfig] = None,
    ) -> SbssFit:
        values = np.asarray(values, dtype=np.float64)
        n, p = values.shape
        if n != self.locations.n:
            raise ValueError("values rows do not match the location count")
        if n <= p:
            raise ValueError(f"need n > p observations (n={n}, p={p})")
        if centered and n < 2:
            raise ValueError("centering needs at least two observations")
        m0 = self._anchor_scatter(values, centered)
        scatters = [
            _local_cov_from_weights(values, w, k, centered)
            for k, w in zip(self.kernels, self._weights)
        ]
        if len(scatters) == 1:
            result = pair_diagonalize(m0, scatters[0])
        else:
            result = joint_diagonalize(m0, scatters, cfg)
        means = values.mean(axis=0) if centered else np.zeros(p)
        scores = (values - means) @ result.gamma.T
        return SbssFit(result, self.kernels, means, scores, centered)


def fit(
    sample: FieldSample,
    kernels: Sequence[Kernel],
    centered: bool = True,
    cfg: Optional[JointDiagConfig] = None,
) -> SbssFit:
    """Estimate the unmixing matrix of ``sample`` with the given kernels.

    One kernel dispatches to the exact pair diagonalizer, several to the
    Givens joint diagonalizer.  ``centered`` subtracts column means first
    (the default for real data, where the mean is unknown; simulation studies
    with mean-zero fields typically pass False).
    """
    return PreparedFit(sample.locations, kernels).fit_values(
        sample.values, centered, cfg
    )


def transform(fitted: SbssFit, new_sample: FieldSample) -> np.ndarray:
    """Apply a fitted unmixing to new data: (values - stored means) @ gamma^T.

    Inputs are not re-centered; the training column means are reused.
    """
    if new_sample.p != len(fitted.column_means):
        raise ValueError(
            f"sample has {new_sample.p} variables, fit expects {len(fitted.column_means)}"
        )
    return (new_sample.values - fitted.column_means) @ fitted.gamma.T
