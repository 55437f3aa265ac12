"""Simulation of latent independent Gaussian random fields.

Each latent component is a stationary, unit-variance Gaussian field with a
Matern correlation

    rho(h) = 2^(1-kappa) / Gamma(kappa) * (h/phi)^kappa * K_kappa(h/phi),

where K_kappa is the modified Bessel function of the second kind.  Fields are
generated by dense Cholesky factorization of the per-component correlation
matrix; the location patterns here are irregular, so spectral or circulant
shortcuts do not apply, and O(n^3) per component is acceptable at desk scale.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.linalg import cholesky
from scipy.special import gammaln, kv

from .errors import NotPositiveDefiniteError
from .locations import FieldSample, LocationSet, distance_matrix

# Cholesky jitter escalation: 1e-12 * 2^m on the diagonal, m = 0, 1, ...,
# capped at 1e-8.  Matern with large shape on fine grids is near-singular.
_JITTER_START = 1e-12
_JITTER_MAX = 1e-8


@dataclass(frozen=True)
class MaternParams:
    """Shape kappa > 0 and range phi > 0 (location units)."""

    kappa: float
    phi: float

    def __post_init__(self):
        if not (np.isfinite(self.kappa) and self.kappa > 0):
            raise ValueError("kappa must be finite and > 0")
        if not (np.isfinite(self.phi) and self.phi > 0):
            raise ValueError("phi must be finite and > 0")

    def correlation(self, h) -> np.ndarray:
        return matern(h, self)


def matern(h, params: MaternParams) -> np.ndarray:
    """Matern correlation at distance(s) h >= 0; exactly 1 at h = 0."""
    h = np.asarray(h, dtype=np.float64)
    scalar = h.ndim == 0
    x = np.atleast_1d(h) / params.phi
    if np.any(x < 0):
        raise ValueError("distances must be >= 0")
    out = np.ones_like(x)
    pos = x > 0
    if np.any(pos):
        xp = x[pos]
        k = params.kappa
        # log form keeps the x^kappa * K_kappa(x) product stable for small x
        with np.errstate(over="ignore", invalid="ignore"):
            val = np.exp((1 - k) * np.log(2) - gammaln(k) + k * np.log(xp)) * kv(k, xp)
        # kv overflows for extremely small arguments and underflows for large
        # ones; both limits of rho are known exactly
        val = np.where(np.isfinite(val), val, np.where(xp < 1.0, 1.0, 0.0))
        out[pos] = val
    return float(out[0]) if scalar else out.reshape(h.shape)


@dataclass(frozen=True)
class LatentSpec:
    """Ordered list of unit-variance latent component correlation models."""

    components: tuple[MaternParams, ...]

    def __init__(self, components: Sequence[MaternParams]):
        comps = tuple(components)
        if not comps:
            raise ValueError("latent spec needs at least one component")
        object.__setattr__(self, "components", comps)

    @property
    def p(self) -> int:
        return len(self.components)

    def correlation_stack(self, locs: LocationSet) -> np.ndarray:
        """(p, n, n) stack of per-component correlation matrices."""
        dists = distance_matrix(locs)
        return np.stack([c.correlation(dists) for c in self.components])


# named parameter sets from the simulation studies
PRESETS = {
    "sim1": LatentSpec([MaternParams(6, 1.2), MaternParams(1, 1.5), MaternParams(0.25, 1)]),
    "sim2": LatentSpec([MaternParams(2, 1), MaternParams(1, 1), MaternParams(0.25, 1)]),
    "sim3": LatentSpec([MaternParams(6, 20), MaternParams(1, 20), MaternParams(0.25, 20)]),
}


def latent_preset(name: str, phi: float | None = None) -> LatentSpec:
    """Look up a preset; ``phi`` overrides the shared range of sim2-style sweeps."""
    if name not in PRESETS:
        raise ValueError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    spec = PRESETS[name]
    if phi is None:
        return spec
    return LatentSpec([MaternParams(c.kappa, phi) for c in spec.components])


class LatentSampler:
    """Cholesky factors for one (locations, spec) pair, reusable across draws.

    Factoring costs O(n^3) per component and is paid once; every draw is then
    a matrix-vector product per component.  ``jitter_used`` records the
    diagonal nugget each component needed (0.0 when none).
    """

    def __init__(self, locs: LocationSet, spec: LatentSpec):
        self.locations = locs
        self.spec = spec
        self._factors = []
        self.jitter_used: list[float] = []
        corr = spec.correlation_stack(locs)
        for idx, c in enumerate(corr):
            factor, jitter = self._factor(c, idx)
            self._factors.append(factor)
            self.jitter_used.append(jitter)

    @staticmethod
    def _factor(corr: np.ndarray, idx: int):
        jitter = 0.0
        while True:
            try:
                mat = corr if jitter == 0.0 else corr + jitter * np.eye(len(corr))
                return cholesky(mat, lower=True), jitter
            except np.linalg.LinAlgError:
                pass
            jitter = _JITTER_START if jitter == 0.0 else 2 * jitter
            if jitter > _JITTER_MAX:
                raise NotPositiveDefiniteError(
                    f"component {idx}: Cholesky failed even with jitter {_JITTER_MAX:g}"
                )

    def draw(self, rng: np.random.Generator) -> FieldSample:
        """One realization; per-component substreams come from ``rng.spawn``."""
        streams = rng.spawn(len(self._factors))
        cols = [
            factor @ stream.standard_normal(self.locations.n)
            for factor, stream in zip(self._factors, streams)
        ]
        return FieldSample(self.locations, np.column_stack(cols))


def simulate_latent(locs: LocationSet, spec: LatentSpec, rng: np.random.Generator) -> FieldSample:
    """Simulate the latent field Z once (factor + single draw)."""
    return LatentSampler(locs, spec).draw(rng)


def mix(z: FieldSample, omega: np.ndarray) -> FieldSample:
    """Apply the mixing matrix rowwise: X(s) = Omega Z(s)."""
    omega = np.asarray(omega, dtype=np.float64)
    if omega.shape != (z.p, z.p):
        raise ValueError(f"mixing matrix must be {z.p} x {z.p}")
    cond = np.linalg.cond(omega)
    if not np.isfinite(cond) or cond > 1e12:
        raise ValueError("mixing matrix is singular")
    return FieldSample(z.locations, z.values @ omega.T)
