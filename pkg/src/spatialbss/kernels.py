"""Lag-weight kernel functions defining local covariance matrices.

Four radially symmetric variants: the point-mass kernel (weight 1 only at lag
zero, giving the plain covariance estimator), the ball and ring indicators,
and a Gaussian bump parametrized by the radius holding 90% of its mass.
Indicator boundaries are closed: a point exactly at radius h belongs to
``Ball(h)`` and to both adjacent rings.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

from .locations import LocationSet, distance_matrix

# 90% two-sided mass <=> standard normal quantile at 0.95
_Q95 = float(ndtri(0.95))


@dataclass(frozen=True)
class Kernel:
    """Base class; concrete variants implement ``eval`` on distances >= 0."""

    def eval(self, distance):
        raise NotImplementedError

    def weight_matrix(self, locs: LocationSet) -> np.ndarray:
        """n x n matrix of kernel weights at all pairwise distances."""
        return self.eval(distance_matrix(locs))

    def spec_string(self) -> str:
        raise NotImplementedError


@dataclass(frozen=True)
class Identity(Kernel):
    """Point mass at lag zero; weight_matrix is the identity."""

    def eval(self, distance):
        return np.where(np.asarray(distance, dtype=np.float64) == 0.0, 1.0, 0.0)

    def spec_string(self) -> str:
        return "id"


@dataclass(frozen=True)
class Ball(Kernel):
    h: float

    def __post_init__(self):
        if self.h < 0:
            raise ValueError("ball radius must be >= 0")

    def eval(self, distance):
        return np.where(np.asarray(distance, dtype=np.float64) <= self.h, 1.0, 0.0)

    def spec_string(self) -> str:
        return f"ball:{self.h:g}"


@dataclass(frozen=True)
class Ring(Kernel):
    h1: float
    h2: float

    def __post_init__(self):
        if not 0 <= self.h1 <= self.h2:
            raise ValueError("ring radii must satisfy 0 <= h1 <= h2")

    def eval(self, distance):
        d = np.asarray(distance, dtype=np.float64)
        return np.where((self.h1 <= d) & (d <= self.h2), 1.0, 0.0)

    def spec_string(self) -> str:
        return f"ring:{self.h1:g}:{self.h2:g}"


@dataclass(frozen=True)
class Gauss(Kernel):
    """exp(-(q95 * d / r)^2 / 2): a smooth ball with 90% mass within radius r."""

    r: float

    def __post_init__(self):
        if self.r <= 0:
            raise ValueError("gauss radius must be > 0")

    def eval(self, distance):
        d = np.asarray(distance, dtype=np.float64)
        return np.exp(-0.5 * (_Q95 * d / self.r) ** 2)

    def spec_string(self) -> str:
        return f"gauss:{self.r:g}"


def parse_kernel(spec: str) -> Kernel:
    """Parse a kernel spec string: ``id``, ``ball:h``, ``ring:h1:h2``, ``gauss:r``.

    ``ringshorthand:r`` is also accepted and expands to ``ring:(r-10):r``,
    the convention simulation configs use for decade-wide rings.
    """
    parts = spec.strip().lower().split(":")
    name, args = parts[0], parts[1:]
    try:
        if name == "id" and not args:
            return Identity()
        if name == "ball" and len(args) == 1:
            return Ball(float(args[0]))
        if name == "ring" and len(args) == 2:
            return Ring(float(args[0]), float(args[1]))
        if name == "ringshorthand" and len(args) == 1:
            r = float(args[0])
            return Ring(max(r - 10.0, 0.0), r)
        if name == "gauss" and len(args) == 1:
            return Gauss(float(args[0]))
    except ValueError as exc:
        raise ValueError(f"bad kernel spec {spec!r}: {exc}") from exc
    raise ValueError(f"bad kernel spec {spec!r}")


def parse_kernel_list(specs: str) -> list[Kernel]:
    """Parse a comma-separated list of kernel spec strings."""
    return [parse_kernel(s) for s in specs.split(",") if s.strip()]
