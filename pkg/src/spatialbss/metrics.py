"""Performance metrics: minimum distance index and component matching.

The minimum distance index measures how far Gamma_hat * Omega is from the
identity up to row scaling, order, and signs.  Minimizing over matrices with
one nonzero per row and column reduces, after the per-row optimal scale, to a
linear assignment problem with cost(i, j) = 1 - G_ij^2 / ||g_i||^2, solved
exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment


@dataclass(frozen=True)
class MdiValue:
    """MDI value in [0, 1] plus the optimizing assignment and row scales.

    ``assignment[i]`` is the target column matched to row i of G and
    ``scales[i]`` the optimal multiplier for that row.
    """

    value: float
    assignment: np.ndarray
    scales: np.ndarray


def mdi(gamma_hat: np.ndarray, omega: np.ndarray) -> MdiValue:
    """Minimum distance index of an estimated unmixing matrix.

    value = (p-1)^(-1/2) inf { || C (gamma_hat @ omega) - I ||_F }
    over matrices C with exactly one nonzero entry per row and column;
    0 means perfect recovery.
    """
    g = np.asarray(gamma_hat, dtype=np.float64) @ np.asarray(omega, dtype=np.float64)
    p = g.shape[0]
    if g.shape != (p, p):
        raise ValueError("matrices must be square and conformable")
    if p < 2:
        raise ValueError("the index is defined for p >= 2")
    sq_norms = np.sum(g**2, axis=1)
    if np.any(sq_norms == 0):
        raise ValueError("gamma_hat @ omega has a zero row; the infimum degenerates")
    cost = 1.0 - g**2 / sq_norms[:, None]
    rows, cols = linear_sum_assignment(cost)
    total = float(cost[rows, cols].sum())
    assignment = np.empty(p, dtype=int)
    assignment[rows] = cols
    scales = g[np.arange(p), assignment] / sq_norms
    value = float(np.sqrt(max(total, 0.0) / (p - 1)))
    return MdiValue(min(value, 1.0), assignment, scales)


def nmdi(gamma_hat: np.ndarray, omega: np.ndarray, n: int, p: int) -> float:
    """Sample-size-scaled index n (p - 1) MDI^2, the quantity with a chi-squared
    mixture limit."""
    return n * (p - 1) * mdi(gamma_hat, omega).value ** 2


def max_abs_correlations(
    z_hat: np.ndarray, z_ref: np.ndarray, one_to_one: bool = False
):
    """Per-reference-column maximum absolute Pearson correlation with matching.

    Returns (values, matching): for each column j of ``z_ref`` the largest
    |corr| against the columns of ``z_hat`` and the index achieving it.  The
    default matching is greedy per component (several references may pick the
    same estimate); ``one_to_one=True`` instead solves the assignment problem
    maximizing the total absolute correlation.
    """
    z_hat = np.atleast_2d(np.asarray(z_hat, dtype=np.float64))
    z_ref = np.atleast_2d(np.asarray(z_ref, dtype=np.float64))
    if z_hat.shape[0] != z_ref.shape[0]:
        raise ValueError("score matrices must have the same number of rows")
    if z_hat.shape[0] < 3:
        raise ValueError("need at least 3 observations for correlations")
    for name, z in (("z_hat", z_hat), ("z_ref", z_ref)):
        sd = z.std(axis=0)
        if np.any(sd == 0):
            col = int(np.flatnonzero(sd == 0)[0])
            raise ValueError(f"{name} column {col} is constant")
    hat_c = (z_hat - z_hat.mean(axis=0)) / z_hat.std(axis=0)
    ref_c = (z_ref - z_ref.mean(axis=0)) / z_ref.std(axis=0)
    corr = np.abs(ref_c.T @ hat_c) / z_hat.shape[0]  # (q, l)
    if one_to_one:
        if corr.shape[0] > corr.shape[1]:
            raise ValueError("one-to-one matching needs at least as many estimates")
        rows, cols = linear_sum_assignment(-corr)
        matching = np.empty(corr.shape[0], dtype=int)
        matching[rows] = cols
        values = corr[np.arange(corr.shape[0]), matching]
    else:
        matching = np.argmax(corr, axis=1)
        values = corr[np.arange(corr.shape[0]), matching]
    return values, matching


def match_rows(candidate: np.ndarray, reference: np.ndarray) -> np.ndarray:
    """Permute and sign-flip rows of ``candidate`` to best align with ``reference``.

    Resolves the inherent row order/sign ambiguity before elementwise
    comparison of two unmixing matrices: assignment on negative |row dot row|,
    then signs from the dot products.
    """
    cand = np.asarray(candidate, dtype=np.float64)
    ref = np.asarray(reference, dtype=np.float64)
    dots = ref @ cand.T
    rows, cols = linear_sum_assignment(-np.abs(dots))
    order = np.empty(len(ref), dtype=int)
    order[rows] = cols
    signs = np.sign(dots[np.arange(len(ref)), order])
    signs[signs == 0] = 1.0
    return signs[:, None] * cand[order]
