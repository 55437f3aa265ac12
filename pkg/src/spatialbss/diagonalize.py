"""Exact pair diagonalization and approximate joint diagonalization.

Both solvers anchor on the lag-zero scatter M0: its inverse symmetric square
root W turns the constraint Gamma M0 Gamma^T = I into an orthogonal search.
The pair solver is a single symmetric eigendecomposition of W M_f W.  The
joint solver maximizes the sum of squared diagonals of the whitened stack by
cyclic sweeps of Givens rotations, each angle the closed-form maximizer of the
2 x 2 restricted objective (Cardoso-Souloumiac / Clarkson rotations).

Output rows are canonicalized: deterministic ordering (see ``_order_key``)
and the nonnegative-row-sum sign convention, ties broken by the first nonzero
entry.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.linalg import eigh

from .errors import NonConvergenceWarning
from .local_cov import _as_matrix, whitener


@dataclass(frozen=True)
class JointDiagConfig:
    max_sweeps: int = 100
    tol: float = 1e-12  # relative criterion-increase tolerance
    rotation_threshold: float = 1e-14  # smallest rotation angle applied

    def __post_init__(self):
        if self.max_sweeps <= 0 or self.tol <= 0 or self.rotation_threshold <= 0:
            raise ValueError("all solver parameters must be positive")


@dataclass(frozen=True)
class UnmixingResult:
    """Estimated unmixing matrix plus diagnostics.

    ``lambdas[l]`` is the diagonal of Gamma M_l Gamma^T for the l-th input
    scatter, in the canonical row order.  ``canonical_perm`` and
    ``canonical_signs`` record the row permutation and sign flips applied to
    the raw solver output.  ``eigenvalue_ties`` flags (near-)equal diagonal
    elements, where identifiability fails and the ordering is conventional.
    """

    gamma: np.ndarray
    lambdas: tuple[np.ndarray, ...]
    criterion: float
    sweeps: int
    canonical_perm: np.ndarray
    canonical_signs: np.ndarray
    converged: bool = True
    eigenvalue_ties: bool = False
    criterion_trace: tuple[float, ...] = field(default=(), repr=False)

    @property
    def p(self) -> int:
        return self.gamma.shape[0]


def criterion(gamma: np.ndarray, ms: Sequence) -> float:
    """The joint-diagonalization objective: sum_l sum_j (g_j^T M_l g_j)^2."""
    gamma = np.asarray(gamma, dtype=np.float64)
    total = 0.0
    for m in ms:
        diag = np.einsum("jk,kl,jl->j", gamma, _as_matrix(m), gamma)
        total += float(np.sum(diag**2))
    return total


def _fix_signs(gamma: np.ndarray) -> np.ndarray:
    """Sign per row: row sum >= 0, a zero sum resolved by the first nonzero entry."""
    signs = np.ones(gamma.shape[0])
    for i, row in enumerate(gamma):
        s = row.sum()
        if s < 0:
            signs[i] = -1.0
        elif s == 0:
            nz = row[row != 0]
            if len(nz) and nz[0] < 0:
                signs[i] = -1.0
    return signs


def _order_key(lambdas: np.ndarray, k: int) -> np.ndarray:
    # k = 1: descending eigenvalues (the two-scatter definition).  k >= 2:
    # descending per-component contribution to the criterion; the paper fixes
    # the order only up to permutation there, so any deterministic rule works.
    return lambdas[0] if k == 1 else np.sum(lambdas**2, axis=0)


def _canonicalize(gamma: np.ndarray, lambdas: np.ndarray):
    """Apply row ordering and signs; returns (gamma, lambdas, perm, signs)."""
    key = _order_key(lambdas, lambdas.shape[0])
    perm = np.argsort(-key, kind="stable")
    gamma = gamma[perm]
    lambdas = lambdas[:, perm]
    signs = _fix_signs(gamma)
    return signs[:, None] * gamma, lambdas, perm, signs


def _tie_flag(key: np.ndarray, rtol: float = 1e-10) -> bool:
    if len(key) < 2:
        return False
    sorted_key = np.sort(key)[::-1]
    scale = max(1.0, float(np.abs(sorted_key).max()))
    return bool(np.any(np.abs(np.diff(sorted_key)) <= rtol * scale))


def pair_diagonalize(m0, m_f) -> UnmixingResult:
    """Exact simultaneous diagonalization of (M0, M_f).

    Gamma M0 Gamma^T = I and Gamma M_f Gamma^T diagonal with decreasing
    entries, via the whitened symmetric eigenproblem of W M_f W.
    """
    w = whitener(m0)
    s = w @ _as_matrix(m_f) @ w
    vals, vecs = eigh((s + s.T) / 2)
    order = np.argsort(-vals, kind="stable")
    vals, vecs = vals[order], vecs[:, order]
    gamma = vecs.T @ w
    signs = _fix_signs(gamma)
    gamma = signs[:, None] * gamma
    return UnmixingResult(
        gamma=gamma,
        lambdas=(vals.copy(),),
        criterion=float(np.sum(vals**2)),
        sweeps=0,
        canonical_perm=order,
        canonical_signs=signs,
        eigenvalue_ties=_tie_flag(vals),
    )


def _givens_sweeps(rs: np.ndarray, cfg: JointDiagConfig):
    """Cyclic Givens sweeps on a symmetric stack; returns (U, sweeps, trace, ok).

    Invariants: the rotated stack is U^T R U for the accumulated U, and the
    criterion never decreases (the identity rotation is always a candidate).
    Convergence means a full sweep applied no rotation at or above
    ``rotation_threshold``; such a sweep leaves the criterion bit-identical,
    so the relative-increase condition in ``tol`` holds simultaneously.
    Stopping on the criterion stall alone would freeze the rotation angles
    near sqrt(tol), an order of magnitude too coarse for the equivariance
    guarantees downstream; the angles keep contracting superlinearly after
    the stall, so the quiet-sweep rule costs only a few extra sweeps.
    """
    k, p, _ = rs.shape
    rs = rs.copy()
    u = np.eye(p)
    crit = float(np.sum(np.diagonal(rs, axis1=1, axis2=2) ** 2))
    trace = [crit]
    sweeps = 0
    converged = p < 2
    for sweep in range(cfg.max_sweeps):
        if converged:
            break
        sweeps = sweep + 1
        rotated = False
        for i in range(p - 1):
            for j in range(i + 1, p):
                d = rs[:, i, i] - rs[:, j, j]
                o = rs[:, i, j] + rs[:, j, i]
                ton = d @ d - o @ o
                toff = 2.0 * (d @ o)
                theta = 0.5 * math.atan2(toff, ton + math.hypot(ton, toff))
                if abs(theta) < cfg.rotation_threshold:
                    continue
                rotated = True
                c, s = math.cos(theta), math.sin(theta)
                # R <- G^T R G and U <- U G restricted to the (i, j) plane
                ri, rj = rs[:, i, :].copy(), rs[:, j, :].copy()
                rs[:, i, :] = c * ri + s * rj
                rs[:, j, :] = -s * ri + c * rj
                ci, cj = rs[:, :, i].copy(), rs[:, :, j].copy()
                rs[:, :, i] = c * ci + s * cj
                rs[:, :, j] = -s * ci + c * cj
                ui, uj = u[:, i].copy(), u[:, j].copy()
                u[:, i] = c * ui + s * uj
                u[:, j] = -s * ui + c * uj
        new_crit = float(np.sum(np.diagonal(rs, axis1=1, axis2=2) ** 2))
        trace.append(new_crit)
        if not rotated and new_crit - crit <= cfg.tol * max(abs(crit), 1e-300):
            converged = True
        crit = new_crit
    return u, sweeps, trace, converged


def joint_diagonalize(m0, ms: Sequence, cfg: Optional[JointDiagConfig] = None) -> UnmixingResult:
    """Approximate joint diagonalizer of k >= 1 scatters against the anchor M0.

    Maximizes sum_l sum_j (g_j^T M_l g_j)^2 subject to Gamma M0 Gamma^T = I.
    Non-convergence within ``max_sweeps`` is reported via a warning and the
    ``converged`` flag, not an exception.
    """
    if not ms:
        raise ValueError("need at least one scatter matrix to diagonalize")
    cfg = cfg or JointDiagConfig()
    w = whitener(m0)
    stack = np.stack([w @ _as_matrix(m) @ w for m in ms])
    stack = (stack + stack.transpose(0, 2, 1)) / 2
    u, sweeps, trace, converged = _givens_sweeps(stack, cfg)
    if not converged:
        warnings.warn(
            f"joint diagonalization did not meet tol={cfg.tol:g} "
            f"within {cfg.max_sweeps} sweeps",
            NonConvergenceWarning,
        )
    gamma = u.T @ w
    lambdas = np.stack(
        [np.einsum("jk,kl,jl->j", gamma, _as_matrix(m), gamma) for m in ms]
    )
    gamma, lambdas, perm, signs = _canonicalize(gamma, lambdas)
    return UnmixingResult(
        gamma=gamma,
        lambdas=tuple(lambdas),
        criterion=float(np.sum(lambdas**2)),
        sweeps=sweeps,
        canonical_perm=perm,
        canonical_signs=signs,
        converged=converged,
        eigenvalue_ties=_tie_flag(_order_key(lambdas, lambdas.shape[0])),
        criterion_trace=tuple(trace),
    )


def identifiability_check(ds: Sequence, delta: float):
    """Pairwise separation test of diagonalized population scatters.

    True iff every component pair differs by at least ``delta`` in some
    matrix's diagonal; otherwise returns the first offending pair.
    """
    diags = np.stack([np.diagonal(_as_matrix(d)) for d in ds])
    p = diags.shape[1]
    for i in range(p - 1):
        for j in range(i + 1, p):
            if np.max(np.abs(diags[:, i] - diags[:, j])) < delta:
                return False, (i, j)
    return True, None
