"""Limiting covariance matrices of the scatter and unmixing estimators.

For n points and p latent components, the stacked data vector has covariance
R = sum_k C_k kron (w_k w_k^T), where C_k is the n x n correlation matrix of
component k and w_k the k-th column of the mixing matrix (unit vectors for
the latent-level R_z).  The covariance of the scatter estimators is built
from traces tr(R T1 R T2) where each T factors as W_f kron E_sym; the
Kronecker algebra collapses those traces to

    Sigma(f,g)_{st,uv} = (2/n) sum_{k,m} tr(C_k W_f C_m W_g)
                         * Q_{st,km} * Q_{uv,km},
    Q_{st,km} = (Omega_sk Omega_tm + Omega_tk Omega_sm) / 2,

so only n x n matrices are ever formed (a dense np x np oracle path is kept
for tiny-n verification).  On top of Sigma sit the delta-method covariances
of the unmixing estimators (F1 for the two-scatter estimator, F_k for the
joint one) and the chi-squared-mixture limit of the scaled minimum distance
index, whose eigenvalue sum drives the kernel-selection heuristic.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .diagonalize import identifiability_check
from .errors import EigenGapError
from .fields import LatentSpec
from .kernels import Identity, Kernel
from .locations import LocationSet

# pairwise diagonal gap below which the delta-method matrices are refused
GAP_TOL = 1e-8
# relative eigenvalue floor when extracting the nonzero delta spectrum
DELTA_CLIP = 1e-10


class AsymptoticWorkspace:
    """Shared state for the limit computations on one (locations, latent, mixing).

    Holds the per-component correlation matrices (the latent-level covariance
    in factored form), the mixing matrix, and caches of kernel weight
    matrices and pairwise trace blocks.
    """

    def __init__(self, locs: LocationSet, latent: LatentSpec, omega: Optional[np.ndarray] = None):
        self.locations = locs
        self.latent = latent
        p = latent.p
        if omega is None:
            omega = np.eye(p)
        omega = np.asarray(omega, dtype=np.float64)
        if omega.shape != (p, p):
            raise ValueError(f"mixing matrix must be {p} x {p}")
        cond = np.linalg.cond(omega)
        if not np.isfinite(cond) or cond > 1e12:
            raise ValueError("mixing matrix is singular")
        self.omega = omega
        self.comp_corr = latent.correlation_stack(locs)  # (p, n, n)
        self._weights: dict[str, np.ndarray] = {}
        self._traces: dict[tuple[str, str], np.ndarray] = {}

    @property
    def n(self) -> int:
        return self.locations.n

    @property
    def p(self) -> int:
        return self.latent.p

    def weight_matrix(self, k: Kernel) -> np.ndarray:
        key = k.spec_string()
        if key not in self._weights:
            self._weights[key] = k.weight_matrix(self.locations)
        return self._weights[key]

    def population_diagonal(self, k: Kernel) -> np.ndarray:
        """Diagonal of the population local covariance of the latent field."""
        w = self.weight_matrix(k)
        return np.einsum("kij,ij->k", self.comp_corr, w) / self.n

    def latent_covariance_dense(self) -> np.ndarray:
        """Materialize the np x np latent covariance (tiny-n oracle path)."""
        n, p = self.n, self.p
        r = np.zeros((n * p, n * p))
        for k in range(p):
            r += np.kron(self.comp_corr[k], np.outer(np.eye(p)[k], np.eye(p)[k]))
        return r

    # -- pairwise trace blocks S[k, m] = tr(C_k W_f C_m W_g) ------------------

    def _trace_block(self, f: Kernel, g: Kernel) -> np.ndarray:
        fk, gk = f.spec_string(), g.spec_string()
        if (fk, gk) in self._traces:
            return self._traces[(fk, gk)]
        if (gk, fk) in self._traces:
            return self._traces[(gk, fk)].T
        prod_f = self._products(f)
        prod_g = prod_f if gk == fk else self._products(g)
        s = np.einsum("kab,mba->km", prod_f, prod_g)
        self._traces[(fk, gk)] = s
        return s

    def _products(self, f: Kernel) -> np.ndarray:
        # C_k @ W_f for all components; the identity kernel's weight matrix is
        # I_n, so the correlation stack itself is returned without a matmul
        if isinstance(f, Identity):
            return self.comp_corr
        return self.comp_corr @ self.weight_matrix(f)

    def ensure_traces(self, kernels: Sequence[Kernel]) -> None:
        """Precompute all pairwise trace blocks of a kernel list in one pass.

        Shares the C_k @ W_f products across the pairs, so each kernel costs
        p matmuls regardless of how many pairs it appears in.
        """
        missing = []
        for a, ka in enumerate(kernels):
            for kb in kernels[a:]:
                fk, gk = ka.spec_string(), kb.spec_string()
                if (fk, gk) not in self._traces and (gk, fk) not in self._traces:
                    missing.append((ka, kb))
        if not missing:
            return
        products = {
            key: self._products(k)
            for key, k in {k.spec_string(): k for pair in missing for k in pair}.items()
        }
        for ka, kb in missing:
            s = np.einsum(
                "kab,mba->km", products[ka.spec_string()], products[kb.spec_string()]
            )
            self._traces[(ka.spec_string(), kb.spec_string())] = s


def build_workspace(
    locs: LocationSet, latent: LatentSpec, omega: Optional[np.ndarray] = None
) -> AsymptoticWorkspace:
    return AsymptoticWorkspace(locs, latent, omega)


@dataclass(frozen=True)
class AsymptoticCovariances:
    """Container for whichever limit covariance was requested."""

    v: Optional[np.ndarray] = None
    f1: Optional[np.ndarray] = None
    fk: Optional[np.ndarray] = None
    component_order: Optional[np.ndarray] = None


@dataclass(frozen=True)
class LimitSpectrum:
    """Nonzero eigenvalues of the off-diagonal-projected limit covariance.

    The scaled index n (p-1) MDI^2 converges to sum_i deltas[i] * chi2_1;
    ``expected_nmdi`` is its mean.
    """

    deltas: np.ndarray
    expected_nmdi: float


def _sigma_from_traces(s: np.ndarray, mixing: np.ndarray, n: int) -> np.ndarray:
    p = mixing.shape[0]
    q = 0.5 * (
        np.einsum("sk,tm->stkm", mixing, mixing)
        + np.einsum("tk,sm->stkm", mixing, mixing)
    ).reshape(p * p, p * p)
    sigma = (2.0 / n) * (q * s.ravel()) @ q.T
    return (sigma + sigma.T) / 2


def sigma_pair(
    ws: AsymptoticWorkspace,
    f: Kernel,
    g: Kernel,
    use_r_z: bool = True,
    method: str = "structured",
) -> np.ndarray:
    """p^2 x p^2 covariance block of the scatter-estimator pair (f, g).

    ``use_r_z`` evaluates at the latent level (identity mixing); otherwise the
    workspace mixing matrix enters.  ``method="dense"`` materializes the full
    np x np quadratic-form matrices, for oracle checks at tiny n.
    """
    if method == "dense":
        return _sigma_dense(ws, f, g, use_r_z)
    if method != "structured":
        raise ValueError(f"unknown method {method!r}")
    s = ws._trace_block(f, g)
    mixing = np.eye(ws.p) if use_r_z else ws.omega
    return _sigma_from_traces(s, mixing, ws.n)


def _sym_basis(p: int, s: int, t: int) -> np.ndarray:
    e = np.zeros((p, p))
    e[s, t] += 0.5
    e[t, s] += 0.5
    return e


def _sigma_dense(ws: AsymptoticWorkspace, f: Kernel, g: Kernel, use_r_z: bool) -> np.ndarray:
    n, p = ws.n, ws.p
    mixing = np.eye(p) if use_r_z else ws.omega
    r = np.zeros((n * p, n * p))
    for k in range(p):
        r += np.kron(ws.comp_corr[k], np.outer(mixing[:, k], mixing[:, k]))
    wf, wg = ws.weight_matrix(f), ws.weight_matrix(g)
    tf = [np.kron(wf, _sym_basis(p, s, t)) for s in range(p) for t in range(p)]
    tg = [np.kron(wg, _sym_basis(p, u, v)) for u in range(p) for v in range(p)]
    sigma = np.empty((p * p, p * p))
    for i, t1 in enumerate(tf):
        rt1r = r @ t1 @ r
        for j, t2 in enumerate(tg):
            sigma[i, j] = 2.0 / n * np.trace(rt1r @ t2)
    return sigma


def v_matrix(ws: AsymptoticWorkspace, f: Kernel, use_r_z: bool = False) -> AsymptoticCovariances:
    """2p^2 x 2p^2 joint covariance of the (f, lag-zero) scatter estimators."""
    f0 = Identity()
    v = np.block(
        [
            [sigma_pair(ws, f, f, use_r_z), sigma_pair(ws, f, f0, use_r_z)],
            [sigma_pair(ws, f0, f, use_r_z), sigma_pair(ws, f0, f0, use_r_z)],
        ]
    )
    return AsymptoticCovariances(v=(v + v.T) / 2)


def _m_omega_inv(omega: np.ndarray) -> np.ndarray:
    """The p^2 x p^2 matrix sending vect(A) to vect(A Omega^{-1})."""
    p = omega.shape[0]
    w = np.linalg.inv(omega)
    m = np.zeros((p * p, p * p))
    for a in range(p * p):
        ia, ja = divmod(a, p)
        for b in range(ia * p, ia * p + p):
            m[a, b] = w[b % p, ja]
    return m


def f1_matrix(ws: AsymptoticWorkspace, f: Kernel) -> AsymptoticCovariances:
    """Limit covariance of the two-scatter estimator (unmixing rows + diagonal).

    Components are internally sorted so the population diagonal is strictly
    decreasing, as the delta-method formulas assume; the sort is reported in
    ``component_order``.  A diagonal gap under ``GAP_TOL`` is an
    identifiability failure and raises :class:`EigenGapError`.
    """
    p, n = ws.p, ws.n
    d = ws.population_diagonal(f)
    order = np.argsort(-d, kind="stable")
    lam = d[order]
    gaps = -np.diff(lam)
    if p > 1 and gaps.min() < GAP_TOL:
        i = int(np.argmin(gaps))
        raise EigenGapError(
            f"population diagonal gap {gaps[i]:.3g} between sorted components "
            f"{i} and {i + 1} is below {GAP_TOL:g}"
        )

    diag_positions = np.arange(p) * (p + 1)
    rows_i = np.repeat(np.arange(p), p)
    cols_j = np.tile(np.arange(p), p)
    a_diag = np.empty(p * p)
    b_diag = np.zeros(p * p)
    off = rows_i != cols_j
    a_diag[~off] = -0.5
    denom = lam[rows_i[off]] - lam[cols_j[off]]
    a_diag[off] = -lam[rows_i[off]] / denom
    b_diag[off] = 1.0 / denom
    c_mat = np.zeros((p, p * p))
    d_mat = np.zeros((p, p * p))
    c_mat[np.arange(p), diag_positions] = -lam
    d_mat[np.arange(p), diag_positions] = 1.0
    g = np.zeros((p * p + p, 2 * p * p))
    g[: p * p, : p * p] = np.diag(a_diag)
    g[: p * p, p * p :] = np.diag(b_diag)
    g[p * p :, : p * p] = c_mat
    g[p * p :, p * p :] = d_mat

    # latent-level covariance of (vect M_hat(f0), vect M_hat(f)), components
    # permuted into the sorted order
    f0 = Identity()
    s00 = ws._trace_block(f0, f0)[np.ix_(order, order)]
    s0f = ws._trace_block(f0, f)[np.ix_(order, order)]
    sf0 = ws._trace_block(f, f0)[np.ix_(order, order)]
    sff = ws._trace_block(f, f)[np.ix_(order, order)]
    eye = np.eye(p)
    vtilde = np.block(
        [
            [_sigma_from_traces(s00, eye, n), _sigma_from_traces(s0f, eye, n)],
            [_sigma_from_traces(sf0, eye, n), _sigma_from_traces(sff, eye, n)],
        ]
    )

    m_bar = np.zeros((p * p + p, p * p + p))
    m_bar[: p * p, : p * p] = _m_omega_inv(ws.omega[:, order])
    m_bar[p * p :, p * p :] = np.eye(p)
    f1 = m_bar @ g @ vtilde @ g.T @ m_bar.T
    return AsymptoticCovariances(f1=(f1 + f1.T) / 2, component_order=order)


def fk_matrix(ws: AsymptoticWorkspace, kernels: Sequence[Kernel]) -> AsymptoticCovariances:
    """Limit covariance of vect(Gamma_hat - Omega^{-1}) for the joint estimator.

    Valid for k >= 1 kernels; requires every component pair to be separated
    by at least ``GAP_TOL`` in some kernel's population diagonal.
    """
    kernels = list(kernels)
    if not kernels:
        raise ValueError("need at least one kernel")
    p, n = ws.p, ws.n
    dmat = np.stack([ws.population_diagonal(f) for f in kernels])  # (k, p)
    ok, pair = identifiability_check([np.diag(row) for row in dmat], GAP_TOL)
    if not ok:
        raise EigenGapError(
            f"components {pair} are separated by less than {GAP_TOL:g} "
            "in every kernel's population diagonal"
        )

    rows_i = np.repeat(np.arange(p), p)
    cols_j = np.tile(np.arange(p), p)
    off = rows_i != cols_j
    diffs = dmat[:, rows_i] - dmat[:, cols_j]  # (k, p^2)
    b_diag = np.ones(p * p)
    b_diag[off] = 1.0 / np.sum(diffs[:, off] ** 2, axis=0)
    # g_vecs[l] = diag of B A_l; index 0 is the lag-zero block
    g_vecs = np.zeros((len(kernels) + 1, p * p))
    g_vecs[0, ~off] = -0.5
    g_vecs[0, off] = b_diag[off] * (
        -np.sum(diffs[:, off] * dmat[:, rows_i[off]], axis=0)
    )
    for l in range(len(kernels)):
        g_vecs[l + 1, off] = b_diag[off] * diffs[l, off]

    all_kernels = [Identity()] + kernels
    ws.ensure_traces(all_kernels)
    eye = np.eye(p)
    fk = np.zeros((p * p, p * p))
    for a, ka in enumerate(all_kernels):
        for b, kb in enumerate(all_kernels):
            block = _sigma_from_traces(ws._trace_block(ka, kb), eye, n)
            fk += (g_vecs[a][:, None] * block) * g_vecs[b][None, :]
    m = _m_omega_inv(ws.omega)
    fk = m @ fk @ m.T
    return AsymptoticCovariances(fk=(fk + fk.T) / 2)


def mdi_limit_spectrum(sigma_vec_gamma: np.ndarray) -> LimitSpectrum:
    """Delta spectrum of the chi-squared-mixture limit of n (p-1) MDI^2.

    ``sigma_vec_gamma`` is the p^2 x p^2 limit covariance of
    sqrt(n) vect(Gamma_hat Omega - I); projecting out the diagonal positions
    and taking eigenvalues gives the mixture weights.
    """
    sigma = np.asarray(sigma_vec_gamma, dtype=np.float64)
    p2 = sigma.shape[0]
    p = int(round(np.sqrt(p2)))
    if sigma.shape != (p2, p2) or p * p != p2:
        raise ValueError("input must be p^2 x p^2")
    scale = max(1.0, float(np.abs(sigma).max()))
    if np.abs(sigma - sigma.T).max() > 1e-8 * scale:
        raise ValueError("input covariance must be symmetric")
    mask = np.ones(p2)
    mask[np.arange(p) * (p + 1)] = 0.0  # diagonal vect positions
    conj = mask[:, None] * sigma * mask[None, :]
    vals = np.linalg.eigvalsh((conj + conj.T) / 2)[::-1]
    floor = DELTA_CLIP * max(vals.max(initial=0.0), 0.0)
    deltas = vals[vals > floor]
    return LimitSpectrum(deltas=deltas, expected_nmdi=float(deltas.sum()))


def sample_limit_nmdi(spec: LimitSpectrum, draws: int, rng: np.random.Generator) -> np.ndarray:
    """i.i.d. draws from the mixture sum_i deltas[i] * chi2_1."""
    if draws < 1:
        raise ValueError("draws must be >= 1")
    if len(spec.deltas) == 0:
        return np.zeros(draws)
    z = rng.standard_normal((len(spec.deltas), draws))
    return spec.deltas @ (z**2)


@dataclass(frozen=True)
class SelectionRow:
    index: int
    kernels: tuple[Kernel, ...]
    feasible: bool
    expected_nmdi: float = np.inf
    deltas: np.ndarray = field(default_factory=lambda: np.array([]))
    reason: str = ""


def select_kernels(
    ws: AsymptoticWorkspace, candidate_sets: Sequence[Sequence[Kernel]]
) -> tuple[int, list[SelectionRow]]:
    """Pick the candidate kernel set with the smallest limiting mean of the
    scaled minimum distance index (sum of deltas); ties go to the first set.

    Asymptotic efficiency is an intrinsic property of Gamma_hat Omega, so the
    spectra are evaluated at identity mixing regardless of the workspace's
    mixing matrix.
    """
    if not candidate_sets:
        raise ValueError("need at least one candidate set")
    eval_ws = ws
    if not np.array_equal(ws.omega, np.eye(ws.p)):
        eval_ws = AsymptoticWorkspace(ws.locations, ws.latent)
        eval_ws._weights = ws._weights
        eval_ws._traces = ws._traces
    table = []
    for idx, kernels in enumerate(candidate_sets):
        kernels = tuple(kernels)
        try:
            spec = mdi_limit_spectrum(fk_matrix(eval_ws, kernels).fk)
            table.append(
                SelectionRow(idx, kernels, True, spec.expected_nmdi, spec.deltas)
            )
        except EigenGapError as exc:
            table.append(SelectionRow(idx, kernels, False, reason=str(exc)))
    feasible = [row for row in table if row.feasible]
    if not feasible:
        raise EigenGapError("no candidate kernel set is identifiable")
    best = min(feasible, key=lambda row: (row.expected_nmdi, row.index))
    return best.index, table
