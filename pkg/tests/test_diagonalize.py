import numpy as np
import pytest

from conftest import random_spd, random_symmetric
from spatialbss import (
    JointDiagConfig,
    NonConvergenceWarning,
    criterion,
    identifiability_check,
    joint_diagonalize,
    pair_diagonalize,
    whitener,
)
from spatialbss.diagonalize import _canonicalize, _fix_signs
from spatialbss.errors import NotPositiveDefiniteError


def euler_grid_maximum(m0, ms, refinements=5):
    """Grid search over SO(3) Euler angles, locally refined; the independent
    oracle for the joint criterion value at p = 3."""
    w = whitener(m0)
    rs = np.stack([w @ m @ w for m in ms])

    def crit_batch(alpha, beta, gamma):
        ca, sa = np.cos(alpha), np.sin(alpha)
        cb, sb = np.cos(beta), np.sin(beta)
        cg, sg = np.cos(gamma), np.sin(gamma)
        # ZYZ rotation columns
        u = np.empty((len(alpha), 3, 3))
        u[:, 0, 0] = ca * cb * cg - sa * sg
        u[:, 0, 1] = -ca * cb * sg - sa * cg
        u[:, 0, 2] = ca * sb
        u[:, 1, 0] = sa * cb * cg + ca * sg
        u[:, 1, 1] = -sa * cb * sg + ca * cg
        u[:, 1, 2] = sa * sb
        u[:, 2, 0] = -sb * cg
        u[:, 2, 1] = sb * sg
        u[:, 2, 2] = cb
        diags = np.einsum("nik,lij,njk->nlk", u, rs, u)
        return np.sum(diags**2, axis=(1, 2))

    center = np.zeros(3)
    width = np.pi
    best_val = -np.inf
    for _ in range(refinements):
        axes = [np.linspace(c - width, c + width, 41) for c in center]
        aa, bb, gg = np.meshgrid(*axes, indexing="ij")
        vals = crit_batch(aa.ravel(), bb.ravel(), gg.ravel())
        idx = np.argmax(vals)
        best_val = vals[idx]
        center = np.array([aa.ravel()[idx], bb.ravel()[idx], gg.ravel()[idx]])
        width /= 10.0
    return best_val


class TestPairDiagonalize:
    def test_already_solved(self):
        res = pair_diagonalize(np.eye(3), np.diag([3.0, 2.0, 1.0]))
        assert np.allclose(res.gamma, np.eye(3), atol=0)
        assert np.allclose(res.lambdas[0], [3, 2, 1], atol=0)

    def test_sorting_contract(self):
        res = pair_diagonalize(np.eye(3), np.diag([1.0, 2.0, 3.0]))
        assert np.allclose(res.lambdas[0], [3, 2, 1], atol=0)
        assert np.allclose(np.abs(res.gamma), np.eye(3)[::-1], atol=0)
        assert np.all(res.gamma.sum(axis=1) >= 0)

    @pytest.mark.parametrize("p", [2, 3, 4])
    def test_definition_identities_random(self, rng, p):
        for _ in range(30):
            m0 = random_spd(rng, p)
            mf = random_symmetric(rng, p)
            res = pair_diagonalize(m0, mf)
            assert np.linalg.norm(res.gamma @ m0 @ res.gamma.T - np.eye(p)) < 1e-8
            conj = res.gamma @ mf @ res.gamma.T
            assert np.linalg.norm(conj - np.diag(np.diag(conj))) < 1e-8
            assert np.all(np.diff(res.lambdas[0]) <= 0)

    def test_not_spd_propagates(self, rng):
        with pytest.raises(NotPositiveDefiniteError):
            pair_diagonalize(np.diag([1.0, -1.0]), np.eye(2))


class TestJointDiagonalize:
    def test_commuting_family(self):
        res = joint_diagonalize(np.eye(3), [np.diag([3.0, 2.0, 1.0]), np.diag([9.0, 4.0, 1.0])])
        assert np.allclose(res.gamma, np.eye(3), atol=1e-12)
        assert res.criterion == pytest.approx(112.0, abs=1e-9)

    @pytest.mark.parametrize("p", [2, 3, 4])
    def test_whitening_identity_and_monotone_sweeps(self, rng, p):
        for _ in range(20):
            m0 = random_spd(rng, p)
            ms = [random_symmetric(rng, p) for _ in range(3)]
            res = joint_diagonalize(m0, ms)
            assert np.linalg.norm(res.gamma @ m0 @ res.gamma.T - np.eye(p)) < 1e-8
            trace = np.asarray(res.criterion_trace)
            assert np.all(np.diff(trace) >= -1e-13)

    def test_k1_equals_pair(self, rng):
        for p in (2, 3, 4):
            for _ in range(15):
                m0 = random_spd(rng, p)
                mf = random_symmetric(rng, p)
                a = pair_diagonalize(m0, mf)
                b = joint_diagonalize(m0, [mf])
                assert np.abs(a.gamma - b.gamma).max() < 1e-6
                assert np.abs(a.lambdas[0] - b.lambdas[0]).max() < 1e-6

    def test_near_commuting_matches_grid_oracle(self, rng):
        base = [np.diag([3.0, 2.0, 1.0]), np.diag([1.0, 4.0, 2.0]), np.diag([2.0, 1.0, 5.0])]
        for _ in range(3):
            ms = [d + 0.05 * random_symmetric(rng, 3) for d in base]
            m0 = random_spd(rng, 3, scale=0.5)
            res = joint_diagonalize(m0, ms, JointDiagConfig(max_sweeps=200, tol=1e-15))
            oracle = euler_grid_maximum(m0, ms)
            assert res.criterion >= oracle - 1e-9 * max(1.0, oracle)
            assert res.criterion <= oracle + 1e-6 * max(1.0, oracle)

    def test_criterion_upper_bound(self, rng):
        for _ in range(10):
            m0 = random_spd(rng, 3)
            ms = [random_symmetric(rng, 3) for _ in range(2)]
            w = whitener(m0)
            bound = sum(np.linalg.norm(w @ m @ w) ** 2 for m in ms)
            res = joint_diagonalize(m0, ms)
            assert res.criterion <= bound + 1e-9

    def test_nonconvergence_warns_not_raises(self, rng):
        m0 = random_spd(rng, 4)
        ms = [random_symmetric(rng, 4) for _ in range(4)]
        cfg = JointDiagConfig(max_sweeps=1, tol=1e-300)
        with pytest.warns(NonConvergenceWarning):
            res = joint_diagonalize(m0, ms, cfg)
        assert res.sweeps == 1
        assert not res.converged

    def test_empty_kernel_list_rejected(self):
        with pytest.raises(ValueError):
            joint_diagonalize(np.eye(2), [])

    def test_row_sign_convention(self, rng):
        for _ in range(10):
            res = joint_diagonalize(
                random_spd(rng, 3), [random_symmetric(rng, 3) for _ in range(2)]
            )
            sums = res.gamma.sum(axis=1)
            assert np.all((sums > 0) | ((sums == 0)))


class TestCriterion:
    def test_diagonal_examples(self):
        assert criterion(np.eye(2), [np.diag([3.0, 4.0])]) == pytest.approx(25.0, abs=0)
        assert criterion(np.eye(5), [np.eye(5)]) == pytest.approx(5.0, abs=0)

    def test_equals_frobenius_of_diag_part(self, rng):
        g = rng.normal(size=(3, 3))
        m = random_symmetric(rng, 3)
        want = np.sum(np.diag(g @ m @ g.T) ** 2)
        assert criterion(g, [m]) == pytest.approx(want, rel=1e-12)


class TestCanonicalization:
    def test_idempotent(self, rng):
        gamma = rng.normal(size=(4, 4))
        lambdas = rng.normal(size=(2, 4))
        g1, l1, _, _ = _canonicalize(gamma, lambdas)
        g2, l2, perm2, signs2 = _canonicalize(g1, l1)
        assert np.array_equal(g1, g2)
        assert np.array_equal(l1, l2)
        assert np.array_equal(perm2, np.arange(4))
        assert np.array_equal(signs2, np.ones(4))

    def test_sign_rule_zero_sum_tiebreak(self):
        gamma = np.array([[1.0, -1.0], [-1.0, 1.0]])
        signs = _fix_signs(gamma)
        # both rows sum to zero; first nonzero entry decides
        assert np.array_equal(signs, [1.0, -1.0])


class TestIdentifiabilityCheck:
    def test_k1_separated(self):
        ok, pair = identifiability_check([np.diag([3.0, 2.0, 1.0])], 0.5)
        assert ok and pair is None

    def test_failure_pair_reported(self):
        ds = [np.diag([1.0, 1.0, 2.0]), np.diag([1.0, 1.0, 3.0])]
        ok, pair = identifiability_check(ds, 1e-12)
        assert not ok
        assert pair == (0, 1)

    def test_second_matrix_saves_the_pair(self):
        ds = [np.diag([1.0, 1.0, 2.0]), np.diag([1.0, 4.0, 3.0])]
        ok, pair = identifiability_check(ds, 1.0)
        assert ok and pair is None
