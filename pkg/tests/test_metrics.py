import itertools

import numpy as np
import pytest

from spatialbss import match_rows, max_abs_correlations, mdi, nmdi


def brute_force_mdi(g):
    """Enumerate all permutations with per-row closed-form scaling."""
    p = g.shape[0]
    best = np.inf
    for perm in itertools.permutations(range(p)):
        total = 0.0
        for col, row in enumerate(perm):
            gr = g[row]
            total += 1.0 - gr[col] ** 2 / np.dot(gr, gr)
        best = min(best, total)
    return np.sqrt(max(best, 0.0) / (p - 1))


def random_ps_d(rng, p):
    perm = rng.permutation(p)
    s = rng.choice([-1.0, 1.0], size=p)
    d = rng.uniform(0.5, 3.0, size=p)
    c = np.zeros((p, p))
    c[np.arange(p), perm] = s * d
    return c


class TestMdi:
    def test_identity_is_zero(self):
        assert mdi(np.eye(3), np.eye(3)).value == 0.0

    def test_psd_absorbed(self, rng):
        for p in (2, 3, 5):
            for _ in range(20):
                g = random_ps_d(rng, p)
                assert mdi(g, np.eye(p)).value < 1e-12

    @pytest.mark.parametrize("p", [2, 3, 4, 5, 6])
    def test_matches_brute_force(self, rng, p):
        for _ in range(40):
            g = rng.normal(size=(p, p))
            assert mdi(g, np.eye(p)).value == pytest.approx(brute_force_mdi(g), abs=1e-12)

    def test_group_invariance(self, rng):
        for _ in range(25):
            g = rng.normal(size=(3, 3))
            c = random_ps_d(rng, 3)
            a = mdi(g, np.eye(3)).value
            b = mdi(c @ g, np.eye(3)).value
            assert a == pytest.approx(b, abs=1e-12)

    def test_bounded_in_unit_interval(self, rng):
        for _ in range(2000):
            p = rng.integers(2, 6)
            g = rng.normal(size=(p, p))
            while np.any(np.sum(g**2, axis=1) == 0):
                g = rng.normal(size=(p, p))
            v = mdi(g, np.eye(p)).value
            assert 0.0 <= v <= 1.0

    def test_assignment_and_scales_reconstruct(self, rng):
        g = rng.normal(size=(4, 4))
        res = mdi(g, np.eye(4))
        c = np.zeros((4, 4))
        c[res.assignment, np.arange(4)] = res.scales
        resid = np.linalg.norm(c @ g - np.eye(4))
        assert resid == pytest.approx(res.value * np.sqrt(3), rel=1e-10)

    def test_zero_row_rejected(self):
        g = np.array([[1.0, 0.0], [0.0, 0.0]])
        with pytest.raises(ValueError, match="zero row"):
            mdi(g, np.eye(2))

    def test_p1_rejected(self):
        with pytest.raises(ValueError):
            mdi(np.eye(1), np.eye(1))

    def test_omega_enters_through_product(self, rng):
        gamma = rng.normal(size=(3, 3))
        omega = rng.normal(size=(3, 3)) + 3 * np.eye(3)
        assert mdi(gamma, omega).value == pytest.approx(
            mdi(gamma @ omega, np.eye(3)).value, abs=1e-14
        )


class TestNmdi:
    def test_zero(self):
        assert nmdi(np.eye(3), np.eye(3), 100, 3) == 0.0

    def test_scaling_arithmetic(self, rng):
        g = rng.normal(size=(3, 3))
        v = mdi(g, np.eye(3)).value
        assert nmdi(g, np.eye(3), 100, 3) == pytest.approx(100 * 2 * v**2, rel=1e-14)

    def test_worst_case_value(self):
        # value 1 at n=100, p=3 gives 200; build a degenerate-direction G
        g = np.array([[1.0, 0, 0], [1.0, 1e-12, 0], [1.0, 0, 1e-12]])
        assert nmdi(g, np.eye(3), 100, 3) == pytest.approx(200.0, rel=1e-3)


class TestMaxAbsCorrelations:
    def test_self_match(self, rng):
        z = rng.normal(size=(50, 4))
        vals, match = max_abs_correlations(z, z)
        assert np.allclose(vals, 1.0, atol=1e-12)
        assert np.array_equal(match, np.arange(4))

    def test_permuted_and_flipped_recovered(self, rng):
        z = rng.normal(size=(80, 3))
        shuffled = -z[:, [2, 0, 1]]
        vals, match = max_abs_correlations(shuffled, z)
        assert np.allclose(vals, 1.0, atol=1e-12)
        assert np.array_equal(match, [1, 2, 0])

    def test_independent_noise_bounded(self, rng):
        a = rng.normal(size=(1000, 3))
        b = rng.normal(size=(1000, 3))
        vals, _ = max_abs_correlations(a, b)
        assert np.all(vals < 0.15)

    def test_constant_column_named(self, rng):
        z = rng.normal(size=(20, 2))
        zc = z.copy()
        zc[:, 1] = 7.0
        with pytest.raises(ValueError, match="column 1"):
            max_abs_correlations(zc, z)
        with pytest.raises(ValueError, match="z_ref"):
            max_abs_correlations(z, zc)

    def test_one_to_one_variant(self, rng):
        z = rng.normal(size=(60, 3))
        # correlated copies plus one shared column tempting the greedy match
        zh = np.column_stack([z[:, 0] + 0.01 * rng.normal(size=60), z[:, 0], z[:, 2]])
        greedy_vals, greedy_match = max_abs_correlations(z, zh)
        vals, match = max_abs_correlations(z, zh, one_to_one=True)
        assert len(set(match)) == 3
        assert len(set(greedy_match)) <= 3


class TestMatchRows:
    def test_resolves_permutation_and_signs(self, rng):
        ref = rng.normal(size=(4, 4))
        perm = rng.permutation(4)
        signs = rng.choice([-1.0, 1.0], size=4)
        scrambled = signs[:, None] * ref[perm]
        aligned = match_rows(scrambled, ref)
        assert np.allclose(aligned, ref, atol=1e-12)
