import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import tiny
from geeopt.model import (
    LN2,
    UNBOUNDED,
    ScenarioError,
    check_allocation,
    gee,
    hessian_diag,
    marginal_utility,
    max_rate_bound,
    phi,
    phi_vector,
    potential,
    rates,
    sinr,
    sum_rate,
    surrogate_utility,
    total_power,
)
from geeopt.oracle import finite_diff
from geeopt.validation import random_point, random_scenario


class TestScenario:
    def test_negative_gain_rejected(self):
        with pytest.raises(ScenarioError, match="alpha"):
            tiny([[-1.0]])

    def test_shape_mismatch_rejected(self):
        s = tiny([[1.0, 1.0]])
        with pytest.raises(ScenarioError, match="noise"):
            s.replace(noise=np.ones(3))

    def test_self_gain_diagonal_zeroed(self):
        beta = np.ones((2, 2, 1))
        s = tiny([[1.0], [1.0]], beta=beta)
        assert s.beta[0, 0, 0] == 0 and s.beta[1, 1, 0] == 0
        assert s.beta[0, 1, 0] == 1

    def test_arrays_read_only(self):
        s = tiny([[1.0]])
        with pytest.raises(ValueError):
            s.alpha[0, 0] = 2.0

    def test_check_allocation(self):
        s = tiny([[1.0, 1.0]], p_max=1.0)
        check_allocation(s, [[0.5, 0.5]])
        with pytest.raises(ScenarioError, match="budget"):
            check_allocation(s, [[0.6, 0.5]])
        with pytest.raises(ScenarioError, match="negative"):
            check_allocation(s, [[-0.1, 0.5]])


class TestRates:
    def test_sinr_saturates_at_alpha_over_xi(self):
        s = tiny([[1.0]], xi=0.01, p_max=1e9)
        np.testing.assert_allclose(sinr(s, [[1e9]], 0, 0), 100.0, rtol=1e-4)

    def test_rate_ceiling_four_subcarriers(self):
        s = tiny(np.full((1, 4), 100.0), xi=1.0, noise=1e-30, p_max=1e40)
        np.testing.assert_allclose(rates(s, np.full((1, 4), 1e9))[0], 4 * np.log2(101), rtol=1e-9)
        assert abs(4 * np.log2(101) - 26.63) < 0.005

    def test_sinr_matches_matrix(self, rng):
        s = random_scenario(rng, K=3, N=2)
        p = random_point(rng, s)
        from geeopt.model import sinr_matrix

        m = sinr_matrix(s, p)
        for k in range(3):
            for n in range(2):
                np.testing.assert_allclose(sinr(s, p, k, n), m[k, n], rtol=1e-12)

    def test_interference_lowers_rate(self):
        beta = np.zeros((2, 2, 1))
        beta[1, 0, 0] = 1.0
        s = tiny([[1.0], [1.0]], beta=beta)
        assert rates(s, [[1.0], [1.0]])[0] < rates(s, [[1.0], [0.0]])[0]


class TestGee:
    def test_zero_power(self):
        s = tiny([[1.0]])
        assert gee(s, [[0.0]]) == 0.0

    def test_unit_case(self):
        s = tiny([[1.0]], p_static=1.0)
        np.testing.assert_allclose(gee(s, [[1.0]]), 0.5, rtol=1e-15)

    def test_bandwidth_scales(self):
        s = tiny([[1.0]], bandwidth=10.0)
        np.testing.assert_allclose(gee(s, [[1.0]]), 5.0, rtol=1e-15)


class TestPotential:
    def test_zero_price_is_sum_rate(self, rng):
        s = random_scenario(rng, K=3, N=3)
        p = random_point(rng, s)
        assert potential(s, p, 0.0) == sum_rate(s, p)

    def test_zero_power(self):
        s = tiny([[1.0, 1.0]], p_static=0.3)
        assert potential(s, np.zeros((1, 2)), 2.0) == pytest.approx(-0.6)

    def test_unit_case(self):
        s = tiny([[1.0]], p_static=1.0)
        assert potential(s, [[1.0]], 1.0) == pytest.approx(-1.0)

    def test_total_power(self):
        s = tiny([[1.0, 1.0]], mu=2.0, p_static=0.5)
        assert total_power(s, [[0.25, 0.5]]) == pytest.approx(2.0)


class TestRateBound:
    def test_default_ratio(self):
        s = tiny(np.full((1, 4), 1.0), xi=0.01)
        b = max_rate_bound(s, 0)
        np.testing.assert_allclose(b.total, 26.63, atol=0.01)
        assert len(b.per_subcarrier) == 4

    def test_unbounded_without_self_interference(self):
        s = tiny([[1.0, 1.0]], xi=[[0.0, 0.1]])
        b = max_rate_bound(s, 0)
        assert b.per_subcarrier[0] is UNBOUNDED
        assert b.total is UNBOUNDED

    def test_dead_subcarrier(self):
        s = tiny([[0.0, 1.0]], xi=[[0.0, 1.0]])
        assert max_rate_bound(s, 0).per_subcarrier == (0.0, 1.0)


class TestPhi:
    def test_single_user(self):
        s = tiny([[1.0, 2.0]])
        np.testing.assert_array_equal(phi_vector(s, [[0.3, 0.2]], 0, [0.3, 0.2]), 0.0)

    def test_hand_value(self):
        beta = np.zeros((2, 2, 1))
        beta[0, 1, 0] = 1.0
        s = tiny([[1.0], [1.0]], xi=0.0, beta=beta)
        for p2 in (0.0, 0.4, 1.0):
            v = phi(s, 0, 0, [[1.0], [p2]], [1.0])
            np.testing.assert_allclose(v, -1 / (2 * LN2), rtol=1e-12)
        assert -1 / (2 * LN2) == pytest.approx(-0.7213, abs=1e-4)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 2**31 - 1))
    def test_non_positive(self, seed):
        rng = np.random.default_rng(seed)
        s = random_scenario(rng)
        p = random_point(rng, s)
        k = int(rng.integers(s.K))
        assert np.all(phi_vector(s, p, k, p[k]) <= 0)


class TestSurrogate:
    def test_minorant(self, rng):
        for _ in range(1000):
            s = random_scenario(rng)
            p = random_point(rng, s)
            k = int(rng.integers(s.K))
            lam = float(rng.uniform(0, 1))
            pbar = p[k].copy()
            q = random_point(rng, s)[k]
            full = p.copy()
            full[k] = q
            assert surrogate_utility(s, k, q, p, pbar, lam) <= potential(s, full, lam) + 1e-10
            np.testing.assert_allclose(surrogate_utility(s, k, pbar, p, pbar, lam), potential(s, p, lam),
                                       rtol=1e-12, atol=1e-12)

    def test_marginal_hand_value(self):
        s = tiny([[1.0]])
        np.testing.assert_allclose(marginal_utility(s, 0, 0, [[0.0]], 0.0), 1 / LN2, rtol=1e-12)
        assert 1 / LN2 == pytest.approx(1.4427, abs=1e-4)

    def test_hessian_hand_value(self):
        s = tiny([[1.0]])
        np.testing.assert_allclose(hessian_diag(s, 0, 0, [[0.0]]), -1 / LN2, rtol=1e-12)

    @settings(max_examples=100, deadline=None)
    @given(st.integers(0, 2**31 - 1))
    def test_marginal_matches_finite_difference(self, seed):
        rng = np.random.default_rng(seed)
        s = random_scenario(rng)
        p = random_point(rng, s)
        k, n = int(rng.integers(s.K)), int(rng.integers(s.N))
        lam = float(rng.uniform(0, 1))
        pbar = p[k].copy()
        nu = lam * s.mu[k, n] - phi_vector(s, p, k, pbar)[n]
        fd = finite_diff(lambda x: surrogate_utility(s, k, x, p, pbar, lam), p[k], None, n, 1e-6 * s.p_max[k])
        got = marginal_utility(s, k, n, p, nu)
        np.testing.assert_allclose(got, fd, rtol=1e-5, atol=1e-8)

    @settings(max_examples=100, deadline=None)
    @given(st.integers(0, 2**31 - 1))
    def test_hessian_negative(self, seed):
        rng = np.random.default_rng(seed)
        s = random_scenario(rng)
        p = random_point(rng, s)
        k, n = int(rng.integers(s.K)), int(rng.integers(s.N))
        assert hessian_diag(s, k, n, p) < 0
