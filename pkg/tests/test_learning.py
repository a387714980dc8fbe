import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from geeopt.learning import LearningParams, exp_map, learn, learn_user
from geeopt.model import LN2, user_view
from geeopt.oracle import projected_gradient_reference, water_filling
from geeopt.validation import random_point, random_scenario, surrogate_subproblem


class TestExpMap:
    def test_single_coordinate(self):
        np.testing.assert_allclose(exp_map(np.zeros(1), 2.0), [1.0], rtol=1e-15)

    def test_zero_scores(self):
        np.testing.assert_allclose(exp_map(np.zeros(4), 1.0), np.full(4, 0.2), rtol=1e-15)

    @settings(max_examples=200, deadline=None)
    @given(st.lists(st.floats(-800, 800), min_size=1, max_size=6), st.floats(1e-6, 1e3))
    def test_feasible_for_extreme_scores(self, y, budget):
        p = exp_map(np.array(y), budget)
        assert np.all(np.isfinite(p))
        assert np.all(p >= 0)
        assert p.sum() <= budget

    def test_matches_naive_formula(self, rng):
        y = rng.normal(size=5)
        naive = 3.0 * np.exp(y) / (1 + np.exp(y).sum())
        np.testing.assert_allclose(exp_map(y, 3.0), naive, rtol=1e-13)


class TestParams:
    @pytest.mark.parametrize("kw", [dict(delta0=0), dict(exponent=0.5), dict(exponent=1.1),
                                    dict(tol=0), dict(max_iter=0), dict(max_step=0)])
    def test_rejects(self, kw):
        with pytest.raises(ValueError):
            LearningParams(**kw)


def _quadratic(c, w):
    return (lambda p: -float(w @ (p - c) ** 2), lambda p: -2 * w * (p - c), lambda p: -2 * w)


class TestLearn:
    def test_interior_quadratic(self):
        c = np.array([0.2, 0.3, 0.1])
        f, g, h = _quadratic(c, np.array([1.0, 2.0, 0.5]))
        res = learn(g, 1.0, n=3, curvature=h, objective=f)
        np.testing.assert_allclose(res.p, c, atol=1e-4)

    def test_unpreconditioned_quadratic(self):
        c = np.array([0.2, 0.3])
        f, g, _ = _quadratic(c, np.array([1.0, 1.0]))
        res = learn(g, 1.0, n=2, params=LearningParams(precondition=False, max_iter=20000), objective=f)
        np.testing.assert_allclose(res.p, c, atol=1e-3)

    def test_water_filling(self):
        gains, budget = np.array([1.0, 0.8]), 2.0
        wf = water_filling(gains, 1.0, budget)
        np.testing.assert_allclose(wf, [1.125, 0.875], rtol=1e-12)
        res = learn(lambda p: gains / (1 + gains * p) / LN2, budget, n=2,
                    curvature=lambda p: -(gains / (1 + gains * p)) ** 2 / LN2)
        np.testing.assert_allclose(res.p, wf, atol=1e-4)

    def test_zero_budget_returns_offsets(self):
        res = learn(lambda p: p, 0.0, offsets=[0.1, 0.2])
        np.testing.assert_array_equal(res.p, [0.1, 0.2])

    def test_offsets_respected(self, rng):
        for i in range(20):
            obj, grad, curv, budget, offsets = surrogate_subproblem(rng, floors=True)
            seen = []
            learn(grad, budget, offsets, curvature=curv, callback=lambda t, p: seen.append(p))
            P = np.array(seen)
            assert np.all(P >= offsets)
            assert np.all((P - offsets).sum(axis=1) <= budget)

    def test_matches_reference(self, rng):
        for _ in range(20):
            obj, grad, curv, budget, offsets = surrogate_subproblem(rng, floors=False)
            res = learn(grad, budget, offsets, curvature=curv, objective=obj)
            ref = projected_gradient_reference(obj, grad, budget, offsets)
            assert obj(ref) - obj(res.p) < 1e-4

    def test_compiled_kernel_agrees(self, rng):
        for _ in range(20):
            s = random_scenario(rng, K=3, N=3)
            p = random_point(rng, s)
            k = int(rng.integers(s.K))
            view = user_view(s, p, k)
            nu = rng.uniform(0, 0.5, size=s.N)
            arrs = (s.eta[k], s.xi[k], view.interf, view.cross, view.den_eta)
            q, it, conv, _, _ = learn_user(arrs, nu, s.p_max[k], np.zeros(s.N))
            from geeopt.model import hessian_vector, marginal_vector, reduced_surrogate

            res = learn(lambda x: marginal_vector(s, view, x, nu), s.p_max[k], n=s.N,
                        curvature=lambda x: hessian_vector(s, view, x),
                        objective=lambda x: reduced_surrogate(s, view, x, nu))
            assert abs(reduced_surrogate(s, view, q, nu) - reduced_surrogate(s, view, res.p, nu)) < 1e-6
            assert q.sum() <= s.p_max[k]

    def test_rate_target_stops_early(self):
        eta, xi, interf = np.array([1.0, 1.0]), np.zeros(2), np.ones(2)
        arrs = (eta, xi, interf, np.zeros((1, 2)), np.ones((1, 2)))
        _, _, _, _, hit = learn_user(arrs, np.zeros(2), 10.0, np.zeros(2), rate_target=1.0)
        assert hit
        _, _, _, _, hit = learn_user(arrs, np.zeros(2), 1.0, np.zeros(2), rate_target=5.0)
        assert not hit
