import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from geeopt.brd import BrdOptions, better_response, initial_allocation, objective, run_brd
from geeopt.learning import LearningParams
from geeopt.model import potential, reduced_surrogate, marginal_vector, phi_vector, user_view
from geeopt.oracle import projected_gradient_reference, simplex_grid
from geeopt.qos import QosMode, per_subcarrier_rates, split_rate_requirement
from geeopt.scenario_gen import GenConfig, generate

MODES = [QosMode.none(), QosMode.barrier(), QosMode.generalized()]


def _scenario(seed, K=2, N=2, **kw):
    return generate(GenConfig(K=K, N=N, seed=seed, **kw))


def _grid_sum_rate(s, points=40):
    unit = simplex_grid(s.N, points)
    P = unit[:, None, :] * s.p_max[0]
    Q = unit[None, :, :] * s.p_max[1]
    best = -np.inf
    for a in range(unit.shape[0]):
        p = np.stack(np.broadcast_arrays(P[a], Q[:, 0, :]), axis=1)  # (M, 2, N)
        interf = s.noise + np.einsum("lkn,mln->mkn", s.beta, p)
        r = np.log2(1 + p * s.alpha / (interf + s.xi * p)).sum(axis=(1, 2))
        best = max(best, r.max())
    return best


class TestOptions:
    @pytest.mark.parametrize("kw", [dict(tol=0), dict(max_rounds=0), dict(mm_steps=0), dict(mm_tol=-1),
                                    dict(tol_cap_ratio=0), dict(engine="gpu")])
    def test_rejects(self, kw):
        with pytest.raises(ValueError):
            BrdOptions(**kw)


class TestInitial:
    def test_image_of_zero_scores(self):
        s = _scenario(0, K=3, N=4)
        np.testing.assert_allclose(initial_allocation(s), np.full((3, 4), s.p_max[0] / 5))

    def test_generalized_above_floors(self):
        s = _scenario(0, K=4, N=3, r_min=0.266)
        p = initial_allocation(s, QosMode.generalized())
        assert np.all(p.sum(axis=1) <= s.p_max * (1 + 1e-12))


class TestBetterResponse:
    def test_never_decreases_potential(self, rng):
        for trial in range(1000):
            s = _scenario(trial)
            p = rng.dirichlet(np.ones(3), size=2)[:, :2] * s.p_max[:, None]
            k = int(rng.integers(2))
            before = potential(s, p, 0.0)
            res = better_response(s, k, p, 0.0)
            q = p.copy()
            q[k] = res.p_k
            assert potential(s, q, 0.0) >= before - 1e-12
            assert q[k].sum() <= s.p_max[k]

    def test_solves_surrogate(self, rng):
        for trial in range(20):
            s = _scenario(trial, K=4, N=4)
            p = initial_allocation(s)
            k = int(rng.integers(4))
            lam = float(rng.choice([0.0, 100.0]))
            res = better_response(s, k, p, lam, params=LearningParams(tol=1e-9))
            assert res.accepted == "full"
            view = user_view(s, p, k)
            nu = lam * s.mu[k] - phi_vector(s, p, k, p[k])
            ref = projected_gradient_reference(lambda x: reduced_surrogate(s, view, x, nu),
                                               lambda x: marginal_vector(s, view, x, nu), s.p_max[k], n=s.N)
            gap = reduced_surrogate(s, view, ref, nu) - reduced_surrogate(s, view, res.p_k, nu)
            assert gap < 1e-4

    def test_generalized_response_meets_floors(self):
        s = _scenario(1, K=4, N=2, r_min=0.266)
        mode = QosMode.generalized()
        p = initial_allocation(s, mode)
        targets = [split_rate_requirement(s, k) for k in range(s.K)]
        res = better_response(s, 0, p, 0.0, mode, targets=targets[0])
        assert np.all(res.p_k >= res.plan.floors - 1e-15)
        assert res.p_k.sum() <= s.p_max[0]


class TestDynamics:
    @pytest.mark.parametrize("seed", range(10))
    def test_close_to_grid_at_zero_price(self, seed):
        s = _scenario(seed)
        res = run_brd(s, initial_allocation(s), 0.0)
        assert potential(s, res.p, 0.0) >= 0.95 * _grid_sum_rate(s)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 10**6), st.sampled_from(["none", "barrier"]), st.sampled_from([0.0, 10.0, 1e3]))
    def test_potential_non_decreasing(self, seed, kind, lam):
        mode = QosMode(kind)
        s = _scenario(seed, K=4, N=3, r_min=0.266 if kind != "none" else 0.0)
        res = run_brd(s, initial_allocation(s, mode), lam, mode)
        assert np.all(np.diff(res.potentials) >= -1e-9)
        np.testing.assert_allclose(res.potentials[-1], objective(s, res.p, lam, mode), rtol=1e-9, atol=1e-9)

    def test_counters(self):
        s = _scenario(2, K=4, N=3)
        res = run_brd(s, initial_allocation(s), 10.0)
        assert res.converged
        assert len(res.learn_iterations) == len(res.learn_runs)
        assert sum(res.learn_runs) >= res.rounds * s.K

    def test_generalized_repairs_floors(self):
        s = _scenario(3, K=6, N=3, r_min=0.266)
        mode = QosMode.generalized()
        res = run_brd(s, initial_allocation(s, mode), 0.0, mode)
        assert res.repaired
        r = per_subcarrier_rates(s, res.p)
        for k, plan in enumerate(res.plans):
            assert np.all(r[k][plan.active] >= plan.targets[plan.active] - 1e-9)


class TestEngineParity:
    @pytest.mark.parametrize("mode", MODES, ids=lambda m: m.kind)
    @pytest.mark.parametrize("p_max_dbw", [-10.0, 10.0])
    def test_python_matches_compiled(self, mode, p_max_dbw):
        s = _scenario(5, K=3, N=2, r_min=0.266 if mode.kind != "none" else 0.0, p_max_dbw=p_max_dbw)
        p0 = initial_allocation(s, mode)
        lam = 30.0
        a = run_brd(s, p0, lam, mode, BrdOptions(engine="compiled"))
        b = run_brd(s, p0, lam, mode, BrdOptions(engine="python"))
        np.testing.assert_allclose(a.p, b.p, rtol=1e-9, atol=1e-15)
        assert a.rounds == b.rounds
        np.testing.assert_allclose(a.potentials, b.potentials, rtol=1e-9)
