"""Oracle and invariant checks runnable without any configuration.

Every check returns a :class:`Check` whose ``metric`` is compared against
``threshold``. :func:`run_all` runs the suite, with smaller sample counts
when ``quick`` is set.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .brd import initial_allocation, run_brd
from .learning import LearningParams, learn
from .model import (
    Scenario,
    hessian_diag,
    hessian_vector,
    marginal_utility,
    marginal_vector,
    rates,
    reduced_surrogate,
    max_rate_bound,
    phi_vector,
    surrogate_utility,
    user_view,
)
from .optimizer import SolverOptions, maximize_gee
from .oracle import GridSpec, finite_diff, grid_search_gee, projected_gradient_reference
from .qos import QosMode, barrier_grad_terms, barrier_terms
from .scenario_gen import GenConfig, generate


@dataclass
class Check:
    name: str
    passed: bool
    metric: float
    threshold: float
    samples: int
    seconds: float = 0.0
    detail: str = ""

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (f"{status} {self.name}: metric={self.metric:.3e} threshold={self.threshold:.3e} "
                f"samples={self.samples} ({self.seconds:.1f}s){' ' + self.detail if self.detail else ''}")


def random_scenario(rng, K=None, N=None, r_min=0.0, xi_ratio=None) -> Scenario:
    """Small random scenario with O(1) gains, for derivative and oracle checks."""
    K = int(rng.integers(1, 5)) if K is None else K
    N = int(rng.integers(1, 5)) if N is None else N
    alpha = rng.uniform(0.2, 2.0, size=(K, N))
    xr = rng.uniform(0.0, 0.2) if xi_ratio is None else xi_ratio
    beta = rng.uniform(0.0, 0.5, size=(K, K, N))
    for k in range(K):
        beta[k, k] = 0.0
    return Scenario(
        bandwidth=1.0,
        noise=rng.uniform(0.1, 1.0, size=N),
        alpha=alpha,
        xi=xr * alpha,
        beta=beta,
        mu=rng.uniform(1.0, 1.5, size=(K, N)),
        p_static=np.full(K, 0.1),
        p_max=rng.uniform(1.0, 5.0, size=K),
        r_min=np.full(K, float(r_min)),
    )


def random_point(rng, s: Scenario, margin: float = 0.05) -> np.ndarray:
    """Interior allocation: each user's powers sum to at most ``p_max``."""
    w = rng.dirichlet(np.ones(s.N + 1), size=s.K)[:, : s.N]
    return np.maximum(w, margin / (s.N + 1)) * s.p_max[:, None] * 0.9


def _rel(a, b, floor=1e-12):
    return abs(a - b) / max(abs(a), abs(b), floor)


def _timed(fn):
    def wrapper(*args, **kwargs):
        t0 = time.perf_counter()
        c = fn(*args, **kwargs)
        c.seconds = time.perf_counter() - t0
        return c

    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


@_timed
def check_marginal_gradient(pairs: int = 1000, seed: int = 0, h: float = 1e-6) -> Check:
    """Marginal utility against central differences of the surrogate utility."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(pairs):
        s = random_scenario(rng)
        p = random_point(rng, s)
        k = int(rng.integers(s.K))
        n = int(rng.integers(s.N))
        lam = float(rng.uniform(0.0, 1.0))
        pbar = p[k] * rng.uniform(0.5, 1.5, size=s.N)
        nu = lam * s.mu[k, n] - phi_vector(s, p, k, pbar)[n]

        def f(pk):
            return surrogate_utility(s, k, pk, p, pbar, lam)

        fd = finite_diff(f, p[k], None, n, h * s.p_max[k])
        worst = max(worst, _rel(marginal_utility(s, k, n, p, nu), fd, 1e-8))
    return Check("marginal_utility vs finite differences", worst < 1e-5, worst, 1e-5, pairs)


@_timed
def check_barrier_gradient(pairs: int = 1000, seed: int = 1, h: float = 1e-6) -> Check:
    """Barrier slopes against central differences of the barrier terms."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    done = 0
    while done < pairs:
        s = random_scenario(rng)
        p = random_point(rng, s)
        r = rates(s, p)
        s = s.replace(r_min=r * rng.uniform(0.2, 0.8, size=s.K))
        k = int(rng.integers(s.K))
        n = int(rng.integers(s.N))
        rho = float(rng.uniform(0.1, 10.0))
        phi_i, phi_ii = barrier_grad_terms(s, k, n, p, p[k], rho)
        step = h * s.p_max[k]

        def own(x):
            q = p.copy()
            q[k] = x
            return barrier_terms(s, q, rho, -1e3)[k]

        def others(x):
            q = p.copy()
            q[k] = x
            t = barrier_terms(s, q, rho, -1e3)
            return t.sum() - t[k]

        worst = max(worst, _rel(phi_i, finite_diff(own, p[k], None, n, step), 1e-8))
        if s.K > 1:
            worst = max(worst, _rel(phi_ii, finite_diff(others, p[k], None, n, step), 1e-8))
        done += 1
    return Check("barrier slopes vs finite differences", worst < 1e-4, worst, 1e-4, pairs)


@_timed
def check_concavity(points: int = 1000, seed: int = 2) -> Check:
    """Hessian diagonal of the surrogate is negative at random feasible points."""
    rng = np.random.default_rng(seed)
    worst = -np.inf
    for _ in range(points):
        s = random_scenario(rng)
        p = random_point(rng, s)
        k = int(rng.integers(s.K))
        n = int(rng.integers(s.N))
        if s.alpha[k, n] + s.beta[k, :, n].sum() > 0:
            worst = max(worst, hessian_diag(s, k, n, p))
    return Check("surrogate Hessian diagonal < 0", worst < 0, worst, 0.0, points)


def surrogate_subproblem(rng, K: int = 4, N: int = 4, floors: bool = False):
    """A random per-user surrogate subproblem as ``(objective, grad, curvature, budget, offsets)``."""
    s = random_scenario(rng, K=K, N=N)
    p = random_point(rng, s)
    k = int(rng.integers(s.K))
    lam = float(rng.uniform(0.0, 1.0))
    view = user_view(s, p, k)
    nu = lam * s.mu[k] - phi_vector(s, p, k, p[k])

    budget = float(s.p_max[k])
    offsets = np.zeros(N)
    if floors:
        offsets = rng.uniform(0.0, 0.1, size=N) * budget
        budget -= offsets.sum()

    def obj(x):
        return reduced_surrogate(s, view, x, nu)

    def grad(x):
        return marginal_vector(s, view, x, nu)

    def curv(x):
        return hessian_vector(s, view, x)

    return obj, grad, curv, budget, offsets


@_timed
def check_learning_vs_reference(cases: int = 100, seed: int = 3,
                                params: LearningParams = LearningParams()) -> Check:
    """Learning optimum against projected gradient; every iterate stays feasible."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    infeasible = 0
    for i in range(cases):
        obj, grad, curv, budget, offsets = surrogate_subproblem(rng, floors=bool(i % 2))

        def cb(t, p):
            nonlocal infeasible
            if np.any(p < offsets) or (p - offsets).sum() > budget:
                infeasible += 1

        res = learn(grad, budget, offsets, params, curvature=curv, objective=obj, callback=cb)
        ref = projected_gradient_reference(obj, grad, budget, offsets)
        worst = max(worst, obj(ref) - obj(res.p))
    passed = worst < 1e-4 and infeasible == 0
    return Check("learning vs projected gradient", passed, worst, 1e-4, cases,
                 detail=f"infeasible_iterates={infeasible}")


def _nondecreasing_violation(seq) -> float:
    seq = np.asarray(seq, dtype=float)
    if seq.size < 2:
        return 0.0
    return float(np.max(seq[:-1] - seq[1:], initial=0.0))


@_timed
def check_potential_monotone(runs: int = 100, seed: int = 4, modes=("none", "barrier")) -> Check:
    """Recorded objective of full dynamics runs never decreases."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for i in range(runs):
        mode = QosMode(modes[i % len(modes)])
        cfg = GenConfig(K=int(rng.integers(2, 7)), N=int(rng.integers(1, 5)),
                        seed=int(rng.integers(1 << 30)),
                        r_min=0.266 if mode.kind != "none" else 0.0)
        s = generate(cfg)
        lam = float(rng.choice([0.0, 1e2, 1e3, 1e4]))
        res = run_brd(s, initial_allocation(s, mode), lam, mode)
        worst = max(worst, _nondecreasing_violation(res.potentials))
    return Check("potential non-decreasing along dynamics", worst <= 1e-9, worst, 1e-9, runs)


@_timed
def check_dinkelbach_monotone(scenarios: int = 200, seed: int = 5) -> Check:
    """Price sequence grows while the auxiliary objective is non-negative;
    the loop stops at the first negative value."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    bad_stop = 0
    modes = [QosMode.none(), QosMode.barrier(), QosMode.generalized()]
    for i in range(scenarios):
        mode = modes[i % 3]
        cfg = GenConfig(K=int(rng.integers(2, 7)), N=int(rng.integers(1, 5)),
                        seed=int(rng.integers(1 << 30)),
                        r_min=0.266 if mode.kind != "none" else 0.0)
        r = maximize_gee(generate(cfg), SolverOptions(qos=mode))
        for j, f in enumerate(r.f_bars):
            if f >= 0:
                worst = max(worst, r.lambdas[j] - r.lambdas[j + 1])
            elif j != len(r.f_bars) - 1:
                bad_stop += 1
    passed = worst <= 1e-12 and bad_stop == 0
    return Check("Dinkelbach price monotone", passed, worst, 1e-12, scenarios,
                 detail=f"late_stops={bad_stop}")


@_timed
def check_grid_near_optimal(scenarios: int = 50, seed: int = 6, points: int = 50,
                            ratio: float = 0.95) -> Check:
    """Solver GEE against an exhaustive grid on K=2, N=2 scenarios."""
    rng = np.random.default_rng(seed)
    worst = np.inf
    for _ in range(scenarios):
        s = generate(GenConfig(K=2, N=2, seed=int(rng.integers(1 << 30))))
        _, g_grid = grid_search_gee(s, GridSpec(points=points))
        g = maximize_gee(s).gee
        worst = min(worst, g / g_grid)
    return Check("GEE vs grid oracle", worst >= ratio, worst, ratio, scenarios)


@_timed
def check_rate_ceiling() -> Check:
    """Rate ceiling of the default drop: N*log2(1 + 1/xi) per user."""
    s = generate(GenConfig())
    per_user = [max_rate_bound(s, k).total for k in range(s.K)]
    err = max(abs(v - 26.63) for v in per_user)
    total = float(sum(per_user))
    passed = err <= 0.01 and abs(total - 320.0) <= 1.0
    return Check("rate ceiling fixture", passed, err, 0.01, s.K, detail=f"sum={total:.2f}")


def run_all(quick: bool = False) -> list:
    """The full check suite; ``quick`` shrinks sample counts tenfold."""
    f = 10 if quick else 1
    return [
        check_marginal_gradient(pairs=1000 // f),
        check_barrier_gradient(pairs=1000 // f),
        check_concavity(points=1000 // f),
        check_learning_vs_reference(cases=100 // f),
        check_potential_monotone(runs=100 // f),
        check_dinkelbach_monotone(scenarios=200 // f),
        check_grid_near_optimal(scenarios=50 // f, points=50 if not quick else 30),
        check_rate_ceiling(),
    ]
