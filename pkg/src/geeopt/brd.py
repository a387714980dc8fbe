"""Better-response dynamics over the identical-interest power game.

Each user in turn replaces its powers with the maximizer of a concave
minorant of the shared potential (computed by the learning scheme). A
response is only accepted if the true potential does not drop; otherwise
it is backtracked towards the current powers, and dropped as a last resort.
This makes the recorded potential sequence non-decreasing by construction.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from ._engine import brd_kernel
from .learning import LearningParams, learn_user
from .model import Scenario, _phi, potential, user_view
from .qos import (
    FloorPlan,
    QosMode,
    barrier_slopes,
    barrier_value,
    feasibility_check,
    make_floor_plan,
    rate_slacks,
    repair_floors,
    split_rate_requirement,
)

_BACKTRACK = (0.5, 0.25, 0.125, 0.0625, 1.0 / 32, 1.0 / 256)
_MODE_CODE = {"none": 0, "barrier": 1, "generalized": 2}


@dataclass(frozen=True)
class BrdOptions:
    """Stopping rule and acceleration of the dynamics.

    ``tol`` is the per-round potential gain below which the dynamics stop.
    Each better response re-linearizes and re-solves the surrogate up to
    ``mm_steps`` times, stopping early once a step gains at most ``mm_tol``.
    With ``extrapolate`` every round ends with a guarded step along the
    round's displacement; with ``rescale`` it then tries scaling all powers
    down by powers of two. Both joint moves are kept only if the objective
    increases and are not used in generalized mode, where the floors move
    with the other users' powers. ``engine`` selects the compiled kernel or
    the pure Python reference.

    The learning tolerance is relative to the user's budget, but never to
    more than ``tol_cap_ratio`` times its static power: power errors cost
    efficiency in proportion to the consumed power, not the allowed one.
    ``inf`` disables the cap.
    """

    tol: float = 1e-6
    max_rounds: int = 1000
    mm_steps: int = 10
    mm_tol: float = 1e-6
    extrapolate: bool = True
    rescale: bool = True
    engine: str = "compiled"
    tol_cap_ratio: float = 10.0

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.max_rounds < 1:
            raise ValueError("max_rounds must be at least 1")
        if self.mm_steps < 1:
            raise ValueError("mm_steps must be at least 1")
        if self.mm_tol < 0:
            raise ValueError("mm_tol must be non-negative")
        if not self.tol_cap_ratio > 0:
            raise ValueError("tol_cap_ratio must be positive")
        if self.engine not in ("compiled", "python"):
            raise ValueError("engine must be 'compiled' or 'python'")


@dataclass
class Response:
    p_k: np.ndarray
    iterations: int
    accepted: str  # "full", "backtracked" or "kept" for the last step
    feasible: bool = True
    plan: FloorPlan | None = None
    runs: int = 1


@dataclass
class BrdResult:
    """``potentials`` holds the objective before the first response and after
    every response (and after each extrapolation, which replaces the value
    recorded for the round's last response). ``learn_iterations[i]`` and
    ``learn_runs[i]`` count the learning work of response ``i``."""

    p: np.ndarray
    rounds: int
    converged: bool
    potentials: list = field(default_factory=list)
    learn_iterations: list = field(default_factory=list)
    learn_runs: list = field(default_factory=list)
    infeasible_users: set = field(default_factory=set)
    plans: list | None = None
    repaired: bool = True


def objective(s: Scenario, p, lam: float, mode: QosMode) -> float:
    """The potential the dynamics climb: ``V`` or, in barrier mode, ``V + barrier``."""
    v = potential(s, p, lam)
    if mode.kind == "barrier":
        v += barrier_value(s, p, mode.rho, mode.C)
    return v


def initial_allocation(s: Scenario, mode: QosMode = QosMode.none()) -> np.ndarray:
    """Image of zero scores: ``P_max/(N+1)`` per subcarrier, above the floors
    in generalized mode."""
    p = np.repeat((s.p_max / (s.N + 1))[:, None], s.N, axis=1)
    if mode.kind == "generalized":
        for k in range(s.K):
            plan = make_floor_plan(s, k, p, split_rate_requirement(s, k))
            p[k] = plan.floors + plan.residual / (s.N + 1)
    return p


def _guard(s, p, k, cand, lam, mode, base, floors_ok=True):
    """Accept ``cand`` for user k only if the objective does not decrease.

    Returns ``(p_k, objective, status)``.
    """
    trial = p.copy()
    trial[k] = cand
    v = objective(s, trial, lam, mode)
    if not floors_ok or v >= base:
        return cand, v, "full"
    for t in _BACKTRACK:
        mid = p[k] + t * (cand - p[k])
        trial[k] = mid
        v = objective(s, trial, lam, mode)
        if v >= base:
            return mid, v, "backtracked"
    return p[k].copy(), base, "kept"


def _capped(params: LearningParams, budget: float, cap: float) -> LearningParams:
    if budget > cap:
        return replace(params, tol=params.tol * cap / budget)
    return params


def better_response(
    s: Scenario,
    k: int,
    p,
    lam: float,
    mode: QosMode = QosMode.none(),
    params: LearningParams = LearningParams(),
    targets=None,
    mm_steps: int = 1,
    mm_tol: float = 0.0,
    tol_cap: float = np.inf,
) -> Response:
    """Guarded better response of user ``k`` at the allocation ``p``.

    The surrogate is linearized at the current powers of user k, maximized
    by the learning scheme and the result guarded against a drop of the
    true objective; this repeats up to ``mm_steps`` times. In barrier mode
    the barrier slopes enter the price, after a feasibility test for the
    user's rate target. In generalized mode the learning runs above floors
    recomputed from the other users' current powers. ``tol_cap`` (Watts)
    bounds the scale the learning tolerance is relative to.
    """
    p = np.array(p, dtype=float)
    offsets = np.zeros(s.N)
    budget = float(s.p_max[k])
    plan = None
    feasible = True
    floors_ok = True
    iters = runs = 0
    cur = objective(s, p, lam, mode)

    if mode.kind == "barrier" and s.r_min[k] > 0:
        feas = feasibility_check(s, k, p, _capped(params, budget, tol_cap))
        feasible = feas.feasible
        iters += feas.iterations
        runs += 1
        if feasible and rate_slacks(s, p)[k] <= 0:
            cand, _, how = _guard(s, p, k, feas.witness, lam, mode, cur)
            return Response(cand, iters, how, True, runs=runs)
    elif mode.kind == "generalized":
        if targets is None:
            targets = split_rate_requirement(s, k)
        plan = make_floor_plan(s, k, p, targets)
        offsets = plan.floors
        budget = plan.residual
        floors_ok = bool(np.all(p[k] >= plan.floors)) and p[k].sum() <= s.p_max[k]
    run_params = _capped(params, budget, tol_cap)

    how = "kept"
    for _ in range(mm_steps):
        pbar = p[k].copy()
        view = user_view(s, p, k)
        nu = lam * s.mu[k] - _phi(view, pbar)
        if mode.kind == "barrier":
            phi_i, phi_ii = barrier_slopes(s, p, k, pbar, mode.rho, strict=False)
            nu = nu - phi_ii - (phi_i if feasible else 0.0)
        arrs = (s.eta[k], s.xi[k], view.interf, view.cross, view.den_eta)
        cand, it, _, _, _ = learn_user(arrs, nu, budget, offsets, run_params)
        iters += it
        runs += 1
        p[k], v, how = _guard(s, p, k, cand, lam, mode, cur, floors_ok)
        gain = v - cur
        cur = v
        floors_ok = True
        if how == "kept" or gain <= mm_tol:
            break
    return Response(p[k].copy(), iters, how, feasible, plan, runs)


def _max_step(p, d, p_max) -> float:
    """Largest ``t`` keeping ``p + t*d`` non-negative and within budget."""
    t = np.inf
    neg = d < 0
    if neg.any():
        t = min(t, float(np.min(p[neg] / -d[neg])))
    rs = d.sum(axis=1)
    up = rs > 0
    if up.any():
        t = min(t, float(np.min((p_max[up] - p[up].sum(axis=1)) / rs[up])))
    return t


def _extrapolate(s, p, p_start, lam, mode, cur):
    """Guarded over-relaxation along the round's displacement.

    Tries steps ``1, 2, 4, ...`` (within the feasible set) and keeps the
    best one that increases the objective. Returns ``(p, objective)``.
    """
    d = p - p_start
    tmax = _max_step(p, d, s.p_max) * 0.999
    t, best, bp = 1.0, cur, None
    while t <= tmax:
        q = p + t * d
        v = objective(s, q, lam, mode)
        if v <= best:
            break
        best, bp = v, q
        t *= 2.0
    return (p, cur) if bp is None else (bp, best)


def _rescale(s, p, lam, mode, cur):
    """Guarded joint scaling ``p * 2**-j``, halving while the objective rises."""
    c, best, found = 0.5, cur, False
    while c > 1e-12:
        v = objective(s, c * p, lam, mode)
        if v <= best:
            break
        best, found = v, True
        c *= 0.5
    return (p * (2.0 * c), best) if found else (p, cur)


def _run_python(s, p, lam, mode, opts, params, targets, res):
    cur = res.potentials[0]
    for rnd in range(1, opts.max_rounds + 1):
        start = cur
        p_start = p.copy()
        for k in range(s.K):
            r = better_response(
                s, k, p, lam, mode, params,
                targets=None if targets is None else targets[k],
                mm_steps=opts.mm_steps, mm_tol=opts.mm_tol,
                tol_cap=opts.tol_cap_ratio * float(s.p_static[k]),
            )
            p[k] = r.p_k
            cur = objective(s, p, lam, mode)
            res.potentials.append(cur)
            res.learn_iterations.append(r.iterations)
            res.learn_runs.append(r.runs)
            if r.feasible:
                res.infeasible_users.discard(k)
            else:
                res.infeasible_users.add(k)
        if opts.extrapolate and mode.kind != "generalized":
            p, cur = _extrapolate(s, p, p_start, lam, mode, cur)
            res.potentials[-1] = cur
        if opts.rescale and mode.kind != "generalized":
            p, cur = _rescale(s, p, lam, mode, cur)
            res.potentials[-1] = cur
        res.rounds = rnd
        if cur - start <= opts.tol:
            res.converged = True
            break
    return p


def _run_compiled(s, p, lam, mode, opts, params, targets, res):
    K, N = s.K, s.N
    tg = np.zeros((K, N)) if targets is None else np.array(targets, dtype=float)
    size = K * opts.max_rounds
    pots = np.empty(1 + size)
    runs = np.zeros(size, dtype=np.int64)
    iters = np.zeros(size, dtype=np.int64)
    infeasible = np.zeros(K, dtype=np.bool_)
    rounds, converged, nresp = brd_kernel(
        s.alpha, s.xi, s.beta, s.noise, s.mu, s.p_c, s.p_max, s.r_min, p, float(lam),
        _MODE_CODE[mode.kind], float(mode.rho), float(mode.C), tg,
        float(params.delta0), float(params.exponent), float(params.tol), int(params.max_iter),
        bool(params.precondition), float(params.max_step),
        int(opts.mm_steps), float(opts.mm_tol), float(opts.tol), int(opts.max_rounds),
        bool(opts.extrapolate), bool(opts.rescale), pots, runs, iters, infeasible,
        opts.tol_cap_ratio * np.asarray(s.p_static, dtype=float),
    )
    res.potentials = [float(v) for v in pots[: nresp + 1]]
    res.learn_iterations = [int(v) for v in iters[:nresp]]
    res.learn_runs = [int(v) for v in runs[:nresp]]
    res.infeasible_users = {int(k) for k in np.nonzero(infeasible)[0]}
    res.rounds = int(rounds)
    res.converged = bool(converged)
    return p


def run_brd(
    s: Scenario,
    p0,
    lam: float,
    mode: QosMode = QosMode.none(),
    opts: BrdOptions = BrdOptions(),
    params: LearningParams = LearningParams(),
) -> BrdResult:
    """Round-robin better responses until a round gains at most ``opts.tol``.

    In generalized mode a final floor-repair pass makes every user's floors
    consistent with the others' final powers.
    """
    p = np.array(p0, dtype=float)
    targets = None
    if mode.kind == "generalized":
        targets = [split_rate_requirement(s, k) for k in range(s.K)]
    res = BrdResult(p, 0, False, [objective(s, p, lam, mode)])
    run = _run_compiled if opts.engine == "compiled" else _run_python
    p = run(s, p, lam, mode, opts, params, targets, res)
    if mode.kind == "generalized":
        p, plans, ok = repair_floors(s, p, targets)
        res.plans = plans
        res.repaired = ok
    res.p = p
    return res
