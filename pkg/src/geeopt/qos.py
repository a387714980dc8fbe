"""Minimum-rate machinery: logarithmic barrier, per-user feasibility test,
per-subcarrier rate split and interference-dependent power floors."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .learning import LearningParams, learn_user
from .model import LN2, Scenario, ScenarioError, max_rate_bounds_array, rates, sinr_matrix, user_view

MODES = ("none", "barrier", "generalized")


@dataclass(frozen=True)
class QosMode:
    """Which minimum-rate treatment the solver applies.

    Use the constructors :meth:`none`, :meth:`barrier` and
    :meth:`generalized` rather than building instances by hand.
    """

    kind: str = "none"
    rho: float = 1.0
    C: float = -1e3
    split: str = "proportional"

    def __post_init__(self):
        if self.kind not in MODES:
            raise ValueError(f"unknown QoS mode {self.kind!r}; expected one of {MODES}")
        if self.kind == "barrier":
            if not self.rho > 0:
                raise ValueError("barrier weight rho must be positive")
            if not self.C < 0:
                raise ValueError("relaxation constant C must be negative")
        if self.split != "proportional":
            raise ValueError("only the proportional split rule is supported")

    @classmethod
    def none(cls):
        return cls("none")

    @classmethod
    def barrier(cls, rho: float = 1.0, C: float = -1e3):
        return cls("barrier", rho=rho, C=C)

    @classmethod
    def generalized(cls, split: str = "proportional"):
        return cls("generalized", split=split)


class _Infeasible:
    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "INFEASIBLE"

    def __reduce__(self):
        return (_Infeasible, ())


INFEASIBLE = _Infeasible()


# -- barrier -------------------------------------------------------------------


def rate_slacks(s: Scenario, p) -> np.ndarray:
    return rates(s, p) - s.r_min


def barrier_terms(s: Scenario, p, rho: float, C: float) -> np.ndarray:
    """Per-user barrier contributions ``rho*log2(slack)`` or ``rho*C``."""
    sl = rate_slacks(s, p)
    with np.errstate(divide="ignore", invalid="ignore"):
        v = np.where(sl > 0, np.log2(np.where(sl > 0, sl, 1.0)), C)
    return rho * v


def barrier_value(s: Scenario, p, rho: float, C: float = -1e3) -> float:
    """``rho * sum_k log2(R_k - R_min,k)``; users with slack <= 0 add ``rho*C``."""
    return float(barrier_terms(s, p, rho, C).sum())


def barrier_slopes(s: Scenario, p, k: int, pstar_k, rho: float, strict: bool = True):
    """Vectors ``(phi_I, phi_II)`` over subcarriers for user ``k``.

    ``phi_I[n]`` is the derivative of ``rho*log2(R_k - R_min,k)`` with
    respect to ``p[k, n]`` and ``phi_II[n]`` the same derivative of the other
    users' barrier terms, both evaluated with user k at ``pstar_k``.

    With ``strict`` any non-positive slack raises; otherwise users whose
    slack is non-positive are left out (their term is the constant ``C``)
    and ``phi_I`` is zero when user k itself is in that situation.
    """
    p = np.array(p, dtype=float)
    pstar_k = np.asarray(pstar_k, dtype=float)
    p[k] = pstar_k
    sl = rate_slacks(s, p)
    if strict and np.any(sl <= 0):
        raise ScenarioError("barrier linearization at infeasible point")
    view = user_view(s, p, k)
    c = rho / LN2**2
    eta, xi = s.eta[k], s.xi[k]
    dr_own = eta / (view.interf + eta * pstar_k) - xi / (view.interf + xi * pstar_k)
    phi_i = c * dr_own / sl[k] if sl[k] > 0 else np.zeros(s.N)
    # d/dp_k of receiver i's rate, sign <= 0
    cp = view.cross * pstar_k
    dr_other = view.cross / (view.den_eta + cp) - view.cross / (view.den_xi + cp)
    w = np.where(sl > 0, 1.0 / np.where(sl > 0, sl, 1.0), 0.0)
    w[k] = 0.0
    phi_ii = c * (w[:, None] * dr_other).sum(axis=0)
    return phi_i, phi_ii


def barrier_grad_terms(s: Scenario, k: int, n: int, p, pstar_k, rho: float):
    """Scalar ``(phi_I, phi_II)`` for user ``k`` on subcarrier ``n``."""
    phi_i, phi_ii = barrier_slopes(s, p, k, pstar_k, rho, strict=True)
    return float(phi_i[n]), float(phi_ii[n])


# -- feasibility test ------------------------------------------------------------


@dataclass
class Feasibility:
    feasible: bool
    witness: np.ndarray
    rate: float
    iterations: int


def _rate_view(s: Scenario, p, k: int):
    view = user_view(s, p, k)
    zeros = np.zeros((s.K, s.N))
    return (s.eta[k], s.xi[k], view.interf, zeros, np.ones((s.K, s.N)))


def feasibility_check(s: Scenario, k: int, p, params: LearningParams = LearningParams()) -> Feasibility:
    """Can user ``k`` reach ``R_min,k`` with the others' powers held fixed?

    Maximizes the user's own (concave) rate over its power budget with the
    learning scheme, stopping at the first iterate that clears the target.
    That iterate is returned as the witness.
    """
    arrs = _rate_view(s, p, k)
    target = float(s.r_min[k])
    zero = np.zeros(s.N)
    if target <= 0:
        return Feasibility(True, np.asarray(p, dtype=float)[k].copy(), 0.0, 0)
    bound = max_rate_bounds_array(s)[k].sum()
    if target > bound:
        return Feasibility(False, np.full(s.N, s.p_max[k] / (s.N + 1)), float("nan"), 0)
    x, it, _, _, hit = learn_user(arrs, zero, s.p_max[k], zero, params, rate_target=target)
    eta, xi, interf = arrs[0], arrs[1], arrs[2]
    r = float(np.log2((interf + eta * x) / (interf + xi * x)).sum())
    return Feasibility(hit or r >= target, x, r, it)


def feasibility_test(s: Scenario, k: int, p, params: LearningParams = LearningParams()) -> bool:
    """True iff user ``k`` can meet its minimum rate given the other users' powers."""
    return feasibility_check(s, k, p, params).feasible


# -- generalized-game floors --------------------------------------------------------


def split_rate_requirement(s: Scenario, k: int) -> np.ndarray:
    """Per-subcarrier rate targets proportional to the per-subcarrier ceilings.

    Falls back to an equal split when any ceiling is unbounded or all are zero.
    """
    rmax = max_rate_bounds_array(s)[k]
    r = float(s.r_min[k])
    if r == 0:
        return np.zeros(s.N)
    if np.any(np.isinf(rmax)) or rmax.sum() <= 0:
        return np.full(s.N, r / s.N)
    t = r * rmax / rmax.sum()
    return t


def min_power_vector(s: Scenario, k: int, p, targets) -> np.ndarray:
    """Floors ``P_min^(n)`` for all subcarriers; ``inf`` where unreachable."""
    targets = np.asarray(targets, dtype=float)
    view = user_view(s, p, k)
    g = np.expm1(targets * LN2)
    den = s.alpha[k] - s.xi[k] * g
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(den > 0, g * view.interf / np.where(den > 0, den, 1.0), np.inf)
    return np.where(targets <= 0, 0.0, out)


def min_power(s: Scenario, k: int, n: int, p, target: float):
    """Smallest power giving rate ``target`` on subcarrier ``n`` or :data:`INFEASIBLE`."""
    if target < 0:
        raise ValueError("target must be non-negative")
    t = np.zeros(s.N)
    t[n] = target
    v = float(min_power_vector(s, k, p, t)[n])
    return INFEASIBLE if np.isinf(v) else v


@dataclass
class FloorPlan:
    """Per-user power floors for the generalized-game method.

    ``active[n]`` marks the subcarriers whose rate target is enforced;
    ``floors`` is zero elsewhere and ``residual = p_max - floors.sum()``.
    """

    targets: np.ndarray
    floors: np.ndarray
    active: np.ndarray
    residual: float

    @property
    def relaxed(self) -> bool:
        return not bool(self.active.all())


def plan_from_floors(raw, p_max: float, targets) -> FloorPlan:
    """Greedy subset selection on precomputed floors (``inf`` = unreachable)."""
    raw = np.asarray(raw, dtype=float)
    targets = np.asarray(targets, dtype=float)
    N = raw.size
    active = np.zeros(N, dtype=bool)
    if np.all(np.isfinite(raw)) and raw.sum() <= p_max:
        active[:] = True
    else:
        total = 0.0
        for n in np.argsort(raw, kind="stable"):
            if not np.isfinite(raw[n]) or total + raw[n] > p_max:
                break
            total += raw[n]
            active[n] = True
    floors = np.where(active, raw, 0.0)
    residual = max(0.0, p_max - floors.sum())
    return FloorPlan(targets, floors, active, residual)


def make_floor_plan(s: Scenario, k: int, p, targets) -> FloorPlan:
    return plan_from_floors(min_power_vector(s, k, p, targets), float(s.p_max[k]), targets)


def fit_to_plan(p_k, plan: FloorPlan, p_max: float) -> np.ndarray:
    """Nearest-in-spirit allocation meeting ``plan``: raise to the floors and
    shrink the excess above them so the budget holds."""
    p_k = np.asarray(p_k, dtype=float)
    excess = np.maximum(p_k - plan.floors, 0.0)
    tot = excess.sum()
    if tot > plan.residual:
        excess = excess * (plan.residual / tot)
    out = plan.floors + excess
    # rounding can leave the sum a few ulps over; trim twice the overshoot
    for _ in range(60):
        over = out.sum() - p_max
        tot = excess.sum()
        if over <= 0 or tot <= 0:
            break
        excess = excess * max(0.0, 1.0 - 2.0 * over / tot)
        out = plan.floors + excess
    return out


def plan_violation(s: Scenario, k: int, p, plan: FloorPlan) -> float:
    """Largest shortfall of ``p[k]`` below the plan's floors (Watts)."""
    p = np.asarray(p, dtype=float)
    return float(np.max(plan.floors - p[k], initial=0.0))


def repair_floors(s: Scenario, p, targets, max_sweeps: int = 200, tol: float = 1e-12):
    """Fixed-point pass raising every user to floors computed from the others'
    current powers. Returns ``(p, plans, converged)``."""
    p = np.array(p, dtype=float)
    plans = [None] * s.K
    for _ in range(max_sweeps):
        worst = 0.0
        for k in range(s.K):
            plan = make_floor_plan(s, k, p, targets[k])
            rel = plan_violation(s, k, p, plan) / s.p_max[k]
            worst = max(worst, rel)
            p[k] = fit_to_plan(p[k], plan, s.p_max[k])
            plans[k] = plan
        if worst <= tol:
            return p, plans, True
    return p, plans, False


def per_subcarrier_rates(s: Scenario, p) -> np.ndarray:
    return np.log2(1.0 + sinr_matrix(s, p))
