"""Dinkelbach outer loop: GEE maximization with or without minimum rates."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .brd import BrdOptions, initial_allocation, run_brd
from .learning import LearningParams
from .model import Scenario, ScenarioError, check_allocation, gee, max_rate_bounds_array, potential, rates, sum_rate, total_power
from .qos import QosMode, per_subcarrier_rates

SATISFIED_TOL = 1e-9


@dataclass(frozen=True)
class SolverOptions:
    """Tolerances and caps for the three nested loops."""

    tol: float = 1e-4
    max_outer: int = 50
    brd: BrdOptions = BrdOptions()
    learning: LearningParams = LearningParams()
    qos: QosMode = QosMode.none()

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.max_outer < 1:
            raise ValueError("max_outer must be at least 1")


@dataclass
class RunReport:
    """Outcome of one solve.

    ``lambdas[j]`` is the price used by outer iteration ``j`` and
    ``f_bars[j]`` the objective it reached; ``lambdas`` has one more entry
    (the price that iteration produced). ``potential_traces[j]`` is the
    potential recorded after every better response of iteration ``j``.
    ``mean_I_B`` averages dynamics rounds over outer iterations and
    ``mean_I_L`` averages iterations over learning runs.
    """

    p: np.ndarray
    gee: float
    rates: np.ndarray
    sum_rate: float
    satisfied_ratio: float
    relaxed_users: list
    lambdas: list
    f_bars: list
    I_D: int
    mean_I_B: float
    mean_I_L: float
    converged: bool
    brd_converged: list = field(default_factory=list)
    potential_traces: list = field(default_factory=list)
    stop_reason: str = ""
    best_iteration: int = 0
    qos: str = "none"

    def summary(self) -> str:
        return (
            f"qos={self.qos} gee={self.gee:.6g} bit/J sum_rate={self.sum_rate:.6g} "
            f"satisfied={self.satisfied_ratio:.3f} I_D={self.I_D} "
            f"I_B={self.mean_I_B:.2f} I_L={self.mean_I_L:.1f} "
            f"converged={self.converged} ({self.stop_reason})"
        )


def evaluate_F_bar(s: Scenario, p_bar, lam: float) -> float:
    """Dinkelbach auxiliary objective at ``p_bar``; same as :func:`potential`."""
    return potential(s, p_bar, lam)


def lambda_update(s: Scenario, p_bar) -> float:
    """Sum-rate over consumed power (bit/s/Hz per Watt)."""
    return sum_rate(s, p_bar) / total_power(s, p_bar)


def _check_qos_bounds(s: Scenario):
    rmax = max_rate_bounds_array(s).sum(axis=1)
    bad = np.nonzero(s.r_min > rmax)[0]
    if bad.size:
        k = int(bad[0])
        raise ScenarioError(f"user {k} has r_min {s.r_min[k]:.4g} above its rate ceiling {rmax[k]:.4g}")


def relaxed_users(s: Scenario, p, mode: QosMode, plans=None) -> list:
    """Users whose rate requirement the solve gave up on.

    Barrier mode: users whose rate slack is not positive (their barrier term
    is the relaxation constant). Generalized mode: users whose floor plan
    drops a subcarrier or whose per-subcarrier targets are not met.
    """
    if mode.kind == "none":
        return []
    if mode.kind == "barrier":
        return [int(k) for k in np.nonzero(rates(s, p) - s.r_min <= 0)[0] if s.r_min[k] > 0]
    out = []
    r = per_subcarrier_rates(s, p)
    for k, plan in enumerate(plans):
        short = plan.active & (r[k] < plan.targets - SATISFIED_TOL)
        if plan.relaxed or short.any():
            out.append(k)
    return out


def maximize_gee(s: Scenario, opts: SolverOptions = SolverOptions()) -> RunReport:
    """Dinkelbach iterations with better-response dynamics as the inner solver.

    Starts at ``lambda = 0``. Each outer iteration warm-starts the dynamics
    from the previous allocation. The loop stops when both the auxiliary
    objective and the relative price change fall below ``opts.tol``, when the
    auxiliary objective turns negative, or at ``opts.max_outer``. The
    reported allocation is the one with the highest GEE seen.
    """
    mode = opts.qos
    if mode.kind != "none":
        _check_qos_bounds(s)
    p = initial_allocation(s, mode)
    lam = 0.0
    lambdas = [lam]
    f_bars = []
    traces, brd_conv, rounds = [], [], []
    learn_its = learn_runs = 0
    best = None  # (lambda_next, j, p, plans)
    stop = "max_outer"
    converged = False
    for j in range(opts.max_outer):
        res = run_brd(s, p, lam, mode, opts.brd, opts.learning)
        p = res.p
        traces.append(res.potentials)
        brd_conv.append(res.converged and res.repaired)
        rounds.append(res.rounds)
        learn_its += sum(res.learn_iterations)
        learn_runs += sum(res.learn_runs)
        f = evaluate_F_bar(s, p, lam)
        new = lambda_update(s, p)
        f_bars.append(f)
        lambdas.append(new)
        if best is None or new >= best[0]:
            best = (new, j, p.copy(), res.plans)
        if f < 0:
            stop = "negative_F"
            converged = True
            break
        if f < opts.tol and abs(new - lam) / max(new, 1e-30) < opts.tol:
            stop = "tolerance"
            converged = True
            break
        lam = new
    _, j_best, p_best, plans = best
    check_allocation(s, p_best, tol=1e-9)
    r = rates(s, p_best)
    sat = float(np.mean(r >= s.r_min - SATISFIED_TOL))
    return RunReport(
        p=p_best,
        gee=gee(s, p_best),
        rates=r,
        sum_rate=float(r.sum()),
        satisfied_ratio=sat,
        relaxed_users=relaxed_users(s, p_best, mode, plans),
        lambdas=lambdas,
        f_bars=f_bars,
        I_D=len(f_bars),
        mean_I_B=float(np.mean(rounds)),
        mean_I_L=learn_its / learn_runs if learn_runs else 0.0,
        converged=converged and all(brd_conv),
        brd_converged=brd_conv,
        potential_traces=traces,
        stop_reason=stop,
        best_iteration=j_best,
        qos=mode.kind,
    )
