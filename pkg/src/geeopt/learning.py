"""Exponential-mapping learning on a budgeted simplex.

Scores ``y`` are mapped to powers through

    p = offsets + budget * exp(y) / (1 + sum(exp(y)))

and updated with the marginal utility, ``y += delta_t * v(p)``, where
``delta_t = delta0 / t**a``. The map keeps every iterate strictly inside
``{p >= offsets, sum(p - offsets) < budget}``.

By default the update is curvature preconditioned: the deviation of each
marginal from their power-weighted mean is divided by that coordinate's
local stiffness ``|H_n| q_n (1 - q_n/B)`` and the common part (which moves
mass between the powers and the unused budget) gets its own Newton-like
scale. Fixed points are unchanged; see :func:`_direction`.

Two implementations are provided: :func:`learn` works with arbitrary
callables and is the readable reference, :func:`learn_user` is a compiled
kernel specialised to the per-user surrogate subproblem.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numba as nb
import numpy as np

LN2 = float(np.log(2.0))


@dataclass(frozen=True)
class LearningParams:
    """Step schedule ``delta0 / t**exponent`` and stopping rule.

    The run stops when ``max|p(t) - p(t-1)| < tol * budget`` or after
    ``max_iter`` iterations. ``max_step`` clips each score increment.
    """

    delta0: float = 1.0
    exponent: float = 0.6
    tol: float = 1e-6
    max_iter: int = 5000
    precondition: bool = True
    max_step: float = 1.0

    def __post_init__(self):
        if not self.delta0 > 0:
            raise ValueError("delta0 must be positive")
        if not 0.5 < self.exponent <= 1.0:
            raise ValueError("exponent must lie in (0.5, 1]")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        if not self.max_step > 0:
            raise ValueError("max_step must be positive")


@dataclass
class LearnResult:
    p: np.ndarray
    iterations: int
    converged: bool
    y: np.ndarray


def exp_map(y, budget: float) -> np.ndarray:
    """``budget * exp(y) / (1 + sum(exp(y)))`` evaluated without overflow.

    The constant 1 is treated as a score pinned at zero, so shifting by
    ``m = max(0, max(y))`` leaves the value unchanged.
    """
    y = np.asarray(y, dtype=float)
    m = max(0.0, float(y.max()))
    e = np.exp(y - m)
    q = e / (np.exp(-m) + e.sum())
    return _fit_budget(budget * q, budget)


def _fit_budget(x, budget):
    # rounding can push the sum one ulp over; shrink until it fits
    while x.sum() > budget:
        x = x * (1.0 - 4e-16)
    return x


def _slack(y, budget):
    m = max(0.0, float(np.max(y)))
    return budget * np.exp(-m) / (np.exp(-m) + np.exp(y - m).sum())


def _direction(g, h, q, slack, budget):
    """Preconditioned score direction before step size and clipping.

    Returns ``(dev, shift)``: a per-coordinate part and a scalar common part.
    """
    P = q.sum()
    if P <= 0.0:
        return g * 0.0, 0.0
    kap = np.abs(h) * q * (1.0 - q / budget)
    kap = np.maximum(kap, 1e-12 * kap.max() + 1e-300)
    c = float(q @ g) / P
    hs = float((np.abs(h) * q * q).sum()) * slack / budget
    return (g - c) / kap, c * P / max(hs, 1e-300)


def learn(
    grad: Callable[[np.ndarray], np.ndarray],
    budget: float,
    offsets=None,
    params: LearningParams = LearningParams(),
    curvature: Optional[Callable[[np.ndarray], np.ndarray]] = None,
    objective: Optional[Callable[[np.ndarray], float]] = None,
    y0=None,
    callback: Optional[Callable[[int, np.ndarray], None]] = None,
    n: Optional[int] = None,
) -> LearnResult:
    """Maximize a concave function over ``{p >= offsets, sum(p - offsets) <= budget}``.

    Parameters
    ----------
    grad : callable
        ``grad(p) -> ndarray`` with the marginal utilities at ``p``.
    budget : float
        Power available above the offsets. ``0`` returns the offsets.
    offsets : array_like, optional
        Per-coordinate floors (zeros by default).
    curvature : callable, optional
        ``curvature(p)`` returning the diagonal of the Hessian. Required when
        ``params.precondition`` is true; otherwise the plain update is used.
    objective : callable, optional
        If given and the run hits ``max_iter``, the best iterate is returned.
    callback : callable, optional
        Called as ``callback(t, p)`` for every emitted iterate.
    """
    if offsets is None:
        if n is None:
            raise ValueError("either offsets or n must be given")
        offsets = np.zeros(n)
    offsets = np.asarray(offsets, dtype=float)
    if budget < 0 or np.any(offsets < 0):
        raise ValueError("budget and offsets must be non-negative")
    N = offsets.size
    y = np.zeros(N) if y0 is None else np.array(y0, dtype=float)
    if budget == 0:
        return LearnResult(offsets.copy(), 0, True, y)
    precond = params.precondition and curvature is not None
    clip = params.max_step
    p_prev = None
    best, best_val = None, -np.inf
    for t in range(1, params.max_iter + 1):
        q = exp_map(y, budget)
        p = offsets + q
        if callback is not None:
            callback(t, p)
        if objective is not None:
            val = objective(p)
            if val > best_val:
                best, best_val = p, val
        if p_prev is not None and np.max(np.abs(p - p_prev)) < params.tol * budget:
            return LearnResult(p, t, True, y)
        g = np.asarray(grad(p), dtype=float)
        step = params.delta0 / t ** params.exponent
        if precond:
            dev, shift = _direction(g, curvature(p), q, _slack(y, budget), budget)
            y = y + np.clip(step * dev, -clip, clip) + np.clip(step * shift, -clip, clip)
        else:
            y = y + step * g
        p_prev = p
    if best is not None:
        p = best
    return LearnResult(p, params.max_iter, False, y)


# -- compiled kernel for the per-user surrogate subproblem --------------------


@nb.njit(cache=True)
def _exp_map_nb(y, budget, out):
    m = 0.0
    for v in y:
        if v > m:
            m = v
    em = np.exp(-m)
    tot = em
    for i in range(y.size):
        out[i] = np.exp(y[i] - m)
        tot += out[i]
    s = 0.0
    for i in range(y.size):
        out[i] = budget * (out[i] / tot)
        s += out[i]
    while s > budget:
        s = 0.0
        for i in range(y.size):
            out[i] *= 1.0 - 4e-16
            s += out[i]
    return budget * (em / tot)


@nb.njit(cache=True)
def _grad_hess_nb(eta, xi, interf, cross, den, nu, p, g, h):
    K, N = cross.shape
    for n in range(N):
        a = eta[n] / (interf[n] + eta[n] * p[n])
        b = xi[n] / (interf[n] + xi[n] * p[n])
        gs = a - b
        hs = b * b - a * a
        for i in range(K):
            c = cross[i, n]
            if c != 0.0:
                r = c / (den[i, n] + c * p[n])
                gs += r
                hs -= r * r
        g[n] = gs / LN2 - nu[n]
        h[n] = hs / LN2


@nb.njit(cache=True)
def _own_rate_nb(eta, xi, interf, p):
    r = 0.0
    for n in range(p.size):
        r += np.log2((interf[n] + eta[n] * p[n]) / (interf[n] + xi[n] * p[n]))
    return r


@nb.njit(cache=True)
def _objective_nb(eta, xi, interf, cross, den, nu, p):
    K, N = cross.shape
    v = _own_rate_nb(eta, xi, interf, p)
    for n in range(N):
        v -= nu[n] * p[n]
        for i in range(K):
            c = cross[i, n]
            if c != 0.0:
                v += np.log2(den[i, n] + c * p[n])
    return v


@nb.njit(cache=True)
def _learn_user_nb(eta, xi, interf, cross, den, nu, budget, offsets, y,
                   d0, a, tol, max_iter, precond, clip, rate_target):
    N = offsets.size
    q = np.empty(N)
    p = np.empty(N)
    p_prev = np.empty(N)
    g = np.empty(N)
    h = np.empty(N)
    best = np.empty(N)
    best_val = -np.inf
    # the best iterate is only tracked over the last tenth of the budget
    tail = max_iter - max(1, max_iter // 10)
    for t in range(1, max_iter + 1):
        slack = _exp_map_nb(y, budget, q)
        for n in range(N):
            p[n] = offsets[n] + q[n]
        if rate_target < np.inf:
            if _own_rate_nb(eta, xi, interf, p) > rate_target:
                return p, t, True, True
        if t > tail:
            val = _objective_nb(eta, xi, interf, cross, den, nu, p)
            if val > best_val:
                best_val = val
                best[:] = p
        if t > 1:
            dmax = 0.0
            for n in range(N):
                d = abs(p[n] - p_prev[n])
                if d > dmax:
                    dmax = d
            if dmax < tol * budget:
                return p, t, True, False
        _grad_hess_nb(eta, xi, interf, cross, den, nu, p, g, h)
        step = d0 / t ** a
        if precond:
            P = 0.0
            for n in range(N):
                P += q[n]
            if P > 0.0:
                kmax = 0.0
                c = 0.0
                hs = 0.0
                for n in range(N):
                    kn = abs(h[n]) * q[n] * (1.0 - q[n] / budget)
                    if kn > kmax:
                        kmax = kn
                    c += q[n] * g[n]
                    hs += abs(h[n]) * q[n] * q[n]
                c /= P
                hs = max(hs * slack / budget, 1e-300)
                sh = min(max(step * c * P / hs, -clip), clip)
                floor = 1e-12 * kmax + 1e-300
                for n in range(N):
                    kn = max(abs(h[n]) * q[n] * (1.0 - q[n] / budget), floor)
                    y[n] += min(max(step * (g[n] - c) / kn, -clip), clip) + sh
        else:
            for n in range(N):
                y[n] += step * g[n]
        p_prev[:] = p
    return best, max_iter, False, False


def learn_user(view_arrays, nu, budget, offsets, params: LearningParams = LearningParams(),
               y0=None, rate_target: float = np.inf):
    """Compiled learning run on one user's surrogate subproblem.

    ``view_arrays`` is ``(eta_k, xi_k, interf, cross, den_eta)`` as produced
    by :func:`geeopt.model.user_view`. With a finite ``rate_target`` the run
    stops at the first iterate whose own rate exceeds it.

    Returns ``(p, iterations, converged, y, hit_target)``.
    """
    eta, xi, interf, cross, den = (np.ascontiguousarray(x, dtype=float) for x in view_arrays)
    offsets = np.ascontiguousarray(offsets, dtype=float)
    nu = np.ascontiguousarray(nu, dtype=float)
    y = np.zeros(offsets.size) if y0 is None else np.array(y0, dtype=float)
    if budget <= 0:
        return offsets.copy(), 0, True, y, False
    p, it, conv, hit = _learn_user_nb(
        eta, xi, interf, cross, den, nu, float(budget), offsets, y,
        float(params.delta0), float(params.exponent), float(params.tol),
        int(params.max_iter), bool(params.precondition), float(params.max_step),
        float(rate_target),
    )
    return p, int(it), bool(conv), y, bool(hit)
