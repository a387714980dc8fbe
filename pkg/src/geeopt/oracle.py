"""Independent reference solvers for checking the optimizer on small cases.

Nothing here shares code with the learning or game machinery: the grid
search and line search evaluate GEE directly, and the projected-gradient
solver only needs an objective and its gradient.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .model import Scenario, gee

GRID_CAP = 10**7


class GridTooLarge(ValueError):
    pass


@dataclass(frozen=True)
class GridSpec:
    """``points`` levels per power coordinate, ``0 .. p_max`` inclusive."""

    points: int = 50
    cap: int = GRID_CAP

    def __post_init__(self):
        if self.points < 2:
            raise ValueError("points must be at least 2")


def simplex_grid(n: int, points: int) -> np.ndarray:
    """Integer compositions ``i`` with ``sum(i) <= points-1``, scaled to ``[0, 1]``."""
    m = points - 1
    rows = [c for c in itertools.product(range(points), repeat=n) if sum(c) <= m]
    return np.array(rows, dtype=float) / m


def grid_size(s: Scenario, spec: GridSpec) -> int:
    from math import comb

    per_user = comb(spec.points - 1 + s.N, s.N)
    return per_user**s.K


def _gee_batch(s: Scenario, P: np.ndarray) -> np.ndarray:
    # P: (B, K, N)
    interf = s.noise + np.einsum("lkn,bln->bkn", s.beta, P)
    sinr = P * s.alpha / (interf + s.xi * P)
    rate = np.log2(1.0 + sinr).sum(axis=(1, 2))
    power = s.p_c + (s.mu * P).sum(axis=(1, 2))
    return s.bandwidth * rate / power


def grid_search_gee(s: Scenario, spec: GridSpec = GridSpec(), chunk: int = 200_000):
    """Exhaustive GEE maximization over per-user simplex grids.

    Returns ``(p, gee)``. Ties keep the first point in enumeration order.
    """
    size = grid_size(s, spec)
    if size > spec.cap:
        raise GridTooLarge(f"grid has {size} points, cap is {spec.cap}")
    unit = simplex_grid(s.N, spec.points)
    M = unit.shape[0]
    best_val, best_idx = -np.inf, 0
    for start in range(0, size, chunk):
        flat = np.arange(start, min(size, start + chunk))
        idx = np.stack(np.unravel_index(flat, (M,) * s.K), axis=1)  # (B, K)
        P = unit[idx] * s.p_max[None, :, None]
        vals = _gee_batch(s, P)
        i = int(np.argmax(vals))
        if vals[i] > best_val:
            best_val, best_idx = float(vals[i]), int(flat[i])
    idx = np.unravel_index(best_idx, (M,) * s.K)
    p = unit[list(idx)] * s.p_max[:, None]
    return p, gee(s, p)


def line_search_gee(s: Scenario, iters: int = 200):
    """GEE maximizer for a single user on a single subcarrier.

    The GEE is a concave-over-affine ratio, hence unimodal; the sign change
    of its derivative is located by bisection. Returns ``(p, gee)``.
    """
    if s.K != 1 or s.N != 1:
        raise ValueError("line search needs K == N == 1")
    a, x, m = s.alpha[0, 0], s.xi[0, 0], s.mu[0, 0]
    eta = a + x
    sig = s.noise[0]
    pc = s.p_c

    def dsign(p):
        f = np.log2((sig + eta * p) / (sig + x * p))
        df = (eta / (sig + eta * p) - x / (sig + x * p)) / np.log(2.0)
        return df * (pc + m * p) - f * m

    lo, hi = 0.0, float(s.p_max[0])
    if dsign(hi) >= 0:
        p = hi
    else:
        for _ in range(iters):
            mid = 0.5 * (lo + hi)
            if dsign(mid) > 0:
                lo = mid
            else:
                hi = mid
        p = 0.5 * (lo + hi)
    P = np.array([[p]])
    return P, gee(s, P)


def project_budget(x, budget: float, floors=None) -> np.ndarray:
    """Euclidean projection onto ``{p >= floors, sum(p - floors) <= budget}``.

    Sort-based water level on the shifted simplex.
    """
    x = np.asarray(x, dtype=float)
    floors = np.zeros_like(x) if floors is None else np.asarray(floors, dtype=float)
    z = x - floors
    zp = np.maximum(z, 0.0)
    if zp.sum() <= budget:
        return floors + zp
    u = np.sort(z)[::-1]
    css = np.cumsum(u) - budget
    ind = np.arange(1, z.size + 1)
    rho = np.nonzero(u - css / ind > 0)[0][-1]
    theta = css[rho] / (rho + 1)
    w = np.maximum(z - theta, 0.0)
    over = w.sum() - budget
    if over > 0:  # rounding
        w = w * (budget / w.sum())
    return floors + w


def projected_gradient_reference(objective, gradient, budget: float, floors=None, n: int | None = None,
                                 x0=None, max_iter: int = 100_000, tol: float = 1e-15):
    """Projected gradient ascent with Armijo backtracking.

    The trial step starts from the last accepted one, doubled, so the step
    length adapts in both directions. Stops when a full iteration moves the
    point by less than ``tol`` (relative to the budget) or at ``max_iter``.
    """
    if floors is None:
        floors = np.zeros(n)
    floors = np.asarray(floors, dtype=float)
    scale = max(budget, 1e-300)
    x = project_budget(np.full(floors.size, budget / (floors.size + 1)) + floors if x0 is None else x0,
                       budget, floors)
    f = objective(x)
    step = scale / max(np.max(np.abs(gradient(x))), 1e-300)
    for _ in range(max_iter):
        g = gradient(x)
        step *= 2.0
        while True:
            xn = project_budget(x + step * g, budget, floors)
            fn = objective(xn)
            if fn >= f + 1e-4 * float(g @ (xn - x)):
                break
            step *= 0.5
            if step < 1e-300:
                return x
        moved = np.max(np.abs(xn - x))
        x, f = xn, fn
        if moved < tol * scale:
            break
    return x


def finite_diff(f, p, k, n, h: float, lower: float = 0.0) -> float:
    """Central difference of ``f`` along coordinate ``(k, n)`` of ``p``.

    Falls back to a forward difference when ``p[k, n] - h < lower``; use
    :func:`is_one_sided` to detect that case. ``k`` may be ``None`` for a
    one-dimensional ``p``.
    """
    p = np.array(p, dtype=float)
    idx = n if k is None else (k, n)
    base = p[idx]
    up = p.copy()
    up[idx] = base + h
    if base - h < lower:
        return (f(up) - f(p)) / h
    dn = p.copy()
    dn[idx] = base - h
    return (f(up) - f(dn)) / (2.0 * h)


def is_one_sided(p, k, n, h: float, lower: float = 0.0) -> bool:
    p = np.asarray(p, dtype=float)
    return bool((p[n] if k is None else p[k, n]) - h < lower)


def water_filling(gains, noise, budget: float) -> np.ndarray:
    """Rate-maximizing powers ``max(0, w - noise/gain)`` summing to ``budget``."""
    gains = np.asarray(gains, dtype=float)
    noise = np.broadcast_to(np.asarray(noise, dtype=float), gains.shape)
    floor = noise / gains
    order = np.sort(floor)
    for m in range(floor.size, 0, -1):
        w = (budget + order[:m].sum()) / m
        if w > order[m - 1]:
            break
    return np.maximum(w - floor, 0.0)
