"""Network model: SINR, rates, global energy efficiency and the per-user
surrogate utilities used by the better-response dynamics.

All functions are pure. A power allocation is a ``(K, N)`` float array of
transmit powers in Watts; ``beta[l, k, n]`` is the gain from transmitter
``l`` to the receiver of user ``k`` on subcarrier ``n``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np

LN2 = float(np.log(2.0))


class ScenarioError(ValueError):
    """A scenario or allocation violates its invariants."""


class _Unbounded:
    """Sentinel for a rate bound that does not exist (zero self-interference)."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "UNBOUNDED"

    def __reduce__(self):
        return (_Unbounded, ())


UNBOUNDED = _Unbounded()


def _frozen(a, shape, name):
    arr = np.array(a, dtype=float)
    if arr.shape != shape:
        raise ScenarioError(f"field {name} has shape {arr.shape}, expected {shape}")
    if not np.all(np.isfinite(arr)):
        raise ScenarioError(f"field {name} contains non-finite values")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Scenario:
    """Immutable network instance.

    Attributes
    ----------
    bandwidth : float
        Subcarrier bandwidth W in Hz.
    noise : ndarray, shape (N,)
        Receiver noise power per subcarrier, Watts.
    alpha, xi, mu : ndarray, shape (K, N)
        Direct-link gain, self-interference gain, amplifier inefficiency.
    beta : ndarray, shape (K, K, N)
        Cross gains ``beta[l, k, n]`` from transmitter ``l`` to receiver
        ``k``. The diagonal ``l == k`` is forced to zero.
    p_static, p_max, r_min : ndarray, shape (K,)
        Static circuit power (W), power budget (W), minimum rate (bit/s/Hz).
    meta : dict
        Free-form provenance (generator config, seed).
    """

    bandwidth: float
    noise: np.ndarray
    alpha: np.ndarray
    xi: np.ndarray
    beta: np.ndarray
    mu: np.ndarray
    p_static: np.ndarray
    p_max: np.ndarray
    r_min: np.ndarray
    meta: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        alpha = np.asarray(self.alpha, dtype=float)
        if alpha.ndim != 2 or alpha.shape[0] < 1 or alpha.shape[1] < 1:
            raise ScenarioError(f"field alpha must be a non-empty (K, N) array, got shape {alpha.shape}")
        K, N = alpha.shape
        beta = np.array(self.beta, dtype=float)
        if beta.shape != (K, K, N):
            raise ScenarioError(f"field beta has shape {beta.shape}, expected {(K, K, N)}")
        beta[np.arange(K), np.arange(K), :] = 0.0
        set_ = object.__setattr__
        set_(self, "bandwidth", float(self.bandwidth))
        set_(self, "noise", _frozen(self.noise, (N,), "noise"))
        set_(self, "alpha", _frozen(alpha, (K, N), "alpha"))
        set_(self, "xi", _frozen(self.xi, (K, N), "xi"))
        set_(self, "beta", _frozen(beta, (K, K, N), "beta"))
        set_(self, "mu", _frozen(self.mu, (K, N), "mu"))
        set_(self, "p_static", _frozen(self.p_static, (K,), "p_static"))
        set_(self, "p_max", _frozen(self.p_max, (K,), "p_max"))
        set_(self, "r_min", _frozen(self.r_min, (K,), "r_min"))
        set_(self, "meta", dict(self.meta))

        if not (np.isfinite(self.bandwidth) and self.bandwidth > 0):
            raise ScenarioError("field bandwidth must be positive")
        for name in ("alpha", "xi", "beta", "p_static", "r_min"):
            if np.any(getattr(self, name) < 0):
                raise ScenarioError(f"field {name} must be non-negative")
        for name in ("noise", "mu", "p_max"):
            if np.any(getattr(self, name) <= 0):
                raise ScenarioError(f"field {name} must be strictly positive")
        if self.p_static.sum() <= 0:
            raise ScenarioError("total static power must be positive")

    @property
    def K(self) -> int:
        return self.alpha.shape[0]

    @property
    def N(self) -> int:
        return self.alpha.shape[1]

    @property
    def eta(self) -> np.ndarray:
        return self.alpha + self.xi

    @property
    def p_c(self) -> float:
        return float(self.p_static.sum())

    def replace(self, **changes) -> "Scenario":
        kw = {f: getattr(self, f) for f in self.__dataclass_fields__}
        kw.update(changes)
        return Scenario(**kw)

    def __eq__(self, other):
        if not isinstance(other, Scenario):
            return NotImplemented
        return (
            self.bandwidth == other.bandwidth
            and all(
                np.array_equal(getattr(self, f), getattr(other, f))
                for f in ("noise", "alpha", "xi", "beta", "mu", "p_static", "p_max", "r_min")
            )
            and self.meta == other.meta
        )

    __hash__ = None


def check_allocation(s: Scenario, p, tol: float = 1e-9) -> np.ndarray:
    """Validate ``p`` against the power-budget and positivity constraints."""
    p = np.asarray(p, dtype=float)
    if p.shape != (s.K, s.N):
        raise ScenarioError(f"allocation has shape {p.shape}, expected {(s.K, s.N)}")
    if np.any(p < 0) or not np.all(np.isfinite(p)):
        raise ScenarioError("allocation has negative or non-finite powers")
    over = p.sum(axis=1) - s.p_max
    if np.any(over > tol * np.maximum(s.p_max, 1.0)):
        k = int(np.argmax(over))
        raise ScenarioError(f"user {k} exceeds its power budget by {over[k]:.3e} W")
    return p


# -- vectorized core ---------------------------------------------------------


def interference(s: Scenario, p) -> np.ndarray:
    """Noise plus multi-user interference at every receiver, shape (K, N)."""
    return s.noise + np.einsum("lkn,ln->kn", s.beta, p)


def sinr_matrix(s: Scenario, p) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    return p * s.alpha / (interference(s, p) + s.xi * p)


def rates(s: Scenario, p) -> np.ndarray:
    """Per-user rates in bit/s/Hz, shape (K,)."""
    return np.log2(1.0 + sinr_matrix(s, p)).sum(axis=1)


def sum_rate(s: Scenario, p) -> float:
    return float(np.log2(1.0 + sinr_matrix(s, p)).sum())


def total_power(s: Scenario, p) -> float:
    return s.p_c + float((s.mu * np.asarray(p, dtype=float)).sum())


# -- scalar operations --------------------------------------------------------


def sinr(s: Scenario, p, k: int, n: int) -> float:
    p = np.asarray(p, dtype=float)
    den = s.noise[n] + s.xi[k, n] * p[k, n] + float(s.beta[:, k, n] @ p[:, n])
    return float(p[k, n] * s.alpha[k, n] / den)


def user_rate(s: Scenario, p, k: int) -> float:
    return float(rates(s, p)[k])


def gee(s: Scenario, p) -> float:
    """Global energy efficiency in bit/Joule: ``W * sum_rate / total_power``."""
    return s.bandwidth * (sum_rate(s, p) / total_power(s, p))


def potential(s: Scenario, p, lam: float) -> float:
    """Dinkelbach objective ``sum_rate - lam * total_power`` (no bandwidth factor)."""
    return sum_rate(s, p) - lam * total_power(s, p)


@dataclass(frozen=True)
class RateBound:
    per_subcarrier: tuple
    total: Any


def max_rate_bound(s: Scenario, k: int) -> RateBound:
    """Asymptotic rate ceiling ``log2(1 + alpha/xi)`` per subcarrier and summed.

    A subcarrier with ``xi == 0`` and ``alpha > 0`` has no ceiling and is
    reported as :data:`UNBOUNDED`; so is the total in that case.
    """
    per = []
    for a, x in zip(s.alpha[k], s.xi[k]):
        if x > 0:
            per.append(float(np.log2(1.0 + a / x)))
        elif a > 0:
            per.append(UNBOUNDED)
        else:
            per.append(0.0)
    total = UNBOUNDED if any(v is UNBOUNDED for v in per) else float(sum(per))
    return RateBound(tuple(per), total)


def max_rate_bounds_array(s: Scenario) -> np.ndarray:
    """(K, N) array of per-subcarrier ceilings with ``inf`` where unbounded."""
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.log2(1.0 + s.alpha / s.xi)
    r = np.where(s.xi > 0, r, np.where(s.alpha > 0, np.inf, 0.0))
    return r


# -- per-user surrogate machinery --------------------------------------------


@dataclass(frozen=True)
class UserView:
    """Quantities seen by user ``k`` that do not depend on its own powers.

    ``interf[n]`` is noise plus interference at user k's receiver;
    ``cross[i, n]`` is the gain ``beta[k, i, n]`` towards receiver ``i``;
    ``den_eta[i, n]`` / ``den_xi[i, n]`` are receiver i's denominators
    ``sigma^2 + eta_i p_i + sum_{l != i, k} beta p_l`` (resp. with xi_i),
    i.e. everything except user k's contribution. Rows ``i == k`` of the
    last three arrays are zero / one so they drop out of every sum.
    """

    k: int
    interf: np.ndarray
    cross: np.ndarray
    den_eta: np.ndarray
    den_xi: np.ndarray


def user_view(s: Scenario, p, k: int) -> UserView:
    p = np.asarray(p, dtype=float)
    others = p.copy()
    others[k] = 0.0
    j = interference(s, others)
    cross = s.beta[k].copy()
    den_eta = j + s.eta * p
    den_xi = j + s.xi * p
    cross[k] = 0.0
    den_eta[k] = 1.0
    den_xi[k] = 1.0
    return UserView(k, j[k].copy(), cross, den_eta, den_xi)


def _phi(view: UserView, pbar_k) -> np.ndarray:
    return -(view.cross / (view.den_xi + view.cross * pbar_k)).sum(axis=0) / LN2


def phi_vector(s: Scenario, p, k: int, pbar_k) -> np.ndarray:
    return _phi(user_view(s, p, k), np.asarray(pbar_k, dtype=float))


def phi(s: Scenario, k: int, n: int, p, pbar_k) -> float:
    """Slope of the linearized (convex) interference term for user ``k``.

    Always non-positive; zero when ``K == 1``.
    """
    view = user_view(s, p, k)
    return float(_phi(view, np.asarray(pbar_k, dtype=float))[n])


def _own_rate_terms(s: Scenario, view: UserView, pk):
    k = view.k
    return (
        np.log2(view.interf + s.eta[k] * pk) - np.log2(view.interf + s.xi[k] * pk)
    )


def surrogate_utility(s: Scenario, k: int, p_k, p, pbar_k, lam: float) -> float:
    """Concave minorant of the potential as a function of user k's powers.

    ``p`` supplies the other users' powers (row ``k`` is ignored). The full
    form keeps every term that does not depend on ``p_k`` so that the value
    coincides with :func:`potential` at ``p_k == pbar_k`` and lies below it
    elsewhere.
    """
    p = np.asarray(p, dtype=float)
    p_k = np.asarray(p_k, dtype=float)
    pbar_k = np.asarray(pbar_k, dtype=float)
    view = user_view(s, p, k)
    ph = _phi(view, pbar_k)
    val = _own_rate_terms(s, view, p_k).sum()
    val += float(ph @ (p_k - pbar_k))
    val += np.log2(view.den_eta + view.cross * p_k).sum()
    val -= np.log2(view.den_xi + view.cross * pbar_k).sum()
    mask = np.ones(s.K, dtype=bool)
    mask[k] = False
    other_power = float((s.mu[mask] * p[mask]).sum())
    val -= lam * (s.p_c + float(s.mu[k] @ p_k) + other_power)
    return float(val)


def reduced_surrogate(s: Scenario, view: UserView, p_k, nu) -> float:
    """Surrogate with the ``p_k``-independent constants dropped."""
    val = _own_rate_terms(s, view, p_k).sum() - float(np.dot(nu, p_k))
    return float(val + np.log2(view.den_eta + view.cross * p_k).sum())


def marginal_vector(s: Scenario, view: UserView, p_k, nu) -> np.ndarray:
    k = view.k
    eta, xi = s.eta[k], s.xi[k]
    j = view.interf
    g = eta / (j + eta * p_k) - xi / (j + xi * p_k)
    g = g + (view.cross / (view.den_eta + view.cross * p_k)).sum(axis=0)
    return g / LN2 - nu


def marginal_utility(s: Scenario, k: int, n: int, p, nu: float) -> float:
    """Derivative of the surrogate utility w.r.t. ``p[k, n]``, minus ``nu``.

    ``nu`` is the caller-supplied price ``lam * mu[k, n] - phi[k, n]``
    (plus barrier slopes in barrier mode).
    """
    p = np.asarray(p, dtype=float)
    view = user_view(s, p, k)
    nu_vec = np.zeros(s.N)
    nu_vec[n] = nu
    return float(marginal_vector(s, view, p[k], nu_vec)[n])


def hessian_vector(s: Scenario, view: UserView, p_k) -> np.ndarray:
    k = view.k
    eta, xi = s.eta[k], s.xi[k]
    j = view.interf
    h = (xi / (j + xi * p_k)) ** 2 - (eta / (j + eta * p_k)) ** 2
    h = h - ((view.cross / (view.den_eta + view.cross * p_k)) ** 2).sum(axis=0)
    return h / LN2


def hessian_diag(s: Scenario, k: int, n: int, p) -> float:
    """Diagonal entry of the surrogate Hessian; the Hessian is diagonal."""
    p = np.asarray(p, dtype=float)
    view = user_view(s, p, k)
    return float(hessian_vector(s, view, p[k])[n])
