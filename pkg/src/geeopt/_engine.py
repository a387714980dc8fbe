"""Compiled better-response dynamics.

Mirrors :func:`geeopt.brd.better_response` / :func:`geeopt.brd.run_brd`
(which stay as the readable reference) so that Monte Carlo sweeps run at
a usable speed. Mode codes: 0 none, 1 barrier, 2 generalized.
"""

from __future__ import annotations

import numba as nb
import numpy as np

from .learning import _learn_user_nb

LN2 = float(np.log(2.0))
_BACKTRACK = np.array([0.5, 0.25, 0.125, 0.0625, 1.0 / 32, 1.0 / 256])


@nb.njit(cache=True)
def _interference(beta, noise, p, out):
    K, N = p.shape
    for k in range(K):
        for n in range(N):
            acc = noise[n]
            for l in range(K):
                acc += beta[l, k, n] * p[l, n]
            out[k, n] = acc


@nb.njit(cache=True)
def _rates(alpha, xi, beta, noise, p, interf, out):
    K, N = p.shape
    _interference(beta, noise, p, interf)
    for k in range(K):
        r = 0.0
        for n in range(N):
            r += np.log2(1.0 + p[k, n] * alpha[k, n] / (interf[k, n] + xi[k, n] * p[k, n]))
        out[k] = r


@nb.njit(cache=True)
def _objective(alpha, xi, beta, noise, mu, pc, rmin, p, lam, mode, rho, C, interf, rbuf):
    K, N = p.shape
    _rates(alpha, xi, beta, noise, p, interf, rbuf)
    v = 0.0
    pw = pc
    for k in range(K):
        v += rbuf[k]
        for n in range(N):
            pw += mu[k, n] * p[k, n]
    v -= lam * pw
    if mode == 1:
        b = 0.0
        for k in range(K):
            sl = rbuf[k] - rmin[k]
            if sl > 0:
                b += np.log2(sl)
            else:
                b += C
        v += rho * b
    return v


@nb.njit(cache=True)
def _view(beta, noise, alpha, xi, p, k, interf_all, cross, den_eta, den_xi, interf_k):
    """User k's view of the others (see :func:`geeopt.model.user_view`)."""
    K, N = p.shape
    for i in range(K):
        for n in range(N):
            acc = noise[n]
            for l in range(K):
                if l != k:
                    acc += beta[l, i, n] * p[l, n]
            interf_all[i, n] = acc
    for i in range(K):
        for n in range(N):
            if i == k:
                cross[i, n] = 0.0
                den_eta[i, n] = 1.0
                den_xi[i, n] = 1.0
            else:
                cross[i, n] = beta[k, i, n]
                den_eta[i, n] = interf_all[i, n] + (alpha[i, n] + xi[i, n]) * p[i, n]
                den_xi[i, n] = interf_all[i, n] + xi[i, n] * p[i, n]
    for n in range(N):
        interf_k[n] = interf_all[k, n]


@nb.njit(cache=True)
def _min_powers(alpha, xi, interf_k, targets, out):
    N = targets.size
    for n in range(N):
        t = targets[n]
        if t <= 0:
            out[n] = 0.0
            continue
        g = np.expm1(t * LN2)
        den = alpha[n] - xi[n] * g
        out[n] = g * interf_k[n] / den if den > 0 else np.inf


@nb.njit(cache=True)
def _plan(raw, pmax, floors, active):
    """Greedy floor plan written into ``floors``/``active``; returns the residual."""
    N = raw.size
    total = 0.0
    ok = True
    for n in range(N):
        if not np.isfinite(raw[n]):
            ok = False
        else:
            total += raw[n]
    if ok and total <= pmax:
        for n in range(N):
            floors[n] = raw[n]
            active[n] = True
        return max(0.0, pmax - total)
    order = np.argsort(raw, kind="mergesort")
    for n in range(N):
        floors[n] = 0.0
        active[n] = False
    total = 0.0
    for j in range(N):
        n = order[j]
        if not np.isfinite(raw[n]) or total + raw[n] > pmax:
            break
        total += raw[n]
        floors[n] = raw[n]
        active[n] = True
    return max(0.0, pmax - total)


@nb.njit(cache=True)
def _barrier_slopes(alpha, xi, p, k, rates_, rmin, interf_k, cross, den_eta, den_xi, rho,
                    use_own, out):
    K, N = p.shape
    c = rho / (LN2 * LN2)
    slk = rates_[k] - rmin[k]
    for n in range(N):
        eta = alpha[k, n] + xi[k, n]
        acc = 0.0
        if use_own and slk > 0:
            acc += c * (eta / (interf_k[n] + eta * p[k, n]) - xi[k, n] / (interf_k[n] + xi[k, n] * p[k, n])) / slk
        for i in range(K):
            if i == k:
                continue
            sl = rates_[i] - rmin[i]
            if sl <= 0:
                continue
            b = cross[i, n]
            if b == 0.0:
                continue
            cp = b * p[k, n]
            acc += c * (b / (den_eta[i, n] + cp) - b / (den_xi[i, n] + cp)) / sl
        out[n] = acc


@nb.njit(cache=True)
def _guard(alpha, xi, beta, noise, mu, pc, rmin, p, k, cand, lam, mode, rho, C, base,
           floors_ok, interf, rbuf, backtrack):
    """Install the best acceptable point on the segment towards ``cand``.

    Returns (new objective, status) with status 0 full, 1 backtracked, 2 kept.
    """
    N = cand.size
    old = p[k].copy()
    for n in range(N):
        p[k, n] = cand[n]
    v = _objective(alpha, xi, beta, noise, mu, pc, rmin, p, lam, mode, rho, C, interf, rbuf)
    if v >= base or not floors_ok:
        return v, 0
    for t in backtrack:
        for n in range(N):
            p[k, n] = old[n] + t * (cand[n] - old[n])
        v = _objective(alpha, xi, beta, noise, mu, pc, rmin, p, lam, mode, rho, C, interf, rbuf)
        if v >= base:
            return v, 1
    for n in range(N):
        p[k, n] = old[n]
    return base, 2


@nb.njit(cache=True)
def _rel_tol(tol, budget, cap):
    if budget > cap:
        return tol * (cap / budget)
    return tol


@nb.njit(cache=True)
def _respond(alpha, xi, beta, noise, mu, pc, pmax, rmin, p, k, lam, mode, rho, C, targets_k,
             d0, a, tol, max_iter, precond, clip, mm_steps, mm_tol, base, backtrack, cap_k):
    """Better response of user k, installed in place in ``p``.

    The learning tolerance is taken relative to ``min(budget, cap_k)``.
    Returns (objective, learning runs, learning iterations, feasible).
    """
    K, N = p.shape
    interf_all = np.empty((K, N))
    cross = np.empty((K, N))
    den_eta = np.empty((K, N))
    den_xi = np.empty((K, N))
    interf_k = np.empty(N)
    interf = np.empty((K, N))
    rbuf = np.empty(K)
    nu = np.empty(N)
    slopes = np.zeros(N)
    offsets = np.zeros(N)
    eta_k = alpha[k] + xi[k]
    budget = pmax[k]
    feasible = True
    floors_ok = True
    runs = 0
    iters = 0

    _view(beta, noise, alpha, xi, p, k, interf_all, cross, den_eta, den_xi, interf_k)
    if mode == 1:
        _rates(alpha, xi, beta, noise, p, interf, rbuf)
        if rmin[k] > 0:
            zc = np.zeros((K, N))
            on = np.ones((K, N))
            zn = np.zeros(N)
            y = np.zeros(N)
            x, it, _, hit = _learn_user_nb(eta_k, xi[k], interf_k, zc, on, zn, budget, zn, y,
                                           d0, a, _rel_tol(tol, budget, cap_k), max_iter,
                                           precond, clip, rmin[k])
            iters += it
            runs += 1
            if not hit:
                r = 0.0
                for n in range(N):
                    r += np.log2((interf_k[n] + eta_k[n] * x[n]) / (interf_k[n] + xi[k, n] * x[n]))
                feasible = r >= rmin[k]
            if feasible and rbuf[k] - rmin[k] <= 0:
                v, _ = _guard(alpha, xi, beta, noise, mu, pc, rmin, p, k, x, lam, mode, rho, C,
                              base, True, interf, rbuf, backtrack)
                return v, runs, iters, True
    elif mode == 2:
        raw = np.empty(N)
        _min_powers(alpha[k], xi[k], interf_k, targets_k, raw)
        act = np.empty(N, dtype=np.bool_)
        residual = _plan(raw, pmax[k], offsets, act)
        budget = residual
        s = 0.0
        for n in range(N):
            s += p[k, n]
            if p[k, n] < offsets[n]:
                floors_ok = False
        if s > pmax[k]:
            floors_ok = False

    cur = base
    for step in range(mm_steps):
        if step > 0:
            _view(beta, noise, alpha, xi, p, k, interf_all, cross, den_eta, den_xi, interf_k)
        if mode == 1:
            _rates(alpha, xi, beta, noise, p, interf, rbuf)
            _barrier_slopes(alpha, xi, p, k, rbuf, rmin, interf_k, cross, den_eta, den_xi, rho,
                            feasible, slopes)
        for n in range(N):
            acc = 0.0
            for i in range(K):
                b = cross[i, n]
                if b != 0.0:
                    acc += b / (den_xi[i, n] + b * p[k, n])
            nu[n] = lam * mu[k, n] + acc / LN2 - slopes[n]
        y = np.zeros(N)
        cand, it, _, _ = _learn_user_nb(eta_k, xi[k], interf_k, cross, den_eta, nu, budget, offsets,
                                        y, d0, a, _rel_tol(tol, budget, cap_k), max_iter,
                                        precond, clip, np.inf)
        runs += 1
        iters += it
        v, status = _guard(alpha, xi, beta, noise, mu, pc, rmin, p, k, cand, lam, mode, rho, C,
                           cur, floors_ok, interf, rbuf, backtrack)
        gain = v - cur
        cur = v
        floors_ok = True
        if status == 2 or gain <= mm_tol:
            break
    return cur, runs, iters, feasible


@nb.njit(cache=True)
def _max_step(p, d, pmax, floor_p):
    K, N = p.shape
    t = np.inf
    for k in range(K):
        rs = 0.0
        s = 0.0
        for n in range(N):
            if d[k, n] < 0:
                t = min(t, (p[k, n] - floor_p[k, n]) / (-d[k, n]))
            rs += d[k, n]
            s += p[k, n]
        if rs > 0:
            t = min(t, (pmax[k] - s) / rs)
    return t


@nb.njit(cache=True)
def brd_kernel(alpha, xi, beta, noise, mu, pc, pmax, rmin, p, lam, mode, rho, C, targets,
               d0, a, tol, max_iter, precond, clip, mm_steps, mm_tol, brd_tol, max_rounds,
               extrapolate, rescale, potentials, learn_runs, learn_iters, infeasible, caps):
    """Round-robin dynamics in place on ``p``.

    ``potentials`` (length >= 1 + K*max_rounds) receives the objective
    before the first response and after each one. Returns
    (rounds, converged, responses).
    """
    K, N = p.shape
    interf = np.empty((K, N))
    rbuf = np.empty(K)
    backtrack = _BACKTRACK
    cur = _objective(alpha, xi, beta, noise, mu, pc, rmin, p, lam, mode, rho, C, interf, rbuf)
    potentials[0] = cur
    idx = 1
    rounds = 0
    converged = False
    zero_floor = np.zeros((K, N))
    for rnd in range(max_rounds):
        start = cur
        p_start = p.copy()
        for k in range(K):
            cur, runs, its, feas = _respond(alpha, xi, beta, noise, mu, pc, pmax, rmin, p, k, lam,
                                            mode, rho, C, targets[k], d0, a, tol, max_iter,
                                            precond, clip, mm_steps, mm_tol, cur, backtrack,
                                            caps[k])
            potentials[idx] = cur
            learn_runs[idx - 1] = runs
            learn_iters[idx - 1] = its
            infeasible[k] = not feas
            idx += 1
        rounds = rnd + 1
        if extrapolate and mode != 2:
            d = p - p_start
            tmax = _max_step(p, d, pmax, zero_floor) * 0.999
            t = 1.0
            best = cur
            bp = p.copy()
            found = False
            while t <= tmax:
                q = p + t * d
                v = _objective(alpha, xi, beta, noise, mu, pc, rmin, q, lam, mode, rho, C, interf, rbuf)
                if v > best:
                    best = v
                    bp[:, :] = q
                    found = True
                    t *= 2.0
                else:
                    break
            if found:
                p[:, :] = bp
                cur = best
                potentials[idx - 1] = cur
        if rescale and mode != 2:
            c = 0.5
            best = cur
            found = False
            while c > 1e-12:
                v = _objective(alpha, xi, beta, noise, mu, pc, rmin, c * p, lam, mode, rho, C,
                               interf, rbuf)
                if v > best:
                    best = v
                    found = True
                    c *= 0.5
                else:
                    break
            if found:
                c *= 2.0
                p *= c
                cur = best
                potentials[idx - 1] = cur
        if cur - start <= brd_tol:
            converged = True
            break
    return rounds, converged, idx - 1

