"""Compiled inner loops for the Lorentzian fit and the PDD iteration.

These mirror the numpy reference functions in ``metasurface`` and
``ris_opt``; the tests compare the two.
"""

from __future__ import annotations

import numpy as np
from numba import njit

LM_DAMP0 = 1e-3
LM_DAMP_UP = 10.0
LM_DAMP_DOWN = 0.1
LM_DAMP_CAP = 1e10
LM_DAMP_FLOOR = 1e-12


@njit(cache=True)
def _clip(theta, lower, upper):
    out = theta.copy()
    for i in range(3):
        if out[i] < lower[i]:
            out[i] = lower[i]
        elif out[i] > upper[i]:
            out[i] = upper[i]
    return out


@njit(cache=True)
def _element_response(theta, omega, out):
    F, w0, kap = theta[0], theta[1], theta[2]
    for k in range(omega.size):
        w = omega[k]
        out[k] = F * w * w / complex(w0 * w0 - w * w, kap * w)


@njit(cache=True)
def _element_cost(target, theta, omega, buf):
    _element_response(theta, omega, buf)
    s = 0.0
    for k in range(omega.size):
        r = target[k] - buf[k]
        s += r.real * r.real + r.imag * r.imag
    return s


@njit(cache=True)
def lm_fit_element(target, omega, theta0, lower, upper, max_iter, tol):
    """Projected Levenberg-Marquardt on one element; returns (theta, cost, cost0, iters, accepted)."""
    K = omega.size
    buf = np.empty(K, np.complex128)
    theta = _clip(theta0, lower, upper)
    cost0 = _element_cost(target, theta0, omega, buf)
    cost = _element_cost(target, theta, omega, buf)
    if not cost <= cost0:
        theta = theta0.copy()
        cost = cost0
    damp = LM_DAMP0
    accepted = False
    JtJ = np.empty((3, 3))
    A = np.empty((3, 3))
    g = np.empty(3)
    J = np.empty((K, 3), np.complex128)
    it = 0
    while it < max_iter:
        it += 1
        F, w0, kap = theta[0], theta[1], theta[2]
        for k in range(K):
            w = omega[k]
            den = complex(w0 * w0 - w * w, kap * w)
            base = w * w / den
            J[k, 0] = base
            J[k, 1] = -F * base * 2.0 * w0 / den
            J[k, 2] = -F * base * 1j * w / den
            buf[k] = target[k] - F * base
        for i in range(3):
            gi = 0.0
            for k in range(K):
                gi += (J[k, i].conjugate() * buf[k]).real
            g[i] = gi
            for j in range(3):
                s = 0.0
                for k in range(K):
                    s += (J[k, i].conjugate() * J[k, j]).real
                JtJ[i, j] = s
        nfree = 0
        for i in range(3):
            pinned = (theta[i] <= lower[i] and g[i] < 0) or (theta[i] >= upper[i] and g[i] > 0)
            if pinned:
                for j in range(3):
                    JtJ[i, j] = 0.0
                    JtJ[j, i] = 0.0
                JtJ[i, i] = 1.0
                g[i] = 0.0
            else:
                nfree += 1
        if nfree == 0:
            break
        dmax = max(JtJ[0, 0], JtJ[1, 1], JtJ[2, 2])
        for i in range(3):
            for j in range(3):
                A[i, j] = JtJ[i, j]
            A[i, i] += damp * max(JtJ[i, i], 1e-12 * dmax + 1e-300)
        step = np.linalg.solve(A, g)
        trial = _clip(theta + step, lower, upper)
        tc = _element_cost(target, trial, omega, buf)
        moved = 0.0
        for i in range(3):
            moved = max(moved, abs(trial[i] - theta[i]) / (abs(theta[i]) + 1e-8))
        if np.isfinite(tc) and tc < cost:
            improvement = cost - tc
            theta = trial
            cost = tc
            accepted = True
            damp = max(damp * LM_DAMP_DOWN, LM_DAMP_FLOOR)
            if improvement <= tol * cost:
                break
        else:
            damp *= LM_DAMP_UP
        if cost <= 1e-30 or damp > LM_DAMP_CAP or moved <= 1e-14:
            break
    return theta, cost, cost0, it, accepted


@njit(cache=True)
def lm_fit_batch(target, omega, theta0, lower, upper, max_iter, tol):
    M = theta0.shape[0]
    theta = np.empty((M, 3))
    cost = np.empty(M)
    cost0 = np.empty(M)
    accepted = np.zeros(M, np.bool_)
    iters = 0
    for m in range(M):
        th, c, c0, it, acc = lm_fit_element(target[:, m].copy(), omega, theta0[m].copy(), lower, upper, max_iter, tol)
        theta[m] = th
        cost[m] = c
        cost0[m] = c0
        accepted[m] = acc
        iters = max(iters, it)
    return theta, cost, cost0, iters, accepted


@njit(cache=True)
def responses(theta, omega):
    K = omega.size
    M = theta.shape[0]
    out = np.empty((K, M), np.complex128)
    buf = np.empty(K, np.complex128)
    for m in range(M):
        _element_response(theta[m], omega, buf)
        out[:, m] = buf
    return out


@njit(cache=True)
def pdd_core(l, prev, tau, theta0, omega, lower, upper, rho0, c, inner_iters, outer_iters,
             viol_tol, final_tol, inner_tol, lm_iters, lm_tol):
    K, M = l.shape
    theta = np.empty((M, 3))
    for m in range(M):
        theta[m] = _clip(theta0[m], lower, upper)
    d = responses(theta, omega)
    lam = np.zeros((K, M), np.complex128)
    phi_hat = np.empty((K, M), np.complex128)
    target = np.empty((K, M), np.complex128)
    residual = np.zeros(M)
    hist = np.empty(outer_iters)
    rho = rho0
    vt = viol_tol
    inner_total = 0
    converged = False
    viol = np.inf
    outer = 0
    for outer in range(1, outer_iters + 1):
        for _ in range(inner_iters):
            inner_total += 1
            inv_rho = 1.0 / rho
            denom = tau + inv_rho
            for k in range(K):
                for m in range(M):
                    y = (tau * prev[k, m] + l[k, m] + d[k, m] * inv_rho - lam[k, m]) / denom
                    a = abs(y)
                    if a > 1.0:
                        y = y / a
                    phi_hat[k, m] = y
                    target[k, m] = y + rho * lam[k, m]
            theta, residual, _, _, _ = lm_fit_batch(target, omega, theta, lower, upper, lm_iters, lm_tol)
            d_new = responses(theta, omega)
            delta = 0.0
            for k in range(K):
                for m in range(M):
                    delta = max(delta, abs(d_new[k, m] - d[k, m]))
            d = d_new
            if delta <= inner_tol:
                break
        viol = 0.0
        for k in range(K):
            for m in range(M):
                viol = max(viol, abs(phi_hat[k, m] - d[k, m]))
        hist[outer - 1] = viol
        if viol <= final_tol:
            converged = True
            break
        if viol <= vt:
            for k in range(K):
                for m in range(M):
                    lam[k, m] += (phi_hat[k, m] - d[k, m]) / rho
            vt *= 0.5
        else:
            rho *= c
    return theta, viol, outer, inner_total, converged, residual, hist[:outer].copy()
