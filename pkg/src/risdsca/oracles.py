"""Independent reference solvers used to cross-check the production paths.

None of these share code with the solvers they check: the water-filling
oracles work from gradients and sorting, the RIS oracle is a brute-force
grid over the Lorentzian parameter box.
"""

from __future__ import annotations

import numpy as np

from .metasurface import lorentzian_response

__all__ = [
    "classic_water_filling",
    "project_capped_simplex",
    "projected_gradient_power",
    "ris_grid_search",
]


def classic_water_filling(gains, budget: float, tol: float = 1e-14):
    """Plain water-filling ``p = [1/mu - 1/g]_+`` with the level found by bisection."""
    gains = np.asarray(gains, float)
    lo, hi = 0.0, float(np.max(gains))
    for _ in range(500):
        mu = 0.5 * (lo + hi)
        total = np.maximum(1.0 / mu - 1.0 / gains, 0.0).sum()
        if total > budget:
            lo = mu
        else:
            hi = mu
        if hi - lo <= tol * hi:
            break
    return np.maximum(1.0 / hi - 1.0 / gains, 0.0), hi


def project_capped_simplex(y, budget: float) -> np.ndarray:
    """Euclidean projection onto ``{p >= 0, sum(p) <= budget}``."""
    y = np.asarray(y, float)
    p = np.maximum(y, 0.0)
    if p.sum() <= budget:
        return p
    u = np.sort(y)[::-1]
    css = np.cumsum(u) - budget
    ks = np.arange(1, y.size + 1)
    rho = np.nonzero(u - css / ks > 0)[0][-1]
    shift = css[rho] / (rho + 1)
    return np.maximum(y - shift, 0.0)


def projected_gradient_power(a, b, p_prev, prices, tau, budget, tol: float = 1e-10, max_iter: int = 2_000_000):
    """Projected gradient ascent on the proximal power subproblem (objective in nats)."""
    a, b, p_prev, prices = (np.asarray(x, float) for x in (a, b, p_prev, prices))
    lip = float(np.max((a / b) ** 2)) + tau
    step = 1.0 / lip
    p = project_capped_simplex(p_prev, budget)
    for _ in range(max_iter):
        grad = a / (b + a * p) + prices - tau * (p - p_prev)
        p_new = project_capped_simplex(p + step * grad, budget)
        if np.max(np.abs(p_new - p)) <= tol * max(1.0, budget):
            return p_new
        p = p_new
    return p


def ris_grid_search(linear_term, phi_prev, tau: float, omega, bounds=(1.0, np.pi, 100.0), n: int = 200):
    """Best profile over an ``n**3`` grid of (F, omega0, kappa), one element at a time.

    Elements are independent in the RIS objective, so the search runs per
    element; grid points whose on-grid modulus exceeds one are discarded.
    Returns ``(best_objective, best_params (M, 3))``.
    """
    linear_term = np.asarray(linear_term, complex)
    phi_prev = np.asarray(phi_prev, complex)
    omega = np.asarray(omega, float)
    f_max, w_max, k_max = bounds
    F = np.linspace(f_max / n, f_max, n)
    W = np.linspace(w_max / n, w_max, n)
    Kap = np.linspace(-k_max, k_max, n)
    WW, KK = np.meshgrid(W, Kap, indexing="ij")
    shape_r = np.stack([np.ones(WW.size), WW.ravel(), KK.ravel()], axis=-1)
    r = lorentzian_response(shape_r, omega)  # (K, n*n), unit F
    total = 0.0
    best = []
    for m in range(linear_term.shape[1]):
        l = linear_term[:, m][:, None]
        prev = phi_prev[:, m][:, None]
        best_val, best_theta = -np.inf, None
        peak = np.max(np.abs(r), axis=0)
        lin = np.sum((np.conj(l) * r).real, axis=0)
        rr = np.sum(np.abs(r) ** 2, axis=0)
        rp = np.sum((np.conj(prev) * r).real, axis=0)
        pp = float(np.sum(np.abs(prev) ** 2))
        for f in F:
            # |f r - prev|^2 = f^2 rr - 2 f rp + pp
            val = f * lin - 0.5 * tau * (f * f * rr - 2 * f * rp + pp)
            val = np.where(f * peak <= 1.0, val, -np.inf)
            i = int(np.argmax(val))
            if val[i] > best_val:
                best_val = float(val[i])
                best_theta = (f, shape_r[i, 1], shape_r[i, 2])
        total += best_val
        best.append(best_theta)
    return total, np.array(best)
