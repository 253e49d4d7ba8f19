"""Proximal multi-level water-filling for the per-user power subproblem.

Maximizes, over ``p >= 0`` with ``sum(p) <= budget``::

    sum_k ln(1 + a_k p_k / b_k) + prices . p - tau/2 ||p - p_prev||^2

Each component solves its KKT quadratic in closed form for a given budget
multiplier ``mu``; ``mu`` is then found by bisection.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["PowerSubproblem", "water_level_powers", "solve_power", "power_objective", "literal_water_filling"]


@dataclass(frozen=True)
class PowerSubproblem:
    a: np.ndarray  # own-channel gains |H_qq[k]|^2
    b: np.ndarray  # frozen interference-plus-noise
    p_prev: np.ndarray
    prices: np.ndarray
    tau: float
    budget: float

    def __post_init__(self):
        for name in ("a", "b", "p_prev", "prices"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        arrays = (self.a, self.b, self.p_prev, self.prices)
        if not all(np.all(np.isfinite(x)) for x in arrays) or not np.isfinite(self.tau) or not np.isfinite(self.budget):
            raise ValueError("power subproblem inputs must be finite")
        if len({x.shape for x in arrays}) != 1:
            raise ValueError("a, b, p_prev and prices must share one shape")
        if np.any(self.a < 0) or np.any(self.b <= 0) or self.tau <= 0 or self.budget <= 0:
            raise ValueError("require a >= 0, b > 0, tau > 0, budget > 0")


def _powers(a, b, tau, c):
    # positive root of tau*a p^2 + (tau b - c a) p - (c b + a) = 0, cancellation-free;
    # callers silence the floating-point warnings of the masked branches
    A = tau * a
    B = tau * b - c * a
    C = -(c * b + a)
    disc = np.sqrt(np.maximum(B * B - 4.0 * A * C, 0.0))
    p = np.where(B > 0, -2.0 * C / (B + disc), (disc - B) / (2.0 * A))
    # dead channel: stationarity reduces to tau p = c
    p = np.where(a > 0, p, c / tau)
    p = np.where(np.isfinite(p), p, 0.0)
    return np.maximum(p, 0.0)


def water_level_powers(sub: PowerSubproblem, mu: float) -> np.ndarray:
    """Per-subcarrier maximizer for a fixed budget multiplier ``mu``."""
    with np.errstate(divide="ignore", invalid="ignore"):
        return _powers(sub.a, sub.b, sub.tau, sub.prices + sub.tau * sub.p_prev - mu)


def solve_power(sub: PowerSubproblem, bisect_tol: float = 1e-12, max_iter: int = 200, grid: int = 64):
    """Return ``(p_hat, mu)`` maximizing the proximal power subproblem.

    The multiplier bracket is shrunk by evaluating ``grid`` equally spaced
    multipliers per round (a vectorized bisection); the returned ``mu`` is
    always on the feasible side of the budget.
    """
    a, b, tau, budget = sub.a, sub.b, sub.tau, sub.budget
    base = sub.prices + tau * sub.p_prev
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        p0 = _powers(a, b, tau, base)
        if p0.sum() <= budget:
            return p0, 0.0
        lo = 0.0
        hi = max(float(np.max(a / b + base)) + tau * budget, np.finfo(float).tiny)
        while _powers(a, b, tau, base - hi).sum() > budget:
            hi *= 2.0  # unreachable for valid inputs; guards against rounding
        frac = np.arange(1, grid) / grid
        a2, b2, base2 = a[:, None], b[:, None], base[:, None]
        for _ in range(max_iter):
            mus = lo + (hi - lo) * frac
            mus = mus[(mus > lo) & (mus < hi)]
            if mus.size == 0:
                break
            totals = _powers(a2, b2, tau, base2 - mus).sum(axis=0)
            # totals are non-increasing in mu
            i = int(np.searchsorted(-totals, -budget, side="left"))
            if i < mus.size:
                hi, total = float(mus[i]), float(totals[i])
                if i > 0:
                    lo = float(mus[i - 1])
                if budget - total <= bisect_tol * budget:
                    break
            else:
                lo = float(mus[-1])
        return _powers(a, b, tau, base - hi), hi


def power_objective(sub: PowerSubproblem, p) -> float:
    p = np.asarray(p, float)
    return float(
        np.sum(np.log1p(sub.a * p / sub.b)) + sub.prices @ p - 0.5 * sub.tau * np.sum((p - sub.p_prev) ** 2)
    )


def literal_water_filling(sub: PowerSubproblem, mu: float) -> np.ndarray:
    """Textbook multi-level water-filling expression written in terms of the previous SINR.

    Requires ``p_prev > 0`` and ``a > 0`` (the inverse SINR is singular
    otherwise). The effective level is ``mu - prices``.
    """
    snr = sub.a * sub.p_prev / sub.b
    inv = 1.0 / snr
    level = mu - sub.prices
    tau = sub.tau
    inner = (level - tau * sub.p_prev * (1.0 + inv)) ** 2 + 4.0 * tau
    p = 0.5 * sub.p_prev * (1.0 - inv) - (level - np.sqrt(inner)) / (2.0 * tau)
    return np.maximum(p, 0.0)
