"""Per-user RIS subproblem solved by penalty dual decomposition.

The subproblem maximizes ``Re(l^H phi) - tau/2 ||phi - phi_prev||^2`` over
profiles that are realizable by Lorentzian elements and lie in the unit
disk. The augmented Lagrangian alternates a closed-form projected update of
``phi`` with a bounded Levenberg-Marquardt fit of the Lorentzian parameters;
the outer layer updates the dual variable or shrinks the penalty.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .metasurface import (
    DEFAULT_BOUNDS,
    F_MIN,
    OMEGA0_MIN,
    LorentzianParams,
    clip_params,
    enforce_modulus,
    lorentzian_jacobian,
    lorentzian_response,
    project_unit_disk,
)
from . import _kernels
from ._kernels import LM_DAMP0, LM_DAMP_CAP, LM_DAMP_DOWN, LM_DAMP_UP
from .scenario import PddParams

__all__ = [
    "RisSubproblem",
    "PddState",
    "PddDiagnostics",
    "FitInfo",
    "ris_objective",
    "phi_closed_form",
    "fit_lorentzian",
    "fit_lorentzian_reference",
    "pdd_solve",
]



@dataclass(frozen=True)
class RisSubproblem:
    """``linear_term`` is the full coefficient ``l`` of ``Re(l^H phi)``, shape (K, M)."""

    linear_term: np.ndarray
    phi_prev: np.ndarray
    tau: float
    params_init: LorentzianParams

    def __post_init__(self):
        l = np.asarray(self.linear_term, complex)
        prev = np.asarray(self.phi_prev, complex)
        if l.shape != prev.shape or l.ndim != 2 or l.shape[1] != self.params_init.M:
            raise ValueError("linear_term, phi_prev must be (K, M) matching params_init")
        if not (np.all(np.isfinite(l)) and np.all(np.isfinite(prev))):
            raise ValueError("RIS subproblem entries must be finite")
        object.__setattr__(self, "linear_term", l)
        object.__setattr__(self, "phi_prev", prev)


@dataclass
class PddState:
    rho: float
    lam: np.ndarray
    d: np.ndarray
    c: float = 0.8
    viol_tol: float = 1e-1


@dataclass
class FitInfo:
    residual: np.ndarray  # per-element squared residual after the fit
    initial_residual: np.ndarray
    iterations: int
    no_progress: np.ndarray


@dataclass
class PddDiagnostics:
    violation: float
    objective: float
    outer_iters: int
    inner_iters: int
    converged: bool
    residuals: np.ndarray
    start: int
    violation_history: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "violation": self.violation,
            "objective": self.objective,
            "outer_iters": self.outer_iters,
            "inner_iters": self.inner_iters,
            "converged": self.converged,
            "residuals": self.residuals.tolist(),
            "start": self.start,
        }


def ris_objective(sub: RisSubproblem, phi) -> float:
    phi = np.asarray(phi, complex)
    return float(np.sum((np.conj(sub.linear_term) * phi).real) - 0.5 * sub.tau * np.sum(np.abs(phi - sub.phi_prev) ** 2))


def phi_closed_form(sub: RisSubproblem, pdd: PddState) -> np.ndarray:
    """Minimizer of the augmented Lagrangian over phi for fixed Lorentzian reconstruction ``pdd.d``."""
    inv_rho = 1.0 / pdd.rho
    y = (sub.tau * sub.phi_prev + sub.linear_term + pdd.d * inv_rho - pdd.lam) / (sub.tau + inv_rho)
    return project_unit_disk(y)


def _sq_residual(target: np.ndarray, theta: np.ndarray, omega: np.ndarray) -> np.ndarray:
    r = target - lorentzian_response(theta, omega)
    return np.sum(r.real**2 + r.imag**2, axis=0)


def fit_lorentzian_reference(target, omega, init, bounds=DEFAULT_BOUNDS, max_iter: int = 50, tol: float = 1e-12):
    """Vectorized numpy version of :func:`fit_lorentzian`, kept as a cross-check."""
    target = np.asarray(target, complex)
    omega = np.asarray(omega, float)
    theta0 = init.as_array() if isinstance(init, LorentzianParams) else np.asarray(init, float).reshape(-1, 3)
    theta = clip_params(theta0, bounds)
    M = theta.shape[0]
    cost0 = _sq_residual(target, theta0, omega) if M else np.zeros(0)
    cost = _sq_residual(target, theta, omega) if M else np.zeros(0)
    if M and np.any(cost > cost0):
        # clipping the initial point must not worsen the fit
        worse = cost > cost0
        theta[worse] = theta0[worse]
        cost[worse] = cost0[worse]
    f_max, w_max, k_max = bounds
    lower = np.array([F_MIN, OMEGA0_MIN, -k_max])
    upper = np.array([f_max, w_max, k_max])
    damp = np.full(M, LM_DAMP0)
    active = np.ones(M, bool)
    accepted_any = np.zeros(M, bool)
    it = 0
    while it < max_iter and np.any(active):
        it += 1
        idx = np.flatnonzero(active)
        th = theta[idx]
        r = target[:, idx] - lorentzian_response(th, omega)  # (K, n)
        J = lorentzian_jacobian(th, omega)  # (K, n, 3)
        JtJ = np.einsum("kni,knj->nij", J.conj(), J).real
        g = np.einsum("kni,kn->ni", J.conj(), r).real
        # freeze parameters pinned at a bound with the descent direction pointing outward
        pinned = ((th <= lower) & (g < 0)) | ((th >= upper) & (g > 0))
        free = ~pinned
        JtJ = JtJ * (free[:, :, None] & free[:, None, :]) + pinned[:, :, None] * np.eye(3)
        g = np.where(free, g, 0.0)
        diag = np.einsum("nii->ni", JtJ)
        diag = np.maximum(diag, 1e-12 * np.max(diag, axis=1, keepdims=True) + 1e-300)
        A = JtJ + damp[idx, None, None] * (diag[:, :, None] * np.eye(3))
        try:
            step = np.linalg.solve(A, g[..., None])[..., 0]
        except np.linalg.LinAlgError:
            step = np.zeros_like(g)
            for n in range(len(idx)):
                step[n] = np.linalg.lstsq(A[n], g[n], rcond=None)[0]
        trial = clip_params(th + step, bounds)
        trial_cost = _sq_residual(target[:, idx], trial, omega)
        ok = np.isfinite(trial_cost) & (trial_cost < cost[idx])
        improvement = np.where(ok, cost[idx] - trial_cost, 0.0)
        theta[idx[ok]] = trial[ok]
        cost[idx[ok]] = trial_cost[ok]
        accepted_any[idx[ok]] = True
        damp[idx] = np.where(ok, np.maximum(damp[idx] * LM_DAMP_DOWN, 1e-12), damp[idx] * LM_DAMP_UP)
        moved = np.max(np.abs(trial - th) / (np.abs(th) + 1e-8), axis=1)
        done = (
            (ok & (improvement <= tol * np.maximum(cost[idx], 1e-300)))
            | (cost[idx] <= 1e-30)
            | (damp[idx] > LM_DAMP_CAP)
            | (moved <= 1e-14)
            | ~np.any(free, axis=1)
        )
        active[idx[done]] = False
    info = FitInfo(residual=cost, initial_residual=cost0, iterations=it, no_progress=~accepted_any)
    return LorentzianParams.from_array(theta), info


def _restart_inits(theta: np.ndarray, omega: np.ndarray, bounds) -> list[np.ndarray]:
    f_max, w_max, k_max = bounds
    M = theta.shape[0]
    flipped = theta.copy()
    flipped[:, 2] = -flipped[:, 2]
    spread = np.stack(
        [np.full(M, f_max), np.linspace(omega[0], min(omega[-1], w_max), M) if M > 1 else np.full(M, omega.mean()),
         np.full(M, min(10.0, k_max))],
        axis=-1,
    )
    neg = spread.copy()
    neg[:, 2] = -neg[:, 2]
    return [flipped, spread, neg]


def _box(bounds):
    f_max, w_max, k_max = bounds
    return np.array([F_MIN, OMEGA0_MIN, -k_max]), np.array([f_max, w_max, k_max])


def fit_lorentzian(target, omega, init, bounds=DEFAULT_BOUNDS, max_iter: int = 50, tol: float = 1e-12):
    """Fit each element's (F, omega0, kappa) to ``target[:, m]`` by projected Levenberg-Marquardt.

    Elements are fitted independently; residuals are the 2K real and
    imaginary parts. Parameters pinned at a bound with the descent direction
    pointing outward are frozen for that step, trial points are clipped to
    the box, and a step is only accepted if it lowers the squared residual,
    so the result never fits worse than ``init``. Damping starts at 1e-3 and
    moves by x10 / x0.1 on rejection / acceptance, capped at 1e10.

    Returns
    -------
    (LorentzianParams, FitInfo)
    """
    target = np.ascontiguousarray(target, dtype=complex)
    omega = np.ascontiguousarray(omega, dtype=float)
    theta0 = init.as_array() if isinstance(init, LorentzianParams) else np.asarray(init, float).reshape(-1, 3)
    if theta0.shape[0] == 0:
        empty = np.zeros(0)
        return LorentzianParams(empty, empty, empty), FitInfo(empty, empty, 0, np.zeros(0, bool))
    lower, upper = _box(bounds)
    theta, cost, cost0, iters, accepted = _kernels.lm_fit_batch(
        target, omega, np.ascontiguousarray(theta0, dtype=float), lower, upper, int(max_iter), float(tol)
    )
    return LorentzianParams.from_array(theta), FitInfo(cost, cost0, int(iters), ~accepted)


def _pdd_from(sub: RisSubproblem, theta_start, omega, knobs: PddParams, bounds):
    lower, upper = _box(bounds)
    theta, viol, outer, inner, converged, residual, hist = _kernels.pdd_core(
        np.ascontiguousarray(sub.linear_term),
        np.ascontiguousarray(sub.phi_prev),
        float(sub.tau),
        np.ascontiguousarray(theta_start, dtype=float),
        np.ascontiguousarray(omega, dtype=float),
        lower,
        upper,
        float(knobs.rho0),
        float(knobs.c),
        int(knobs.inner_iters),
        int(knobs.outer_iters),
        float(knobs.viol_tol),
        float(knobs.final_tol),
        float(knobs.inner_tol),
        int(knobs.lm_iters),
        1e-12,
    )
    return theta, float(viol), int(outer), int(inner), bool(converged), residual, hist.tolist()


def pdd_solve(sub: RisSubproblem, omega, knobs: PddParams = PddParams(), bounds=DEFAULT_BOUNDS):
    """Solve the RIS subproblem; returns ``(phi, params, diagnostics)``.

    ``phi`` is always the Lorentzian reconstruction of ``params`` with on-grid
    modulus at most one. The problem is rescaled internally so that the
    larger of ``tau`` and ``max|l|`` is one; the maximizer is unchanged.
    Besides the warm start, up to ``knobs.restarts`` alternative starting
    points are tried and the best objective wins; the (modulus-repaired)
    warm start itself is always a candidate.
    """
    omega = np.asarray(omega, float)
    theta_init = sub.params_init.as_array()
    M = theta_init.shape[0]
    if M == 0:
        empty = np.zeros((len(omega), 0), complex)
        diag = PddDiagnostics(0.0, 0.0, 0, 0, True, np.zeros(0), 0)
        return empty, sub.params_init, diag

    scale = max(sub.tau, float(np.max(np.abs(sub.linear_term))))
    scaled = RisSubproblem(sub.linear_term / scale, sub.phi_prev, sub.tau / scale, sub.params_init)

    base = enforce_modulus(clip_params(theta_init, bounds), omega)
    best_theta = base
    best_obj = ris_objective(sub, lorentzian_response(base, omega))
    best_diag = PddDiagnostics(np.inf, best_obj, 0, 0, False, np.zeros(M), -1)

    starts = [theta_init] + _restart_inits(theta_init, omega, bounds)[: knobs.restarts]
    for s, start in enumerate(starts):
        theta, viol, outer, inner, converged, residual, hist = _pdd_from(scaled, start, omega, knobs, bounds)
        theta = enforce_modulus(theta, omega)
        obj = ris_objective(sub, lorentzian_response(theta, omega))
        if obj > best_obj or best_diag.start < 0 and obj >= best_obj:
            best_theta, best_obj = theta, obj
            best_diag = PddDiagnostics(viol, obj, outer, inner, converged, residual, s, hist)
    phi = lorentzian_response(best_theta, omega)
    return phi, LorentzianParams.from_array(best_theta), best_diag
