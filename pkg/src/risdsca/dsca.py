"""Distributed successive concave approximation (D-SCA) orchestrator.

Every iteration each user solves its strongly concave surrogate (power part
and RIS part, which decouple), the new iterate is a convex combination of
the current point and the best responses, and the step size shrinks by
``alpha <- alpha (1 - theta alpha)``.
"""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field

import numpy as np

from .channel import ChannelSet
from .metasurface import LorentzianParams, enforce_modulus, initial_params, lorentzian_response, omega_grid
from .netbus import MessageBus, round_exchange
from .power_alloc import PowerSubproblem, solve_power
from .rate_model import (
    LN2,
    NetworkState,
    UserState,
    _cache,
    own_phi_gradient,
    phi_gradients,
    power_prices,
)
from .ris_opt import PddDiagnostics, RisSubproblem, fit_lorentzian, pdd_solve
from .scenario import ScenarioConfig

__all__ = [
    "IterationRecord",
    "StepSizeRule",
    "BestResponse",
    "DscaResult",
    "initial_state",
    "best_response",
    "step",
    "iterate",
    "run",
    "history_to_csv",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class IterationRecord:
    t: int
    alpha: float
    sum_rate_bps: float
    term_metric: float | None
    rel_change: float | None
    user_rates_bps: tuple

    def to_dict(self) -> dict:
        return {
            "t": self.t,
            "alpha": self.alpha,
            "sum_rate_bps": self.sum_rate_bps,
            "term_metric": self.term_metric,
            "rel_change": self.rel_change,
            "user_rates_bps": list(self.user_rates_bps),
        }


@dataclass(frozen=True)
class StepSizeRule:
    alpha0: float = 0.9
    theta: float = 1e-2
    fixed: bool = False

    def __post_init__(self):
        if not 0 < self.alpha0 <= 1 or self.theta < 0 or self.theta * self.alpha0 >= 1:
            raise ValueError("need 0 < alpha0 <= 1 and 0 <= theta*alpha0 < 1")

    def next(self, alpha: float) -> float:
        return alpha if self.fixed else alpha * (1.0 - self.theta * alpha)

    def sequence(self, n: int) -> np.ndarray:
        out = np.empty(n)
        a = self.alpha0
        for i in range(n):
            out[i] = a
            a = self.next(a)
        return out


@dataclass
class BestResponse:
    x: UserState
    params: LorentzianParams
    mu: float
    pdd: PddDiagnostics | None = None


@dataclass
class DscaResult:
    state: NetworkState  # realizable final state
    raw_state: NetworkState  # last iterate before the final refit
    params: list
    history: list
    converged: bool
    alpha: float  # step size that the next iteration would use
    sum_rate_bps: float
    user_rates_bps: list = field(default_factory=list)

    @property
    def iterations(self) -> int:
        return len(self.history) - 1


def initial_state(cfg: ScenarioConfig, omega=None):
    """Uniform power over subcarriers and the spread Lorentzian initialization."""
    omega = omega_grid(cfg.K) if omega is None else omega
    params = [initial_params(cfg.M, omega, cfg.algo.lorentz_bounds) for _ in range(cfg.Q)]
    p = np.full((cfg.Q, cfg.K), cfg.P / cfg.K)
    if cfg.M:
        phi = np.stack([lorentzian_response(par, omega) for par in params])
    else:
        phi = np.zeros((cfg.Q, cfg.K, 0), complex)
    return NetworkState(p, phi), params


def best_response(
    q: int,
    state: NetworkState,
    channels: ChannelSet,
    cfg: ScenarioConfig,
    params_q: LorentzianParams,
    omega=None,
    cache=None,
    prices=None,
) -> BestResponse:
    """Solve user q's surrogate problem at the frozen iterate.

    ``prices`` optionally supplies ``(power_prices, phi_prices, mui)`` as
    received over the message bus; otherwise they are computed directly.
    """
    algo = cfg.algo
    omega = omega_grid(cfg.K) if omega is None else omega
    cache = _cache(state, channels, cfg.sigma_sq) if cache is None else cache
    H, snr, mui = cache
    do_ris = cfg.M > 0 and algo.optimize_ris
    if prices is None:
        pi_p = power_prices(q, state, channels, cfg.sigma_sq, cache)
        pi_phi = phi_gradients(q, state, channels, cfg.sigma_sq, cache)[1] if do_ris else None
        mui_q = mui[q]
    else:
        pi_p, pi_phi, mui_q = prices

    gain = H[q, q].real ** 2 + H[q, q].imag ** 2
    sub = PowerSubproblem(gain, mui_q, state.p[q], pi_p, algo.tau, cfg.P)
    p_hat, mu = solve_power(sub, algo.bisect_tol)

    if not do_ris:
        return BestResponse(UserState(p_hat, state.phi[q]), params_q, mu)
    gamma = own_phi_gradient(q, state, channels, cfg.sigma_sq, cache)
    # Re(l^H phi) is the first-order rate change, hence the Wirtinger factor 2
    rsub = RisSubproblem(2.0 * (gamma + pi_phi), state.phi[q], algo.tau, params_q)
    phi_hat, params_hat, diag = pdd_solve(rsub, omega, algo.pdd, algo.lorentz_bounds)
    return BestResponse(UserState(p_hat, phi_hat), params_hat, mu, diag)


def step(state: NetworkState, responses, alpha: float) -> NetworkState:
    """Convex combination ``x + alpha (x_hat - x)`` for every user."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")
    target = NetworkState.from_users([r.x if isinstance(r, BestResponse) else r for r in responses])
    if alpha == 1.0:
        return NetworkState(target.p.copy(), target.phi.copy())
    return NetworkState(state.p + alpha * (target.p - state.p), state.phi + alpha * (target.phi - state.phi))


def _move(old: NetworkState, new: NetworkState, budget: float) -> float:
    dp = np.max(np.abs(new.p - old.p)) / budget
    dphi = np.max(np.abs(new.phi - old.phi)) if new.phi.size else 0.0
    return float(max(dp, dphi))


def iterate(state, params, channels, cfg, alpha, omega=None, bus: MessageBus | None = None, t: int = 0):
    """One D-SCA iteration; returns ``(new_state, new_params)``."""
    omega = omega_grid(cfg.K) if omega is None else omega
    Q = cfg.Q
    if cfg.algo.ordering == "gauss_seidel":
        if bus is not None:
            raise ValueError("the message bus supports Jacobi ordering only")
        params = list(params)
        for q in range(Q):
            br = best_response(q, state, channels, cfg, params[q], omega)
            users = [state.user(j) for j in range(Q)]
            users[q] = br
            state = step(state, users, alpha)
            params[q] = br.params
        return state, params

    cache = _cache(state, channels, cfg.sigma_sq)
    inboxes = round_exchange(bus, state, channels, cfg.sigma_sq, t) if bus is not None else None
    responses = []
    for q in range(Q):
        prices = None
        if inboxes is not None:
            power, phi = inboxes[q].aggregate(cfg.K, cfg.M)
            prices = (power, phi, inboxes[q].mui.mui)
        responses.append(best_response(q, state, channels, cfg, params[q], omega, cache, prices))
    return step(state, responses, alpha), [r.params for r in responses]


def _record(t, alpha, state, channels, cfg, metric, rel) -> IterationRecord:
    H, snr, _ = _cache(state, channels, cfg.sigma_sq)
    rates = np.sum(np.log1p(snr), axis=1) / LN2
    return IterationRecord(t, float(alpha), float(rates.sum()), metric, rel, tuple(float(r) for r in rates))


def refit(state: NetworkState, params, cfg: ScenarioConfig, omega=None):
    """Fit Lorentzian parameters to the current profiles so the output is exactly realizable."""
    omega = omega_grid(cfg.K) if omega is None else omega
    if cfg.M == 0:
        return state, list(params)
    new_params, phis = [], []
    for q in range(cfg.Q):
        fitted, _ = fit_lorentzian(state.phi[q], omega, params[q], cfg.algo.lorentz_bounds, cfg.algo.pdd.lm_iters)
        theta = enforce_modulus(fitted.as_array(), omega)
        new_params.append(LorentzianParams.from_array(theta))
        phis.append(lorentzian_response(theta, omega))
    return NetworkState(state.p.copy(), np.stack(phis)), new_params


def run(cfg: ScenarioConfig, channels: ChannelSet, bus: MessageBus | None = None, init=None) -> DscaResult:
    """Run D-SCA until the termination test passes or ``max_iter`` is reached.

    Termination requires both the largest per-user move (powers normalized
    by the budget) and the relative sum-rate change to be at most ``eps_term``.
    """
    algo = cfg.algo
    omega = omega_grid(cfg.K)
    rule = StepSizeRule(algo.alpha0, algo.theta, algo.fixed_step)
    state, params = initial_state(cfg, omega) if init is None else init
    alpha = rule.alpha0
    history = [_record(0, alpha, state, channels, cfg, None, None)]
    converged = False
    for t in range(1, algo.max_iter + 1):
        new_state, params = iterate(state, params, channels, cfg, alpha, omega, bus, t)
        metric = _move(state, new_state, cfg.P)
        rec = _record(t, alpha, new_state, channels, cfg, metric, None)
        prev_rate = history[-1].sum_rate_bps
        rel = abs(rec.sum_rate_bps - prev_rate) / max(abs(prev_rate), 1e-300)
        rec = IterationRecord(rec.t, rec.alpha, rec.sum_rate_bps, metric, float(rel), rec.user_rates_bps)
        history.append(rec)
        state = new_state
        alpha = rule.next(alpha)
        if metric <= algo.eps_term and rel <= algo.eps_term:
            converged = True
            break
    if not converged:
        log.info("D-SCA stopped at max_iter=%d without meeting eps=%g", algo.max_iter, algo.eps_term)
    final, final_params = refit(state, params, cfg, omega)
    H, snr, _ = _cache(final, channels, cfg.sigma_sq)
    rates = np.sum(np.log1p(snr), axis=1) / LN2
    return DscaResult(
        state=final,
        raw_state=state,
        params=final_params,
        history=history,
        converged=converged,
        alpha=alpha,
        sum_rate_bps=float(rates.sum()),
        user_rates_bps=[float(r) for r in rates],
    )


def history_to_csv(history, Q: int) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["t", "alpha", "sum_rate_bps", "term_metric"] + [f"rate_user{q + 1}" for q in range(Q)])
    for rec in history:
        metric = "" if rec.term_metric is None else repr(rec.term_metric)
        writer.writerow([rec.t, repr(rec.alpha), repr(rec.sum_rate_bps), metric] + [repr(r) for r in rec.user_rates_bps])
    return buf.getvalue()
