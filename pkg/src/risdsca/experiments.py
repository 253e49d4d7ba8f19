"""Monte Carlo power sweeps and the oracle validation suites.

Sweeps pair every variant and power level with the same channel draw per
realization index, so RIS and no-RIS rows can be compared seed by seed.
Output rows are ordered by (variant, P, realization) regardless of how many
worker processes produced them.
"""

from __future__ import annotations

import csv
import io
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import dsca
from .channel import channel_hash, generate_channels
from .metasurface import initial_params, lorentzian_response, omega_grid
from .netbus import MessageBus, round_exchange
from .oracles import projected_gradient_power, ris_grid_search
from .power_alloc import PowerSubproblem, solve_power
from .rate_model import (
    NetworkState,
    _cache,
    fd_gradient_oracle,
    phi_gradients,
    power_prices,
    user_rate_nats,
)
from .ris_opt import RisSubproblem, pdd_solve, ris_objective
from .scenario import PddParams, ScenarioConfig, default_scenario

__all__ = [
    "SweepSpec",
    "SUMMARY_COLUMNS",
    "SWEEP_COLUMNS",
    "desk_spec",
    "paper_spec",
    "variant_config",
    "run_cell",
    "run_sweep",
    "summarize",
    "rows_to_csv",
    "summary_to_csv",
    "SuiteResult",
    "gradient_suite",
    "water_filling_suite",
    "pdd_grid_suite",
    "bus_suite",
    "validate_all",
]

SWEEP_COLUMNS = ["variant", "Q", "ris", "P_dbm", "realization", "sum_rate_bps", "iters", "converged", "channel_hash", "error"]
SUMMARY_COLUMNS = ["variant", "Q", "ris", "P_dbm", "n", "mean_sum_rate_bps", "stderr_sum_rate_bps", "n_converged", "n_failed"]

DEFAULT_VARIANTS = ((2, True), (2, False), (3, True), (3, False))


@dataclass(frozen=True)
class SweepSpec:
    power_grid_dbm: tuple = (0, 5, 10, 15, 20, 25, 30)
    num_realizations: int = 20
    variants: tuple = DEFAULT_VARIANTS
    output_path: str | None = None
    M: int = 8

    def __post_init__(self):
        grid = tuple(float(p) for p in self.power_grid_dbm)
        if not grid or list(grid) != sorted(grid):
            raise ValueError("power grid must be non-empty and sorted")
        if self.num_realizations < 1:
            raise ValueError("num_realizations must be >= 1")
        if not self.variants:
            raise ValueError("at least one variant is required")
        object.__setattr__(self, "power_grid_dbm", grid)
        object.__setattr__(self, "variants", tuple((int(q), bool(r)) for q, r in self.variants))


def desk_spec(**kw) -> SweepSpec:
    return SweepSpec(**kw)


def paper_spec(**kw) -> SweepSpec:
    kw.setdefault("M", 50)
    kw.setdefault("num_realizations", 100)
    return SweepSpec(**kw)


def variant_name(Q: int, ris: bool) -> str:
    return f"Q{Q}_{'ris' if ris else 'noris'}"


def variant_config(base: ScenarioConfig, Q: int, ris: bool, P_dbm: float, M: int) -> ScenarioConfig:
    """Preset geometry for ``Q`` users with the base config's system and algorithm settings."""
    return default_scenario(
        Q,
        K=base.K,
        M=M if ris else 0,
        L=base.L,
        sigma_sq=base.sigma_sq,
        alpha_direct=base.alpha_direct,
        alpha_ris=base.alpha_ris,
        PL0_db=base.PL0_db,
        d0=base.d0,
        seed=base.seed,
        algo=base.algo,
    ).with_power_dbm(P_dbm)


def _fmt(x) -> str:
    if isinstance(x, bool):
        return "1" if x else "0"
    if isinstance(x, float):
        return repr(x)
    return str(x)


def run_cell(task) -> dict:
    """One (variant, P, realization) cell; failures are reported in the row."""
    base, Q, ris, P_dbm, r, M = task
    row = {"variant": variant_name(Q, ris), "Q": Q, "ris": ris, "P_dbm": float(P_dbm), "realization": r}
    try:
        cfg = variant_config(base, Q, ris, P_dbm, M)
        channels = generate_channels(cfg, realization=r)
        row["channel_hash"] = channel_hash(channels)
        res = dsca.run(cfg, channels)
        row.update(sum_rate_bps=res.sum_rate_bps, iters=res.iterations, converged=res.converged, error="")
    except Exception as exc:  # noqa: BLE001 - a failed cell must not stop the sweep
        row.update(sum_rate_bps=float("nan"), iters=-1, converged=False, error=f"{type(exc).__name__}: {exc}")
        row.setdefault("channel_hash", "")
    return row


def run_sweep(spec: SweepSpec, base: ScenarioConfig, jobs: int = 1, progress=None) -> list[dict]:
    tasks = [
        (base, Q, ris, P, r, spec.M)
        for Q, ris in spec.variants
        for P in spec.power_grid_dbm
        for r in range(spec.num_realizations)
    ]
    if jobs <= 1:
        rows = []
        for task in tasks:
            rows.append(run_cell(task))
            if progress:
                progress(len(rows), len(tasks))
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(run_cell, tasks, chunksize=max(1, len(tasks) // (4 * jobs))))
    order = {variant_name(q, r): i for i, (q, r) in enumerate(spec.variants)}
    rows.sort(key=lambda row: (order[row["variant"]], row["P_dbm"], row["realization"]))
    return rows


def summarize(rows: list[dict]) -> list[dict]:
    """Per (variant, P): mean and standard error over successful realizations."""
    groups: dict[tuple, list[dict]] = {}
    for row in rows:
        groups.setdefault((row["variant"], row["P_dbm"]), []).append(row)
    out = []
    for (variant, P), group in groups.items():
        ok = [g["sum_rate_bps"] for g in group if not g["error"]]
        n = len(ok)
        mean = math.fsum(ok) / n if n else float("nan")
        stderr = float(np.std(ok, ddof=1) / math.sqrt(n)) if n > 1 else float("nan")
        out.append(
            {
                "variant": variant,
                "Q": group[0]["Q"],
                "ris": group[0]["ris"],
                "P_dbm": P,
                "n": n,
                "mean_sum_rate_bps": mean,
                "stderr_sum_rate_bps": stderr,
                "n_converged": sum(1 for g in group if g["converged"]),
                "n_failed": len(group) - n,
            }
        )
    return out


def _to_csv(rows, columns) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_fmt(row[c]) for c in columns])
    return buf.getvalue()


def rows_to_csv(rows) -> str:
    return _to_csv(rows, SWEEP_COLUMNS)


def summary_to_csv(summary) -> str:
    return _to_csv(summary, SUMMARY_COLUMNS)


# ---------------------------------------------------------------- validation


@dataclass
class SuiteResult:
    name: str
    passed: bool
    max_error: float
    tol: float
    n: int
    seconds: float = 0.0
    detail: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "passed": self.passed,
            "max_error": self.max_error,
            "tol": self.tol,
            "n": self.n,
            "seconds": round(self.seconds, 3),
            "detail": self.detail,
        }


def _rel_err(a, b) -> float:
    a, b = np.asarray(a), np.asarray(b)
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300))


def random_gradient_instance(seed: int, Q: int = 2, K: int = 4, M: int = 3):
    """A preset-geometry channel draw with a random feasible state."""
    cfg = default_scenario(Q, K=K, M=M, L=min(4, K), seed=seed).with_power_dbm(30)
    rng = np.random.default_rng([seed, 1])
    channels = generate_channels(cfg)
    p = rng.dirichlet(np.ones(K), size=Q) * cfg.P * rng.uniform(0.5, 1.0, size=(Q, 1))
    phi = 0.9 * np.sqrt(rng.uniform(size=(Q, K, M))) * np.exp(2j * np.pi * rng.uniform(size=(Q, K, M)))
    return cfg, channels, NetworkState(p, phi)


def gradient_suite(n: int = 20, tol: float = 1e-5, seed: int = 0, price_sign: float = 1.0) -> SuiteResult:
    """Analytic power prices and RIS gradients against central differences.

    ``price_sign = -1`` flips the analytic prices, which must make the suite fail.
    """
    t0 = time.perf_counter()
    worst = {"power_price": 0.0, "gamma": 0.0, "phi_price": 0.0}
    for i in range(n):
        cfg, ch, state = random_gradient_instance(seed + i)
        for q in range(cfg.Q):
            others = [j for j in range(cfg.Q) if j != q]

            def other_rates_p(pq):
                st = _with_p(state, q, pq)
                return sum(user_rate_nats(j, st, ch, cfg.sigma_sq) for j in others)

            def own_rate_phi(phq):
                return user_rate_nats(q, _with_phi(state, q, phq), ch, cfg.sigma_sq)

            def other_rates_phi(phq):
                st = _with_phi(state, q, phq)
                return sum(user_rate_nats(j, st, ch, cfg.sigma_sq) for j in others)

            pp = price_sign * power_prices(q, state, ch, cfg.sigma_sq)
            gamma, pi_phi = phi_gradients(q, state, ch, cfg.sigma_sq)
            step_p = 1e-6 * cfg.P
            fd_p = fd_gradient_oracle(other_rates_p, state.p[q], step=step_p, relative=False)
            worst["power_price"] = max(worst["power_price"], _rel_err(pp, fd_p))
            worst["gamma"] = max(worst["gamma"], _rel_err(gamma, fd_gradient_oracle(own_rate_phi, state.phi[q])))
            worst["phi_price"] = max(
                worst["phi_price"], _rel_err(price_sign * pi_phi, fd_gradient_oracle(other_rates_phi, state.phi[q]))
            )
    max_err = max(worst.values())
    return SuiteResult("gradients", max_err <= tol, max_err, tol, n, time.perf_counter() - t0, worst)


def _with_p(state: NetworkState, q: int, pq) -> NetworkState:
    p = state.p.copy()
    p[q] = pq
    return NetworkState(p, state.phi)


def _with_phi(state: NetworkState, q: int, phq) -> NetworkState:
    phi = state.phi.copy()
    phi[q] = phq
    return NetworkState(state.p, phi)


def random_power_instance(seed: int, K: int = 8):
    rng = np.random.default_rng([seed, 2])
    budget = float(rng.uniform(1.0, 5.0))
    return PowerSubproblem(
        a=rng.uniform(0.2, 3.0, K),
        b=rng.uniform(0.2, 2.0, K),
        p_prev=rng.dirichlet(np.ones(K)) * budget * rng.uniform(0.3, 1.0),
        prices=-rng.uniform(0.0, 0.5, K),
        tau=float(rng.uniform(0.05, 2.0)),
        budget=budget,
    )


def water_filling_suite(n: int = 50, tol: float = 1e-6, kkt_tol: float = 1e-10, seed: int = 0) -> SuiteResult:
    """Closed-form water-filling against projected gradient; feasibility and slackness."""
    t0 = time.perf_counter()
    worst_dp = worst_feas = worst_cs = 0.0
    for i in range(n):
        sub = random_power_instance(seed + i)
        p, mu = solve_power(sub)
        ref = projected_gradient_power(sub.a, sub.b, sub.p_prev, sub.prices, sub.tau, sub.budget, tol=1e-10)
        worst_dp = max(worst_dp, float(np.max(np.abs(p - ref))) / sub.budget)
        excess = max(float(p.sum()) - sub.budget, float(-p.min()), 0.0) / sub.budget
        worst_feas = max(worst_feas, excess)
        worst_cs = max(worst_cs, abs(mu * (sub.budget - float(p.sum()))) / max(mu * sub.budget, 1e-300))
    # classic limit: zero prices, vanishing proximal term
    classic = PowerSubproblem(np.array([1.0, 0.25]), np.ones(2), np.zeros(2), np.zeros(2), 1e-8, 3.0)
    p_classic, _ = solve_power(classic)
    classic_err = float(np.max(np.abs(p_classic - np.array([3.0, 0.0]))))
    passed = worst_dp <= tol and worst_feas <= kkt_tol and worst_cs <= kkt_tol and classic_err <= 1e-4
    detail = {"max_dp_over_budget": worst_dp, "max_infeasibility": worst_feas, "max_slackness": worst_cs, "classic_limit_err": classic_err}
    return SuiteResult("water_filling", passed, worst_dp, tol, n, time.perf_counter() - t0, detail)


def random_ris_instance(seed: int, K: int = 2, M: int = 1, tau: float = 1.0):
    rng = np.random.default_rng([seed, 3])
    omega = omega_grid(K)
    init = initial_params(M, omega)
    l = rng.standard_normal((K, M)) + 1j * rng.standard_normal((K, M))
    return RisSubproblem(l, lorentzian_response(init, omega), tau, init), omega


def pdd_grid_suite(n: int = 10, tol: float = 1e-3, grid: int = 200, seed: int = 0) -> SuiteResult:
    """PDD objective against an exhaustive grid over the Lorentzian box (K=2, M=1)."""
    t0 = time.perf_counter()
    knobs = PddParams(restarts=3)
    worst_gap = -np.inf
    worst_mod = worst_real = 0.0
    for i in range(n):
        sub, omega = random_ris_instance(seed + i)
        phi, params, _ = pdd_solve(sub, omega, knobs)
        grid_obj, _ = ris_grid_search(sub.linear_term, sub.phi_prev, sub.tau, omega, n=grid)
        worst_gap = max(worst_gap, grid_obj - ris_objective(sub, phi))
        realized = lorentzian_response(params, omega)
        worst_mod = max(worst_mod, float(np.max(np.abs(realized))))
        worst_real = max(worst_real, float(np.max(np.abs(phi - realized))))
    passed = worst_gap <= tol and worst_mod <= 1.0 + 1e-6 and worst_real <= 1e-12
    detail = {"max_grid_minus_pdd": float(worst_gap), "max_modulus": worst_mod, "max_realizability_err": worst_real}
    return SuiteResult("pdd_grid", passed, max(float(worst_gap), 0.0), tol, n, time.perf_counter() - t0, detail)


def bus_suite(seed: int = 0, tol: float = 1e-12, M: int = 8) -> SuiteResult:
    """Message-bus prices and final state against the direct in-process pipeline."""
    t0 = time.perf_counter()
    cfg = default_scenario(2, M=M, seed=seed)
    ch = generate_channels(cfg)
    state, _ = dsca.initial_state(cfg)
    cache = _cache(state, ch, cfg.sigma_sq)
    inboxes = round_exchange(MessageBus(cfg.Q), state, ch, cfg.sigma_sq, 0)
    worst = 0.0
    for q in range(cfg.Q):
        pw, ph = inboxes[q].aggregate(cfg.K, cfg.M)
        worst = max(worst, float(np.max(np.abs(pw - power_prices(q, state, ch, cfg.sigma_sq, cache)))))
        worst = max(worst, float(np.max(np.abs(ph - phi_gradients(q, state, ch, cfg.sigma_sq, cache)[1]))))
    direct = dsca.run(cfg, ch)
    bus = MessageBus(cfg.Q)
    via_bus = dsca.run(cfg, ch, bus=bus)
    same = (
        np.array_equal(direct.state.p, via_bus.state.p)
        and np.array_equal(direct.state.phi, via_bus.state.phi)
        and direct.iterations == via_bus.iterations
    )
    detail = {"max_price_diff": worst, "identical_final_state": bool(same), "iterations": direct.iterations, "rounds": len(bus.log)}
    return SuiteResult("bus_equivalence", worst <= tol and same, worst, tol, 1, time.perf_counter() - t0, detail)


def validate_all(price_sign: float = 1.0) -> dict:
    suites = [gradient_suite(price_sign=price_sign), water_filling_suite(), pdd_grid_suite(), bus_suite()]
    return {"passed": all(s.passed for s in suites), "suites": [s.to_dict() for s in suites]}
