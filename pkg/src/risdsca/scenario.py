"""Experiment configuration: geometry, pathloss, dimensions and algorithm knobs."""

from __future__ import annotations

import copy
import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any

import numpy as np

__all__ = [
    "ConfigError",
    "PddParams",
    "AlgoParams",
    "DSCA_PDD",
    "ScenarioConfig",
    "dbm_to_watt",
    "watt_to_dbm",
    "pathloss",
    "default_scenario",
    "config_from_dict",
    "config_to_dict",
    "load_config",
    "apply_overrides",
]


class ConfigError(ValueError):
    """Invalid or inconsistent scenario configuration."""

    def __init__(self, message: str, path: str | None = None):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


def dbm_to_watt(dbm):
    return 10.0 ** (np.asarray(dbm, dtype=float) / 10.0) * 1e-3


def watt_to_dbm(watt):
    return 10.0 * np.log10(np.asarray(watt, dtype=float) * 1e3)


def pathloss(pos_a, pos_b, exponent: float, pl0_db: float = -30.0, d0: float = 1.0) -> float:
    """Amplitude pathloss factor between two nodes.

    Returns ``sqrt(PL0 * (d / d0) ** -exponent)`` so that received power
    scales with the power-domain pathloss.
    """
    if exponent <= 0:
        raise ConfigError(f"pathloss exponent must be positive, got {exponent}")
    d = float(np.linalg.norm(np.asarray(pos_a, float) - np.asarray(pos_b, float)))
    if d <= 0.0:
        raise ConfigError("coincident node positions (degenerate geometry)")
    pl = 10.0 ** (pl0_db / 10.0) * (d / d0) ** (-exponent)
    return float(np.sqrt(pl))


@dataclass(frozen=True)
class PddParams:
    rho0: float = 1.0
    c: float = 0.8
    inner_iters: int = 30
    outer_iters: int = 50
    viol_tol: float = 1e-1
    final_tol: float = 1e-6
    inner_tol: float = 1e-8
    lm_iters: int = 50
    restarts: int = 0

    def validate(self):
        if self.rho0 <= 0:
            raise ConfigError("rho0 must be positive", "algo.pdd.rho0")
        if not 0.0 < self.c < 1.0:
            raise ConfigError("c must lie in (0, 1)", "algo.pdd.c")
        if not 0 <= self.restarts <= 3:
            raise ConfigError("restarts must be in 0..3", "algo.pdd.restarts")
        for name in ("inner_iters", "outer_iters", "lm_iters"):
            if getattr(self, name) < 1:
                raise ConfigError("must be >= 1", f"algo.pdd.{name}")


# cheaper profile for the per-iteration solves inside D-SCA, which are warm
# started and only need to be accurate near the fixed point
DSCA_PDD = PddParams(inner_iters=3, outer_iters=20, final_tol=1e-4, inner_tol=1e-6)


@dataclass(frozen=True)
class AlgoParams:
    tau: float = 10.0
    alpha0: float = 0.9
    theta: float = 0.1
    fixed_step: bool = False
    eps_term: float = 1e-3
    max_iter: int = 500
    ordering: str = "jacobi"
    optimize_ris: bool = True
    bisect_tol: float = 1e-12
    # (F_max, omega0_max, |kappa|_max); lower bounds are the open-interval floors
    lorentz_bounds: tuple[float, float, float] = (1.0, float(np.pi), 100.0)
    pdd: PddParams = DSCA_PDD

    def validate(self):
        if self.tau <= 0:
            raise ConfigError("tau must be positive", "algo.tau")
        if not 0.0 < self.alpha0 <= 1.0:
            raise ConfigError("alpha0 must lie in (0, 1]", "algo.alpha0")
        if self.theta < 0 or self.theta * self.alpha0 >= 1.0:
            raise ConfigError("theta must satisfy 0 <= theta*alpha0 < 1", "algo.theta")
        if self.eps_term <= 0:
            raise ConfigError("eps_term must be positive", "algo.eps_term")
        if self.max_iter < 1:
            raise ConfigError("max_iter must be >= 1", "algo.max_iter")
        if self.ordering not in ("jacobi", "gauss_seidel"):
            raise ConfigError("ordering must be 'jacobi' or 'gauss_seidel'", "algo.ordering")
        if self.bisect_tol <= 0:
            raise ConfigError("bisect_tol must be positive", "algo.bisect_tol")
        f_max, w_max, k_max = self.lorentz_bounds
        if not (0 < f_max <= 1.0 and 0 < w_max <= np.pi and k_max > 0):
            raise ConfigError("lorentz_bounds out of range", "algo.lorentz_bounds")
        self.pdd.validate()


@dataclass(frozen=True)
class ScenarioConfig:
    """System dimensions, node geometry, powers and pathloss model.

    Positions are ``(Q, 2)`` arrays in meters; powers are in watts.
    ``M = 0`` is the no-RIS baseline.
    """

    Q: int
    K: int
    M: int
    L: int
    P: float
    sigma_sq: float
    bs_pos: np.ndarray
    ris_pos: np.ndarray
    ue_pos: np.ndarray
    alpha_direct: float = 4.0
    alpha_ris: float = 2.0
    PL0_db: float = -30.0
    d0: float = 1.0
    seed: int = 0
    algo: AlgoParams = field(default_factory=AlgoParams)

    def __post_init__(self):
        for name in ("bs_pos", "ris_pos", "ue_pos"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        self.validate()

    @property
    def ris_enabled(self) -> bool:
        return self.M > 0

    def validate(self):
        if self.Q < 1:
            raise ConfigError("Q must be >= 1", "system.Q")
        if self.K < 1:
            raise ConfigError("K must be >= 1", "system.K")
        if self.M < 0:
            raise ConfigError("M must be >= 0", "system.M")
        if not 1 <= self.L <= self.K:
            raise ConfigError("L must satisfy 1 <= L <= K", "system.L")
        if not self.P > 0:
            raise ConfigError("P must be positive", "system.P_dbm")
        if not self.sigma_sq > 0:
            raise ConfigError("sigma_sq must be positive", "system.sigma_sq_dbm")
        if self.alpha_direct <= 0 or self.alpha_ris <= 0:
            raise ConfigError("pathloss exponents must be positive", "system")
        if self.d0 <= 0:
            raise ConfigError("d0 must be positive", "system.d0")
        if not 0 <= int(self.seed) < 2**64:
            raise ConfigError("seed must be a 64-bit unsigned integer", "seed")
        for name in ("bs_pos", "ris_pos", "ue_pos"):
            arr = getattr(self, name)
            if arr.shape != (self.Q, 2):
                raise ConfigError(f"expected shape ({self.Q}, 2), got {arr.shape}", f"geometry.{name[:-4]}")
        nodes = np.concatenate([self.bs_pos, self.ue_pos] + ([self.ris_pos] if self.M > 0 else []))
        dist = np.linalg.norm(nodes[:, None, :] - nodes[None, :, :], axis=-1)
        if np.any(dist[~np.eye(len(nodes), dtype=bool)] <= 0):
            raise ConfigError("distinct nodes must not coincide", "geometry")
        self.algo.validate()

    def with_power_dbm(self, p_dbm: float) -> "ScenarioConfig":
        return replace(self, P=float(dbm_to_watt(p_dbm)))

    def with_users(self, Q: int) -> "ScenarioConfig":
        return replace(self, Q=Q, bs_pos=self.bs_pos[:Q], ris_pos=self.ris_pos[:Q], ue_pos=self.ue_pos[:Q])


def default_scenario(Q: int = 2, **overrides) -> ScenarioConfig:
    """Preset two- or three-cell layout with d = 20 m.

    Keyword overrides are passed to ``dataclasses.replace``.
    """
    if Q not in (2, 3):
        raise ConfigError(f"unsupported preset Q={Q}; choose 2 or 3", "system.Q")
    d = 20.0
    bs = [(0.0, 0.0), (2 * d, 0.0), (0.0, 4 * d)]
    ris = [(-d / 4, d / 8), (9 * d / 4, d / 8), (-d / 4, 9 * d / 4)]
    ue = [(d / 2, 3 * d / 2), (3 * d / 2, 3 * d / 2), (d / 2, 5 * d / 2)]
    cfg = ScenarioConfig(
        Q=Q,
        K=16,
        M=50,
        L=4,
        P=float(dbm_to_watt(30.0)),
        sigma_sq=float(dbm_to_watt(-80.0)),
        bs_pos=np.array(bs[:Q]),
        ris_pos=np.array(ris[:Q]),
        ue_pos=np.array(ue[:Q]),
        alpha_direct=4.0,
        alpha_ris=2.0,
        PL0_db=-30.0,
        d0=1.0,
    )
    return replace(cfg, **overrides) if overrides else cfg


# -- JSON boundary ------------------------------------------------------------


def config_to_dict(cfg: ScenarioConfig) -> dict[str, Any]:
    algo = asdict(cfg.algo)
    algo["lorentz_bounds"] = list(cfg.algo.lorentz_bounds)
    return {
        "system": {
            "Q": cfg.Q,
            "K": cfg.K,
            "M": cfg.M,
            "L": cfg.L,
            "P_dbm": float(watt_to_dbm(cfg.P)),
            "sigma_sq_dbm": float(watt_to_dbm(cfg.sigma_sq)),
            "PL0_db": cfg.PL0_db,
            "d0": cfg.d0,
            "alpha_direct": cfg.alpha_direct,
            "alpha_ris": cfg.alpha_ris,
            "ris_enabled": cfg.ris_enabled,
        },
        "geometry": {
            "bs": cfg.bs_pos.tolist(),
            "ris": cfg.ris_pos.tolist(),
            "ue": cfg.ue_pos.tolist(),
        },
        "algo": algo,
        "seed": int(cfg.seed),
    }


_SYSTEM_KEYS = {"Q", "K", "M", "L", "P_dbm", "sigma_sq_dbm", "PL0_db", "d0", "alpha_direct", "alpha_ris", "ris_enabled"}


def _build_dataclass(cls, data: dict, path: str):
    if not isinstance(data, dict):
        raise ConfigError("expected an object", path)
    known = {f.name: f for f in fields(cls)}
    kwargs = {}
    for key, value in data.items():
        if key not in known:
            raise ConfigError(f"unknown key '{key}'", f"{path}.{key}")
        if key == "pdd":
            value = _pdd_from(value, f"{path}.pdd")
        elif key == "lorentz_bounds":
            value = tuple(float(v) for v in value)
        kwargs[key] = value
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigError(str(exc), path) from exc


def _pdd_from(data, path: str) -> PddParams:
    if not isinstance(data, dict):
        raise ConfigError("expected an object", path)
    known = {f.name for f in fields(PddParams)}
    for key in data:
        if key not in known:
            raise ConfigError(f"unknown key '{key}'", f"{path}.{key}")
    try:
        return replace(DSCA_PDD, **data)
    except TypeError as exc:
        raise ConfigError(str(exc), path) from exc


def config_from_dict(data: dict[str, Any]) -> ScenarioConfig:
    """Build a config from the JSON layout (``system``, ``geometry``, ``algo``, ``seed``).

    Missing entries fall back to the preset matching ``system.Q``.
    """
    extra = set(data) - {"system", "geometry", "algo", "seed"}
    if extra:
        raise ConfigError(f"unknown top-level keys {sorted(extra)}")
    system = dict(data.get("system", {}))
    for key in system:
        if key not in _SYSTEM_KEYS:
            raise ConfigError(f"unknown key '{key}'", f"system.{key}")
    Q = int(system.get("Q", 2))
    geometry = data.get("geometry", {})
    if Q in (2, 3):
        base = default_scenario(Q)
    elif Q == 1:
        base = default_scenario(2).with_users(1)
    elif {"bs", "ris", "ue"} <= set(geometry):
        base = default_scenario(3)
    else:
        raise ConfigError("geometry.bs/ris/ue required when Q > 3", "geometry")
    for key in geometry:
        if key not in ("bs", "ris", "ue"):
            raise ConfigError(f"unknown key '{key}'", f"geometry.{key}")

    def pos(name):
        if name in geometry:
            return np.asarray(geometry[name], dtype=float)
        return getattr(base, f"{name}_pos")

    M = int(system.get("M", base.M))
    if system.get("ris_enabled", True) is False:
        M = 0
    algo = _build_dataclass(AlgoParams, data.get("algo", {}), "algo")
    return ScenarioConfig(
        Q=Q,
        K=int(system.get("K", base.K)),
        M=M,
        L=int(system.get("L", base.L)),
        P=float(dbm_to_watt(system.get("P_dbm", watt_to_dbm(base.P)))),
        sigma_sq=float(dbm_to_watt(system.get("sigma_sq_dbm", watt_to_dbm(base.sigma_sq)))),
        bs_pos=pos("bs"),
        ris_pos=pos("ris"),
        ue_pos=pos("ue"),
        alpha_direct=float(system.get("alpha_direct", base.alpha_direct)),
        alpha_ris=float(system.get("alpha_ris", base.alpha_ris)),
        PL0_db=float(system.get("PL0_db", base.PL0_db)),
        d0=float(system.get("d0", base.d0)),
        seed=int(data.get("seed", 0)),
        algo=algo,
    )


def load_config(path: str | Path) -> ScenarioConfig:
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config: {exc}", str(path)) from exc
    if not isinstance(data, dict):
        raise ConfigError("config root must be an object", str(path))
    return config_from_dict(data)


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(data: dict[str, Any], overrides: list[str]) -> dict[str, Any]:
    """Apply ``key.path=value`` assignments to a config dictionary (returns a copy)."""
    out = copy.deepcopy(data)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override '{item}' is not of the form key=value")
        key, raw = item.split("=", 1)
        parts = key.strip().split(".")
        node = out
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError("cannot descend into non-object", key)
        node[parts[-1]] = _parse_value(raw)
    return out
