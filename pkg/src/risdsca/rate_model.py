"""Equivalent channels, achievable rates, interference prices and gradients.

Rates are computed internally in nats; ``user_rate`` and ``sum_rate`` report
bps/Hz. All gradients and prices are in nats. Complex gradients follow the
Wirtinger convention ``g = df/dphi*``, so a perturbation ``dphi`` changes
``f`` by ``2 Re(sum(conj(g) * dphi))`` to first order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import ChannelSet

__all__ = [
    "UserState",
    "NetworkState",
    "equivalent_channels",
    "equivalent_channel",
    "snr_and_mui",
    "user_rate",
    "user_rate_nats",
    "sum_rate",
    "power_price_term",
    "power_prices",
    "phi_price_term",
    "own_phi_gradient",
    "phi_gradients",
    "fd_gradient_oracle",
]

LN2 = np.log(2.0)


@dataclass(frozen=True)
class UserState:
    """Variables of one user: powers ``p`` (K,) and reflection profile ``phi`` (K, M)."""

    p: np.ndarray
    phi: np.ndarray


@dataclass(frozen=True)
class NetworkState:
    """All users' variables, ``p`` (Q, K) and ``phi`` (Q, K, M)."""

    p: np.ndarray
    phi: np.ndarray

    @property
    def Q(self) -> int:
        return self.p.shape[0]

    def user(self, q: int) -> UserState:
        return UserState(self.p[q], self.phi[q])

    def replace_user(self, q: int, x: UserState) -> "NetworkState":
        p = self.p.copy()
        phi = self.phi.copy()
        p[q] = x.p
        phi[q] = x.phi
        return NetworkState(p, phi)

    @classmethod
    def from_users(cls, users) -> "NetworkState":
        return cls(np.stack([u.p for u in users]), np.stack([u.phi for u in users]))

    def is_feasible(self, budget, tol: float = 1e-9, mod_tol: float = 1e-6) -> bool:
        budget = np.broadcast_to(np.asarray(budget, float), (self.Q,))
        ok_p = np.all(self.p >= 0) and np.all(self.p.sum(axis=1) <= budget * (1 + tol) + tol)
        ok_phi = self.phi.size == 0 or np.max(np.abs(self.phi)) <= 1.0 + mod_tol
        return bool(ok_p and ok_phi)


def equivalent_channels(channels: ChannelSet, phi: np.ndarray) -> np.ndarray:
    """All equivalent channels ``H[j, q, k]`` (BS j -> UE q) for profiles ``phi`` (Q, K, M)."""
    if channels.M == 0:
        return np.array(channels.h_direct)
    return channels.h_direct + np.einsum("jqkm,jkm->jqk", channels.cascade(), phi)


def equivalent_channel(j: int, q: int, k: int, channels: ChannelSet, phi_j: np.ndarray) -> complex:
    """``h_jq^d[k] + sum_m g_jq[k, m] h_jj[k, m] phi_j[k, m]`` for a single link and subcarrier."""
    v = channels.g_ris[j, q, k] * channels.h_bs_ris[j, k]
    return complex(channels.h_direct[j, q, k] + np.sum(v * np.asarray(phi_j)[k]))


def _gains(H: np.ndarray) -> np.ndarray:
    return H.real**2 + H.imag**2


def snr_and_mui(state: NetworkState, channels: ChannelSet, sigma_sq, H: np.ndarray | None = None):
    """Per-user, per-subcarrier SINR and interference-plus-noise power, each (Q, K)."""
    if H is None:
        H = equivalent_channels(channels, state.phi)
    G = _gains(H)  # G[j, q, k] = |H_jq[k]|^2
    Q = state.Q
    sigma = np.broadcast_to(np.asarray(sigma_sq, float), (Q,))
    rx = G * state.p[:, None, :]  # power from BS j seen at UE q
    own = np.einsum("qqk->qk", rx)
    mui = sigma[:, None] + rx.sum(axis=0) - own
    return own / mui, mui


def user_rate_nats(q: int, state: NetworkState, channels: ChannelSet, sigma_sq) -> float:
    snr, _ = snr_and_mui(state, channels, sigma_sq)
    return float(np.sum(np.log1p(snr[q])))


def user_rate(q: int, state: NetworkState, channels: ChannelSet, sigma_sq) -> float:
    """Achievable rate of user q in bps/Hz, interference treated as noise."""
    return user_rate_nats(q, state, channels, sigma_sq) / LN2


def sum_rate(state: NetworkState, channels: ChannelSet, sigma_sq, nats: bool = False) -> float:
    snr, _ = snr_and_mui(state, channels, sigma_sq)
    total = float(np.sum(np.log1p(snr)))
    return total if nats else total / LN2


def _victim_weight(snr: np.ndarray, mui: np.ndarray) -> np.ndarray:
    # d/dMUI of ln(1 + S/MUI) = -snr / ((1 + snr) MUI)
    return snr / ((1.0 + snr) * mui)


def power_price_term(q: int, j: int, H, snr, mui) -> np.ndarray:
    """Contribution of victim j to user q's power price: d R_j / d p_q (K,)."""
    return -_gains(H[q, j]) * _victim_weight(snr[j], mui[j])


def phi_price_term(q: int, j: int, H, snr, mui, p, cascade) -> np.ndarray:
    """Contribution of victim j to user q's RIS price: d R_j / d conj(phi_q), (K, M)."""
    scale = -_victim_weight(snr[j], mui[j]) * p[q] * H[q, j]
    return scale[:, None] * np.conj(cascade[q, j])


def _aggregate(q: int, Q: int, term, neighbors=None):
    total = None
    for j in range(Q):
        if j == q or (neighbors is not None and j not in neighbors):
            continue
        t = term(j)
        total = t if total is None else total + t
    return total


def power_prices(q: int, state: NetworkState, channels: ChannelSet, sigma_sq, cache=None) -> np.ndarray:
    """Gradient of the other users' rates w.r.t. user q's powers (nats/W), always <= 0."""
    H, snr, mui = cache if cache is not None else _cache(state, channels, sigma_sq)
    total = _aggregate(q, state.Q, lambda j: power_price_term(q, j, H, snr, mui))
    return np.zeros(channels.K) if total is None else total


def own_phi_gradient(q: int, state: NetworkState, channels: ChannelSet, sigma_sq, cache=None) -> np.ndarray:
    """Wirtinger gradient of user q's own rate w.r.t. conj(phi_q), (K, M)."""
    H, snr, mui = cache if cache is not None else _cache(state, channels, sigma_sq)
    v = channels.g_ris[q, q] * channels.h_bs_ris[q]
    scale = state.p[q] / ((1.0 + snr[q]) * mui[q]) * H[q, q]
    return scale[:, None] * np.conj(v)


def phi_gradients(q: int, state: NetworkState, channels: ChannelSet, sigma_sq, cache=None):
    """Return ``(gamma, pi_phi)``: own-rate and other-users' Wirtinger gradients w.r.t. phi_q."""
    cache = cache if cache is not None else _cache(state, channels, sigma_sq)
    H, snr, mui = cache
    gamma = own_phi_gradient(q, state, channels, sigma_sq, cache)
    cascade = channels.cascade()
    total = _aggregate(q, state.Q, lambda j: phi_price_term(q, j, H, snr, mui, state.p, cascade))
    pi_phi = np.zeros_like(gamma) if total is None else total
    return gamma, pi_phi


def _cache(state: NetworkState, channels: ChannelSet, sigma_sq):
    H = equivalent_channels(channels, state.phi)
    snr, mui = snr_and_mui(state, channels, sigma_sq, H)
    return H, snr, mui


def fd_gradient_oracle(f, x, step: float = 1e-6, relative: bool = True):
    """Central-difference gradient of a real scalar function.

    For complex ``x`` the Wirtinger gradient ``(df/dRe + j df/dIm) / 2`` is
    returned; for real ``x`` the ordinary gradient. ``step`` is scaled by
    ``max(1, |x_i|)`` when ``relative`` is set.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    x = np.asarray(x)
    is_complex = np.iscomplexobj(x)
    base = np.array(x, dtype=complex if is_complex else float, copy=True)
    grad = np.zeros_like(base)
    flat = base.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        h = step * max(1.0, abs(flat[i])) if relative else step
        directions = (1.0, 1j) if is_complex else (1.0,)
        for d in directions:
            orig = flat[i]
            flat[i] = orig + h * d
            fp = f(base.copy())
            flat[i] = orig - h * d
            fm = f(base.copy())
            flat[i] = orig
            deriv = (fp - fm) / (2 * h)
            if is_complex:
                gflat[i] += 0.5 * deriv * d
            else:
                gflat[i] = deriv
    return grad
