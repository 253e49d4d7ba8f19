"""Rayleigh multipath channels and their per-subcarrier frequency responses."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .scenario import ScenarioConfig, pathloss

__all__ = ["ChannelSet", "dft_taps", "generate_channels", "channel_hash", "dump_channels", "load_channels"]

# spawn-key tags for per-link random sub-streams
_DIRECT, _RIS_UE, _BS_RIS = 0, 1, 2


@dataclass(frozen=True)
class ChannelSet:
    """Frequency-domain channels of one fading block.

    h_direct : (Q, Q, K)    BS j -> UE q
    g_ris    : (Q, Q, K, M) RIS j element m -> UE q
    h_bs_ris : (Q, K, M)    BS j -> its own RIS j element m
    """

    h_direct: np.ndarray
    g_ris: np.ndarray
    h_bs_ris: np.ndarray

    def __post_init__(self):
        for name in ("h_direct", "g_ris", "h_bs_ris"):
            arr = np.array(getattr(self, name), dtype=complex)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        Q, _, K = self.h_direct.shape
        M = self.g_ris.shape[-1]
        if self.h_direct.shape != (Q, Q, K) or self.g_ris.shape != (Q, Q, K, M) or self.h_bs_ris.shape != (Q, K, M):
            raise ValueError("inconsistent channel array shapes")

    @property
    def Q(self) -> int:
        return self.h_direct.shape[0]

    @property
    def K(self) -> int:
        return self.h_direct.shape[2]

    @property
    def M(self) -> int:
        return self.g_ris.shape[-1]

    def cascade(self) -> np.ndarray:
        """Cascaded BS j -> RIS j -> UE q coefficients, shape (Q, Q, K, M)."""
        return self.g_ris * self.h_bs_ris[:, None, :, :]

    def without_ris(self) -> "ChannelSet":
        Q, K = self.Q, self.K
        return ChannelSet(self.h_direct, np.zeros((Q, Q, K, 0), complex), np.zeros((Q, K, 0), complex))


def dft_taps(taps, K: int) -> np.ndarray:
    """K-point frequency response ``h[k] = sum_i taps[i] exp(-2j*pi*(k-1)*i/K)``, k = 1..K.

    Works along the last axis so batches of tap vectors are accepted.
    """
    taps = np.asarray(taps, dtype=complex)
    L = taps.shape[-1]
    if L > K:
        raise ValueError(f"tap count L={L} exceeds subcarrier count K={K}")
    return np.fft.fft(taps, n=K, axis=-1)


def _taps(seed: int, tag: int, j: int, q: int, m: int, realization: int, L: int, size: int = 1) -> np.ndarray:
    ss = np.random.SeedSequence(int(seed), spawn_key=(tag, j, q, m, realization))
    rng = np.random.default_rng(ss)
    re_im = rng.standard_normal((size, L, 2)) * np.sqrt(0.5)
    return re_im[..., 0] + 1j * re_im[..., 1]


def generate_channels(cfg: ScenarioConfig, realization: int = 0, seed: int | None = None) -> ChannelSet:
    """Draw every link of the scenario for one Monte Carlo realization.

    Each link (and each RIS element) has its own random stream keyed on
    ``(link type, j, q, m, realization)`` under the master seed, so adding
    users or elements does not perturb existing draws.
    """
    seed = cfg.seed if seed is None else seed
    Q, K, M, L = cfg.Q, cfg.K, cfg.M, cfg.L
    pl = dict(pl0_db=cfg.PL0_db, d0=cfg.d0)

    h_direct = np.empty((Q, Q, K), complex)
    g_ris = np.empty((Q, Q, K, M), complex)
    h_bs_ris = np.empty((Q, K, M), complex)
    for j in range(Q):
        for q in range(Q):
            amp = pathloss(cfg.bs_pos[j], cfg.ue_pos[q], cfg.alpha_direct, **pl)
            h_direct[j, q] = amp * dft_taps(_taps(seed, _DIRECT, j, q, 0, realization, L)[0], K)
    if M > 0:
        for j in range(Q):
            amp = pathloss(cfg.bs_pos[j], cfg.ris_pos[j], cfg.alpha_ris, **pl)
            taps = np.concatenate([_taps(seed, _BS_RIS, j, j, m, realization, L) for m in range(M)])
            h_bs_ris[j] = amp * dft_taps(taps, K).T
            for q in range(Q):
                amp = pathloss(cfg.ris_pos[j], cfg.ue_pos[q], cfg.alpha_ris, **pl)
                taps = np.concatenate([_taps(seed, _RIS_UE, j, q, m, realization, L) for m in range(M)])
                g_ris[j, q] = amp * dft_taps(taps, K).T
    return ChannelSet(h_direct, g_ris, h_bs_ris)


def channel_hash(channels: ChannelSet, direct_only: bool = True) -> str:
    """Short digest used to verify paired draws across sweep variants."""
    h = hashlib.sha256(np.ascontiguousarray(channels.h_direct).tobytes())
    if not direct_only:
        h.update(np.ascontiguousarray(channels.g_ris).tobytes())
        h.update(np.ascontiguousarray(channels.h_bs_ris).tobytes())
    return h.hexdigest()[:16]


def _pairs(arr: np.ndarray) -> list:
    return np.stack([arr.real, arr.imag], axis=-1).tolist()


def dump_channels(channels: ChannelSet, path: str | Path) -> None:
    """Write the channel set as JSON with complex values as [re, im] pairs."""
    payload = {
        "Q": channels.Q,
        "K": channels.K,
        "M": channels.M,
        "h_direct": _pairs(channels.h_direct),
        "g_ris": _pairs(channels.g_ris),
        "h_bs_ris": _pairs(channels.h_bs_ris),
    }
    Path(path).write_text(json.dumps(payload))


def load_channels(path: str | Path) -> ChannelSet:
    data = json.loads(Path(path).read_text())

    def unpair(x):
        a = np.asarray(x, dtype=float)
        return a[..., 0] + 1j * a[..., 1]

    Q, K, M = data["Q"], data["K"], data["M"]
    g = unpair(data["g_ris"]) if M else np.zeros((Q, Q, K, 0), complex)
    h = unpair(data["h_bs_ris"]) if M else np.zeros((Q, K, 0), complex)
    return ChannelSet(unpair(data["h_direct"]), g.reshape(Q, Q, K, M), h.reshape(Q, K, M))

