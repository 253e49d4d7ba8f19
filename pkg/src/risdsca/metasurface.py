"""Lorentzian element responses and the unit-disk projection."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "F_MIN",
    "OMEGA0_MIN",
    "LorentzianParams",
    "omega_grid",
    "lorentzian_response",
    "lorentzian_jacobian",
    "project_unit_disk",
    "initial_params",
    "clip_params",
    "enforce_modulus",
]

F_MIN = 1e-6
OMEGA0_MIN = 1e-6
DEFAULT_BOUNDS = (1.0, float(np.pi), 100.0)


class SingularResponseError(ZeroDivisionError):
    pass


@dataclass(frozen=True)
class LorentzianParams:
    """Per-element oscillator strength, resonance frequency and damping of one RIS."""

    F: np.ndarray
    omega0: np.ndarray
    kappa: np.ndarray

    def __post_init__(self):
        for name in ("F", "omega0", "kappa"):
            arr = np.array(getattr(self, name), dtype=float).reshape(-1)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if not (self.F.shape == self.omega0.shape == self.kappa.shape):
            raise ValueError("F, omega0 and kappa must have equal length")

    @property
    def M(self) -> int:
        return self.F.size

    def as_array(self) -> np.ndarray:
        """Stacked ``(M, 3)`` view in (F, omega0, kappa) column order."""
        return np.stack([self.F, self.omega0, self.kappa], axis=-1)

    @classmethod
    def from_array(cls, theta) -> "LorentzianParams":
        theta = np.asarray(theta, float).reshape(-1, 3)
        return cls(theta[:, 0], theta[:, 1], theta[:, 2])

    def in_bounds(self, bounds=DEFAULT_BOUNDS, tol: float = 0.0) -> bool:
        f_max, w_max, k_max = bounds
        return bool(
            np.all(self.F > 0)
            and np.all(self.F <= f_max + tol)
            and np.all(self.omega0 > 0)
            and np.all(self.omega0 <= w_max + tol)
            and np.all(np.abs(self.kappa) <= k_max + tol)
        )

    def to_dict(self) -> dict:
        return {"F": self.F.tolist(), "omega0": self.omega0.tolist(), "kappa": self.kappa.tolist()}


def omega_grid(K: int) -> np.ndarray:
    """Normalized bin frequencies ``pi * k / K`` for k = 1..K."""
    if K < 1:
        raise ValueError("K must be >= 1")
    return np.pi * np.arange(1, K + 1) / K


def _denominator(theta: np.ndarray, omega: np.ndarray) -> np.ndarray:
    w = omega[:, None]
    return theta[None, :, 1] ** 2 - w**2 + 1j * theta[None, :, 2] * w


def lorentzian_response(params, omega) -> np.ndarray:
    """Reflection coefficients ``F w^2 / (w0^2 - w^2 + j kappa w)``, shape (K, M).

    ``params`` may be a :class:`LorentzianParams` or an ``(M, 3)`` array.
    """
    theta = params.as_array() if isinstance(params, LorentzianParams) else np.asarray(params, float).reshape(-1, 3)
    omega = np.asarray(omega, float)
    den = _denominator(theta, omega)
    if np.any(den == 0):
        raise SingularResponseError("Lorentzian denominator vanishes (omega_k == omega0 with kappa == 0)")
    return theta[None, :, 0] * (omega**2)[:, None] / den


def lorentzian_jacobian(params, omega) -> np.ndarray:
    """Complex derivatives of the response w.r.t. (F, omega0, kappa), shape (K, M, 3)."""
    theta = params.as_array() if isinstance(params, LorentzianParams) else np.asarray(params, float).reshape(-1, 3)
    omega = np.asarray(omega, float)
    den = _denominator(theta, omega)
    w2 = (omega**2)[:, None]
    base = w2 / den
    d_f = base
    d_w0 = -theta[None, :, 0] * base * 2.0 * theta[None, :, 1] / den
    d_kappa = -theta[None, :, 0] * base * 1j * omega[:, None] / den
    return np.stack([d_f, d_w0, d_kappa], axis=-1)


def project_unit_disk(y):
    """Identity inside the closed unit disk, radial projection outside."""
    y = np.asarray(y, dtype=complex)
    mag = np.abs(y)
    out = np.where(mag > 1.0, y / np.where(mag > 1.0, mag, 1.0), y)
    return out if out.ndim else complex(out)


def clip_params(theta: np.ndarray, bounds=DEFAULT_BOUNDS) -> np.ndarray:
    """Project an ``(M, 3)`` parameter array onto the admissible box."""
    f_max, w_max, k_max = bounds
    out = np.array(theta, float, copy=True)
    out[:, 0] = np.clip(out[:, 0], F_MIN, f_max)
    out[:, 1] = np.clip(out[:, 1], OMEGA0_MIN, w_max)
    out[:, 2] = np.clip(out[:, 2], -k_max, k_max)
    return out


def enforce_modulus(theta: np.ndarray, omega: np.ndarray) -> np.ndarray:
    """Shrink F per element so that on-grid ``|phi| <= 1``.

    The response is linear in F, so dividing F by the element's peak
    on-grid modulus lands exactly on the constraint boundary.
    """
    theta = np.array(theta, float, copy=True)
    if theta.size == 0:
        return theta
    peak = np.max(np.abs(lorentzian_response(theta, omega)), axis=0)
    over = peak > 1.0
    theta[over, 0] = np.maximum(theta[over, 0] / peak[over] * (1.0 - 1e-12), F_MIN)
    return theta


def initial_params(M: int, omega, bounds=DEFAULT_BOUNDS) -> LorentzianParams:
    """Resonances spread uniformly over the band, F = 0.5, kappa = 1.

    F is then reduced where needed so the profile satisfies the modulus bound.
    """
    omega = np.asarray(omega, float)
    if M == 0:
        return LorentzianParams(np.empty(0), np.empty(0), np.empty(0))
    w0 = np.linspace(omega[0], omega[-1], M) if M > 1 else np.array([np.median(omega)])
    theta = np.stack([np.full(M, 0.5), w0, np.ones(M)], axis=-1)
    theta = enforce_modulus(clip_params(theta, bounds), omega)
    return LorentzianParams.from_array(theta)
