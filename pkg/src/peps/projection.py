"""Points of interest, absolute positional encoding and Lissajous curves.

Every function accepts either numpy arrays or torch tensors and answers in
kind, so the same formulas serve the analysis tools and the training graph.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from .errors import ContractError, InputError


@dataclass(frozen=True)
class FrequencySchedule:
    """Angular coefficients phi_1..phi_L."""

    phi: tuple[float, ...]

    def __post_init__(self):
        phi = tuple(float(p) for p in self.phi)
        object.__setattr__(self, "phi", phi)
        if any(b <= a for a, b in zip(phi, phi[1:])):
            raise InputError("frequency coefficients must be strictly increasing")

    @classmethod
    def fourier(cls, L: int) -> "FrequencySchedule":
        """phi_i = 2^i * pi for i = 1..L (the INR default)."""
        if L < 0:
            raise InputError(f"L must be >= 0, got {L}")
        return cls(tuple(2.0**i * math.pi for i in range(1, L + 1)))

    @classmethod
    def transformer(cls, L: int, dim: int | None = None) -> "FrequencySchedule":
        """phi_i = 1 / 10000^(i/dim), reordered to increase."""
        dim = dim or 2 * L
        return cls(tuple(sorted(1.0 / 10000.0 ** (i / dim) for i in range(L))))

    @classmethod
    def named(cls, name: str, L: int) -> "FrequencySchedule":
        if name == "fourier":
            return cls.fourier(L)
        if name == "transformer":
            return cls.transformer(L)
        raise InputError(f"unknown frequency schedule {name!r}")

    @property
    def L(self) -> int:
        return len(self.phi)

    @property
    def f(self) -> tuple[float, ...]:
        return tuple(p / (2.0 * math.pi) for p in self.phi)


def _lib(x):
    return torch if isinstance(x, torch.Tensor) else np


def _check_finite(x):
    bad = torch.isnan(x).any().item() if isinstance(x, torch.Tensor) else np.isnan(x).any()
    if bad:
        raise InputError("coordinate contains NaN")


def project(x, schedule: FrequencySchedule):
    """Points of interest (x, S_1..S_L, C_1..C_L) stacked on a new leading axis.

    ``x`` has shape (..., d); the result has shape (2L+1, ..., d) with
    S_i = (1 + sin(x phi_i)) / 2 and C_i = (1 + cos(x phi_i)) / 2.
    """
    xp = _lib(x)
    if xp is np:
        x = np.asarray(x, dtype=np.float64)
    _check_finite(x)
    if x.ndim == 0:
        x = x[None]
    sins = [(1.0 + xp.sin(x * p)) / 2.0 for p in schedule.phi]
    coss = [(1.0 + xp.cos(x * p)) / 2.0 for p in schedule.phi]
    return xp.stack([x, *sins, *coss])


def ape(x, schedule: FrequencySchedule):
    """Raw sin/cos encoding, frequency-major: [sin(x_0 phi_1), cos(x_0 phi_1), sin(x_1 phi_1), ...].

    Output length is 2 * L * d on the last axis.
    """
    xp = _lib(x)
    if xp is np:
        x = np.asarray(x, dtype=np.float64)
    _check_finite(x)
    if x.ndim == 0:
        x = x[None]
    if schedule.L == 0:
        return x[..., :0]
    parts = []
    for p in schedule.phi:
        parts.append(xp.stack([xp.sin(x * p), xp.cos(x * p)], -1))
    out = xp.stack(parts, -3)  # (..., L, d, 2)
    return out.reshape(*out.shape[:-3], -1)


def rotate_ape(encoding, k, schedule: FrequencySchedule, dims: int):
    """Apply the per-axis rotation by k*phi_i to an ``ape`` vector.

    Gives ape(x + k) from ape(x) without re-evaluating the trigonometry.
    """
    enc = np.asarray(encoding, dtype=np.float64).reshape(schedule.L, dims, 2)
    k = np.broadcast_to(np.asarray(k, dtype=np.float64), (dims,))
    ang = np.asarray(schedule.phi)[:, None] * k[None, :]
    s, c = enc[..., 0], enc[..., 1]
    out = np.stack([s * np.cos(ang) + c * np.sin(ang), c * np.cos(ang) - s * np.sin(ang)], -1)
    return out.reshape(-1)


def lissajous_curve(p, phi_min: float = 0.0, phi_max: float = 8 * math.pi, samples: int = 1024):
    """Samples (sin(p_x phi), sin(p_y phi)) for phi uniform on [phi_min, phi_max]."""
    p = np.asarray(p, dtype=np.float64)
    if p.shape != (2,) or not np.all(np.isfinite(p)):
        raise InputError("lissajous_curve expects a finite 2-D point")
    if samples < 2:
        raise InputError("samples must be >= 2")
    if not phi_min < phi_max:
        raise InputError("phi_min must be < phi_max")
    phi = np.linspace(phi_min, phi_max, samples)
    return np.sin(np.outer(phi, p))


def lissajous_gap(p, q, phi_max: float = 16 * math.pi, samples: int = 4096) -> float:
    """Largest pointwise distance between the sampled curves of p and q."""
    a = lissajous_curve(p, 0.0, phi_max, samples)
    b = lissajous_curve(q, 0.0, phi_max, samples)
    return float(np.max(np.abs(a - b)))


def lissajous_distinct(p, q, phi_max: float = 16 * math.pi, samples: int = 4096, tol: float = 1e-6) -> bool:
    if np.array_equal(np.asarray(p, dtype=np.float64), np.asarray(q, dtype=np.float64)):
        raise ContractError("lissajous_distinct compares two distinct points")
    return lissajous_gap(p, q, phi_max, samples) > tol


def save_curve(path, curve) -> None:
    np.savetxt(Path(path), np.asarray(curve), fmt="%.17g", header="x y")
