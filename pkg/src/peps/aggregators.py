"""Assembly of the 2L+1 sampled latents into one feature vector.

Latents arrive ordered (x, S_1..S_L, C_1..C_L).  ``concat`` flattens them,
``sum_all`` and ``sum_per_frequency`` are the additive variants, and
``pink`` keeps only a circular window of each frequency's latent whose width
shrinks like 1/f^alpha:

    a_0 = 0,  a_n = max(1, floor(d / f_n^alpha)),  G_n = a_0 + ... + a_n

S_n contributes v[-G_n : -G_{n-1}] and C_n contributes v[G_{n-1} : G_n],
both read modulo d.  Successive windows walk around the latent so every
channel of a shared encoder keeps receiving gradient.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch

from .errors import ConfigurationError, RangeError
from .projection import FrequencySchedule

KINDS = ("concat", "pink", "sum_all", "sum_per_frequency")


def circular_indices(d: int, i: int, j: int) -> list[int]:
    if j <= i:
        raise RangeError(f"empty circular slice [{i}:{j}]")
    return [k % d for k in range(i, j)]


def circular_slice(v, i: int, j: int):
    """(v[i mod d], v[(i+1) mod d], ..., v[(j-1) mod d]) along the last axis."""
    d = v.shape[-1] if hasattr(v, "shape") else len(v)
    idx = circular_indices(d, i, j)
    if isinstance(v, torch.Tensor):
        return v[..., torch.as_tensor(idx, dtype=torch.long)]
    if isinstance(v, np.ndarray):
        return v[..., idx]
    return [v[k] for k in idx]


def allocation_frequencies(schedule: FrequencySchedule) -> tuple[float, ...]:
    # phi/pi: 2, 4, 8, ... for the Fourier schedule, giving a = d/2, d/4, ...
    return tuple(p / math.pi for p in schedule.phi)


@dataclass(frozen=True)
class PinkAllocation:
    d_lat: int
    a: tuple[int, ...]  # a[0] == 0
    G: tuple[int, ...]  # prefix sums, G[0] == 0

    @classmethod
    def build(cls, d_lat: int, schedule: FrequencySchedule, alpha: float = 1.0) -> "PinkAllocation":
        if d_lat < 1:
            raise ConfigurationError(f"latent dimension must be >= 1, got {d_lat}")
        if alpha < 0:
            raise ConfigurationError(f"alpha must be >= 0, got {alpha}")
        a = [0]
        for f in allocation_frequencies(schedule):
            a.append(max(1, math.floor(d_lat / f**alpha)))
        G = list(np.cumsum(a))
        return cls(d_lat, tuple(a), tuple(int(g) for g in G))

    @property
    def L(self) -> int:
        return len(self.a) - 1

    def sin_indices(self, n: int) -> list[int]:
        d = self.d_lat
        return circular_indices(d, d - self.G[n], d - self.G[n - 1])

    def cos_indices(self, n: int) -> list[int]:
        return circular_indices(self.d_lat, self.G[n - 1], self.G[n])


def pink_dims(d_lat: int, schedule: FrequencySchedule, alpha: float = 1.0) -> int:
    alloc = PinkAllocation.build(d_lat, schedule, alpha)
    return d_lat + 2 * sum(alloc.a[1:])


@dataclass(frozen=True)
class AggregatorSpec:
    kind: str = "concat"
    alpha: float = 1.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigurationError(f"unknown aggregator {self.kind!r}; expected one of {KINDS}")
        if self.alpha < 0:
            raise ConfigurationError(f"alpha must be >= 0, got {self.alpha}")

    def allocation(self, d_lat: int, schedule: FrequencySchedule) -> PinkAllocation:
        return PinkAllocation.build(d_lat, schedule, self.alpha)

    def output_dim(self, d_lat: int, schedule: FrequencySchedule, include_origin: bool = True) -> int:
        L = schedule.L
        origin = d_lat if include_origin else 0
        if self.kind == "concat":
            return origin + 2 * L * d_lat
        if self.kind == "sum_all":
            return d_lat
        if self.kind == "sum_per_frequency":
            return origin + L * d_lat
        return origin + 2 * sum(self.allocation(d_lat, schedule).a[1:])

    def channel_plan(self, d_lat: int, schedule: FrequencySchedule) -> list[list[int] | None]:
        """Channels each point of interest contributes, in (x, S.., C..) order; None means all."""
        L = schedule.L
        if self.kind != "pink":
            return [None] * (2 * L + 1)
        alloc = self.allocation(d_lat, schedule)
        sins = [alloc.sin_indices(n) for n in range(1, L + 1)]
        coss = [alloc.cos_indices(n) for n in range(1, L + 1)]
        return [None, *sins, *coss]


def pink_aggregate(origin, sin_latents, cos_latents, alloc: PinkAllocation):
    """origin ++ S_1 window ++ C_1 window ++ S_2 window ++ ... (origin may be None)."""
    if len(sin_latents) != alloc.L or len(cos_latents) != alloc.L:
        raise ConfigurationError(f"expected {alloc.L} sin and cos latents")
    parts = [] if origin is None else [origin]
    d = alloc.d_lat
    for n in range(1, alloc.L + 1):
        s, c = sin_latents[n - 1], cos_latents[n - 1]
        for v in (s, c):
            if v.shape[-1] != d:
                raise ConfigurationError(f"latent of length {v.shape[-1]} != {d}")
        parts.append(circular_slice(s, d - alloc.G[n], d - alloc.G[n - 1]))
        parts.append(circular_slice(c, alloc.G[n - 1], alloc.G[n]))
    return _cat(parts)


def assemble_pink(parts, L: int, include_origin: bool = True):
    """Interleave already-sliced windows given in (x, S.., C..) order into output order."""
    offset = 1 if include_origin else 0
    out = parts[:offset]
    for n in range(L):
        out += [parts[offset + n], parts[offset + L + n]]
    return _cat(out)


def aggregate(spec: AggregatorSpec, latents, schedule: FrequencySchedule, include_origin: bool = True):
    """Aggregate latents ordered (x, S_1..S_L, C_1..C_L); x omitted when not ``include_origin``."""
    L = schedule.L
    expected = 2 * L + (1 if include_origin else 0)
    if len(latents) != expected:
        raise ConfigurationError(f"expected {expected} latents, got {len(latents)}")
    d = latents[0].shape[-1]
    if any(v.shape[-1] != d for v in latents):
        raise ConfigurationError("latents must share one length")
    origin = latents[0] if include_origin else None
    rest = latents[1:] if include_origin else latents
    sins, coss = rest[:L], rest[L:]
    if spec.kind == "concat":
        return _cat(list(latents))
    if spec.kind == "sum_all":
        total = latents[0]
        for v in latents[1:]:
            total = total + v
        return total
    if spec.kind == "sum_per_frequency":
        parts = [] if origin is None else [origin]
        parts += [s + c for s, c in zip(sins, coss)]
        return _cat(parts)
    return pink_aggregate(origin, sins, coss, spec.allocation(d, schedule))


def _cat(parts):
    if isinstance(parts[0], torch.Tensor):
        return torch.cat(parts, -1)
    if isinstance(parts[0], np.ndarray):
        return np.concatenate(parts, -1)
    return [x for p in parts for x in p]
