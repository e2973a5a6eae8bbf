"""Learned positional encodings and the PEPS wrapper.

All grid-like encoders share one lattice convention: a coordinate
x in [0, 1] on an axis of resolution r maps to lattice position x * (r - 1)
(inputs are clamped first), the cell is the pair of nodes
floor(u), floor(u) + 1 with the last cell closed on both ends, and corners
are enumerated in lexicographic offset order (axis 0 most significant).
In ``wrap`` mode an axis of r nodes is periodic with period 1 instead.

Multilinear interpolation is expressed as a sparse (batch x nodes) weight
matrix times the node table, which gives the scatter-add backward for free.
"""

from __future__ import annotations

import itertools
import math
from typing import Sequence

import torch
import torch.nn.functional as F
from torch import nn

from .aggregators import AggregatorSpec, assemble_pink, aggregate
from .errors import ConfigurationError
from .numerics import DTYPE, as_tensor
from .projection import FrequencySchedule, ape, project

HASH_PRIMES = (1, 2654435761, 805459861)
INIT_SCALE = 1e-4
_SNAP = 1e-9


def corner_offsets(dims: int) -> torch.Tensor:
    return torch.tensor(list(itertools.product((0, 1), repeat=dims)), dtype=torch.long)


def _as_batch(x) -> tuple[torch.Tensor, bool]:
    x = as_tensor(x)
    single = x.ndim == 1
    return (x[None] if single else x), single


class Encoder(nn.Module):
    """Maps (B, in_dim) coordinates to (B, out_dim) features."""

    in_dim: int
    out_dim: int

    def forward_channels(self, x: torch.Tensor, channels: torch.Tensor) -> torch.Tensor:
        """Only the requested output channels; subclasses skip the rest when they can."""
        return self(x).index_select(1, channels)

    def grid_parameters(self) -> list[nn.Parameter]:
        return [p for n, p in self.named_parameters() if n.endswith("storage")]


class Identity(Encoder):
    def __init__(self, dims: int):
        super().__init__()
        self.in_dim = self.out_dim = dims

    def forward(self, x):
        return x


class PositionalEncoding(Encoder):
    """Raw sin/cos features, optionally prefixed by the coordinate itself."""

    def __init__(self, dims: int, L: int = 10, include_input: bool = True):
        super().__init__()
        self.schedule = FrequencySchedule.fourier(L)
        self.include_input = include_input
        self.in_dim = dims
        self.out_dim = 2 * L * dims + (dims if include_input else 0)

    def forward(self, x):
        enc = ape(x, self.schedule)
        return torch.cat([x, enc], -1) if self.include_input else enc


class _Lattice(Encoder):
    """Cell lookup shared by dense, concatenating and hashed grids."""

    def __init__(self, resolution: Sequence[int], boundary: str = "clamp"):
        super().__init__()
        resolution = tuple(int(r) for r in resolution)
        if boundary not in ("clamp", "wrap"):
            raise ConfigurationError(f"boundary must be 'clamp' or 'wrap', got {boundary!r}")
        lo = 2 if boundary == "clamp" else 1
        if not resolution or any(r < lo for r in resolution):
            raise ConfigurationError(f"grid resolution {resolution} needs every axis >= {lo}")
        self.resolution = resolution
        self.boundary = boundary
        self.in_dim = len(resolution)
        self.register_buffer("_res", torch.tensor(resolution, dtype=torch.long), persistent=False)
        self.register_buffer("_offsets", corner_offsets(self.in_dim), persistent=False)
        strides = [math.prod(resolution[a + 1:]) for a in range(self.in_dim)]
        self.register_buffer("_strides", torch.tensor(strides, dtype=torch.long), persistent=False)

    @property
    def node_count(self) -> int:
        return math.prod(self.resolution)

    def _check_dims(self, x):
        if x.shape[-1] != self.in_dim:
            raise ConfigurationError(f"{self.in_dim}-D grid sampled with {x.shape[-1]}-D coordinates")

    def cell(self, x: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        """Lower cell corner (B, d) and fractional offset in [0, 1] (B, d)."""
        self._check_dims(x)
        res = self._res.to(x.dtype)
        if self.boundary == "clamp":
            u = x.clamp(0.0, 1.0) * (res - 1)
        else:
            u = torch.remainder(x, 1.0) * res
        near = torch.round(u)
        u = torch.where((u - near).abs() < _SNAP, near, u)
        i0 = torch.floor(u)
        if self.boundary == "clamp":
            i0 = torch.minimum(i0, res - 2)
        t = u - i0
        return i0.long(), t

    def corners(self, x: torch.Tensor):
        """Corner lattice coordinates (B, 2^d, d), weights (B, 2^d) and offsets (B, d)."""
        i0, t = self.cell(x)
        c = i0[:, None, :] + self._offsets[None]
        if self.boundary == "wrap":
            c = torch.remainder(c, self._res)
        sel = self._offsets[None].bool()
        w = torch.where(sel, t[:, None, :], 1.0 - t[:, None, :]).prod(-1)
        return c, w, t

    def dense_index(self, c: torch.Tensor) -> torch.Tensor:
        return (c * self._strides).sum(-1)


def _interpolate(table: torch.Tensor, idx: torch.Tensor, w: torch.Tensor) -> torch.Tensor:
    B, n = idx.shape
    rows = torch.arange(B).repeat_interleave(n)
    S = torch.sparse_coo_tensor(
        torch.stack([rows, idx.reshape(-1)]), w.reshape(-1), (B, table.shape[0]), check_invariants=False
    )
    return torch.sparse.mm(S, table)


class FeatureGrid(_Lattice):
    """Dense lattice of learnable latents, sampled by multilinear interpolation."""

    def __init__(self, resolution: Sequence[int], feat_dim: int, boundary: str = "clamp", init_scale: float = INIT_SCALE):
        super().__init__(resolution, boundary)
        if feat_dim < 1:
            raise ConfigurationError(f"feat_dim must be >= 1, got {feat_dim}")
        self.feat_dim = feat_dim
        self.out_dim = feat_dim
        self.storage = nn.Parameter(
            torch.empty(*self.resolution, feat_dim, dtype=DTYPE).uniform_(-init_scale, init_scale)
        )

    @property
    def table(self) -> torch.Tensor:
        return self.storage.view(-1, self.feat_dim)

    def lookup(self, c: torch.Tensor) -> torch.Tensor:
        return self.dense_index(c)

    def forward(self, x):
        c, w, _ = self.corners(x)
        return _interpolate(self.table, self.lookup(c), w)

    def forward_channels(self, x, channels):
        c, w, _ = self.corners(x)
        return _interpolate(self.table.index_select(1, channels), self.lookup(c), w)


class ConcatGrid(FeatureGrid):
    """Returns the 2^d corner latents of the cell side by side, uninterpolated."""

    def __init__(self, resolution, feat_dim, boundary="clamp", init_scale=INIT_SCALE):
        super().__init__(resolution, feat_dim, boundary, init_scale)
        self.out_dim = 2**self.in_dim * feat_dim

    def forward(self, x):
        c, _, _ = self.corners(x)
        return F.embedding(self.lookup(c), self.table).reshape(x.shape[0], -1)

    forward_channels = Encoder.forward_channels


def spatial_hash(c: torch.Tensor, table_size: int) -> torch.Tensor:
    """(XOR_a c_a * prime_a) mod T with 32-bit wraparound."""
    if c.shape[-1] > len(HASH_PRIMES):
        raise ConfigurationError(f"spatial hash supports up to {len(HASH_PRIMES)} dimensions")
    h = torch.zeros(c.shape[:-1], dtype=torch.long)
    for a in range(c.shape[-1]):
        h = h ^ ((c[..., a] * HASH_PRIMES[a]) & 0xFFFFFFFF)
    return h % table_size


class HashGrid(FeatureGrid):
    """Multilinear grid whose nodes are stored in a (T, k) table.

    ``indexing="auto"`` uses the collision-free dense index whenever the
    lattice fits in the table and hashes otherwise; "hash" always hashes.
    """

    def __init__(self, resolution, table_size: int, feat_dim: int, indexing: str = "auto",
                 boundary="clamp", init_scale=INIT_SCALE):
        _Lattice.__init__(self, resolution, boundary)
        if table_size < 1 or feat_dim < 1:
            raise ConfigurationError("table_size and feat_dim must be positive")
        if indexing not in ("auto", "hash", "dense"):
            raise ConfigurationError(f"unknown indexing {indexing!r}")
        if indexing == "dense" and self.node_count > table_size:
            raise ConfigurationError(f"{self.node_count} nodes do not fit densely in {table_size} slots")
        self.table_size = table_size
        self.feat_dim = self.out_dim = feat_dim
        self.injective = indexing == "dense" or (indexing == "auto" and self.node_count <= table_size)
        self.storage = nn.Parameter(torch.empty(table_size, feat_dim, dtype=DTYPE).uniform_(-init_scale, init_scale))

    @property
    def table(self):
        return self.storage

    def lookup(self, c):
        if self.injective:
            return self.dense_index(c)
        return spatial_hash(c, self.table_size)


class MultiResolution(Encoder):
    """Per-level latents concatenated coarse to fine."""

    def __init__(self, levels: Sequence[Encoder]):
        super().__init__()
        if not levels:
            raise ConfigurationError("multi-resolution stack needs at least one level")
        dims = {lv.feat_dim for lv in levels}
        if len(dims) != 1:
            raise ConfigurationError(f"levels disagree on feat_dim: {sorted(dims)}")
        if len({lv.in_dim for lv in levels}) != 1:
            raise ConfigurationError("levels disagree on coordinate dimension")
        self.levels = nn.ModuleList(levels)
        self.feat_dim = levels[0].feat_dim
        self.in_dim = levels[0].in_dim
        self.out_dim = sum(lv.out_dim for lv in levels)

    def forward(self, x):
        return torch.cat([lv(x) for lv in self.levels], -1)


def fit_to_length(v: torch.Tensor, k: int) -> torch.Tensor:
    """Truncate, or repeat whole blocks, so the last axis has length k."""
    n = v.shape[-1]
    if n == 0:
        raise ConfigurationError("cannot stretch an empty encoding")
    if n < k:
        v = v.repeat(*([1] * (v.ndim - 1)), math.ceil(k / n))
    return v[..., :k]


class LocalPE(Encoder):
    """Grid latent times the sin/cos encoding of the offset inside its cell."""

    def __init__(self, grid: FeatureGrid, L: int | None = None):
        super().__init__()
        self.grid = grid
        self.in_dim = grid.in_dim
        self.out_dim = grid.feat_dim
        L = L if L is not None else math.ceil(grid.feat_dim / (2 * grid.in_dim))
        if L < 1:
            raise ConfigurationError("local encoding needs at least one frequency")
        self.schedule = FrequencySchedule.fourier(L)

    def local_encoding(self, x):
        _, t = self.grid.cell(x)
        return fit_to_length(ape(t, self.schedule), self.out_dim)

    def forward(self, x):
        return self.grid(x) * self.local_encoding(x)


def tiled_schedule(image_size: int, count: int = 3) -> FrequencySchedule:
    """The ``count`` highest power-of-two frequencies an image of this size can carry."""
    top = int(math.floor(math.log2(image_size)))
    return FrequencySchedule(tuple(2.0**j * math.pi for j in range(top - count + 1, top + 1)))


class NTC(Encoder):
    """Concatenation grid ++ interpolated grid ++ tiled positional encoding.

    Either grid may already be wrapped (for example in ``PEPS``); the tiled
    term always sees the raw coordinate.
    """

    def __init__(self, concat_grid: Encoder, bi_grid: Encoder, image_size: int, tiled_frequencies: int = 3):
        super().__init__()
        if concat_grid.in_dim != bi_grid.in_dim:
            raise ConfigurationError("NTC grids disagree on coordinate dimension")
        self.concat_grid = concat_grid
        self.bi_grid = bi_grid
        self.image_size = image_size
        self.tiled = FrequencySchedule(()) if tiled_frequencies == 0 else tiled_schedule(image_size, tiled_frequencies)
        self.in_dim = concat_grid.in_dim
        self.out_dim = concat_grid.out_dim + bi_grid.out_dim + 2 * self.tiled.L * self.in_dim

    def forward(self, x):
        return torch.cat([self.concat_grid(x), self.bi_grid(x), ape(x, self.tiled)], -1)


class PEPS(Encoder):
    """Samples a shared inner encoder at every point of interest and aggregates."""

    def __init__(self, inner: Encoder, schedule: FrequencySchedule, aggregator: AggregatorSpec | None = None,
                 include_origin: bool = True):
        super().__init__()
        self.inner = inner
        self.schedule = schedule
        self.aggregator = aggregator or AggregatorSpec("concat")
        self.include_origin = include_origin
        if not include_origin and schedule.L == 0:
            raise ConfigurationError("PEPS without the origin needs at least one frequency")
        self.in_dim = inner.in_dim
        self.d_lat = inner.out_dim
        self.out_dim = self.aggregator.output_dim(self.d_lat, schedule, include_origin)
        plan = self.aggregator.channel_plan(self.d_lat, schedule)
        if not include_origin:
            plan = plan[1:]
        self._plan = [None if ch is None else torch.tensor(ch, dtype=torch.long) for ch in plan]

    def forward(self, x):
        pts = project(x, self.schedule)
        if not self.include_origin:
            pts = pts[1:]
        if self.aggregator.kind == "pink":
            parts = [self.inner(p) if ch is None else self.inner.forward_channels(p, ch)
                     for p, ch in zip(pts, self._plan)]
            return assemble_pink(parts, self.schedule.L, self.include_origin)
        n, B, d = pts.shape
        lat = self.inner(pts.reshape(n * B, d)).reshape(n, B, -1)
        if self.aggregator.kind == "concat":
            return lat.permute(1, 0, 2).reshape(B, -1)
        return aggregate(self.aggregator, list(lat), self.schedule, self.include_origin)


def _apply(enc: Encoder, x):
    xb, single = _as_batch(x)
    out = enc(xb)
    return out[0] if single else out


def grid_sample(grid: FeatureGrid, x):
    return _apply(grid, x)


def concat_grid_sample(grid: FeatureGrid, x):
    """Corner latents of the cell containing x, for any dense or hashed grid."""
    xb, single = _as_batch(x)
    c, _, _ = grid.corners(xb)
    out = F.embedding(grid.lookup(c), grid.table).reshape(xb.shape[0], -1)
    return out[0] if single else out


def hash_sample(cfg: HashGrid, x):
    return _apply(cfg, x)


def multires_sample(levels: Sequence[Encoder], x):
    return _apply(MultiResolution(levels), x)


def lpe_encode(grid: FeatureGrid, x, L: int | None = None):
    return _apply(LocalPE(grid, L), x)


def ntc_encode(grid0: ConcatGrid, grid1: FeatureGrid, x, image_size: int):
    if not isinstance(grid0, ConcatGrid):
        raise ConfigurationError("first NTC grid must be a ConcatGrid")
    return _apply(NTC(grid0, grid1, image_size), x)


def peps_encode(inner: Encoder, x, schedule: FrequencySchedule, aggregator: AggregatorSpec | None = None,
                include_origin: bool = True):
    return _apply(PEPS(inner, schedule, aggregator, include_origin), x)


def parameter_count(module: nn.Module) -> int:
    return sum(p.numel() for p in module.parameters())
