import itertools
import math

import numpy as np
import pytest
import torch

from peps.aggregators import AggregatorSpec
from peps.encoders import (
    NTC, PEPS, ConcatGrid, FeatureGrid, HashGrid, Identity, LocalPE, MultiResolution, PositionalEncoding,
    concat_grid_sample, grid_sample, hash_sample, lpe_encode, multires_sample, ntc_encode, parameter_count,
    peps_encode, spatial_hash,
)
from peps.errors import ConfigurationError
from peps.numerics import DTYPE, gradient_check
from peps.projection import FrequencySchedule


def nodes(res):
    return np.array(list(itertools.product(*[range(r) for r in res])))


def test_storage_shape_and_count():
    g = FeatureGrid((5, 7), 3)
    assert tuple(g.storage.shape) == (5, 7, 3)
    assert parameter_count(g) == 5 * 7 * 3
    assert g.storage.abs().max().item() <= 1e-4


@pytest.mark.parametrize("res", [(4, 6), (3, 5, 4)])
def test_node_exactness(res):
    g = FeatureGrid(res, 5, init_scale=1.0)
    idx = nodes(res)
    x = idx / (np.array(res) - 1)
    out = grid_sample(g, x)
    assert torch.equal(out, g.storage[tuple(torch.tensor(idx).T)])


def test_cell_center_is_corner_mean():
    g = FeatureGrid((3, 3), 4, init_scale=1.0)
    out = grid_sample(g, [0.25, 0.75])
    corners = g.storage[0:2, 1:3].reshape(4, 4)
    assert torch.allclose(out, corners.mean(0), atol=1e-15, rtol=0)


@pytest.mark.parametrize("dims", [2, 3])
def test_partition_of_unity(dims, rng):
    g = FeatureGrid((5,) * dims, 1)
    _, w, _ = g.corners(torch.tensor(rng.random((200, dims))))
    assert (w.sum(1) - 1).abs().max().item() < 1e-12
    with torch.no_grad():
        g.storage.fill_(1.0)
    assert (grid_sample(g, rng.random((50, dims))) - 1).abs().max().item() < 1e-12


def test_affine_along_each_axis_within_a_cell():
    g = FeatureGrid((4, 4, 4), 3, init_scale=1.0)
    base = np.array([0.4, 0.45, 0.5])
    for a in range(3):
        pts = np.repeat(base[None], 3, 0)
        pts[:, a] += np.array([0.0, 0.05, 0.1])
        f = grid_sample(g, pts)
        assert torch.allclose(f[1], 0.5 * (f[0] + f[2]), atol=1e-14, rtol=0)


def test_out_of_range_is_clamped():
    g = FeatureGrid((4, 4), 2, init_scale=1.0)
    assert torch.equal(grid_sample(g, [-0.5, 1.5]), grid_sample(g, [0.0, 1.0]))


def test_dimension_mismatch():
    with pytest.raises(ConfigurationError):
        grid_sample(FeatureGrid((4, 4), 2), [0.1, 0.2, 0.3])
    with pytest.raises(ConfigurationError):
        FeatureGrid((1, 4), 2)
    with pytest.raises(ConfigurationError):
        FeatureGrid((4, 4), 2, boundary="mirror")


def test_wrap_boundary_is_periodic(rng):
    g = FeatureGrid((4, 5), 3, boundary="wrap", init_scale=1.0)
    x = rng.random((30, 2))
    assert torch.allclose(grid_sample(g, x), grid_sample(g, x + 1.0), atol=1e-12, rtol=0)
    # the far edge reads back node 0 instead of a separate node
    assert torch.allclose(grid_sample(g, [0.999999999999, 0.0]), g.storage[0, 0], atol=1e-10, rtol=0)


def test_concat_grid_length_and_order():
    g = ConcatGrid((6, 6), 12)
    assert g.out_dim == 48
    out = concat_grid_sample(g, [0.3, 0.5])
    assert out.shape == (48,)
    u = np.array([0.3, 0.5]) * 5
    i0 = np.floor(u).astype(int)
    expected = [g.storage[i0[0] + a, i0[1] + b] for a, b in ((0, 0), (0, 1), (1, 0), (1, 1))]
    assert torch.equal(out, torch.cat(expected))


def test_concat_grid_same_cell_same_output():
    g = ConcatGrid((5, 5), 3, init_scale=1.0)
    assert torch.equal(g(torch.tensor([[0.3, 0.3]], dtype=DTYPE)), g(torch.tensor([[0.45, 0.3]], dtype=DTYPE)))


def test_concat_grid_at_far_node_uses_clamped_cell():
    g = ConcatGrid((3, 3), 2, init_scale=1.0)
    out = concat_grid_sample(g, [1.0, 1.0]).view(4, 2)
    # u = (2, 2) lies in the last closed cell, so the node is its (1, 1) corner
    assert torch.equal(out[3], g.storage[2, 2])
    assert torch.equal(out[0], g.storage[1, 1])


def test_hash_grid_injective_equals_dense():
    res = (8, 8, 8)
    dense = FeatureGrid(res, 4, init_scale=1.0)
    h = HashGrid(res, 512, 4, indexing="auto")
    assert h.injective
    with torch.no_grad():
        h.storage.copy_(dense.storage.view(-1, 4))
    x = nodes(res) / 7.0
    assert torch.equal(hash_sample(h, x), grid_sample(dense, x))


def test_hash_indices_in_range_and_deterministic(rng):
    c = torch.tensor(rng.integers(0, 10_000, (1000, 3)))
    h = spatial_hash(c, 97)
    assert h.min() >= 0 and h.max() < 97
    assert torch.equal(h, spatial_hash(c, 97))
    g = HashGrid((64, 64), 128, 2, indexing="hash")
    x = rng.random((10, 2))
    assert torch.equal(hash_sample(g, x), hash_sample(g, x))


def test_hash_collision_shares_one_slot():
    T = 16
    g = HashGrid((16, 16), T, 1, indexing="hash")
    slots = {}
    pair = None
    for c in itertools.product(range(16), range(16)):
        s = int(spatial_hash(torch.tensor(c), T))
        if s in slots:
            pair = (slots[s], c)
            break
        slots[s] = c
    assert pair is not None
    x = torch.tensor(pair, dtype=DTYPE) / 15.0
    g(x).sum().backward()
    slot = int(spatial_hash(torch.tensor(pair[0]), T))
    # both node samples weight 1 on the same slot
    assert g.storage.grad[slot, 0].item() == 2.0
    assert g.storage.grad.sum().item() == 2.0


def test_hash_grid_validation():
    with pytest.raises(ConfigurationError):
        HashGrid((8, 8), 10, 2, indexing="dense")
    with pytest.raises(ConfigurationError):
        HashGrid((8, 8), 10, 2, indexing="cuckoo")
    with pytest.raises(ConfigurationError):
        spatial_hash(torch.zeros(1, 4, dtype=torch.long), 8)


def test_multires():
    levels = [FeatureGrid((r, r), 2, init_scale=0.0) for r in (4, 8, 16)]
    out = multires_sample(levels, [0.3, 0.7])
    assert out.shape == (6,) and not out.any()
    g = FeatureGrid((5, 5), 3, init_scale=1.0)
    assert torch.equal(multires_sample([g], [0.2, 0.9]), grid_sample(g, [0.2, 0.9]))
    with pytest.raises(ConfigurationError):
        MultiResolution([FeatureGrid((4, 4), 2), FeatureGrid((8, 8), 3)])
    with pytest.raises(ConfigurationError):
        MultiResolution([])


def test_lpe_at_cell_origin_masks_like_ape_zero():
    g = FeatureGrid((5, 5), 8, init_scale=1.0)
    out = lpe_encode(g, [0.25, 0.5])
    node = g.storage[1, 2]
    assert torch.equal(out, node * torch.tensor([0.0, 1.0] * 4, dtype=DTYPE))


def test_lpe_zero_latent_and_length():
    g = FeatureGrid((5, 5), 16, init_scale=0.0)
    out = lpe_encode(g, [0.31, 0.77])
    assert out.shape == (16,) and not out.any()
    # odd sizes pad by repeating whole frequency blocks
    enc = LocalPE(FeatureGrid((4, 4), 7), L=1)
    assert enc(torch.rand(3, 2, dtype=DTYPE)).shape == (3, 7)
    with pytest.raises(ConfigurationError):
        LocalPE(FeatureGrid((4, 4), 7), L=0)


def test_ntc_lengths():
    big = NTC(ConcatGrid((32, 32), 12), FeatureGrid((16, 16), 20), image_size=1024)
    assert big.out_dim == 4 * 12 + 20 + 3 * 2 * 2 == 80
    kodak = ntc_encode(ConcatGrid((192, 128), 12), FeatureGrid((96, 64), 20), [0.4, 0.6], image_size=768)
    assert kodak.shape == (80,)


def test_ntc_zero_grids_leave_only_tiled_encoding():
    x = torch.tensor([[0.123, 0.456]], dtype=DTYPE)
    enc = NTC(ConcatGrid((8, 8), 2, init_scale=0.0), FeatureGrid((4, 4), 3, init_scale=0.0), image_size=64)
    out = enc(x)[0]
    assert not out[:11].any()
    phi = [2.0**j * math.pi for j in (4, 5, 6)]
    expected = [f(x[0, a].item() * p) for p in phi for a in range(2) for f in (math.sin, math.cos)]
    assert out[11:].tolist() == pytest.approx(expected, abs=1e-14)
    with pytest.raises(ConfigurationError):
        ntc_encode(FeatureGrid((4, 4), 2), FeatureGrid((4, 4), 2), [0.1, 0.1], 64)


def test_peps_concat_length_law(rng):
    for _ in range(50):
        d_lat = int(rng.integers(1, 20))
        L = int(rng.integers(0, 6))
        inner = FeatureGrid((4, 4), d_lat)
        out = peps_encode(inner, rng.random((3, 2)), FrequencySchedule.fourier(L))
        assert out.shape == (3, (2 * L + 1) * d_lat)


def test_peps_l0_is_the_inner_encoder():
    g = FeatureGrid((6, 6), 5, init_scale=1.0)
    x = torch.rand(10, 2, dtype=DTYPE)
    assert torch.equal(peps_encode(g, x, FrequencySchedule(())), grid_sample(g, x))


def test_peps_pink_length():
    g = FeatureGrid((6, 6), 8)
    enc = PEPS(g, FrequencySchedule.fourier(3), AggregatorSpec("pink", 1.0))
    assert enc.out_dim == 22
    assert enc(torch.rand(4, 2, dtype=DTYPE)).shape == (4, 22)


def test_peps_concat_layout():
    g = FeatureGrid((6, 6), 3, init_scale=1.0)
    sched = FrequencySchedule.fourier(2)
    x = torch.tensor([[0.3, 0.8]], dtype=DTYPE)
    out = PEPS(g, sched)(x).view(5, 3)
    s1 = (1 + torch.sin(x * sched.phi[0])) / 2
    c2 = (1 + torch.cos(x * sched.phi[1])) / 2
    assert torch.equal(out[0], g(x)[0])
    assert torch.equal(out[1], g(s1)[0])
    assert torch.equal(out[4], g(c2)[0])


@pytest.mark.parametrize("kind", ["sum_all", "sum_per_frequency", "pink"])
def test_peps_without_origin(kind):
    g = FeatureGrid((5, 5), 8)
    enc = PEPS(g, FrequencySchedule.fourier(3), AggregatorSpec(kind), include_origin=False)
    assert enc(torch.rand(2, 2, dtype=DTYPE)).shape == (2, enc.out_dim)
    with pytest.raises(ConfigurationError):
        PEPS(g, FrequencySchedule(()), include_origin=False)


def test_peps_touches_more_cells_than_the_plain_grid():
    x = torch.tensor([[0.37, 0.61]], dtype=DTYPE)
    plain = FeatureGrid((16, 16), 4)
    plain(x).sum().backward()
    shared = FeatureGrid((16, 16), 4)
    PEPS(shared, FrequencySchedule.fourier(3))(x).sum().backward()
    touched = lambda g: int((g.storage.grad.abs().sum(-1) > 0).sum())
    assert touched(shared) > touched(plain) == 4


def test_pink_feeds_every_latent_channel(rng):
    g = FeatureGrid((8, 8), 8)
    enc = PEPS(g, FrequencySchedule.fourier(3), AggregatorSpec("pink"))
    enc(torch.tensor(rng.random((64, 2)))).pow(2).sum().backward()
    per_channel = g.storage.grad.abs().sum((0, 1))
    assert (per_channel > 0).all()


@pytest.mark.parametrize("make", [
    lambda: FeatureGrid((4, 5), 3),
    lambda: FeatureGrid((3, 4, 3), 2),
    lambda: ConcatGrid((4, 4), 2),
    lambda: HashGrid((6, 6), 16, 2, indexing="hash"),
    lambda: LocalPE(FeatureGrid((4, 4), 6)),
    lambda: PEPS(FeatureGrid((5, 5), 8), FrequencySchedule.fourier(2), AggregatorSpec("pink")),
    lambda: NTC(ConcatGrid((6, 6), 2), FeatureGrid((3, 3), 3), image_size=32),
])
def test_encoder_gradients_match_finite_differences(make, rng):
    enc = make()
    with torch.no_grad():
        for p in enc.parameters():
            p.uniform_(-1, 1)
    x = torch.tensor(rng.random((6, enc.in_dim)))
    w = torch.tensor(rng.standard_normal((6, enc.out_dim)))
    err = gradient_check(lambda: (torch.tanh(enc(x)) * w).sum(), list(enc.parameters()), floor=1e-6)
    assert err < 1e-4


def test_reported_dims_match_measured(rng):
    for _ in range(40):
        dims = int(rng.integers(2, 4))
        k = int(rng.integers(1, 9))
        r = int(rng.integers(2, 6))
        choices = [
            Identity(dims),
            PositionalEncoding(dims, int(rng.integers(1, 5))),
            FeatureGrid((r,) * dims, k),
            ConcatGrid((r,) * dims, k),
            HashGrid((r,) * dims, 32, k),
            LocalPE(FeatureGrid((r,) * dims, k)),
        ]
        inner = choices[int(rng.integers(len(choices)))]
        kind = ["concat", "pink", "sum_all", "sum_per_frequency"][int(rng.integers(4))]
        enc = PEPS(inner, FrequencySchedule.fourier(int(rng.integers(0, 5))), AggregatorSpec(kind, float(rng.random() * 2)))
        out = enc(torch.tensor(rng.random((3, dims))))
        assert out.shape == (3, enc.out_dim)
