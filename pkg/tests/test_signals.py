import math

import cv2
import numpy as np
import pytest

from peps.errors import FormatError, InputError, UnsupportedVersionError
from peps.signals import (
    ImageSignal, SdfVolume, TextureSet, analytic_sdf, box, load_image, load_texture_set, load_volume, pixel_centers,
    sample_coordinates, sample_ground_truth, save_image, save_texture_set, save_volume, sphere, synthetic_natural_image,
    synthetic_texture_set, torus, voxel_centers,
)


def random_u8(rng, shape=(9, 13, 3)):
    return rng.integers(0, 256, shape).astype(np.uint8)


@pytest.mark.parametrize("suffix", [".png", ".ppm"])
def test_eight_bit_round_trip(tmp_path, rng, suffix):
    raw = random_u8(rng)
    save_image(tmp_path / f"a{suffix}", raw / 255.0)
    img = load_image(tmp_path / f"a{suffix}")
    assert np.array_equal(np.rint(img.values * 255).astype(np.uint8), raw)
    save_image(tmp_path / f"b{suffix}", img)
    assert (tmp_path / f"a{suffix}").read_bytes() == (tmp_path / f"b{suffix}").read_bytes()


def test_sixteen_bit_png_normalized_by_65535(tmp_path, rng):
    raw = rng.integers(0, 65536, (5, 7, 3)).astype(np.uint16)
    cv2.imwrite(str(tmp_path / "a.png"), raw[..., ::-1])
    assert np.array_equal(load_image(tmp_path / "a.png").values, raw / 65535.0)


def test_sixteen_bit_ppm(tmp_path, rng):
    raw = rng.integers(0, 65536, (4, 6, 3)).astype(np.uint16)
    (tmp_path / "a.ppm").write_bytes(b"P6\n6 4\n65535\n" + raw.astype(">u2").tobytes())
    assert np.array_equal(load_image(tmp_path / "a.ppm").values, raw / 65535.0)
    save_image(tmp_path / "b.ppm", raw / 65535.0, bits=16)
    assert (tmp_path / "b.ppm").read_bytes() == (tmp_path / "a.ppm").read_bytes()


def test_ppm_header_comment(tmp_path):
    (tmp_path / "c.ppm").write_bytes(b"P6\n# made by hand\n1 1\n255\n\xff\x00\x80")
    assert load_image(tmp_path / "c.ppm").values[0, 0].tolist() == [1.0, 0.0, 128 / 255]


@pytest.mark.parametrize("suffix", [".png", ".ppm"])
def test_truncated_image(tmp_path, rng, suffix):
    save_image(tmp_path / f"a{suffix}", random_u8(rng, (32, 32, 3)) / 255.0)
    data = (tmp_path / f"a{suffix}").read_bytes()
    (tmp_path / f"t{suffix}").write_bytes(data[: len(data) // 2])
    with pytest.raises(FormatError):
        load_image(tmp_path / f"t{suffix}")


def test_unknown_format(tmp_path):
    (tmp_path / "x.png").write_bytes(b"GIF89a....")
    with pytest.raises(FormatError) as info:
        load_image(tmp_path / "x.png")
    assert info.value.offset == 0
    with pytest.raises(FormatError):
        save_image(tmp_path / "x.bmp", np.zeros((2, 2, 3)))


def test_image_validation():
    with pytest.raises(InputError):
        ImageSignal(np.full((2, 2, 3), 1.5))
    with pytest.raises(InputError):
        ImageSignal(np.zeros((2, 2, 4)))
    assert ImageSignal(np.zeros((2, 3))).values.shape == (2, 3, 3)


def test_ground_truth_at_pixel_centers_is_exact(rng):
    img = ImageSignal(rng.random((5, 7, 3)))
    got = sample_ground_truth(img, pixel_centers(5, 7))
    assert np.array_equal(got, img.values.reshape(-1, 3))


def test_ground_truth_at_two_by_two_center(rng):
    img = ImageSignal(rng.random((2, 2, 3)))
    assert np.allclose(sample_ground_truth(img, [0.5, 0.5]), img.values.reshape(4, 3).mean(0), atol=1e-15)


def test_ground_truth_x_runs_along_width():
    v = np.zeros((2, 2, 3))
    v[0, 1] = 1.0  # top row, right column
    out = sample_ground_truth(ImageSignal(v), [0.75, 0.25])
    assert out.tolist() == [1.0, 1.0, 1.0]


def test_ground_truth_constant_and_clamped(rng):
    img = ImageSignal(np.full((6, 6, 3), 0.3))
    x = rng.uniform(-0.5, 1.5, (50, 2))
    assert np.allclose(sample_ground_truth(img, x), 0.3, atol=1e-15)


def test_volume_ground_truth_reproduces_voxels(rng):
    vol = SdfVolume(rng.standard_normal((4, 4, 4)))
    assert np.array_equal(sample_ground_truth(vol, voxel_centers(4))[:, 0], vol.values.ravel())
    with pytest.raises(InputError):
        sample_ground_truth(vol, [0.5, 0.5])


def test_sample_coordinates():
    assert sample_coordinates(np.random.default_rng(0), 0).shape == (0, 3)
    a = sample_coordinates(np.random.default_rng(4), 100, (8, 16))
    b = sample_coordinates(np.random.default_rng(4), 100, (8, 16))
    assert np.array_equal(a, b)
    assert np.array_equal(a[:, 0] * 16 - 0.5, np.rint(a[:, 0] * 16 - 0.5))
    assert np.array_equal(a[:, 1] * 8 - 0.5, np.rint(a[:, 1] * 8 - 0.5))
    c = sample_coordinates(np.random.default_rng(4), 100)
    assert c.shape == (100, 3) and c.min() >= 0 and c.max() < 1


def test_sphere_values():
    s = sphere((0.5, 0.5, 0.5), 0.25)
    assert s.distance(np.array([0.5, 0.5, 0.5])) == -0.25
    assert s.distance(np.array([0.5, 0.5, 0.75])) == 0.0
    assert s.distance(np.array([0.0, 0.0, 0.0])) == pytest.approx(math.sqrt(0.75) - 0.25, abs=1e-15)


def test_torus_and_box_values():
    t = torus((0.5, 0.5, 0.5), 0.25, 0.1)
    assert t.distance(np.array([0.75, 0.5, 0.5])) == pytest.approx(-0.1)
    assert t.distance(np.array([0.5, 0.5, 0.5])) == pytest.approx(math.hypot(0.25, 0) - 0.1)
    b = box((0.5, 0.5, 0.5), (0.25, 0.2, 0.15))
    assert b.distance(np.array([0.5, 0.5, 0.5])) == pytest.approx(-0.15)
    assert b.distance(np.array([0.5, 0.5, 0.75])) == pytest.approx(0.1)


def test_degenerate_shapes():
    with pytest.raises(InputError):
        sphere(radius=0.0)
    with pytest.raises(InputError):
        torus(ring_radius=0.1, tube_radius=0.2)
    with pytest.raises(InputError):
        box(half_extents=(0.1, -0.1, 0.1))
    with pytest.raises(InputError):
        analytic_sdf(sphere(), 1)


@pytest.mark.parametrize("shape,medial", [
    (sphere(), lambda q: np.linalg.norm(q, axis=-1)),
    (torus(), lambda q: np.minimum(np.hypot(np.hypot(q[:, 0], q[:, 1]) - 0.25, q[:, 2]), np.hypot(q[:, 0], q[:, 1]))),
])
def test_eikonal_property(shape, medial):
    n = 128
    vol = analytic_sdf(shape, n).values
    grad = np.stack(np.gradient(vol, 1.0 / n), -1).reshape(-1, 3)
    centers = voxel_centers(n)
    keep = (medial(centers - 0.5) > 4.0 / n) & np.all((centers > 1.5 / n) & (centers < 1 - 1.5 / n), axis=1)
    idx = np.random.default_rng(0).choice(np.nonzero(keep)[0], 1000, replace=False)
    assert np.abs(np.linalg.norm(grad[idx], axis=1) - 1).max() < 5e-2


def test_volume_round_trip(tmp_path):
    vol = analytic_sdf(torus(), 8)
    save_volume(tmp_path / "a.sdfv", vol)
    back = load_volume(tmp_path / "a.sdfv")
    assert np.array_equal(back.values, vol.values.astype("<f4"))
    save_volume(tmp_path / "b.sdfv", back)
    assert (tmp_path / "a.sdfv").read_bytes() == (tmp_path / "b.sdfv").read_bytes()
    assert (tmp_path / "a.sdfv").read_bytes()[:4] == b"SDFV"


def test_volume_errors(tmp_path):
    save_volume(tmp_path / "a.sdfv", analytic_sdf(sphere(), 4))
    data = (tmp_path / "a.sdfv").read_bytes()
    cases = {
        "magic": b"XDFV" + data[4:],
        "size": data[:8] + (5).to_bytes(4, "little") + data[12:],
        "short": data[:-4],
        "header": data[:10],
    }
    for name, blob in cases.items():
        (tmp_path / name).write_bytes(blob)
        with pytest.raises(FormatError):
            load_volume(tmp_path / name)
    (tmp_path / "v0").write_bytes(data[:4] + (0).to_bytes(4, "little") + data[8:])
    with pytest.raises(UnsupportedVersionError):
        load_volume(tmp_path / "v0")
    with pytest.raises(InputError):
        SdfVolume(np.zeros((2, 2, 3)))


def test_texture_layers_stack_in_name_order(rng):
    layers = {n: rng.random((4, 4, 3)) for n in ("normal", "ao", "diffuse")}
    a = TextureSet(layers)
    b = TextureSet(dict(reversed(list(layers.items()))))
    assert a.names == ["ao", "diffuse", "normal"]
    assert np.array_equal(a.values, b.values)
    assert np.array_equal(a.layer("diffuse"), layers["diffuse"])
    with pytest.raises(InputError):
        TextureSet({"a": np.zeros((4, 4, 3)), "b": np.zeros((4, 5, 3))})


def test_texture_directory_round_trip(tmp_path):
    tex = synthetic_texture_set(16, 3)
    save_texture_set(tmp_path / "t", tex)
    (tmp_path / "t" / "manifest.txt").write_text("roughness\nao\nnormal\ndiffuse\n")
    back = load_texture_set(tmp_path / "t")
    assert back.names == tex.names
    assert np.abs(back.values - tex.values).max() <= 0.5 / 255 + 1e-12
    (tmp_path / "t" / "manifest.txt").write_text("missing\n")
    with pytest.raises(FormatError):
        load_texture_set(tmp_path / "t")


def test_synthetic_image_is_reproducible():
    a = synthetic_natural_image(32, 7)
    assert a.shape == (32, 32, 3) and a.min() >= 0 and a.max() <= 1
    assert np.array_equal(a, synthetic_natural_image(32, 7))
    assert not np.array_equal(a, synthetic_natural_image(32, 8))
