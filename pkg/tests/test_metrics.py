import math

import numpy as np
import pytest
from scipy.ndimage import gaussian_filter
from skimage.metrics import structural_similarity

from peps.errors import InputError
from peps.metrics import lpsd, lsd, mape, psd_slope, psnr, radial_psd, sdf_iou, ssim
from peps.signals import pink_field


def reference_ssim(a, b):
    return structural_similarity(
        a, b, channel_axis=2 if a.ndim == 3 else None, gaussian_weights=True, sigma=1.5,
        use_sample_covariance=False, data_range=1.0,
    )


def test_psnr_examples():
    img = np.random.default_rng(0).random((8, 8, 3))
    assert psnr(img, img) == math.inf
    assert psnr(np.zeros((4, 4)), np.full((4, 4), 0.1)) == pytest.approx(20.0, abs=1e-9)
    assert psnr(np.zeros((4, 4)), np.ones((4, 4))) == 0.0
    assert psnr(np.zeros((4, 4)), np.full((4, 4), 0.5), peak=2.0) == pytest.approx(20 * math.log10(2) + 10 * math.log10(4))


def test_psnr_decreases_with_mse():
    a = np.zeros((6, 6))
    vals = [psnr(a, np.full_like(a, e)) for e in (0.01, 0.02, 0.1, 0.5)]
    assert all(y < x for x, y in zip(vals, vals[1:]))


def test_shape_mismatch_is_an_input_error():
    a, b = np.zeros((16, 16)), np.zeros((16, 17))
    for fn in (psnr, ssim, lsd, lpsd, sdf_iou):
        with pytest.raises(InputError):
            fn(a, b)
    with pytest.raises(InputError):
        psnr(a, a, peak=0)


def test_ssim_identity_and_inverse(rng):
    img = rng.random((32, 32, 3))
    assert ssim(img, img) == pytest.approx(1.0, abs=1e-12)
    assert ssim(img, 1 - img) < 0.2


@pytest.mark.parametrize("shape", [(32, 40), (24, 24, 3)])
def test_ssim_matches_reference(shape, rng):
    a = gaussian_filter(rng.random(shape), 1.0)
    b = np.clip(a + 0.1 * rng.standard_normal(shape), 0, 1)
    assert ssim(a, b) == pytest.approx(reference_ssim(a, b), abs=1e-9)
    assert ssim(a, b) == pytest.approx(ssim(b, a), abs=1e-12)


def test_ssim_constant_offset_matches_reference():
    a = np.full((16, 16), 0.25)
    b = a + 0.5
    assert ssim(a, b) == pytest.approx(reference_ssim(a, b), abs=1e-12)
    # luminance term only: (2 mu_a mu_b + c1) / (mu_a^2 + mu_b^2 + c1)
    c1 = 0.01**2
    assert ssim(a, b) == pytest.approx((2 * 0.25 * 0.75 + c1) / (0.25**2 + 0.75**2 + c1), abs=1e-12)


def test_ssim_window_too_large():
    with pytest.raises(InputError):
        ssim(np.zeros((10, 30)), np.zeros((10, 30)))


def test_lsd(rng):
    img = rng.random((64, 64, 3))
    assert lsd(img, img) == 0.0
    assert lsd(img, 2 * img) == pytest.approx(math.log10(2), abs=1e-6)
    blurred = gaussian_filter(img, (1.5, 1.5, 0))
    assert lsd(img, blurred) > 0
    assert lsd(img, blurred) == lsd(blurred, img)


def test_lpsd(rng):
    img = rng.random((64, 64))
    assert lpsd(img, img) == 0.0
    assert lpsd(img, 2 * img) == pytest.approx(2 * math.log10(2), abs=1e-9)
    other = rng.random((64, 64))
    assert lpsd(img, other) > 0
    assert lpsd(img, other) == lpsd(other, img)


def test_radial_psd_parseval(rng):
    img = rng.random((48, 40, 3))
    spec = radial_psd(img)
    variance = np.mean([img[..., c].var() for c in range(3)])
    assert spec.total_power == pytest.approx(variance, rel=1e-6)
    assert np.all(spec.power >= 0)
    assert np.all(np.diff(spec.radii) > 0)


def test_radial_bins_cover_every_integer_radius():
    spec = radial_psd(np.random.default_rng(1).random((32, 32)))
    assert spec.radii.tolist() == list(range(0, 17))


def test_white_noise_is_flat():
    spec = radial_psd(np.random.default_rng(5).standard_normal((512, 512)))
    assert abs(psd_slope(spec)) < 0.2


@pytest.mark.parametrize("alpha", [1.0, 2.0])
def test_synthesized_power_law_is_recovered(alpha):
    field = pink_field(256, np.random.default_rng(2), alpha)
    assert psd_slope(radial_psd(field)) == pytest.approx(alpha, abs=0.15)


def test_constant_image_has_undefined_slope():
    with pytest.warns(RuntimeWarning):
        assert math.isnan(psd_slope(radial_psd(np.full((32, 32), 0.3))))


def test_empty_fit_range():
    spec = radial_psd(np.random.default_rng(0).random((32, 32)))
    with pytest.raises(InputError):
        psd_slope(spec, (100.0, 200.0))


def test_spectrum_file(tmp_path, rng):
    spec = radial_psd(rng.random((16, 16)))
    spec.save(tmp_path / "s.txt")
    back = np.loadtxt(tmp_path / "s.txt")
    assert back.shape == (len(spec.radii), 2)


def test_iou():
    inside = -np.ones((4, 4, 4))
    assert sdf_iou(inside, inside) == 1.0
    a = np.ones((4, 4, 4))
    b = np.ones((4, 4, 4))
    a[:2] = -1
    b[2:] = -1
    assert sdf_iou(a, b) == 0.0
    # equal boxes overlapping in half their volume: 8 / (16 + 16 - 8)
    a = np.ones((4, 4, 4))
    b = np.ones((4, 4, 4))
    a[0:2, 0:2] = -1
    b[1:3, 0:2] = -1
    assert sdf_iou(a, b) == pytest.approx(1 / 3)
    assert sdf_iou(np.ones((2, 2, 2)), np.ones((2, 2, 2))) == 1.0


def test_iou_depends_only_on_signs(rng):
    a = rng.standard_normal((8, 8, 8))
    b = rng.standard_normal((8, 8, 8))
    assert sdf_iou(a, b) == sdf_iou(np.tanh(3 * a), b**3)


def test_mape():
    assert mape(np.array([1.0]), np.array([2.0])) == 50.0
    assert mape(np.array([1.0, 2.0]), np.array([1.0, 2.0])) == 0.0
    # the guard keeps an exact zero from dividing by zero
    assert mape(np.array([1e-6]), np.array([0.0])) == pytest.approx(100.0)
