"""Reconstruction quality and spectral metrics.

Images are float arrays shaped (H, W) or (H, W, C) with values in [0, 1].
Spectral metrics zero-pad each axis to the next power of two; both images
of a comparison always receive the same padding.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.signal import convolve2d

from .errors import InputError

MAG_FLOOR = 1e-10
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5


def _pair(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise InputError(f"shape mismatch: {a.shape} vs {b.shape}")
    return a, b


def _channels(img: np.ndarray) -> list[np.ndarray]:
    if img.ndim == 2:
        return [img]
    if img.ndim == 3:
        return [img[..., c] for c in range(img.shape[2])]
    raise InputError(f"expected a 2-D or 3-D image array, got shape {img.shape}")


def psnr(img_a, img_b, peak: float = 1.0) -> float:
    """20 log10(peak) - 10 log10(MSE); inf for identical inputs."""
    a, b = _pair(img_a, img_b)
    if peak <= 0:
        raise InputError("peak must be positive")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return math.inf
    return 20.0 * math.log10(peak) - 10.0 * math.log10(mse)


def _gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    r = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(r**2) / (2 * sigma**2))
    w = np.outer(g, g)
    return w / w.sum()


def ssim(img_a, img_b, data_range: float = 1.0, k1: float = 0.01, k2: float = 0.03) -> float:
    """Gaussian-windowed SSIM averaged over valid windows and channels."""
    a, b = _pair(img_a, img_b)
    if min(a.shape[:2]) < SSIM_WINDOW:
        raise InputError(f"image smaller than the {SSIM_WINDOW}-pixel SSIM window")
    win = _gaussian_window()
    c1 = (k1 * data_range) ** 2
    c2 = (k2 * data_range) ** 2

    def filt(z):
        return convolve2d(z, win, mode="valid")

    scores = []
    for x, y in zip(_channels(a), _channels(b)):
        mx, my = filt(x), filt(y)
        sxx = filt(x * x) - mx * mx
        syy = filt(y * y) - my * my
        sxy = filt(x * y) - mx * my
        num = (2 * mx * my + c1) * (2 * sxy + c2)
        den = (mx * mx + my * my + c1) * (sxx + syy + c2)
        scores.append(np.mean(num / den))
    return float(np.mean(scores))


def _pow2(n: int) -> int:
    return 1 << max(0, (n - 1).bit_length())


def _spectrum(channel: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    return np.fft.fft2(channel, s=shape)


def _padded_shape(img: np.ndarray) -> tuple[int, int]:
    return _pow2(img.shape[0]), _pow2(img.shape[1])


def lsd(img_a, img_b) -> float:
    """RMS difference of log10 Fourier magnitudes, averaged over channels."""
    a, b = _pair(img_a, img_b)
    shape = _padded_shape(a)
    out = []
    for x, y in zip(_channels(a), _channels(b)):
        la = np.log10(np.maximum(np.abs(_spectrum(x, shape)), MAG_FLOOR))
        lb = np.log10(np.maximum(np.abs(_spectrum(y, shape)), MAG_FLOOR))
        out.append(np.sqrt(np.mean((la - lb) ** 2)))
    return float(np.mean(out))


@dataclass
class RadialSpectrum:
    radii: np.ndarray
    power: np.ndarray
    counts: np.ndarray
    total_power: float
    fitted_alpha: float = math.nan

    def save(self, path) -> None:
        np.savetxt(Path(path), np.column_stack([self.radii, self.power]), fmt="%.10g", header="radius power")


def radial_psd(img) -> RadialSpectrum:
    """Mean power per integer-rounded radius, up to Nyquist.

    Each channel has its mean removed and is zero-padded to a power of two.
    Power is |F|^2 / (H W Hp Wp), so the sum over every frequency bin equals
    the channel variance.
    """
    img = np.asarray(img, dtype=np.float64)
    chans = _channels(img)
    H, W = img.shape[:2]
    Hp, Wp = _padded_shape(img)
    n = max(Hp, Wp)
    fy = np.fft.fftfreq(Hp)[:, None]
    fx = np.fft.fftfreq(Wp)[None, :]
    rad = np.rint(np.sqrt(fx**2 + fy**2) * n).astype(np.int64)
    nyq = n // 2
    keep = rad <= nyq
    power = np.zeros((Hp, Wp))
    for c in chans:
        F = _spectrum(c - c.mean(), (Hp, Wp))
        power += np.abs(F) ** 2 / (H * W * Hp * Wp)
    power /= len(chans)
    counts = np.bincount(rad[keep], minlength=nyq + 1)
    sums = np.bincount(rad[keep], weights=power[keep], minlength=nyq + 1)
    present = counts > 0
    radii = np.nonzero(present)[0].astype(np.float64)
    return RadialSpectrum(radii, sums[present] / counts[present], counts[present], float(power.sum()))


def psd_slope(spec: RadialSpectrum, fit_range: tuple[float, float] | None = None) -> float:
    """alpha of a 1/f^alpha fit; the default range skips DC and the top 10% of radii."""
    if fit_range is None:
        fit_range = (1.0, 0.9 * spec.radii.max())
    lo, hi = fit_range
    sel = (spec.radii >= lo) & (spec.radii <= hi) & (spec.radii > 0)
    if sel.sum() < 2:
        raise InputError(f"fit range {fit_range} holds fewer than two radii")
    p = spec.power[sel]
    if np.all(p <= 0):
        warnings.warn("spectrum has no power in the fit range; alpha undefined", RuntimeWarning, stacklevel=2)
        return math.nan
    slope, _ = np.polyfit(np.log10(spec.radii[sel]), np.log10(np.maximum(p, MAG_FLOOR**2)), 1)
    return float(-slope)


def lpsd(img_a, img_b) -> float:
    """Mean absolute difference of log10 radial power, DC excluded."""
    a, b = _pair(img_a, img_b)
    sa, sb = radial_psd(a), radial_psd(b)
    sel = sa.radii > 0
    la = np.log10(np.maximum(sa.power[sel], MAG_FLOOR**2))
    lb = np.log10(np.maximum(sb.power[sel], MAG_FLOOR**2))
    return float(np.mean(np.abs(la - lb)))


def sdf_iou(pred_volume, gt_volume) -> float:
    """|inside both| / |inside either|, inside meaning a negative value; 1 when both are empty."""
    p, g = _pair(pred_volume, gt_volume)
    pi, gi = p < 0, g < 0
    union = np.count_nonzero(pi | gi)
    if union == 0:
        return 1.0
    return np.count_nonzero(pi & gi) / union


def mape(pred, gt, guard: float = 1e-6) -> float:
    p, g = _pair(pred, gt)
    return float(100.0 * np.mean(np.abs(g - p) / np.maximum(np.abs(g), guard)))
