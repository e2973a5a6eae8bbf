"""Figures written next to the CLI's data files.  Always renders off-screen."""

from __future__ import annotations

import math

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

RC = {
    "font.size": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "figure.dpi": 110,
}


def _figure(ncols=1, width=4.2, height=3.0):
    with plt.rc_context(RC):
        fig, axes = plt.subplots(1, ncols, figsize=(width * ncols, height), squeeze=False)
    return fig, axes[0]


def _save(fig, path) -> None:
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def plot_training(rows, metric_name: str, path) -> None:
    """Loss per step, plus the periodic metric when one was logged."""
    steps = np.array([r[0] for r in rows if not math.isnan(r[1])])
    loss = np.array([r[1] for r in rows if not math.isnan(r[1])])
    evals = [(r[0], r[3]) for r in rows if not math.isnan(r[3])]
    fig, (ax0, ax1) = _figure(2)
    if len(steps):
        ax0.semilogy(steps, loss, lw=0.8, color="0.2")
    ax0.set_xlabel("step")
    ax0.set_ylabel("loss")
    if evals:
        e = np.array(evals)
        ax1.plot(e[:, 0], e[:, 1], "o-", ms=3, color="tab:blue")
    ax1.set_xlabel("step")
    ax1.set_ylabel(metric_name)
    _save(fig, path)


def plot_spectrum(spectrum, alpha: float, path, fit_range=None) -> None:
    sel = (spectrum.radii > 0) & (spectrum.power > 0)
    r, p = spectrum.radii[sel], spectrum.power[sel]
    fig, (ax,) = _figure()
    ax.loglog(r, p, ".", ms=3, color="0.3", label="radial power")
    if math.isfinite(alpha) and len(r):
        lo, hi = fit_range or (1.0, 0.9 * r.max())
        fr = r[(r >= lo) & (r <= hi)]
        # anchor the fitted line at the geometric middle of the fit range
        mid = np.sqrt(fr[0] * fr[-1])
        anchor = np.exp(np.interp(np.log(mid), np.log(r), np.log(p)))
        ax.loglog(fr, anchor * (fr / mid) ** -alpha, color="tab:red", label=f"1/f^{alpha:.2f}")
    ax.set_xlabel("radial frequency (cycles per image)")
    ax.set_ylabel("power")
    ax.legend(frameon=False)
    _save(fig, path)


def plot_lissajous(curves: dict[str, np.ndarray], path) -> None:
    fig, (ax,) = _figure(width=3.4, height=3.4)
    for label, c in curves.items():
        ax.plot(c[:, 0], c[:, 1], lw=0.8, label=label)
    ax.set_xlim(-1.05, 1.05)
    ax.set_ylim(-1.05, 1.05)
    ax.set_aspect("equal")
    ax.legend(frameon=False, loc="upper right")
    _save(fig, path)


def plot_sweep(rows: list[dict], metric_name: str, path) -> None:
    """Metric against parameter count, one line per method and resolution."""
    fig, (ax,) = _figure(width=4.8)
    groups: dict[tuple, list[dict]] = {}
    for row in rows:
        groups.setdefault((row["method"], row["resolution"]), []).append(row)
    for (method, res), rs in sorted(groups.items()):
        rs = sorted(rs, key=lambda r: r["params"])
        ax.plot([r["params"] for r in rs], [r[metric_name] for r in rs], "o-", ms=3, label=f"{method} r={res}")
    ax.set_xscale("log")
    ax.set_xlabel("parameters")
    ax.set_ylabel(metric_name)
    ax.legend(frameon=False)
    _save(fig, path)


def plot_reconstruction(pred: np.ndarray, gt: np.ndarray, path) -> None:
    """Side by side: target, prediction and absolute error (first three channels)."""
    fig, axes = _figure(3, width=2.6, height=2.8)
    err = np.abs(pred - gt).mean(-1)
    for ax, img, title in zip(axes, (gt[..., :3], pred[..., :3], err), ("target", "prediction", "|error|")):
        ax.imshow(img, cmap="magma" if img.ndim == 2 else None, interpolation="nearest")
        ax.set_title(title)
        ax.axis("off")
    _save(fig, path)


def plot_sdf_slice(pred: np.ndarray, gt: np.ndarray, path) -> None:
    """Middle z-slice of both volumes with their zero level sets."""
    k = gt.shape[2] // 2
    fig, axes = _figure(2, width=3.0, height=3.0)
    lim = float(np.abs(gt[:, :, k]).max()) or 1.0
    for ax, vol, title in zip(axes, (gt, pred), ("target", "prediction")):
        ax.imshow(vol[:, :, k].T, origin="lower", cmap="RdBu", vmin=-lim, vmax=lim)
        ax.contour(vol[:, :, k].T, levels=[0.0], colors="k", linewidths=0.8)
        ax.set_title(title)
        ax.axis("off")
    _save(fig, path)
