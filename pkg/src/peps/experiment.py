"""Training tasks: batch sampling and full-signal evaluation per signal kind."""

from __future__ import annotations

from importlib import resources
from pathlib import Path

import numpy as np

from . import metrics
from .errors import ConfigurationError, InputError
from .model import INRModel
from .signals import (
    ImageSignal, SdfVolume, Shape, TextureSet, box, load_image, load_texture_set, load_volume, pixel_centers,
    sample_ground_truth, sphere, synthetic_natural_image, synthetic_texture_set, torus, voxel_centers,
)

SHAPES = {"torus": torus, "sphere": sphere, "box": box}


class ImageTask:
    """A single image or a stacked texture set, fitted on (x, y) in [0, 1]^2.

    Training targets are bilinear lookups at uniformly random coordinates;
    evaluation runs on every pixel center with the prediction clipped to [0, 1].
    """

    metric_name = "psnr"
    dims = 2

    def __init__(self, signal: ImageSignal | TextureSet):
        self.signal = signal
        self.height, self.width = signal.values.shape[:2]
        self.channels = signal.values.shape[2]
        self._eval_x = pixel_centers(self.height, self.width)

    def sample(self, rng: np.random.Generator, n: int):
        x = rng.random((n, 2))
        return x, sample_ground_truth(self.signal, x)

    def check_model(self, model: INRModel) -> None:
        if model.encoder.in_dim != 2 or model.mlp.cfg.output_dim != self.channels:
            raise ConfigurationError(
                f"model maps {model.encoder.in_dim}-D to {model.mlp.cfg.output_dim} channels; "
                f"signal is 2-D with {self.channels} channels"
            )

    def reconstruct(self, model: INRModel) -> np.ndarray:
        pred = model.predict(self._eval_x).reshape(self.height, self.width, self.channels)
        return np.clip(pred, 0.0, 1.0)

    def evaluate(self, model: INRModel) -> dict[str, float]:
        self.check_model(model)
        pred = self.reconstruct(model)
        gt = self.signal.values
        out = {
            "psnr": metrics.psnr(pred, gt),
            "ssim": metrics.ssim(pred, gt),
            "lsd": metrics.lsd(pred, gt),
            "lpsd": metrics.lpsd(pred, gt),
        }
        if isinstance(self.signal, TextureSet):
            for i, name in enumerate(self.signal.names):
                sl = slice(3 * i, 3 * i + 3)
                out[f"psnr_{name}"] = metrics.psnr(pred[..., sl], gt[..., sl])
        return out


class SdfTask:
    """Signed distance fitting on [0, 1]^3, scored by interior IoU on an N^3 voxel grid.

    An analytic shape provides exact distances everywhere; a stored volume
    is trilinearly interpolated between voxel centers.
    """

    metric_name = "iou"
    dims = 3
    channels = 1

    def __init__(self, source: Shape | SdfVolume, resolution: int | None = None):
        self.source = source
        if isinstance(source, SdfVolume):
            resolution = resolution or source.resolution
            if resolution != source.resolution:
                raise ConfigurationError(f"volume is {source.resolution}^3, evaluation asked for {resolution}^3")
            self.gt_volume = source.values
        else:
            if not resolution:
                raise ConfigurationError("analytic SDF needs an evaluation resolution")
            self.gt_volume = None
        self.resolution = resolution

    def _truth(self, x):
        if isinstance(self.source, Shape):
            return self.source.distance(x)[:, None]
        return sample_ground_truth(self.source, x)

    def sample(self, rng: np.random.Generator, n: int):
        x = rng.random((n, 3))
        return x, self._truth(x)

    def check_model(self, model: INRModel) -> None:
        if model.encoder.in_dim != 3 or model.mlp.cfg.output_dim != 1:
            raise ConfigurationError(
                f"model maps {model.encoder.in_dim}-D to {model.mlp.cfg.output_dim} channels; SDF needs 3-D to 1"
            )

    def ground_truth(self) -> np.ndarray:
        if self.gt_volume is None:
            n = self.resolution
            self.gt_volume = self.source.distance(voxel_centers(n)).reshape(n, n, n)
        return self.gt_volume

    def reconstruct(self, model: INRModel) -> np.ndarray:
        n = self.resolution
        return model.predict(voxel_centers(n)).reshape(n, n, n)

    def evaluate(self, model: INRModel) -> dict[str, float]:
        self.check_model(model)
        pred, gt = self.reconstruct(model), self.ground_truth()
        return {"iou": metrics.sdf_iou(pred, gt), "mape": metrics.mape(pred, gt)}


def resolve_signal(spec: str, base_dir: Path | None = None):
    """Load the signal a config names.

    ``builtin:<name>`` is a bundled file or texture directory,
    ``synthetic:natural:<size>[:<seed>]`` and ``synthetic:textures:<size>[:<seed>]``
    are generated on the fly, ``analytic:<torus|sphere|box>`` is an exact SDF,
    and anything else is a path (PNG/PPM image, texture directory, or .sdfv volume).
    """
    kind, _, rest = spec.partition(":")
    if kind == "builtin":
        ref = resources.files("peps").joinpath("data").joinpath(rest)
        if ref.is_dir():
            return load_texture_set(Path(str(ref)))
        png = resources.files("peps").joinpath("data").joinpath(f"{rest}.png")
        if not png.is_file():
            raise ConfigurationError(f"no bundled signal named {rest!r}")
        return load_image(Path(str(png)))
    if kind == "synthetic":
        parts = rest.split(":")
        try:
            what, size, seed = parts[0], int(parts[1]), int(parts[2]) if len(parts) > 2 else 0
        except (IndexError, ValueError):
            raise ConfigurationError(f"malformed synthetic signal {spec!r}; expected synthetic:<kind>:<size>[:<seed>]") from None
        if what == "natural":
            return ImageSignal(synthetic_natural_image(size, seed))
        if what == "textures":
            return synthetic_texture_set(size, seed)
        raise ConfigurationError(f"unknown synthetic signal {what!r}")
    if kind == "analytic":
        if rest not in SHAPES:
            raise ConfigurationError(f"unknown analytic shape {rest!r}; expected one of {', '.join(SHAPES)}")
        return SHAPES[rest]()
    path = Path(spec)
    if not path.is_absolute() and not path.exists() and base_dir is not None:
        path = base_dir / path
    if path.is_dir():
        return load_texture_set(path)
    if path.suffix.lower() == ".sdfv":
        return load_volume(path)
    return load_image(path)


def make_task(task: str, signal, eval_resolution: int | None = None):
    """Pair a config task name with a loaded signal, checking they agree."""
    if task == "image":
        if not isinstance(signal, ImageSignal):
            raise ConfigurationError(f"task 'image' needs an image, got {type(signal).__name__}")
        return ImageTask(signal)
    if task == "texture_set":
        if isinstance(signal, ImageSignal):
            signal = TextureSet({"layer0": signal.values})
        if not isinstance(signal, TextureSet):
            raise ConfigurationError(f"task 'texture_set' needs a texture set, got {type(signal).__name__}")
        return ImageTask(signal)
    if task == "sdf":
        if not isinstance(signal, (Shape, SdfVolume)):
            raise ConfigurationError(f"task 'sdf' needs a volume or analytic shape, got {type(signal).__name__}")
        return SdfTask(signal, eval_resolution)
    raise InputError(f"unknown task {task!r}")
