"""Ground-truth signals: images, texture sets and signed distance volumes.

Coordinates live in [0, 1]^d.  For images x[0] runs along the width and
x[1] along the height; pixel (row i, column j) sits at ((j + .5)/W, (i + .5)/H).
Volumes are indexed [ix, iy, iz] with voxel centers at (i + .5)/N.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import FormatError, InputError, UnsupportedVersionError

PNG_MAGIC = b"\x89PNG\r\n\x1a\n"
SDFV_MAGIC = b"SDFV"
SDFV_VERSION = 1


# ---------------------------------------------------------------- images


@dataclass
class ImageSignal:
    values: np.ndarray  # (H, W, 3) float64 in [0, 1]

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim == 2:
            v = np.repeat(v[..., None], 3, axis=2)
        if v.ndim != 3 or v.shape[2] != 3:
            raise InputError(f"image must be (H, W, 3), got {v.shape}")
        if v.size and (v.min() < 0.0 or v.max() > 1.0):
            raise InputError("image values must lie in [0, 1]")
        self.values = v

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def channels(self) -> int:
        return self.values.shape[2]


def _read_ppm(data: bytes) -> np.ndarray:
    pos = 0
    tokens = []
    while len(tokens) < 4:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if pos >= len(data):
            raise FormatError("truncated PPM header", pos)
        if data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        tokens.append(data[start:pos])
    if tokens[0] != b"P6":
        raise FormatError(f"unsupported PPM type {tokens[0]!r}", 0)
    try:
        w, h, maxval = (int(t) for t in tokens[1:])
    except ValueError:
        raise FormatError("malformed PPM header", 0) from None
    if not 0 < maxval < 65536 or w <= 0 or h <= 0:
        raise FormatError("PPM header values out of range", 0)
    pos += 1  # single whitespace before the raster
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    need = w * h * 3 * dtype.itemsize
    if len(data) - pos < need:
        raise FormatError(f"truncated PPM raster: need {need} bytes", len(data))
    raster = np.frombuffer(data, dtype=dtype, count=w * h * 3, offset=pos)
    return raster.reshape(h, w, 3).astype(np.float64) / maxval


def _read_png(path: Path, data: bytes) -> np.ndarray:
    if len(data) < 33:
        raise FormatError("truncated PNG header", len(data))
    bit_depth = data[24]
    if bit_depth == 16:
        import cv2

        arr = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
        if arr is None:
            raise FormatError(f"cannot decode {path}")
        if arr.ndim == 3:
            arr = arr[..., 2::-1] if arr.shape[2] >= 3 else arr[..., 0]
        return arr.astype(np.float64) / 65535.0
    from PIL import Image

    try:
        with Image.open(path) as im:
            im.load()
            im = im.convert("RGB")
            return np.asarray(im, dtype=np.float64) / 255.0
    except (OSError, SyntaxError) as exc:
        raise FormatError(f"cannot decode {path}: {exc}") from exc


def load_image(path) -> ImageSignal:
    path = Path(path)
    data = path.read_bytes()
    if data.startswith(PNG_MAGIC):
        return ImageSignal(_read_png(path, data))
    if data.startswith(b"P6"):
        return ImageSignal(_read_ppm(data))
    raise FormatError(f"{path}: not a PNG or binary PPM file", 0)


def save_image(path, img, bits: int = 8) -> None:
    """Write PNG or PPM (chosen by suffix) with 8 or 16 bits per channel."""
    path = Path(path)
    v = img.values if isinstance(img, ImageSignal) else np.asarray(img, dtype=np.float64)
    if v.ndim == 2:
        v = np.repeat(v[..., None], 3, axis=2)
    if bits not in (8, 16):
        raise InputError("bits must be 8 or 16")
    top = 255 if bits == 8 else 65535
    q = np.rint(np.clip(v, 0.0, 1.0) * top).astype(np.uint8 if bits == 8 else np.uint16)
    suffix = path.suffix.lower()
    if suffix in (".ppm", ".pnm"):
        header = f"P6\n{q.shape[1]} {q.shape[0]}\n{top}\n".encode()
        body = q.astype(">u2").tobytes() if bits == 16 else q.tobytes()
        path.write_bytes(header + body)
    elif suffix == ".png":
        if bits == 16:
            import cv2

            cv2.imwrite(str(path), q[..., ::-1])
        else:
            from PIL import Image

            Image.fromarray(q, "RGB").save(path)
    else:
        raise FormatError(f"unsupported image suffix {suffix!r}")


# ---------------------------------------------------------------- texture sets


@dataclass
class TextureSet:
    """Named RGB layers of one resolution, stacked in name order into 3k channels."""

    layers: dict[str, np.ndarray]
    names: list[str] = field(init=False)
    values: np.ndarray = field(init=False)

    def __post_init__(self):
        if not self.layers:
            raise InputError("texture set needs at least one layer")
        self.names = sorted(self.layers)
        shapes = {ImageSignal(self.layers[n]).values.shape for n in self.names}
        if len(shapes) != 1:
            raise InputError(f"texture layers differ in resolution: {sorted(shapes)}")
        self.values = np.concatenate([ImageSignal(self.layers[n]).values for n in self.names], axis=2)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def channels(self) -> int:
        return self.values.shape[2]

    def layer(self, name: str) -> np.ndarray:
        i = self.names.index(name)
        return self.values[..., 3 * i:3 * i + 3]


def load_texture_set(directory) -> TextureSet:
    """A directory with ``manifest.txt`` (one layer name per line) and ``<name>.png``/``.ppm`` files."""
    directory = Path(directory)
    manifest = directory / "manifest.txt"
    if not manifest.exists():
        raise FormatError(f"{directory}: missing manifest.txt")
    names = [ln.strip() for ln in manifest.read_text().splitlines() if ln.strip() and not ln.startswith("#")]
    layers = {}
    for name in names:
        for suffix in (".png", ".ppm"):
            f = directory / f"{name}{suffix}"
            if f.exists():
                layers[name] = load_image(f).values
                break
        else:
            raise FormatError(f"{directory}: layer {name!r} listed but no image found")
    return TextureSet(layers)


def save_texture_set(directory, tex: TextureSet) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for name in tex.names:
        save_image(directory / f"{name}.png", tex.layer(name))
    (directory / "manifest.txt").write_text("\n".join(tex.names) + "\n")


# ---------------------------------------------------------------- SDF volumes


@dataclass
class SdfVolume:
    values: np.ndarray  # (N, N, N)

    def __post_init__(self):
        v = np.asarray(self.values)
        if v.ndim != 3 or len(set(v.shape)) != 1:
            raise InputError(f"SDF volume must be cubic, got {v.shape}")
        if not np.all(np.isfinite(v)):
            raise InputError("SDF volume contains non-finite values")
        self.values = v

    @property
    def resolution(self) -> int:
        return self.values.shape[0]

    @property
    def channels(self) -> int:
        return 1


def save_volume(path, vol: SdfVolume) -> None:
    n = vol.resolution
    header = SDFV_MAGIC + struct.pack("<III", SDFV_VERSION, n, 0)
    Path(path).write_bytes(header + np.ascontiguousarray(vol.values, dtype="<f4").tobytes())


def load_volume(path) -> SdfVolume:
    data = Path(path).read_bytes()
    if len(data) < 16:
        raise FormatError("truncated SDFV header", len(data))
    if data[:4] != SDFV_MAGIC:
        raise FormatError("bad SDFV magic", 0)
    version, n, _ = struct.unpack_from("<III", data, 4)
    if version != SDFV_VERSION:
        raise UnsupportedVersionError(f"unsupported SDFV version {version}", 4)
    need = 16 + 4 * n**3
    if n == 0 or len(data) != need:
        raise FormatError(f"SDFV payload is {len(data) - 16} bytes, header N={n} implies {need - 16}", 8)
    vals = np.frombuffer(data, dtype="<f4", offset=16).reshape(n, n, n)
    return SdfVolume(vals.copy())


def voxel_centers(n: int, dims: int = 3) -> np.ndarray:
    c = (np.arange(n) + 0.5) / n
    mesh = np.meshgrid(*([c] * dims), indexing="ij")
    return np.stack(mesh, -1).reshape(-1, dims)


@dataclass(frozen=True)
class Shape:
    kind: str
    center: tuple[float, float, float] = (0.5, 0.5, 0.5)
    params: tuple[float, ...] = ()

    def __post_init__(self):
        need = {"sphere": 1, "torus": 2, "box": 3}
        if self.kind not in need:
            raise InputError(f"unknown analytic shape {self.kind!r}")
        if len(self.params) != need[self.kind] or any(p <= 0 for p in self.params):
            raise InputError(f"{self.kind} needs {need[self.kind]} positive parameters, got {self.params}")
        if self.kind == "torus" and self.params[1] >= self.params[0]:
            raise InputError("torus tube radius must be smaller than its ring radius")

    def distance(self, p: np.ndarray) -> np.ndarray:
        q = np.asarray(p, dtype=np.float64) - np.asarray(self.center)
        if self.kind == "sphere":
            return np.linalg.norm(q, axis=-1) - self.params[0]
        if self.kind == "torus":
            R, r = self.params
            ring = np.hypot(q[..., 0], q[..., 1]) - R
            return np.hypot(ring, q[..., 2]) - r
        h = np.asarray(self.params)
        d = np.abs(q) - h
        outside = np.linalg.norm(np.maximum(d, 0.0), axis=-1)
        inside = np.minimum(d.max(axis=-1), 0.0)
        return outside + inside


def sphere(center=(0.5, 0.5, 0.5), radius=0.25) -> Shape:
    return Shape("sphere", tuple(center), (radius,))


def torus(center=(0.5, 0.5, 0.5), ring_radius=0.25, tube_radius=0.1) -> Shape:
    return Shape("torus", tuple(center), (ring_radius, tube_radius))


def box(center=(0.5, 0.5, 0.5), half_extents=(0.25, 0.2, 0.15)) -> Shape:
    return Shape("box", tuple(center), tuple(half_extents))


def analytic_sdf(shape: Shape, resolution: int) -> SdfVolume:
    if resolution < 2:
        raise InputError("volume resolution must be >= 2")
    vals = shape.distance(voxel_centers(resolution)).reshape((resolution,) * 3)
    return SdfVolume(vals)


# ---------------------------------------------------------------- samplers


def _signal_array(signal) -> tuple[np.ndarray, bool]:
    """Spatial array with trailing channel axis, and whether x is (width, height) ordered."""
    if isinstance(signal, SdfVolume):
        return signal.values[..., None], False
    if isinstance(signal, (ImageSignal, TextureSet)):
        return signal.values, True
    raise InputError(f"unsupported signal type {type(signal).__name__}")


def sample_ground_truth(signal, x) -> np.ndarray:
    """Multilinear interpolation of the stored samples under the pixel-center convention.

    ``x`` is (d,) or (n, d); the result is (C,) or (n, C).  Out-of-range
    coordinates clamp to the border.
    """
    arr, image_order = _signal_array(signal)
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    spatial = arr.shape[:-1]
    if x.shape[1] != len(spatial):
        raise InputError(f"{len(spatial)}-D signal sampled with {x.shape[1]}-D coordinates")
    if image_order:
        x = x[:, ::-1]
    n = np.asarray(spatial)
    u = np.clip(x * n - 0.5, 0.0, n - 1)
    i0 = np.minimum(np.floor(u).astype(np.int64), np.maximum(n - 2, 0))
    t = u - i0
    out = np.zeros((x.shape[0], arr.shape[-1]))
    for offs in np.ndindex(*(2,) * len(spatial)):
        o = np.asarray(offs)
        idx = np.minimum(i0 + o, n - 1)
        w = np.prod(np.where(o == 1, t, 1.0 - t), axis=1)
        out += w[:, None] * arr[tuple(idx.T)]
    return out[0] if single else out


def sample_coordinates(rng: np.random.Generator, n: int, shape: tuple[int, ...] | None = None, dims: int = 3) -> np.ndarray:
    """Uniform pixel centers of a (H, W) raster, or uniform points in [0, 1]^dims when ``shape`` is None."""
    if shape is None:
        return rng.random((n, dims))
    h, w = shape
    cols = rng.integers(0, w, n)
    rows = rng.integers(0, h, n)
    return np.stack([(cols + 0.5) / w, (rows + 0.5) / h], -1)


def pixel_centers(height: int, width: int) -> np.ndarray:
    """All pixel centers in row-major order, as (x, y) coordinates."""
    ys, xs = np.meshgrid((np.arange(height) + 0.5) / height, (np.arange(width) + 0.5) / width, indexing="ij")
    return np.stack([xs.ravel(), ys.ravel()], -1)


# ---------------------------------------------------------------- procedural data


def pink_field(size: int, rng: np.random.Generator, alpha: float = 2.0) -> np.ndarray:
    """Zero-mean unit-variance field whose radial power falls like 1/f^alpha."""
    fy = np.fft.fftfreq(size)[:, None]
    fx = np.fft.fftfreq(size)[None, :]
    f = np.sqrt(fx**2 + fy**2)
    f[0, 0] = 1.0
    spec = (rng.standard_normal((size, size)) + 1j * rng.standard_normal((size, size))) / f ** (alpha / 2)
    spec[0, 0] = 0.0
    field_ = np.fft.ifft2(spec).real
    return field_ / field_.std()


def synthetic_natural_image(size: int = 64, seed: int = 0, density: float = 1.0) -> np.ndarray:
    """Occluding coloured disks and boxes over a textured backdrop.

    Object sizes follow a 1/r^3 law, which gives the scale-invariant,
    roughly 1/f^2 power spectrum of natural photographs.
    """
    rng = np.random.default_rng(seed)
    yy, xx = np.meshgrid(np.arange(size) + 0.5, np.arange(size) + 0.5, indexing="ij")
    base = rng.random(3)
    img = base + 0.25 * np.stack([pink_field(size, rng) for _ in range(3)], -1) * rng.random(3)
    rmin, rmax = 1.5, size / 3.0
    count = max(1, int(density * size))
    u = rng.random(count)
    # inverse CDF of p(r) ~ r^-3 on [rmin, rmax]
    radii = 1.0 / np.sqrt(1.0 / rmin**2 - u * (1.0 / rmin**2 - 1.0 / rmax**2))
    radii = np.sort(radii)[::-1]
    shading = pink_field(size, rng, 1.2)
    for r in radii:
        cx, cy = rng.random(2) * size
        colour = rng.random(3)
        if rng.random() < 0.6:
            mask = (xx - cx) ** 2 + (yy - cy) ** 2 <= r * r
        else:
            a = rng.random() * math.pi
            dx, dy = xx - cx, yy - cy
            u1 = dx * math.cos(a) + dy * math.sin(a)
            u2 = -dx * math.sin(a) + dy * math.cos(a)
            mask = (np.abs(u1) <= r) & (np.abs(u2) <= r * (0.3 + 0.7 * rng.random()))
        img[mask] = colour + 0.15 * shading[mask][:, None]
    return np.clip(img, 0.0, 1.0)


def synthetic_texture_set(size: int = 64, seed: int = 0) -> TextureSet:
    rng = np.random.default_rng(seed)
    height = pink_field(size, rng, 2.4)
    gy, gx = np.gradient(height)
    normal = np.stack([-gx * 2.0, -gy * 2.0, np.ones_like(height)], -1)
    normal /= np.linalg.norm(normal, axis=-1, keepdims=True)
    rough = np.clip(0.5 + 0.15 * pink_field(size, rng, 1.5), 0, 1)
    ao = np.clip(0.75 + 0.2 * (height - height.max()) / np.ptp(height), 0, 1)
    return TextureSet({
        "diffuse": synthetic_natural_image(size, seed + 1),
        "normal": normal * 0.5 + 0.5,
        "roughness": np.repeat(rough[..., None], 3, axis=2),
        "ao": np.repeat(ao[..., None], 3, axis=2),
    })
