"""Plain-text experiment configs: ``[section]`` headers followed by ``key = value`` lines.

``#`` and ``;`` start comments.  Every validation error names the file and
line it came from.  Encoders are described by ``[encoder] kind``; setting
``kind = peps`` wraps the ``inner`` encoder in projected sampling, driven by
the ``[aggregator]`` section.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace
from importlib import resources
from pathlib import Path
from typing import Any, Callable

import torch

from .aggregators import KINDS as AGGREGATOR_KINDS
from .aggregators import AggregatorSpec
from .encoders import (
    NTC, PEPS, ConcatGrid, Encoder, FeatureGrid, HashGrid, Identity, LocalPE, MultiResolution, PositionalEncoding,
    parameter_count,
)
from .errors import ConfigurationError
from .model import ACTIVATIONS, LOSSES, MLP, INRModel, MLPConfig, TrainConfig
from .projection import FrequencySchedule

TASKS = ("image", "texture_set", "sdf")
ENCODER_KINDS = (
    "identity", "pe", "bi_grid", "ti_grid", "hash_grid", "concat_grid", "multi_grid", "multi_hash", "lpe", "ntc", "peps",
)
GRID_KINDS = ("bi_grid", "ti_grid", "hash_grid", "concat_grid", "multi_grid", "multi_hash", "lpe", "ntc")
TASK_DIMS = {"image": 2, "texture_set": 2, "sdf": 3}
PRESET_NAMES = ("kodak-gppeps", "kodak-gppeps-desk", "ntc-peps", "ntc-peps-desk", "sdf-grid-peps", "sdf-grid-peps-desk")


@dataclass
class Entry:
    value: str
    line: int


@dataclass
class RawConfig:
    source: str
    sections: dict[str, dict[str, Entry]]
    section_lines: dict[str, int]

    def where(self, section: str, key: str | None = None) -> str:
        line = self.sections[section][key].line if key else self.section_lines.get(section, 0)
        return f"{self.source}:{line}" if line else self.source


def parse_text(text: str, source: str = "<config>") -> RawConfig:
    sections: dict[str, dict[str, Entry]] = {}
    lines: dict[str, int] = {}
    current = None
    for no, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].split(";", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ConfigurationError(f"{source}:{no}: malformed section header {raw.strip()!r}")
            current = line[1:-1].strip()
            if current in sections:
                raise ConfigurationError(f"{source}:{no}: duplicate section [{current}]")
            sections[current] = {}
            lines[current] = no
            continue
        if "=" not in line:
            raise ConfigurationError(f"{source}:{no}: expected 'key = value', got {raw.strip()!r}")
        if current is None:
            raise ConfigurationError(f"{source}:{no}: key outside any [section]")
        key, value = (s.strip() for s in line.split("=", 1))
        if key in sections[current]:
            raise ConfigurationError(f"{source}:{no}: duplicate key {key!r} in [{current}]")
        sections[current][key] = Entry(value, no)
    return RawConfig(source, sections, lines)


# ---------------------------------------------------------------- value parsers


def _int(s: str) -> int:
    return int(s)


def _float(s: str) -> float:
    v = float(s)
    if not math.isfinite(v):
        raise ValueError("must be finite")
    return v


def _bool(s: str) -> bool:
    low = s.lower()
    if low in ("true", "yes", "1", "on"):
        return True
    if low in ("false", "no", "0", "off"):
        return False
    raise ValueError("expected true or false")


def _ints(s: str) -> tuple[int, ...]:
    return tuple(int(p) for p in s.replace("x", ",").split(",") if p.strip())


def _choice(options) -> Callable[[str], str]:
    def parse(s: str) -> str:
        if s not in options:
            raise ValueError(f"expected one of {', '.join(options)}")
        return s
    return parse


def _optional(parse):
    def wrapped(s: str):
        return None if s.lower() in ("", "none", "auto") else parse(s)
    return wrapped


# ---------------------------------------------------------------- typed config


@dataclass
class EncoderSpec:
    kind: str = "bi_grid"
    inner: str | None = None
    resolution: tuple[int, ...] = (16,)
    feat_dim: int = 8
    boundary: str = "clamp"
    table_size: int | None = None
    indexing: str = "auto"
    levels: tuple[int, ...] = ()
    lpe_frequencies: int | None = None
    second_resolution: tuple[int, ...] = ()
    second_feat_dim: int | None = None
    tiled_frequencies: int = 3
    image_size: int | None = None
    pe_frequencies: int = 10
    init_scale: float = 1e-4


@dataclass
class AggregatorSettings:
    kind: str = "concat"
    alpha: float = 1.0
    L: int = 3
    include_origin: bool = True
    schedule: str = "fourier"

    def spec(self) -> AggregatorSpec:
        return AggregatorSpec(self.kind, self.alpha)

    def frequency_schedule(self) -> FrequencySchedule:
        return FrequencySchedule.named(self.schedule, self.L)


@dataclass
class MLPSettings:
    hidden_layers: int = 3
    hidden_width: int = 64
    activation: str = "leaky_relu"
    slope: float = 0.01
    output_dim: int | None = None


@dataclass
class ExperimentConfig:
    task: str
    signal: str
    seed: int = 0
    out: str = "runs/out"
    eval_resolution: int | None = None
    encoder: EncoderSpec = field(default_factory=EncoderSpec)
    aggregator: AggregatorSettings = field(default_factory=AggregatorSettings)
    mlp: MLPSettings = field(default_factory=MLPSettings)
    train: TrainConfig = field(default_factory=TrainConfig)
    source: str = "<config>"

    @property
    def dims(self) -> int:
        return TASK_DIMS[self.task]

    def with_seed(self, seed: int) -> "ExperimentConfig":
        return replace(self, seed=seed, train=replace(self.train, seed=seed))

    def to_dict(self) -> dict[str, dict[str, Any]]:
        """Section -> key -> value, with None entries dropped; round-trips through ``config_from_dict``."""
        def clean(obj):
            return {f.name: getattr(obj, f.name) for f in fields(obj) if getattr(obj, f.name) is not None}
        experiment = {"task": self.task, "signal": self.signal, "seed": self.seed, "out": self.out}
        if self.eval_resolution is not None:
            experiment["eval_resolution"] = self.eval_resolution
        train = clean(self.train)
        train.pop("seed")
        return {
            "experiment": experiment,
            "encoder": clean(self.encoder),
            "aggregator": clean(self.aggregator),
            "mlp": clean(self.mlp),
            "train": train,
        }

    def to_text(self) -> str:
        out = []
        for section, values in self.to_dict().items():
            out.append(f"[{section}]")
            out += [f"{k} = {_render(v)}" for k, v in values.items()]
            out.append("")
        return "\n".join(out)


def _render(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (tuple, list)):
        return ",".join(str(x) for x in v)
    return str(v)


SCHEMA: dict[str, dict[str, Callable[[str], Any]]] = {
    "experiment": {
        "task": _choice(TASKS), "signal": str, "seed": _int, "out": str, "eval_resolution": _optional(_int),
    },
    "encoder": {
        "kind": _choice(ENCODER_KINDS), "inner": _optional(_choice(GRID_KINDS)), "resolution": _ints,
        "feat_dim": _int, "boundary": _choice(("clamp", "wrap")), "table_size": _optional(_int),
        "indexing": _choice(("auto", "hash", "dense")), "levels": _ints, "lpe_frequencies": _optional(_int),
        "second_resolution": _ints, "second_feat_dim": _optional(_int), "tiled_frequencies": _int,
        "image_size": _optional(_int), "pe_frequencies": _int, "init_scale": _float,
    },
    "aggregator": {
        "kind": _choice(AGGREGATOR_KINDS), "alpha": _float, "L": _int, "include_origin": _bool,
        "schedule": _choice(("fourier", "transformer")),
    },
    "mlp": {
        "hidden_layers": _int, "hidden_width": _int, "activation": _choice(ACTIVATIONS), "slope": _float,
        "output_dim": _optional(_int),
    },
    "train": {
        "loss": _choice(LOSSES), "lr": _float, "grid_lr": _optional(_float), "schedule": _choice(("constant", "cosine")),
        "min_lr_ratio": _float, "batch_size": _int, "epochs": _int, "batches_per_epoch": _int, "eval_every": _int,
    },
}
REQUIRED = {"experiment": ("task", "signal"), "encoder": ("kind",)}


def _typed(raw: RawConfig) -> dict[str, dict[str, Any]]:
    for name in raw.sections:
        if name not in SCHEMA:
            raise ConfigurationError(f"{raw.where(name)}: unknown section [{name}]")
    for name, keys in REQUIRED.items():
        if name not in raw.sections:
            raise ConfigurationError(f"{raw.source}: missing required section [{name}]")
        for key in keys:
            if key not in raw.sections[name]:
                raise ConfigurationError(f"{raw.where(name)}: [{name}] is missing required key {key!r}")
    out: dict[str, dict[str, Any]] = {}
    for name, entries in raw.sections.items():
        out[name] = {}
        for key, entry in entries.items():
            parser = SCHEMA[name].get(key)
            if parser is None:
                raise ConfigurationError(f"{raw.where(name, key)}: unknown key {key!r} in [{name}]")
            try:
                out[name][key] = parser(entry.value)
            except ValueError as exc:
                raise ConfigurationError(f"{raw.where(name, key)}: [{name}] {key} = {entry.value!r}: {exc}") from None
    return out


def _check(cond: bool, raw: RawConfig, section: str, key: str, msg: str) -> None:
    if not cond:
        at = raw.where(section, key) if key in raw.sections.get(section, {}) else raw.where(section) if section in raw.sections else raw.source
        raise ConfigurationError(f"{at}: [{section}] {key}: {msg}")


def validate(raw: RawConfig) -> ExperimentConfig:
    t = _typed(raw)
    ex, enc, agg, mlp, tr = (t.get(s, {}) for s in ("experiment", "encoder", "aggregator", "mlp", "train"))
    seed = ex.get("seed", 0)
    try:
        train = TrainConfig(seed=seed, **tr)
    except ConfigurationError as exc:
        raise ConfigurationError(f"{raw.where('train') if 'train' in raw.sections else raw.source}: {exc}") from None
    cfg = ExperimentConfig(
        task=ex["task"], signal=ex["signal"], seed=seed, out=ex.get("out", "runs/out"),
        eval_resolution=ex.get("eval_resolution"), encoder=EncoderSpec(**enc), aggregator=AggregatorSettings(**agg),
        mlp=MLPSettings(**mlp), train=train, source=raw.source,
    )
    e, a = cfg.encoder, cfg.aggregator
    grid_kind = e.inner if e.kind == "peps" else e.kind
    _check(e.kind != "peps" or e.inner is not None, raw, "encoder", "inner", "kind = peps needs an inner grid encoder")
    _check(e.feat_dim >= 1, raw, "encoder", "feat_dim", "must be >= 1")
    _check(all(r >= 1 for r in e.resolution) and len(e.resolution) in (1, cfg.dims), raw, "encoder", "resolution",
           f"give one positive size or {cfg.dims} comma-separated sizes")
    _check(e.init_scale > 0, raw, "encoder", "init_scale", "must be positive")
    if grid_kind == "bi_grid":
        _check(cfg.dims == 2, raw, "encoder", "kind", "bi_grid is 2-D; use ti_grid for volumes")
    if grid_kind == "ti_grid":
        _check(cfg.dims == 3, raw, "encoder", "kind", "ti_grid is 3-D; use bi_grid for images")
    if grid_kind in ("hash_grid", "multi_hash"):
        _check(e.table_size is not None and e.table_size >= 1, raw, "encoder", "table_size", "hash grids need table_size")
    if grid_kind in ("multi_grid", "multi_hash"):
        _check(len(e.levels) >= 1 and all(r >= 2 for r in e.levels), raw, "encoder", "levels",
               "multi-resolution grids need levels = r1,r2,...")
    if grid_kind == "ntc":
        _check(cfg.dims == 2, raw, "encoder", "kind", "ntc is defined for images and texture sets")
        _check(bool(e.second_resolution), raw, "encoder", "second_resolution", "ntc needs the interpolated grid's size")
        _check(e.second_feat_dim is not None and e.second_feat_dim >= 1, raw, "encoder", "second_feat_dim",
               "ntc needs the interpolated grid's feature size")
    _check(a.L >= 0, raw, "aggregator", "L", "must be >= 0")
    _check(a.alpha >= 0, raw, "aggregator", "alpha", "must be >= 0")
    _check(a.include_origin or a.L > 0, raw, "aggregator", "include_origin", "needs L >= 1 when the origin is dropped")
    _check(mlp.get("output_dim") is None or mlp["output_dim"] >= 1, raw, "mlp", "output_dim", "must be >= 1")
    _check(cfg.mlp.hidden_width >= 1 and cfg.mlp.hidden_layers >= 0, raw, "mlp", "hidden_width",
           "MLP sizes must be positive")
    if cfg.task == "sdf":
        _check(cfg.mlp.output_dim in (None, 1), raw, "mlp", "output_dim", "SDF output is 1 channel")
    if cfg.task == "image":
        _check(cfg.mlp.output_dim in (None, 3), raw, "mlp", "output_dim", "image output is 3 channels")
    try:
        build_model(cfg)
    except ConfigurationError as exc:
        raise ConfigurationError(f"{raw.where('encoder')}: {exc}") from None
    return cfg


def parse_config(text: str, source: str = "<config>") -> ExperimentConfig:
    return validate(parse_text(text, source))


def load_config(path) -> ExperimentConfig:
    """A config file path, or the name of a bundled preset."""
    name = str(path)
    if name in PRESET_NAMES and not Path(name).exists():
        return parse_config(preset_text(name), f"preset:{name}")
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {p}: {exc}") from exc
    return parse_config(text, str(p))


def config_from_dict(d: dict) -> ExperimentConfig:
    text = "\n".join(
        f"[{section}]\n" + "\n".join(f"{k} = {_render(v)}" for k, v in values.items()) for section, values in d.items()
    )
    return parse_config(text, "<checkpoint>")


def preset_text(name: str) -> str:
    if name not in PRESET_NAMES:
        raise ConfigurationError(f"unknown preset {name!r}; available: {', '.join(PRESET_NAMES)}")
    return resources.files("peps").joinpath("presets").joinpath(f"{name}.cfg").read_text()


# ---------------------------------------------------------------- builders


def _resolution(values: tuple[int, ...], dims: int) -> tuple[int, ...]:
    return values * dims if len(values) == 1 else values


def _grid(e: EncoderSpec, kind: str, dims: int) -> Encoder:
    res = _resolution(e.resolution, dims)
    if kind in ("bi_grid", "ti_grid"):
        return FeatureGrid(res, e.feat_dim, e.boundary, e.init_scale)
    if kind == "concat_grid":
        return ConcatGrid(res, e.feat_dim, e.boundary, e.init_scale)
    if kind == "hash_grid":
        return HashGrid(res, e.table_size, e.feat_dim, e.indexing, e.boundary, e.init_scale)
    if kind == "multi_grid":
        return MultiResolution([FeatureGrid((r,) * dims, e.feat_dim, e.boundary, e.init_scale) for r in e.levels])
    if kind == "multi_hash":
        return MultiResolution([
            HashGrid((r,) * dims, e.table_size, e.feat_dim, e.indexing, e.boundary, e.init_scale) for r in e.levels
        ])
    if kind == "lpe":
        return LocalPE(FeatureGrid(res, e.feat_dim, e.boundary, e.init_scale), e.lpe_frequencies)
    raise ConfigurationError(f"{kind} is not a grid encoder")


def build_encoder(cfg: ExperimentConfig) -> Encoder:
    e, a, dims = cfg.encoder, cfg.aggregator, cfg.dims
    if e.kind == "identity":
        return Identity(dims)
    if e.kind == "pe":
        return PositionalEncoding(dims, e.pe_frequencies)
    wrap = e.kind == "peps"
    kind = e.inner if wrap else e.kind

    def maybe_peps(enc: Encoder) -> Encoder:
        return PEPS(enc, a.frequency_schedule(), a.spec(), a.include_origin) if wrap else enc

    if kind == "ntc":
        concat = ConcatGrid(_resolution(e.resolution, dims), e.feat_dim, e.boundary, e.init_scale)
        second = FeatureGrid(_resolution(e.second_resolution, dims), e.second_feat_dim, e.boundary, e.init_scale)
        # the tiled term's width does not depend on the image size, so counting works without a signal
        return NTC(maybe_peps(concat), maybe_peps(second), e.image_size or 1024, e.tiled_frequencies)
    return maybe_peps(_grid(e, kind, dims))


def default_output_dim(cfg: ExperimentConfig) -> int | None:
    if cfg.mlp.output_dim is not None:
        return cfg.mlp.output_dim
    return {"image": 3, "sdf": 1}.get(cfg.task)


def build_model(cfg: ExperimentConfig, output_dim: int | None = None) -> INRModel:
    """Encoder + MLP, initialized from the experiment seed."""
    output_dim = output_dim or default_output_dim(cfg) or 3
    torch.manual_seed(cfg.seed)
    enc = build_encoder(cfg)
    m = cfg.mlp
    mlp = MLP(MLPConfig(enc.out_dim, m.hidden_layers, m.hidden_width, output_dim, m.activation, m.slope))
    return INRModel(enc, mlp)


@dataclass
class ModelSummary:
    mlp_input_dim: int
    encoder_params: int
    mlp_params: int

    @property
    def total(self) -> int:
        return self.encoder_params + self.mlp_params


def summarize(model: INRModel) -> ModelSummary:
    return ModelSummary(model.mlp.cfg.input_dim, parameter_count(model.encoder), parameter_count(model.mlp))
