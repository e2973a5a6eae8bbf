"""MLP head, losses, the training loop and checkpoint persistence."""

from __future__ import annotations

import json
import logging
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol

import numpy as np
import torch
from torch import nn

from .encoders import Encoder
from .errors import ConfigurationError, FormatError, InputError, NumericFaultError, UnsupportedVersionError
from .numerics import DTYPE, Adam, ParamGroup, as_tensor, cosine_lr, tape_backward

log = logging.getLogger(__name__)

ACTIVATIONS = ("leaky_relu", "gelu", "silu", "relu")
LOSSES = ("l1", "l2", "mape")
MAPE_GUARD = 1e-6


@dataclass
class MLPConfig:
    input_dim: int
    hidden_layers: int = 3
    hidden_width: int = 64
    output_dim: int = 3
    activation: str = "leaky_relu"
    slope: float = 0.01

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ConfigurationError(f"unknown activation {self.activation!r}; expected one of {ACTIVATIONS}")
        if min(self.input_dim, self.output_dim, self.hidden_width) < 1 or self.hidden_layers < 0:
            raise ConfigurationError("MLP dimensions must be positive")


def _activation(cfg: MLPConfig) -> nn.Module:
    if cfg.activation == "leaky_relu":
        return nn.LeakyReLU(cfg.slope)
    return {"gelu": nn.GELU, "silu": nn.SiLU, "relu": nn.ReLU}[cfg.activation]()


class MLP(nn.Module):
    """Affine + activation stack with a linear output layer."""

    def __init__(self, cfg: MLPConfig):
        super().__init__()
        self.cfg = cfg
        widths = [cfg.input_dim] + [cfg.hidden_width] * cfg.hidden_layers
        layers: list[nn.Module] = []
        for a, b in zip(widths, widths[1:]):
            layers += [nn.Linear(a, b, dtype=DTYPE), _activation(cfg)]
        layers.append(nn.Linear(widths[-1], cfg.output_dim, dtype=DTYPE))
        self.net = nn.Sequential(*layers)

    def forward(self, features):
        return self.net(features)


def mlp_forward(mlp: MLP, features) -> torch.Tensor:
    features = as_tensor(features)
    if features.shape[-1] != mlp.cfg.input_dim:
        raise ConfigurationError(f"MLP expects {mlp.cfg.input_dim} features, got {features.shape[-1]}")
    return mlp(features)


def loss_value(kind: str, pred, gt):
    """Mean L1, mean squared error, or mean absolute percentage error (in percent)."""
    if kind not in LOSSES:
        raise ConfigurationError(f"unknown loss {kind!r}; expected one of {LOSSES}")
    pred, gt = as_tensor(pred), as_tensor(gt)
    if pred.numel() == 0:
        raise InputError("loss of empty vectors")
    if pred.shape != gt.shape:
        raise InputError(f"prediction shape {tuple(pred.shape)} != target shape {tuple(gt.shape)}")
    diff = gt - pred
    if kind == "l1":
        return diff.abs().mean()
    if kind == "l2":
        return (diff * diff).mean()
    return 100.0 * (diff.abs() / gt.abs().clamp_min(MAPE_GUARD)).mean()


class INRModel(nn.Module):
    def __init__(self, encoder: Encoder, mlp: MLP):
        super().__init__()
        if encoder.out_dim != mlp.cfg.input_dim:
            raise ConfigurationError(f"encoder yields {encoder.out_dim} features, MLP expects {mlp.cfg.input_dim}")
        self.encoder = encoder
        self.mlp = mlp

    def forward(self, x):
        return self.mlp(self.encoder(as_tensor(x)))

    @torch.no_grad()
    def predict(self, x, chunk: int = 1 << 15) -> np.ndarray:
        x = as_tensor(x)
        return torch.cat([self(x[i:i + chunk]) for i in range(0, x.shape[0], chunk)]).numpy()


@dataclass
class TrainConfig:
    loss: str = "l1"
    lr: float = 0.01
    grid_lr: float | None = None
    schedule: str = "constant"
    min_lr_ratio: float = 0.0
    batch_size: int = 4096
    epochs: int = 1
    batches_per_epoch: int = 2000
    seed: int = 0
    eval_every: int = 0

    def __post_init__(self):
        if self.loss not in LOSSES:
            raise ConfigurationError(f"unknown loss {self.loss!r}; expected one of {LOSSES}")
        if self.schedule not in ("constant", "cosine"):
            raise ConfigurationError(f"unknown schedule {self.schedule!r}")
        if self.batch_size < 1 or self.epochs < 0 or self.batches_per_epoch < 1:
            raise ConfigurationError("batch_size and batches_per_epoch must be positive, epochs non-negative")
        if self.lr <= 0 or (self.grid_lr is not None and self.grid_lr <= 0):
            raise ConfigurationError("learning rates must be positive")

    @property
    def steps(self) -> int:
        return self.epochs * self.batches_per_epoch


class Task(Protocol):
    """A signal the trainer can draw batches from and score a model against."""

    metric_name: str

    def sample(self, rng: np.random.Generator, n: int) -> tuple[np.ndarray, np.ndarray]: ...

    def evaluate(self, model: INRModel) -> dict[str, float]: ...


@dataclass
class MetricLog:
    metric_name: str
    rows: list[tuple[int, float, float, float]] = field(default_factory=list)

    def append(self, step, loss, lr, metric=math.nan):
        self.rows.append((step, loss, lr, metric))

    def to_csv(self) -> str:
        lines = [f"step,loss,lr,{self.metric_name}"]
        for step, loss, lr, metric in self.rows:
            m = "" if math.isnan(metric) else repr(metric)
            lines.append(f"{step},{loss!r},{lr!r},{m}")
        return "\n".join(lines) + "\n"


def round_to_float32(module: nn.Module) -> None:
    with torch.no_grad():
        for p in module.parameters():
            p.copy_(p.float().to(p.dtype))


def _grad_norms(model: nn.Module) -> dict[str, float]:
    return {n: float(p.grad.norm()) for n, p in model.named_parameters() if p.grad is not None}


def _optimizer(model: INRModel, cfg: TrainConfig) -> Adam:
    grid = model.encoder.grid_parameters()
    ids = {id(p) for p in grid}
    rest = [p for p in model.parameters() if id(p) not in ids]
    return Adam([
        ParamGroup("grid", grid, cfg.grid_lr if cfg.grid_lr is not None else cfg.lr),
        ParamGroup("mlp", rest, cfg.lr),
    ])


def train(model: INRModel, task: Task, cfg: TrainConfig) -> tuple[dict[str, float], MetricLog]:
    """Optimize ``model`` in place; returns final metrics and the per-step log.

    Parameters end rounded to float32 so the final metrics are exactly what a
    saved checkpoint reproduces.
    """
    rng = np.random.default_rng(cfg.seed)
    opt = _optimizer(model, cfg)
    total = cfg.steps
    history = MetricLog(task.metric_name)
    for step in range(total):
        scale = cosine_lr(step, total, 1.0, cfg.min_lr_ratio) if cfg.schedule == "cosine" else 1.0
        x, gt = task.sample(rng, cfg.batch_size)
        loss = loss_value(cfg.loss, model(x), gt)
        lr = cfg.lr * scale
        if not torch.isfinite(loss):
            raise NumericFaultError(
                f"non-finite loss at step {step} (lr={lr:g})", op="loss",
                diagnostics={"step": step, "lr": lr, "grad_norms": _grad_norms(model)},
            )
        opt.zero_grad()
        tape_backward(loss, check_nan=False)
        if not all(torch.isfinite(p.grad).all() for p in opt.params if p.grad is not None):
            opt.zero_grad()
            tape_backward(loss_value(cfg.loss, model(x), gt), check_nan=True)
        opt.step(scale)
        metric = math.nan
        if cfg.eval_every and (step + 1) % cfg.eval_every == 0 and step + 1 < total:
            metric = task.evaluate(model)[task.metric_name]
        history.append(step, loss.item(), lr, metric)
    round_to_float32(model)
    metrics = task.evaluate(model)
    history.append(total, math.nan, math.nan, metrics[task.metric_name])
    return metrics, history


# ---------------------------------------------------------------- checkpoints

CKPT_MAGIC = b"PEPSCKPT"
CKPT_VERSION = 1


@dataclass
class ModelCheckpoint:
    config: dict
    params: dict[str, np.ndarray]  # float32, in module order

    @classmethod
    def from_model(cls, model: nn.Module, config: dict) -> "ModelCheckpoint":
        params = {n: p.detach().numpy().astype("<f4") for n, p in model.named_parameters()}
        return cls(json.loads(json.dumps(config)), params)

    @property
    def param_count(self) -> int:
        return sum(int(v.size) for v in self.params.values())

    def load_into(self, model: nn.Module) -> None:
        named = dict(model.named_parameters())
        if list(named) != list(self.params):
            raise ConfigurationError("checkpoint parameters do not match the model layout")
        with torch.no_grad():
            for n, p in named.items():
                v = self.params[n]
                if tuple(p.shape) != v.shape:
                    raise ConfigurationError(f"parameter {n}: checkpoint shape {v.shape} != model {tuple(p.shape)}")
                p.copy_(torch.from_numpy(v.astype(np.float64)))

    def to_bytes(self) -> bytes:
        header = {
            "config": self.config,
            "params": [[n, list(v.shape)] for n, v in self.params.items()],
            "param_count": self.param_count,
        }
        hbytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
        payload = b"".join(np.ascontiguousarray(v, dtype="<f4").tobytes() for v in self.params.values())
        return CKPT_MAGIC + struct.pack("<II", CKPT_VERSION, len(hbytes)) + hbytes + payload

    @classmethod
    def from_bytes(cls, data: bytes) -> "ModelCheckpoint":
        if len(data) < 16:
            raise FormatError("truncated checkpoint header", len(data))
        if data[:8] != CKPT_MAGIC:
            raise FormatError("bad checkpoint magic", 0)
        version, hlen = struct.unpack_from("<II", data, 8)
        if version != CKPT_VERSION:
            raise UnsupportedVersionError(f"unsupported checkpoint version {version} (expected {CKPT_VERSION})", 8)
        if len(data) < 16 + hlen:
            raise FormatError("truncated checkpoint header", len(data))
        try:
            header = json.loads(data[16:16 + hlen].decode())
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise FormatError(f"corrupt checkpoint header: {exc}", 16) from exc
        offset = 16 + hlen
        count = sum(math.prod(shape) for _, shape in header["params"])
        if count != header["param_count"]:
            raise FormatError("header parameter count disagrees with parameter shapes", 16)
        if len(data) - offset != 4 * count:
            raise FormatError(f"payload holds {len(data) - offset} bytes, expected {4 * count}", offset)
        flat = np.frombuffer(data, dtype="<f4", offset=offset)
        params, pos = {}, 0
        for name, shape in header["params"]:
            n = math.prod(shape)
            params[name] = flat[pos:pos + n].reshape(shape).copy()
            pos += n
        return cls(header["config"], params)


def save_checkpoint(path, ckpt: ModelCheckpoint) -> None:
    Path(path).write_bytes(ckpt.to_bytes())


def load_checkpoint(path) -> ModelCheckpoint:
    return ModelCheckpoint.from_bytes(Path(path).read_bytes())
