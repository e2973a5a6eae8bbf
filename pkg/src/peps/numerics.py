"""Autodiff, optimizer and learning-rate schedule.

Reverse-mode differentiation is delegated to torch's dynamic tape; every
tensor created by this package is float64.  What lives here is the thin
contract layer on top of it: a checked ``tape_backward``, an explicit Adam
with inspectable per-parameter state, the cosine schedule and a central
finite-difference oracle that never touches autograd.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np
import torch

from .errors import ConfigurationError, ContractError, NumericFaultError, RangeError

DTYPE = torch.float64


def as_tensor(x, dtype=DTYPE) -> torch.Tensor:
    if isinstance(x, torch.Tensor):
        return x.to(dtype)
    return torch.as_tensor(np.asarray(x, dtype=np.float64), dtype=dtype)


def tape_backward(output: torch.Tensor, check_nan: bool = True) -> None:
    """Accumulate d(output)/d(param) into ``param.grad`` for every leaf.

    With ``check_nan`` the reverse pass runs under anomaly detection so the
    first backward function producing a NaN is reported by name.
    """
    if not isinstance(output, torch.Tensor) or output.numel() != 1:
        shape = tuple(output.shape) if isinstance(output, torch.Tensor) else type(output)
        raise ContractError(f"backward needs a scalar output, got shape {shape}")
    if not check_nan:
        output.backward()
        return
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", UserWarning)
            with torch.autograd.detect_anomaly(check_nan=True):
                output.backward()
    except RuntimeError as exc:
        msg = str(exc)
        if "nan" not in msg.lower():
            raise
        op = msg.split("'")[1] if msg.count("'") >= 2 else "unknown"
        raise NumericFaultError(f"NaN produced in reverse pass by {op}", op=op) from exc


def zero_grad(params: Iterable[torch.Tensor]) -> None:
    for p in params:
        if p.grad is not None:
            p.grad.zero_()


@dataclass
class AdamState:
    first_moment: list[torch.Tensor]
    second_moment: list[torch.Tensor]
    step_count: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    @classmethod
    def for_params(cls, params: Sequence[torch.Tensor], **kw) -> "AdamState":
        return cls(
            [torch.zeros_like(p) for p in params],
            [torch.zeros_like(p) for p in params],
            **kw,
        )


@torch.no_grad()
def adam_step(params: Sequence[torch.Tensor], state: AdamState, lr: float) -> None:
    """One bias-corrected Adam update of ``params`` in place."""
    if len(params) != len(state.first_moment):
        raise ConfigurationError(
            f"{len(params)} parameters but optimizer state holds {len(state.first_moment)}"
        )
    for p, m in zip(params, state.first_moment):
        if p.shape != m.shape:
            raise ConfigurationError(f"parameter shape {tuple(p.shape)} != state shape {tuple(m.shape)}")
    state.step_count += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**state.step_count
    c2 = 1.0 - b2**state.step_count
    for p, m, v in zip(params, state.first_moment, state.second_moment):
        if p.grad is None:
            continue
        g = p.grad
        m.mul_(b1).add_(g, alpha=1.0 - b1)
        v.mul_(b2).addcmul_(g, g, value=1.0 - b2)
        denom = (v / c2).sqrt_().add_(state.epsilon)
        p.addcdiv_(m, denom, value=-lr / c1)


@dataclass
class ParamGroup:
    name: str
    params: list[torch.Tensor]
    lr: float
    state: AdamState = field(init=False)

    def __post_init__(self):
        self.state = AdamState.for_params(self.params)


class Adam:
    """Adam over named parameter groups, each with its own base rate."""

    def __init__(self, groups: Sequence[ParamGroup]):
        self.groups = [g for g in groups if g.params]

    @property
    def params(self) -> list[torch.Tensor]:
        return [p for g in self.groups for p in g.params]

    def zero_grad(self) -> None:
        zero_grad(self.params)

    def step(self, lr_scale: float = 1.0) -> None:
        for g in self.groups:
            adam_step(g.params, g.state, g.lr * lr_scale)


def cosine_lr(step: int, total_steps: int, base_lr: float, min_lr: float = 0.0) -> float:
    if total_steps < 1:
        raise RangeError(f"total_steps must be >= 1, got {total_steps}")
    if step < 0 or step > total_steps:
        raise RangeError(f"step {step} outside [0, {total_steps}]")
    return min_lr + 0.5 * (base_lr - min_lr) * (1.0 + math.cos(math.pi * step / total_steps))


def finite_difference_grad(
    fn: Callable[[], torch.Tensor], params: Sequence[torch.Tensor], h: float = 1e-5
) -> list[np.ndarray]:
    """Central differences of the scalar ``fn()`` w.r.t. every entry of ``params``."""
    grads = []
    with torch.no_grad():
        for p in params:
            flat = p.view(-1)
            g = np.empty(flat.numel())
            for i in range(flat.numel()):
                orig = flat[i].item()
                flat[i] = orig + h
                fp = fn().item()
                flat[i] = orig - h
                fm = fn().item()
                flat[i] = orig
                g[i] = (fp - fm) / (2.0 * h)
            grads.append(g.reshape(tuple(p.shape)))
    return grads


def relative_error(a: np.ndarray, b: np.ndarray, floor: float = 1e-10) -> float:
    """max |a-b| / max(|a|, |b|); entries where both are below ``floor`` compare absolutely."""
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    scale = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    err = np.abs(a - b) / scale
    return float(err.max()) if err.size else 0.0


def gradient_check(
    fn: Callable[[], torch.Tensor], params: Sequence[torch.Tensor], h: float = 1e-5, floor: float = 1e-10
) -> float:
    """Max relative error between autograd and central differences."""
    for p in params:
        p.grad = None
    tape_backward(fn())
    analytic = [p.grad.detach().numpy().copy() for p in params]
    numeric = finite_difference_grad(fn, params, h)
    return max(relative_error(a, n, floor) for a, n in zip(analytic, numeric))
