"""Named parameter storage, AdamW and the warmup-polynomial schedule."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator, Mapping

import numpy as np

from .tensor import Tensor


class ParameterStore:
    """Ordered (lexicographic) mapping of dotted names to trainable tensors.

    Also owns the AdamW moments and non-trainable buffers such as batch-norm
    running statistics, so a checkpoint is a dump of ``state_dict()``.
    """

    def __init__(self):
        self._params: dict[str, Tensor] = {}
        self.buffers: dict[str, np.ndarray] = {}
        self.exp_avg: dict[str, np.ndarray] = {}
        self.exp_avg_sq: dict[str, np.ndarray] = {}
        self.steps: dict[str, int] = {}

    def add(self, name: str, value: np.ndarray) -> Tensor:
        if name in self._params or name in self.buffers:
            raise KeyError(f"duplicate parameter name '{name}'")
        t = Tensor(np.array(value, dtype=np.float64), requires_grad=True, name=name)
        self._params[name] = t
        self.exp_avg[name] = np.zeros_like(t.data)
        self.exp_avg_sq[name] = np.zeros_like(t.data)
        self.steps[name] = 0
        return t

    def add_buffer(self, name: str, value: np.ndarray) -> None:
        if name in self._params or name in self.buffers:
            raise KeyError(f"duplicate parameter name '{name}'")
        self.buffers[name] = np.array(value, dtype=np.float64)

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __len__(self) -> int:
        return len(self._params)

    def __iter__(self) -> Iterator[str]:
        return iter(sorted(self._params))

    def items(self) -> Iterator[tuple[str, Tensor]]:
        for name in sorted(self._params):
            yield name, self._params[name]

    def names(self, prefix: str = "") -> list[str]:
        return [n for n in sorted(self._params) if n.startswith(prefix)]

    def count(self, prefix: str = "") -> int:
        """Number of scalar parameters whose name starts with ``prefix``."""
        return sum(self._params[n].size for n in self.names(prefix))

    def zero_grad(self) -> None:
        for t in self._params.values():
            t.zero_grad()

    def state_dict(self) -> dict[str, np.ndarray]:
        state = {n: t.data.copy() for n, t in self.items()}
        state.update({n: v.copy() for n, v in self.buffers.items()})
        return dict(sorted(state.items()))

    def load_state_dict(self, state: Mapping[str, np.ndarray], strict: bool = True) -> None:
        expected = set(self._params) | set(self.buffers)
        if strict and set(state) != expected:
            missing = sorted(expected - set(state))
            extra = sorted(set(state) - expected)
            raise KeyError(f"state mismatch: missing={missing} unexpected={extra}")
        for name, value in state.items():
            value = np.asarray(value, dtype=np.float64)
            target = self._params[name].data if name in self._params else self.buffers[name]
            if target.shape != value.shape:
                raise ValueError(f"shape mismatch for '{name}': {target.shape} vs {value.shape}")
            target[...] = value


def adamw_step(
    params: ParameterStore,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
    weight_decay: float = 0.0,
    lr_scale: Mapping[str, float] | None = None,
) -> None:
    """One AdamW update with bias correction and decoupled weight decay.

    ``lr_scale`` maps name prefixes to learning-rate multipliers (longest
    matching prefix wins). Gradients are zeroed afterwards.
    """
    for name, p in params.items():
        if p.grad is None:
            raise ValueError(f"parameter '{name}' has no gradient")
    for name, p in params.items():
        g = p.grad
        step_lr = lr * _scale_for(name, lr_scale)
        t = params.steps[name] + 1
        m = params.exp_avg[name]
        v = params.exp_avg_sq[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        m_hat = m / (1.0 - beta1**t)
        v_hat = v / (1.0 - beta2**t)
        p.data -= step_lr * m_hat / (np.sqrt(v_hat) + eps)
        p.data -= step_lr * weight_decay * p.data
        params.steps[name] = t
        p.grad = np.zeros_like(p.data)


def _scale_for(name: str, lr_scale: Mapping[str, float] | None) -> float:
    if not lr_scale:
        return 1.0
    best = ""
    for prefix in lr_scale:
        if name.startswith(prefix) and len(prefix) > len(best):
            best = prefix
    return lr_scale[best] if best else 1.0


@dataclass(frozen=True)
class ScheduleConfig:
    base_lr: float = 1e-4
    warmup_epochs: int = 5
    total_epochs: int = 100
    power: float = 0.9

    def __post_init__(self):
        if self.base_lr <= 0:
            raise ValueError("base_lr must be positive")
        if self.total_epochs <= 0:
            raise ValueError("total_epochs must be positive")
        if not 0 <= self.warmup_epochs < self.total_epochs:
            raise ValueError("need 0 <= warmup_epochs < total_epochs")
        if self.power <= 0:
            raise ValueError("power must be positive")


def lr_at(config: ScheduleConfig, epoch: int) -> float:
    """Linear warmup then polynomial decay to zero, at epoch granularity."""
    if not 0 <= epoch < config.total_epochs:
        raise ValueError(f"epoch {epoch} outside [0, {config.total_epochs})")
    if epoch < config.warmup_epochs:
        return config.base_lr * (epoch + 1) / config.warmup_epochs
    frac = (epoch - config.warmup_epochs) / (config.total_epochs - config.warmup_epochs)
    return config.base_lr * math.pow(1.0 - frac, config.power)
