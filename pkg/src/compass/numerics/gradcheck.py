"""Central finite-difference gradient checking."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .tensor import Tensor, forward_backward


@dataclass
class GradCheckResult:
    name: str
    max_rel_error: float
    tol: float

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tol


def numeric_grad(fn: Callable[[], Tensor], x: Tensor, h: float = 1e-6) -> np.ndarray:
    g = np.zeros_like(x.data)
    flat = x.data.reshape(-1)
    gflat = g.reshape(-1)
    for k in range(flat.size):
        orig = flat[k]
        flat[k] = orig + h
        fp = fn().item()
        flat[k] = orig - h
        fm = fn().item()
        flat[k] = orig
        gflat[k] = (fp - fm) / (2.0 * h)
    return g


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-4) -> np.ndarray:
    """Per-component ``|a - n| / max(|a|, |n|, floor)``.

    The floor keeps components whose true derivative is ~0 from dividing
    finite-difference rounding noise by zero.
    """
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return np.abs(analytic - numeric) / denom


def check_gradients(
    fn: Callable[[], Tensor],
    inputs: Sequence[Tensor],
    name: str = "fn",
    h: float = 1e-6,
    tol: float = 1e-5,
) -> GradCheckResult:
    """Compare analytic gradients of scalar ``fn()`` w.r.t. ``inputs`` to central differences."""
    for x in inputs:
        x.requires_grad = True
        x.grad = None
    forward_backward(fn())
    worst = 0.0
    for x in inputs:
        analytic = x.grad if x.grad is not None else np.zeros_like(x.data)
        numeric = numeric_grad(fn, x, h)
        worst = max(worst, float(relative_error(analytic, numeric).max(initial=0.0)))
    return GradCheckResult(name, worst, tol)
