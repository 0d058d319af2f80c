"""Training objectives: smoothed cross-entropy, proxy alignment, VICReg
shared-space regularisation, per-proxy supervision and their weighted sum."""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable, Mapping, NamedTuple

import numpy as np

from .modalities import ModalitySet
from .numerics import Tensor
from .numerics import tensor as T

STD_EPS = 1e-4


@dataclass(frozen=True)
class LossWeights:
    lambda_a: float = 0.2
    lambda_s: float = 0.3
    lambda_p: float = 0.5
    mu_inv: float = 5.0
    mu_var: float = 25.0
    mu_cov: float = 1.0
    label_smoothing: float = 0.1

    def __post_init__(self):
        for name in ("lambda_a", "lambda_s", "lambda_p", "mu_inv", "mu_var", "mu_cov"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        if not 0 <= self.label_smoothing < 1:
            raise ValueError("label_smoothing must lie in [0, 1)")

    @property
    def mu(self) -> tuple[float, float, float]:
        return (self.mu_inv, self.mu_var, self.mu_cov)


class VICRegTerms(NamedTuple):
    total: Tensor
    inv: Tensor
    var: Tensor
    cov: Tensor


class LossParts(NamedTuple):
    task: Tensor
    align: Tensor
    ss: Tensor
    proxy: Tensor


def _zero() -> Tensor:
    return Tensor(0.0, name="zero")


def task_loss(logits: Tensor, y, eps: float = 0.1) -> Tensor:
    """Label-smoothed cross-entropy, batch-averaged. ``logits`` is (C,) or (B, C)."""
    logits = T.as_tensor(logits)
    if logits.ndim == 1:
        logits = logits.reshape(1, -1)
    y = np.atleast_1d(np.asarray(y, dtype=np.int64))
    b, c = logits.shape
    if y.shape != (b,):
        raise ValueError(f"expected {b} labels, got shape {y.shape}")
    if y.min() < 0 or y.max() >= c:
        raise ValueError(f"labels must lie in [0, {c})")
    q = np.full((b, c), eps / c)
    q[np.arange(b), y] += 1.0 - eps
    return T.scale(T.sum_(T.log_softmax(logits, axis=-1) * q), -1.0 / b)


def _sq_norm_mean(diff: Tensor) -> Tensor:
    """Squared Euclidean norm over the last axis, averaged over any batch axis."""
    sq = T.sum_(T.square(diff), axis=-1)
    return T.mean(sq)


def align_loss(pair_proxies: Mapping[tuple[int, int], Tensor], real_targets: Mapping[int, Tensor]) -> Tensor:
    """(1/K) sum over observed->missing pairs of ||proxy - real target||^2."""
    if not pair_proxies:
        raise ValueError("no source-target pairs; skip the alignment loss when nothing is masked")
    total = None
    for (i, j), t in pair_proxies.items():
        term = _sq_norm_mean(T.as_tensor(t) - T.as_tensor(real_targets[j]))
        total = term if total is None else total + term
    return T.scale(total, 1.0 / len(pair_proxies))


def _std(z: Tensor) -> Tensor:
    b = z.shape[0]
    centred = z - T.mean(z, axis=0, keepdims=True)
    var = T.scale(T.sum_(T.square(centred), axis=0), 1.0 / (b - 1))
    return T.sqrt(var + STD_EPS)


def _off_diag_cov_sq(z: Tensor) -> Tensor:
    b, d = z.shape
    centred = z - T.mean(z, axis=0, keepdims=True)
    cov = T.scale(centred.T @ centred, 1.0 / (b - 1))
    off = 1.0 - np.eye(d)
    return T.scale(T.sum_(T.square(cov) * off), 1.0 / d)


def vicreg_pair(z_i: Tensor, z_j: Tensor, mu=(5.0, 25.0, 1.0)) -> VICRegTerms:
    """VICReg on two paired (B, d) batches of global tokens."""
    z_i, z_j = T.as_tensor(z_i), T.as_tensor(z_j)
    if z_i.shape != z_j.shape or z_i.ndim != 2:
        raise ValueError("vicreg_pair expects two (B, d) batches of equal shape")
    b, d = z_i.shape
    if b < 2:
        raise ValueError("VICReg needs a batch of at least 2")
    inv = _sq_norm_mean(z_i - z_j)
    var = T.scale(
        T.mean(T.maximum(1.0 - _std(z_i), 0.0)) + T.mean(T.maximum(1.0 - _std(z_j), 0.0)), 0.5
    )
    cov = T.scale(_off_diag_cov_sq(z_i) + _off_diag_cov_sq(z_j), 0.5)
    mu_inv, mu_var, mu_cov = mu
    total = T.scale(inv, mu_inv) + T.scale(var, mu_var) + T.scale(cov, mu_cov)
    return VICRegTerms(total, inv, var, cov)


def shared_space_loss(tokens: Mapping[int, Tensor], observed: ModalitySet, mu=(5.0, 25.0, 1.0)) -> Tensor:
    """Mean VICReg over unordered pairs of observed modalities; 0 for a single one."""
    pairs = list(itertools.combinations(observed.indices, 2))
    if not pairs:
        return _zero()
    total = None
    for i, j in pairs:
        term = vicreg_pair(tokens[i], tokens[j], mu).total
        total = term if total is None else total + term
    return T.scale(total, 1.0 / len(pairs))


def per_proxy_loss(
    pair_proxies: Mapping[tuple[int, int], Tensor],
    y,
    head: Callable[[Tensor], Tensor],
    eps: float = 0.1,
) -> Tensor:
    """Mean task loss of the shared head applied to each pair proxy."""
    if not pair_proxies:
        raise ValueError("no source-target pairs; skip the proxy loss when nothing is masked")
    total = None
    for t in pair_proxies.values():
        term = task_loss(head(T.as_tensor(t)), y, eps)
        total = term if total is None else total + term
    return T.scale(total, 1.0 / len(pair_proxies))


def total_loss(parts: LossParts, weights: LossWeights, masked: bool) -> Tensor:
    """Task + weighted auxiliaries; alignment and proxy terms drop out when
    nothing is masked."""
    for name in ("lambda_a", "lambda_s", "lambda_p"):
        if getattr(weights, name) < 0:
            raise ValueError(f"{name} must be nonnegative")
    total = T.as_tensor(parts.task) + T.scale(T.as_tensor(parts.ss), weights.lambda_s)
    if masked:
        total = total + T.scale(T.as_tensor(parts.align), weights.lambda_a)
        total = total + T.scale(T.as_tensor(parts.proxy), weights.lambda_p)
    return total
