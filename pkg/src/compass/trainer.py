"""Masked training loop, accuracy evaluation and best-checkpoint selection."""

from __future__ import annotations

import csv
import logging
import os
from dataclasses import asdict, dataclass, field, fields
from typing import Mapping

import numpy as np

from . import losses as L
from .masking import MaskConfig, sample_mask
from .modalities import ModalitySet
from .model import CompassModel, ForwardResult
from .numerics import NonFiniteError, ScheduleConfig, adamw_step, checkpoint, forward_backward, lr_at, no_grad
from .numerics import tensor as T
from .synthdata import Dataset, Split

log = logging.getLogger(__name__)

EVAL_CHUNK = 512


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 20
    batch_size: int = 32
    base_lr: float = 1e-3
    weight_decay: float = 5e-4
    warmup_epochs: int = 2
    power: float = 0.9
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    eval_every: int = 1
    fill: str = "proxy"
    track_alignment: bool = False
    detach_align_targets: bool = True
    checkpoint_dir: str | None = None
    log_path: str | None = None
    lr_scale: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.batch_size < 2:
            raise ValueError("batch size must be at least 2 (batch norm and VICReg need it)")
        if self.epochs < 1 or self.eval_every < 1:
            raise ValueError("epochs and eval_every must be positive")
        if self.fill not in ("proxy", "zero"):
            raise ValueError(f"unknown fill mode '{self.fill}'")
        ScheduleConfig(self.base_lr, self.warmup_epochs, self.epochs, self.power)

    @property
    def schedule(self) -> ScheduleConfig:
        return ScheduleConfig(self.base_lr, self.warmup_epochs, self.epochs, self.power)


@dataclass
class TrainLogRecord:
    epoch: int
    step: int
    lr: float
    L_task: float
    L_align: float
    L_ss: float
    L_proxy: float
    total: float
    observed_mask: int


LOG_COLUMNS = [f.name for f in fields(TrainLogRecord)]


@dataclass
class TrainResult:
    best_state: dict[str, np.ndarray]
    best_val_acc: float
    best_epoch: int
    final_state: dict[str, np.ndarray]
    records: list[TrainLogRecord]
    history: list[dict]


class TrainingDiverged(RuntimeError):
    def __init__(self, message: str, last_record: TrainLogRecord | None):
        super().__init__(f"{message}; last log record: {last_record}")
        self.last_record = last_record


def batch_x(split: Split, idx) -> list[np.ndarray]:
    return [xm[idx] for xm in split.x]


def loss_parts(
    out: ForwardResult,
    y: np.ndarray,
    model: CompassModel,
    weights: L.LossWeights,
    with_ss: bool = True,
    detach_targets: bool = True,
) -> L.LossParts:
    """All four loss terms for one forward pass; alignment and proxy terms are
    zero when no pair proxies were generated. The shared-space term uses the
    real tokens of observed modalities only. Real tokens of masked modalities
    act as fixed alignment targets unless ``detach_targets`` is off."""
    eps = weights.label_smoothing
    obs = out.observed
    task = L.task_loss(out.logits, y, eps)
    if with_ss:
        ss = L.shared_space_loss({m: out.globals[m] for m in obs.indices}, obs, weights.mu)
    else:
        ss = T.Tensor(0.0, name="zero")
    if out.pair_proxies:
        targets = {j: out.globals[j] for (_, j) in out.pair_proxies}
        if detach_targets:
            targets = {j: t.detach() for j, t in targets.items()}
        align = L.align_loss(out.pair_proxies, targets)
        proxy = L.per_proxy_loss(out.pair_proxies, y, model.task_head, eps)
    else:
        align = proxy = T.Tensor(0.0, name="zero")
    return L.LossParts(task, align, ss, proxy)


def _masked_step(model, xs, y, mask_cfg, rng, weights, fill, detach):
    obs = sample_mask(mask_cfg, rng)
    out = model.forward(xs, obs, train=True, fill=fill)
    parts = loss_parts(out, y, model, weights, detach_targets=detach)
    return parts, L.total_loss(parts, weights, masked=not obs.is_full), obs.mask


def _per_sample_step(model, xs, y, mask_cfg, rng, weights, fill, detach):
    """Independent observed set per sample. Samples sharing a pattern run
    through the fusion stage together and their terms are weighted by group
    size; the shared-space term covers every modality of the whole batch."""
    n = mask_cfg.n_modalities
    obs_list = [sample_mask(mask_cfg, rng) for _ in range(len(y))]
    tokens, globals_ = model.encode_all(xs, train=True)
    ss = L.shared_space_loss(globals_, ModalitySet.full(n), weights.mu)
    total = T.scale(ss, weights.lambda_s)
    task = align = proxy = T.Tensor(0.0, name="zero")
    common = (1 << n) - 1
    for obs in sorted(set(obs_list)):
        idx = np.array([k for k, o in enumerate(obs_list) if o == obs])
        w = len(idx) / len(y)
        out = model.complete({m: z[idx] for m, z in tokens.items()}, {m: g[idx] for m, g in globals_.items()}, obs, fill)
        part = loss_parts(out, y[idx], model, weights, with_ss=False, detach_targets=detach)
        total = total + T.scale(L.total_loss(part, weights, masked=not obs.is_full), w)
        task = task + T.scale(part.task, w)
        align = align + T.scale(part.align, w)
        proxy = proxy + T.scale(part.proxy, w)
        common &= obs.mask
    return L.LossParts(task, align, ss, proxy), total, common


def evaluate_split(
    split: Split, model: CompassModel, observed: ModalitySet, fill: str = "proxy"
) -> float:
    """Top-1 accuracy with only ``observed`` modalities available."""
    if len(split) == 0:
        raise ValueError("cannot evaluate an empty split")
    correct = 0
    for start in range(0, len(split), EVAL_CHUNK):
        idx = slice(start, start + EVAL_CHUNK)
        logits = model.predict(batch_x(split, idx), observed, fill=fill)
        correct += int((logits.argmax(axis=1) == split.y[idx]).sum())
    return correct / len(split)


def alignment_mse(split: Split, model: CompassModel) -> float:
    """Mean over all directed pairs of ||G_{i->j}(z_i) - zbar_j||^2 on a split."""
    n = model.config.n_modalities
    with no_grad():
        tokens, globals_ = model.encode_all(batch_x(split, slice(None)), train=False)
        pairs = {(i, j): model.generate_proxy(tokens[i], i, j) for i in range(n) for j in range(n) if i != j}
        return L.align_loss(pairs, globals_).item()


def train(
    data: Dataset,
    model: CompassModel,
    config: TrainConfig,
    weights: L.LossWeights = L.LossWeights(),
    mask_config: MaskConfig | None = None,
) -> TrainResult:
    n = model.config.n_modalities
    mask_cfg = mask_config or MaskConfig(n_modalities=n)
    if mask_cfg.n_modalities != n:
        raise ValueError("mask config and model disagree on the modality count")
    if len(data.train) < 2 or len(data.val) == 0:
        raise ValueError("need a training split of at least 2 samples and a non-empty validation split")
    rng = np.random.default_rng(config.seed)
    schedule = config.schedule
    step_fn = _per_sample_step if mask_cfg.per_sample else _masked_step
    full = ModalitySet.full(n)
    records: list[TrainLogRecord] = []
    history: list[dict] = []
    best_acc, best_epoch, best_state = -1.0, -1, model.state_dict()
    if config.checkpoint_dir:
        os.makedirs(config.checkpoint_dir, exist_ok=True)
    if config.track_alignment:
        history.append({"epoch": -1, "align_mse": alignment_mse(data.val, model)})

    step = 0
    for epoch in range(config.epochs):
        lr = lr_at(schedule, epoch)
        order = rng.permutation(len(data.train))
        for start in range(0, len(order), config.batch_size):
            idx = order[start : start + config.batch_size]
            if len(idx) < 2:
                continue
            model.params.zero_grad()
            xs, y = batch_x(data.train, idx), data.train.y[idx]
            try:
                parts, total, mask = step_fn(model, xs, y, mask_cfg, rng, weights, config.fill, config.detach_align_targets)
                value = forward_backward(total, model.params)
            except NonFiniteError as exc:
                raise TrainingDiverged(str(exc), records[-1] if records else None) from exc
            records.append(
                TrainLogRecord(
                    epoch, step, lr, parts.task.item(), parts.align.item(), parts.ss.item(),
                    parts.proxy.item(), value, mask,
                )
            )
            adamw_step(
                model.params, lr, config.beta1, config.beta2, config.adam_eps,
                config.weight_decay, config.lr_scale,
            )
            step += 1

        entry = {"epoch": epoch, "lr": lr}
        if (epoch + 1) % config.eval_every == 0 or epoch == config.epochs - 1:
            acc = evaluate_split(data.val, model, full)
            entry["val_acc"] = acc
            if acc > best_acc:
                best_acc, best_epoch, best_state = acc, epoch, model.state_dict()
                if config.checkpoint_dir:
                    checkpoint.save(best_state, os.path.join(config.checkpoint_dir, "best.cmps"))
        entry["best_val_acc"] = best_acc
        if config.track_alignment:
            entry["align_mse"] = alignment_mse(data.val, model)
        history.append(entry)
        log.info("epoch %d lr=%.3g %s", epoch, lr, {k: v for k, v in entry.items() if k != "epoch"})

    final_state = model.state_dict()
    if config.checkpoint_dir:
        checkpoint.save(final_state, os.path.join(config.checkpoint_dir, "last.cmps"))
    if config.log_path:
        write_log(records, config.log_path)
    model.load_state_dict(best_state)
    return TrainResult(best_state, best_acc, best_epoch, final_state, records, history)


def write_log(records: list[TrainLogRecord], path: str | os.PathLike) -> None:
    parent = os.path.dirname(os.fspath(path))
    if parent:
        os.makedirs(parent, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=LOG_COLUMNS)
        writer.writeheader()
        for r in records:
            writer.writerow(asdict(r))


def read_log(path: str | os.PathLike) -> list[TrainLogRecord]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    out = []
    for row in rows:
        out.append(
            TrainLogRecord(
                int(row["epoch"]), int(row["step"]), float(row["lr"]), float(row["L_task"]),
                float(row["L_align"]), float(row["L_ss"]), float(row["L_proxy"]),
                float(row["total"]), int(row["observed_mask"]),
            )
        )
    return out
