"""Reproducible synthetic N-modality classification data.

Each class owns a latent anchor; a sample jitters its class anchor and every
modality observes the latent through a fixed random linear map plus Gaussian
noise scaled to a per-modality signal-to-noise ratio.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

WITHIN_CLASS_STD = 0.3


@dataclass(frozen=True)
class DatasetSpec:
    n_modalities: int = 3
    n_classes: int = 6
    latent_dim: int = 8
    train_per_class: int = 60
    val_per_class: int = 20
    test_per_class: int = 40
    raw_dims: tuple[int, ...] = (32, 32, 32)
    snr: tuple[float, ...] = (1.0, 1.0, 1.0)
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "raw_dims", tuple(int(d) for d in self.raw_dims))
        object.__setattr__(self, "snr", tuple(float(s) for s in self.snr))
        if self.n_modalities < 2:
            raise ValueError("need at least 2 modalities")
        if self.n_classes < 2:
            raise ValueError("need at least 2 classes")
        if len(self.raw_dims) != self.n_modalities or len(self.snr) != self.n_modalities:
            raise ValueError("raw_dims and snr need one entry per modality")
        if self.latent_dim <= 0 or min(self.raw_dims) <= 0:
            raise ValueError("dimensions must be positive")
        if min(self.train_per_class, self.val_per_class, self.test_per_class) < 0:
            raise ValueError("sample counts must be nonnegative")
        if min(self.snr) <= 0:
            raise ValueError("snr must be positive")


@dataclass(frozen=True)
class Sample:
    x: tuple[np.ndarray, ...]
    y: int


@dataclass
class Split:
    """One split: ``x[m]`` is an (n_samples, raw_dim_m) array, ``y`` the labels."""

    x: list[np.ndarray]
    y: np.ndarray
    n_classes: int

    def __len__(self) -> int:
        return len(self.y)

    def __getitem__(self, i: int) -> Sample:
        return Sample(tuple(xm[i] for xm in self.x), int(self.y[i]))

    @property
    def n_modalities(self) -> int:
        return len(self.x)

    def subset(self, idx) -> "Split":
        return Split([xm[idx] for xm in self.x], self.y[idx], self.n_classes)


@dataclass
class Dataset:
    spec: DatasetSpec
    train: Split
    val: Split
    test: Split
    projections: list[np.ndarray] = field(repr=False, default_factory=list)
    anchors: np.ndarray | None = field(repr=False, default=None)


def generate(spec: DatasetSpec) -> Dataset:
    root = np.random.SeedSequence(spec.seed)
    world_seq, train_seq, val_seq, test_seq = root.spawn(4)
    world = np.random.default_rng(world_seq)
    anchors = world.standard_normal((spec.n_classes, spec.latent_dim))
    projections = [
        world.standard_normal((d, spec.latent_dim)) / np.sqrt(spec.latent_dim)
        for d in spec.raw_dims
    ]

    def draw(seq, per_class: int) -> Split:
        rng = np.random.default_rng(seq)
        y = np.repeat(np.arange(spec.n_classes), per_class)
        u = anchors[y] + WITHIN_CLASS_STD * rng.standard_normal((len(y), spec.latent_dim))
        xs = []
        for a, d, snr in zip(projections, spec.raw_dims, spec.snr):
            signal = u @ a.T
            noise_scale = np.linalg.norm(signal, axis=1, keepdims=True) / (snr * np.sqrt(d))
            xs.append(signal + noise_scale * rng.standard_normal((len(y), d)))
        order = rng.permutation(len(y))
        return Split([xm[order] for xm in xs], y[order], spec.n_classes)

    return Dataset(
        spec,
        draw(train_seq, spec.train_per_class),
        draw(val_seq, spec.val_per_class),
        draw(test_seq, spec.test_per_class),
        projections,
        anchors,
    )


def nearest_centroid_accuracy(train: Split, test: Split, modality: int) -> float:
    """Single-modality nearest-centroid accuracy, the difficulty oracle."""
    xtr, xte = train.x[modality], test.x[modality]
    cents = np.stack([xtr[train.y == c].mean(axis=0) for c in range(train.n_classes)])
    d2 = ((xte[:, None, :] - cents[None]) ** 2).sum(axis=-1)
    return float((d2.argmin(axis=1) == test.y).mean())


# -- on-disk cache --------------------------------------------------------
# header: u32 N, u32 C, N x u32 raw dims; then per sample the concatenated
# float32 modality rows followed by a u16 label; all little-endian.


def write_split(split: Split, path: str | os.PathLike) -> None:
    dims = [xm.shape[1] for xm in split.x]
    rows = np.concatenate(split.x, axis=1).astype("<f4")
    with open(path, "wb") as fh:
        fh.write(struct.pack(f"<II{len(dims)}I", len(dims), split.n_classes, *dims))
        for row, label in zip(rows, split.y):
            fh.write(row.tobytes())
            fh.write(struct.pack("<H", int(label)))


def read_split(path: str | os.PathLike) -> Split:
    with open(path, "rb") as fh:
        data = fh.read()
    n, c = struct.unpack_from("<II", data, 0)
    dims = struct.unpack_from(f"<{n}I", data, 8)
    offset = 8 + 4 * n
    record = 4 * sum(dims) + 2
    body = data[offset:]
    if len(body) % record:
        raise ValueError(f"{path}: payload size is not a whole number of samples")
    count = len(body) // record
    dtype = np.dtype([("x", "<f4", (sum(dims),)), ("y", "<u2")])
    recs = np.frombuffer(body, dtype=dtype, count=count)
    flat = recs["x"].astype(np.float64)
    bounds = np.cumsum(dims)[:-1]
    return Split(list(np.split(flat, bounds, axis=1)), recs["y"].astype(np.int64), c)


def write_dataset(ds: Dataset, directory: str | os.PathLike) -> list[str]:
    os.makedirs(directory, exist_ok=True)
    paths = []
    for name in ("train", "val", "test"):
        path = os.path.join(directory, f"{name}.bin")
        write_split(getattr(ds, name), path)
        paths.append(path)
    return paths


def read_dataset(spec: DatasetSpec, directory: str | os.PathLike) -> Dataset:
    splits = [read_split(os.path.join(directory, f"{n}.bin")) for n in ("train", "val", "test")]
    return Dataset(spec, *splits)


def make_spec(snr: Sequence[float], **kwargs) -> DatasetSpec:
    n = len(snr)
    kwargs.setdefault("raw_dims", (32,) * n)
    return DatasetSpec(n_modalities=n, snr=tuple(snr), **kwargs)
