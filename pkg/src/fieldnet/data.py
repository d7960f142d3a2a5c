"""Dataset ingestion and synthetic desk-scale datasets.

CIFAR-10/100 are read from the standard binary batches.  Loaders return
raw pixel values in [0, 255]; call normalize() afterwards.  Synthetic
datasets are generated inside [-1, 1] so the integer activation's
interval parameter stays meaningful.
"""

from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass, replace
from typing import Iterator, Optional, Tuple

import numpy as np

CIFAR10_RECORD = 3073
CIFAR10_BATCH_BYTES = 10000 * CIFAR10_RECORD
CIFAR100_RECORD = 3074


@dataclass(frozen=True)
class Dataset:
    images: np.ndarray  # (N, 3, 32, 32) for CIFAR, (N, D) for synthetic
    labels: np.ndarray  # (N,) int64
    num_classes: int
    name: str

    def __post_init__(self):
        if len(self.images) != len(self.labels):
            raise ValueError("images/labels length mismatch")
        if len(self.labels) and int(self.labels.max()) >= self.num_classes:
            raise ValueError("label out of range")

    def __len__(self) -> int:
        return len(self.labels)


def _parse_cifar10_batch(buf: bytes, path: str) -> Tuple[np.ndarray, np.ndarray]:
    if len(buf) != CIFAR10_BATCH_BYTES:
        raise ValueError(
            f"{path}: expected {CIFAR10_BATCH_BYTES} bytes, got {len(buf)}"
        )
    rec = np.frombuffer(buf, dtype=np.uint8).reshape(10000, CIFAR10_RECORD)
    labels = rec[:, 0].astype(np.int64)
    if labels.max() >= 10:
        raise ValueError(f"{path}: label byte {labels.max()} >= 10")
    images = rec[:, 1:].reshape(10000, 3, 32, 32).astype(np.float64)
    return images, labels


def load_cifar10(data_dir: str) -> Tuple[Dataset, Dataset]:
    """Reads data_batch_{1..5}.bin and test_batch.bin (3073-byte records)."""
    train_imgs, train_labels = [], []
    for i in range(1, 6):
        path = os.path.join(data_dir, f"data_batch_{i}.bin")
        with open(path, "rb") as fh:
            imgs, labels = _parse_cifar10_batch(fh.read(), path)
        train_imgs.append(imgs)
        train_labels.append(labels)
    path = os.path.join(data_dir, "test_batch.bin")
    with open(path, "rb") as fh:
        test_imgs, test_labels = _parse_cifar10_batch(fh.read(), path)
    train = Dataset(np.concatenate(train_imgs), np.concatenate(train_labels), 10, "cifar10-train")
    test = Dataset(test_imgs, test_labels, 10, "cifar10-test")
    return train, test


def _parse_cifar100_file(buf: bytes, n_records: int, path: str) -> Tuple[np.ndarray, np.ndarray]:
    expect = n_records * CIFAR100_RECORD
    if len(buf) != expect:
        raise ValueError(f"{path}: expected {expect} bytes, got {len(buf)}")
    rec = np.frombuffer(buf, dtype=np.uint8).reshape(n_records, CIFAR100_RECORD)
    fine = rec[:, 1].astype(np.int64)  # byte 0 is the coarse label
    if fine.max() >= 100:
        raise ValueError(f"{path}: fine label {fine.max()} >= 100")
    images = rec[:, 2:].reshape(n_records, 3, 32, 32).astype(np.float64)
    return images, fine


def load_cifar100(data_dir: str) -> Tuple[Dataset, Dataset]:
    """Reads train.bin / test.bin (3074-byte records: coarse, fine, pixels)."""
    with open(os.path.join(data_dir, "train.bin"), "rb") as fh:
        tr_imgs, tr_labels = _parse_cifar100_file(fh.read(), 50000, "train.bin")
    with open(os.path.join(data_dir, "test.bin"), "rb") as fh:
        te_imgs, te_labels = _parse_cifar100_file(fh.read(), 10000, "test.bin")
    train = Dataset(tr_imgs, tr_labels, 100, "cifar100-train")
    test = Dataset(te_imgs, te_labels, 100, "cifar100-test")
    return train, test


def channel_stats(ds: Dataset) -> Tuple[np.ndarray, np.ndarray]:
    """Per-channel mean/std over an image dataset."""
    mean = ds.images.mean(axis=(0, 2, 3))
    std = ds.images.std(axis=(0, 2, 3))
    return mean, std


def normalize(
    ds: Dataset,
    mode: str = "unit_interval",
    stats: Optional[Tuple[np.ndarray, np.ndarray]] = None,
) -> Dataset:
    """unit_interval maps bytes to [-1, 1]; per_channel_standardize uses
    train statistics (pass the train stats when transforming a test set)."""
    if mode == "unit_interval":
        images = ds.images / 127.5 - 1.0
    elif mode == "per_channel_standardize":
        mean, std = stats if stats is not None else channel_stats(ds)
        images = (ds.images - mean[:, None, None]) / std[:, None, None]
    else:
        raise ValueError(f"unknown normalization mode {mode!r}")
    return replace(ds, images=images, name=ds.name + f"/{mode}")


def _content_key(img: np.ndarray) -> bytes:
    return hashlib.blake2b(np.ascontiguousarray(img).tobytes(), digest_size=16).digest()


def subset(ds: Dataset, n_per_class: int, seed: int) -> Dataset:
    """Class-balanced deterministic subsample.

    Selection is made on a content-sorted view of each class, so the result
    does not depend on the row order of the input dataset.
    """
    if n_per_class * ds.num_classes > len(ds):
        raise ValueError("not enough samples for the requested subset")
    rng = np.random.default_rng(seed)
    picked = []
    for k in range(ds.num_classes):
        idx = np.flatnonzero(ds.labels == k)
        if len(idx) < n_per_class:
            raise ValueError(f"class {k} has only {len(idx)} samples, need {n_per_class}")
        order = sorted(idx, key=lambda i: _content_key(ds.images[i]))
        perm = rng.permutation(len(order))[:n_per_class]
        picked.extend(order[j] for j in perm)
    picked = np.array(picked)
    return replace(
        ds,
        images=ds.images[picked].copy(),
        labels=ds.labels[picked].copy(),
        name=ds.name + f"/subset{n_per_class}",
    )


def batches(
    ds: Dataset, batch_size: int, seed: int = 0, shuffle: bool = True
) -> Iterator[Tuple[np.ndarray, np.ndarray]]:
    """Deterministic batch iterator; the last partial batch is kept."""
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    n = len(ds)
    order = np.random.default_rng(seed).permutation(n) if shuffle else np.arange(n)
    for start in range(0, n, batch_size):
        sel = order[start : start + batch_size]
        yield ds.images[sel], ds.labels[sel]


def num_batches(n: int, batch_size: int) -> int:
    return (n + batch_size - 1) // batch_size


def _corner_centers(classes: int, dims: int) -> np.ndarray:
    if classes > 2**dims:
        raise ValueError(f"{classes} classes need at least {math_ceil_log2(classes)} dims")
    centers = np.empty((classes, dims))
    for k in range(classes):
        # spread the classes over the corner indices so 2 classes land on
        # opposite corners
        corner = k if classes < 2 else round(k * (2**dims - 1) / (classes - 1))
        for d in range(dims):
            centers[k, d] = 0.7 if (corner >> d) & 1 else -0.7
    return centers


def math_ceil_log2(n: int) -> int:
    return int(np.ceil(np.log2(max(n, 1))))


def synth_blobs(classes: int, dims: int, n: int, seed: int, noise_std: float = 0.1) -> Dataset:
    """Gaussian clusters at fixed corner centers inside [-1, 1]^dims.

    Noise is truncated to +-0.25 per coordinate, so the clusters keep a
    guaranteed margin.
    """
    if classes < 2 or dims < 1 or n < classes:
        raise ValueError("need classes >= 2, dims >= 1, n >= classes")
    centers = _corner_centers(classes, dims)
    rng = np.random.default_rng(seed)
    labels = np.arange(n) % classes
    noise = np.clip(rng.normal(0.0, noise_std, size=(n, dims)), -0.25, 0.25)
    images = np.clip(centers[labels] + noise, -1.0, 1.0)
    perm = rng.permutation(n)
    return Dataset(images[perm], labels[perm].astype(np.int64), classes, f"blobs{classes}x{dims}")


def synth_spirals(n: int, turns: float, noise: float, seed: int) -> Dataset:
    """Two interleaved spirals in [-1, 1]^2; needs a nonlinear boundary."""
    if n < 2:
        raise ValueError("need n >= 2")
    rng = np.random.default_rng(seed)
    half = n // 2
    counts = (half, n - half)
    xs, ys = [], []
    for cls, cnt in enumerate(counts):
        t = rng.random(cnt)
        theta = 2.0 * np.pi * turns * t + cls * np.pi
        r = 0.1 + 0.85 * t
        pts = np.stack([r * np.cos(theta), r * np.sin(theta)], axis=1)
        pts += rng.normal(0.0, 1.0, size=pts.shape) * noise
        xs.append(pts)
        ys.append(np.full(cnt, cls, dtype=np.int64))
    images = np.clip(np.concatenate(xs), -1.0, 1.0)
    labels = np.concatenate(ys)
    perm = rng.permutation(n)
    return Dataset(images[perm], labels[perm], 2, f"spirals{turns}")
