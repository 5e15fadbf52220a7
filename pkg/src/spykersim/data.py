"""Datasets: IDX loading, synthetic blobs, non-iid partitioning, caching.

Features are float32 throughout (matching the cache encoding, so cache
round-trips are bitwise); labels are int64.  All generation and partitioning
is pure given a seed.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import (
    ConfigError,
    DataFormatError,
    IdxCountMismatchError,
    IdxMagicError,
    IdxTruncatedError,
)

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801

CACHE_MAGIC = b"SPYKDS01"


@dataclass(frozen=True)
class Dataset:
    """An in-memory labelled dataset; immutable after construction."""

    features: np.ndarray
    labels: np.ndarray
    n_classes: int
    name: str = "unnamed"

    def __post_init__(self):
        X, y = self.features, self.labels
        if X.ndim != 2 or len(y) != X.shape[0]:
            raise ValueError("features must be (n, dim) with one label per row")
        if X.shape[0] == 0:
            raise ValueError("dataset must be non-empty")
        if not np.all(np.isfinite(X)):
            raise ValueError("features must be finite")
        if y.min() < 0 or y.max() >= self.n_classes:
            raise ValueError(f"labels must lie in [0, {self.n_classes})")
        X.setflags(write=False)
        y.setflags(write=False)

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def subset(self, idx: np.ndarray, name: str | None = None) -> "Dataset":
        return Dataset(
            np.ascontiguousarray(self.features[idx]),
            np.ascontiguousarray(self.labels[idx]),
            self.n_classes,
            name or self.name,
        )


@dataclass(frozen=True)
class PartitionSpec:
    """How to carve a training set into per-client shards."""

    n_clients: int
    labels_per_client: int
    seed: int = 0

    def validate(self, n_classes: int) -> None:
        if self.n_clients < 1:
            raise ConfigError("n_clients must be >= 1")
        if not 1 <= self.labels_per_client <= n_classes:
            raise ConfigError(
                f"labels_per_client must be in [1, {n_classes}], got {self.labels_per_client}"
            )
        if self.n_clients * self.labels_per_client < n_classes:
            raise ConfigError(
                "n_clients * labels_per_client must cover all classes: "
                f"{self.n_clients} * {self.labels_per_client} < {n_classes}"
            )


def _read_idx_header(buf: bytes, path: str) -> tuple[int, list[int], int]:
    if len(buf) < 4:
        raise IdxTruncatedError(f"{path}: too short for an IDX header")
    magic = struct.unpack(">I", buf[:4])[0]
    ndim = magic & 0xFF
    if magic >> 16 != 0 or ndim == 0:
        raise IdxMagicError(f"{path}: bad IDX magic 0x{magic:08x}")
    header = 4 + 4 * ndim
    if len(buf) < header:
        raise IdxTruncatedError(f"{path}: truncated IDX dimension header")
    dims = list(struct.unpack(f">{ndim}I", buf[4:header]))
    return magic, dims, header


def load_idx(images_path: str, labels_path: str) -> Dataset:
    """Load an IDX image/label file pair into a flat float32 dataset.

    Pixel bytes are scaled to [0, 1].  Raises IdxMagicError when a file does
    not carry the expected magic (e.g. swapped arguments), IdxTruncatedError
    when the payload is shorter than the header promises, and
    IdxCountMismatchError when the two files disagree on the sample count.
    """
    with open(images_path, "rb") as f:
        img_buf = f.read()
    with open(labels_path, "rb") as f:
        lab_buf = f.read()

    img_magic, img_dims, img_off = _read_idx_header(img_buf, images_path)
    if img_magic != IDX_IMAGES_MAGIC:
        raise IdxMagicError(
            f"{images_path}: expected image magic 0x{IDX_IMAGES_MAGIC:08x}, got 0x{img_magic:08x}"
        )
    lab_magic, lab_dims, lab_off = _read_idx_header(lab_buf, labels_path)
    if lab_magic != IDX_LABELS_MAGIC:
        raise IdxMagicError(
            f"{labels_path}: expected label magic 0x{IDX_LABELS_MAGIC:08x}, got 0x{lab_magic:08x}"
        )

    n = img_dims[0]
    dim = int(np.prod(img_dims[1:])) if len(img_dims) > 1 else 1
    if len(img_buf) - img_off < n * dim:
        raise IdxTruncatedError(f"{images_path}: expected {n * dim} pixel bytes")
    if len(lab_buf) - lab_off < lab_dims[0]:
        raise IdxTruncatedError(f"{labels_path}: expected {lab_dims[0]} label bytes")
    if lab_dims[0] != n:
        raise IdxCountMismatchError(
            f"{images_path} has {n} samples but {labels_path} has {lab_dims[0]}"
        )

    pixels = np.frombuffer(img_buf, dtype=np.uint8, count=n * dim, offset=img_off)
    X = (pixels.astype(np.float32) / np.float32(255.0)).reshape(n, dim)
    y = np.frombuffer(lab_buf, dtype=np.uint8, count=n, offset=lab_off).astype(np.int64)
    n_classes = int(y.max()) + 1 if n else 0
    return Dataset(X, y, n_classes, name="idx")


def synthetic_dataset(
    seed: int | np.random.Generator,
    n_samples: int,
    dim: int,
    n_classes: int,
    separation: float,
    name: str | None = None,
) -> Dataset:
    """Balanced Gaussian blobs around centroids whose closest pair is exactly
    `separation` apart.

    Centroids are sampled standard normal and rescaled as a set, so blob std
    1 makes `separation` a direct control of class overlap: the hardest pair
    has Bayes error Phi(-separation / 2).
    """
    if n_classes < 2:
        raise ValueError("n_classes must be >= 2")
    if separation <= 0:
        raise ValueError("separation must be > 0")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)

    while True:
        C = rng.normal(size=(n_classes, dim))
        gaps = np.linalg.norm(C[:, None, :] - C[None, :, :], axis=-1)
        np.fill_diagonal(gaps, np.inf)
        if gaps.min() > 1e-9:
            break
    C *= separation / gaps.min()

    base = n_samples // n_classes
    counts = [base + (1 if k < n_samples % n_classes else 0) for k in range(n_classes)]
    X = np.concatenate(
        [C[k] + rng.normal(size=(counts[k], dim)) for k in range(n_classes)]
    )
    y = np.concatenate([np.full(counts[k], k, dtype=np.int64) for k in range(n_classes)])
    order = rng.permutation(n_samples)
    return Dataset(
        X[order].astype(np.float32),
        y[order],
        n_classes,
        name or f"synthetic-{n_classes}c-{dim}d",
    )


def train_test_split(
    data: Dataset, test_fraction: float, seed: int | np.random.Generator
) -> tuple[Dataset, Dataset]:
    """Stratified split: per class, a seeded slice of about test_fraction goes to test."""
    if not 0 < test_fraction < 1:
        raise ValueError("test_fraction must be in (0, 1)")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    test_idx: list[np.ndarray] = []
    train_idx: list[np.ndarray] = []
    for c in range(data.n_classes):
        members = np.flatnonzero(data.labels == c)
        members = members[rng.permutation(len(members))]
        k = int(round(len(members) * test_fraction))
        k = min(max(k, 1), len(members) - 1) if len(members) > 1 else 0
        test_idx.append(members[:k])
        train_idx.append(members[k:])
    return (
        data.subset(np.sort(np.concatenate(train_idx)), data.name + "-train"),
        data.subset(np.sort(np.concatenate(test_idx)), data.name + "-test"),
    )


def partition_noniid(data: Dataset, spec: PartitionSpec) -> list[Dataset]:
    """Split a dataset into per-client shards restricted to l labels each.

    Labels are sorted, permuted once with the partition seed, and dealt to
    clients in consecutive windows of size l that wrap around the
    permutation, so every label is assigned before any repeats and each
    client holds exactly min(l, n_classes) distinct labels.  Each label's
    samples are then split evenly among its clients, with the larger chunks
    steered to the currently smallest shards.
    """
    present = np.unique(data.labels)
    spec.validate(data.n_classes)
    n, l = spec.n_clients, min(spec.labels_per_client, len(present))
    rng = np.random.default_rng(spec.seed)

    perm = present[rng.permutation(len(present))]
    client_labels = [
        {perm[(i * l + j) % len(perm)] for j in range(l)} for i in range(n)
    ]
    label_clients: dict[int, list[int]] = {int(c): [] for c in present}
    for i, labs in enumerate(client_labels):
        for c in labs:
            label_clients[int(c)].append(i)

    shard_idx: list[list[np.ndarray]] = [[] for _ in range(n)]
    shard_sizes = np.zeros(n, dtype=np.int64)
    for c in sorted(label_clients):
        members = np.flatnonzero(data.labels == c)
        members = members[rng.permutation(len(members))]
        owners = label_clients[c]
        chunks = np.array_split(members, len(owners))
        # np.array_split yields the larger chunks first; hand those to the
        # clients that currently hold the least data.
        order = sorted(owners, key=lambda i: (shard_sizes[i], i))
        for chunk, i in zip(chunks, order):
            shard_idx[i].append(chunk)
            shard_sizes[i] += len(chunk)
    shards = []
    for i in range(n):
        if not shard_idx[i] or shard_sizes[i] == 0:
            raise ConfigError(
                f"partition left client {i} without data; "
                "reduce n_clients or rebalance labels_per_client"
            )
        idx = np.sort(np.concatenate(shard_idx[i]))
        shards.append(data.subset(idx, f"{data.name}-shard{i}"))
    return shards


def evaluate(model, test: Dataset) -> float:
    """Fraction of argmax-correct predictions; argmax ties go to the lowest class."""
    from . import models

    pred = models.predict(model, np.asarray(test.features, dtype=np.float64))
    return float(np.mean(pred == test.labels))


def save_cache(data: Dataset, path: str) -> None:
    """Serialize to the versioned cache layout: header, float32 features, int32 labels."""
    name_bytes = data.name.encode("utf-8")
    X = np.ascontiguousarray(data.features, dtype="<f4")
    y = np.ascontiguousarray(data.labels, dtype="<i4")
    with open(path, "wb") as f:
        f.write(CACHE_MAGIC)
        f.write(
            struct.pack(
                "<IIII", data.n_samples, data.dim, data.n_classes, len(name_bytes)
            )
        )
        f.write(name_bytes)
        f.write(X.tobytes())
        f.write(y.tobytes())


def load_cache(path: str) -> Dataset:
    with open(path, "rb") as f:
        buf = f.read()
    if len(buf) < len(CACHE_MAGIC) + 16:
        raise DataFormatError(f"{path}: too short for a cache header")
    if buf[: len(CACHE_MAGIC)] != CACHE_MAGIC:
        raise DataFormatError(f"{path}: bad cache magic {buf[:8]!r}")
    off = len(CACHE_MAGIC)
    n, dim, n_classes, name_len = struct.unpack_from("<IIII", buf, off)
    off += 16
    name = buf[off : off + name_len].decode("utf-8")
    off += name_len
    need = n * dim * 4 + n * 4
    if len(buf) - off < need:
        raise DataFormatError(f"{path}: cache payload truncated")
    X = np.frombuffer(buf, dtype="<f4", count=n * dim, offset=off).reshape(n, dim)
    off += n * dim * 4
    y = np.frombuffer(buf, dtype="<i4", count=n, offset=off).astype(np.int64)
    return Dataset(X.astype(np.float32), y, int(n_classes), name)


CIFAR_RECORD = 3073


def load_cifar10(batch_paths: list[str]) -> Dataset:
    """Read CIFAR-10 binary batches, downsampled to 16x16 grayscale in [0, 1].

    Each record is 1 label byte followed by 3072 pixel bytes (three 32x32
    channel planes).  Grayscale is the channel mean; downsampling averages
    2x2 blocks, giving 256 features per image.
    """
    images = []
    labels = []
    for path in batch_paths:
        with open(path, "rb") as f:
            buf = f.read()
        if len(buf) == 0 or len(buf) % CIFAR_RECORD != 0:
            raise DataFormatError(
                f"{path}: size {len(buf)} is not a multiple of {CIFAR_RECORD}"
            )
        rec = np.frombuffer(buf, dtype=np.uint8).reshape(-1, CIFAR_RECORD)
        y = rec[:, 0].astype(np.int64)
        if y.max() > 9:
            raise DataFormatError(f"{path}: label byte out of range [0, 10)")
        planes = rec[:, 1:].reshape(-1, 3, 32, 32).astype(np.float32)
        gray = planes.mean(axis=1) / np.float32(255.0)
        pooled = gray.reshape(-1, 16, 2, 16, 2).mean(axis=(2, 4))
        images.append(pooled.reshape(-1, 256).astype(np.float32))
        labels.append(y)
    if not images:
        raise DataFormatError("no CIFAR batch paths given")
    return Dataset(np.concatenate(images), np.concatenate(labels), 10, name="cifar10-16x16")
