"""Datasets: MNIST from IDX files, synthetic Gaussian blobs, seeded batches."""

import gzip
import hashlib
import logging
import os
import struct
from dataclasses import dataclass

import numpy as np

from collapse import numcore
from collapse.exceptions import ArgumentError, DataFormatError

logger = logging.getLogger(__name__)

IDX_IMAGE_MAGIC = 2051
IDX_LABEL_MAGIC = 2049

MNIST_FILES = {
    "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
}


@dataclass(frozen=True, eq=False)
class Dataset:
    x: np.ndarray
    y: np.ndarray
    num_classes: int
    name: str

    def __post_init__(self):
        x = numcore.as_matrix(self.x).view()
        y = np.asarray(self.y, dtype=np.int64).view()
        if y.ndim != 1 or y.shape[0] != x.shape[0]:
            raise ArgumentError(f"{x.shape[0]} samples but {y.shape} labels")
        if y.min() < 0 or y.max() >= self.num_classes:
            raise ArgumentError(f"labels must lie in 0..{self.num_classes - 1}")
        if x.shape[0] < self.num_classes:
            raise ArgumentError("need at least one sample per class")
        counts = np.bincount(y, minlength=self.num_classes)
        if (counts == 0).any():
            missing = np.flatnonzero(counts == 0).tolist()
            raise ArgumentError(f"classes {missing} have no samples")
        x.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    def __len__(self):
        return self.x.shape[0]

    def __str__(self):
        return self.name

    @property
    def dim(self):
        return self.x.shape[1]

    def class_counts(self):
        return np.bincount(self.y, minlength=self.num_classes)

    def content_hash(self):
        sha = hashlib.sha256()
        sha.update(np.ascontiguousarray(self.x, dtype="<f8").tobytes())
        sha.update(np.ascontiguousarray(self.y, dtype="<i8").tobytes())
        sha.update(str(self.num_classes).encode())
        return sha.hexdigest()

    def head(self, n):
        """First ``n`` samples in file order."""
        return Dataset(
            x=self.x[:n], y=self.y[:n], num_classes=self.num_classes, name=f"{self.name}[:{n}]"
        )


def _read_idx(path, expected_magic, ndim):
    opener = gzip.open if str(path).endswith(".gz") else open
    try:
        with opener(path, "rb") as f:
            raw = f.read()
    except OSError as exc:
        raise DataFormatError(f"cannot read IDX file: {exc}", path=path) from exc

    header_size = 4 * (1 + ndim)
    if len(raw) < header_size:
        raise DataFormatError("truncated IDX header", path=path)
    magic, *dims = struct.unpack(f">{1 + ndim}I", raw[:header_size])
    if magic != expected_magic:
        raise DataFormatError(
            f"wrong magic number {magic:#010x}, expected {expected_magic:#010x}", path=path
        )
    expected = int(np.prod(dims))
    body = raw[header_size:]
    if len(body) != expected:
        raise DataFormatError(
            f"IDX body has {len(body)} bytes, header promises {expected}", path=path
        )
    return np.frombuffer(body, dtype=np.uint8).reshape(dims)


def load_idx(images_path, labels_path, name=None):
    """Images scaled to [0, 1] by dividing by 255, flattened row-wise."""
    images = _read_idx(images_path, IDX_IMAGE_MAGIC, ndim=3)
    labels = _read_idx(labels_path, IDX_LABEL_MAGIC, ndim=1)
    if images.shape[0] != labels.shape[0]:
        raise DataFormatError(
            f"{images.shape[0]} images but {labels.shape[0]} labels", path=labels_path
        )
    x = images.reshape(images.shape[0], -1).astype(np.float64) / 255.0
    y = labels.astype(np.int64)
    num_classes = int(y.max()) + 1
    dataset = Dataset(x=x, y=y, num_classes=num_classes, name=name or "idx")
    logger.info("Loaded %s: N=%d D=%d K=%d", dataset.name, len(dataset), dataset.dim, num_classes)
    return dataset


def _find(data_dir, stem):
    for candidate in (stem, stem + ".gz"):
        path = os.path.join(data_dir, candidate)
        if os.path.exists(path):
            return path
    raise DataFormatError(f"no {stem}[.gz] under {data_dir}")


def load_mnist(data_dir, split="train", limit=None):
    images_stem, labels_stem = MNIST_FILES[split]
    dataset = load_idx(
        _find(data_dir, images_stem), _find(data_dir, labels_stem), name=f"mnist-{split}"
    )
    if limit:
        dataset = dataset.head(limit)
    return dataset


def mnist_available(data_dir, split="train"):
    try:
        for stem in MNIST_FILES[split]:
            _find(data_dir, stem)
    except DataFormatError:
        return False
    return True


def make_blobs(rng, num_classes, per_class, dim, separation, noise_sigma):
    """Class ``c`` is centred at ``separation * e_c``; samples are class-major."""
    if num_classes < 2 or per_class < 1 or dim < 1:
        raise ArgumentError("num_classes >= 2, per_class >= 1 and dim >= 1 are required")
    if dim < num_classes:
        raise ArgumentError(f"dim ({dim}) must be >= num_classes ({num_classes})")
    if noise_sigma <= 0:
        raise ArgumentError(f"noise_sigma must be positive, got {noise_sigma}")

    means = np.zeros((num_classes, dim))
    means[np.arange(num_classes), np.arange(num_classes)] = separation
    noise = numcore.gaussian(rng, num_classes * per_class * dim)
    noise = noise.reshape(num_classes * per_class, dim) * noise_sigma
    y = np.repeat(np.arange(num_classes), per_class)
    x = means[y] + noise
    return Dataset(
        x=x,
        y=y,
        num_classes=num_classes,
        name=f"blobs-k{num_classes}-n{per_class}-d{dim}",
    )


@dataclass(frozen=True)
class BatchPlan:
    batch_size: int
    seed: int

    def __post_init__(self):
        if self.batch_size < 1:
            raise ArgumentError(f"batch_size must be >= 1, got {self.batch_size}")

    def permutation(self, n, epoch):
        return numcore.epoch_rng(self.seed, epoch).permutation(n)


def batches(data, plan, epoch):
    n = len(data)
    if plan.batch_size > n:
        raise ArgumentError(f"batch_size {plan.batch_size} exceeds dataset size {n}")
    order = plan.permutation(n, epoch)
    for start in range(0, n, plan.batch_size):
        index = order[start : start + plan.batch_size]
        yield data.x[index], data.y[index]


def ordered_batches(data, batch_size):
    """Insertion-order batches for full-dataset metric passes."""
    for start in range(0, len(data), batch_size):
        yield data.x[start : start + batch_size], data.y[start : start + batch_size]


def dataset_from_descriptor(descriptor, data_dir=None):
    """Rebuild a dataset from a manifest descriptor.

    ``{"kind": "blobs", "seed": .., "num_classes": .., "per_class": .., "dim": ..,
    "separation": .., "noise_sigma": ..}`` or
    ``{"kind": "mnist", "split": "train", "limit": null}``.
    """
    kind = descriptor.get("kind")
    if kind == "blobs":
        return make_blobs(
            numcore.run_rng(descriptor.get("seed", 0)),
            num_classes=descriptor["num_classes"],
            per_class=descriptor["per_class"],
            dim=descriptor["dim"],
            separation=descriptor["separation"],
            noise_sigma=descriptor["noise_sigma"],
        )
    if kind == "mnist":
        directory = descriptor.get("data_dir") or data_dir
        if not directory:
            raise DataFormatError("MNIST needs a data directory")
        return load_mnist(directory, descriptor.get("split", "train"), descriptor.get("limit"))
    raise DataFormatError(f"unknown dataset kind {kind!r}")
