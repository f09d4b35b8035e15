"""MNIST IDX reader/writer and a seeded synthetic stand-in."""
from __future__ import annotations

import gzip
import os
import struct
from pathlib import Path

import numpy as np

from ..numcore import make_rng
from .neuralnet import ClassificationDataset

IMAGES_MAGIC = 0x00000803
LABELS_MAGIC = 0x00000801
MNIST_FILES = {
    "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
}
DATA_ENV = "MLLANDSCAPE_DATA"


class IdxFormatError(ValueError):
    pass


def _open(path):
    path = str(path)
    return gzip.open(path, "rb") if path.endswith(".gz") else open(path, "rb")


def read_idx(path) -> np.ndarray:
    """Read an unsigned-byte IDX file (images or labels)."""
    with _open(path) as fh:
        raw = fh.read()
    if len(raw) < 4:
        raise IdxFormatError(f"{path}: truncated header")
    magic = struct.unpack(">I", raw[:4])[0]
    if magic not in (IMAGES_MAGIC, LABELS_MAGIC):
        raise IdxFormatError(f"{path}: bad magic {magic:#010x}")
    ndim = magic & 0xFF
    header = 4 + 4 * ndim
    if len(raw) < header:
        raise IdxFormatError(f"{path}: truncated header")
    shape = struct.unpack(">" + "I" * ndim, raw[4:header])
    count = int(np.prod(shape))
    if len(raw) - header != count:
        raise IdxFormatError(f"{path}: expected {count} data bytes, found {len(raw) - header}")
    return np.frombuffer(raw, dtype=np.uint8, offset=header).reshape(shape)


def write_idx(path, array) -> None:
    a = np.ascontiguousarray(array, dtype=np.uint8)
    magic = IMAGES_MAGIC if a.ndim == 3 else LABELS_MAGIC
    if a.ndim not in (1, 3):
        raise ValueError("IDX writer supports label vectors and image stacks only")
    with open(path, "wb") as fh:
        fh.write(struct.pack(">I", magic))
        fh.write(struct.pack(">" + "I" * a.ndim, *a.shape))
        fh.write(a.tobytes())


def mnist_paths(data_dir, split: str) -> list[Path]:
    return [Path(data_dir) / name for name in MNIST_FILES[split]]


def _find(p: Path):
    for cand in (p, p.with_name(p.name + ".gz")):
        if cand.exists():
            return cand
    return None


def load_mnist(data_dir=None, split: str = "train", limit: int | None = None) -> ClassificationDataset:
    """Images scaled to [0, 1] and flattened; labels 0-9."""
    data_dir = data_dir or os.environ.get(DATA_ENV, ".")
    paths = mnist_paths(Path(data_dir).resolve(), split)
    found = [_find(p) for p in paths]
    if None in found:
        missing = [str(p) for p, f in zip(paths, found) if f is None]
        raise FileNotFoundError("MNIST IDX files not found: " + ", ".join(missing)
                                + f" (set {DATA_ENV} or pass a data directory)")
    images = read_idx(found[0])
    labels = read_idx(found[1])
    if limit is not None:
        images, labels = images[:limit], labels[:limit]
    X = images.reshape(images.shape[0], -1).astype(float) / 255.0
    return ClassificationDataset(X, labels.astype(int), 10)


def synthetic_blobs(n: int, n_in: int = 20, n_classes: int = 10, spread: float = 1.0,
                    seed: int = 0) -> ClassificationDataset:
    """Gaussian class clusters with overlapping tails, scaled to [0, 1]."""
    rng = make_rng(seed)
    centers = rng.standard_normal((n_classes, n_in)) * 1.5
    labels = rng.integers(0, n_classes, size=n)
    X = centers[labels] + spread * rng.standard_normal((n, n_in))
    lo, hi = X.min(axis=0), X.max(axis=0)
    X = (X - lo) / np.where(hi > lo, hi - lo, 1.0)
    return ClassificationDataset(X, labels, n_classes)
