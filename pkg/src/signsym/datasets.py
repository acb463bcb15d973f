"""Dataset readers: MNIST (IDX), CIFAR-10 (binary batches) and seeded blobs.

All loaders return ``(inputs, labels)`` with float64 inputs scaled to
[0, 1] in (N, C, H, W) layout (blobs: (N, D)) and int64 labels.

MNIST is read from ``data_dir`` or ``$SIGNSYM_MNIST_DIR``; without either,
the bundled 5,000-image subset (4,000 train / 1,000 test) is used.
"""

from __future__ import annotations

import gzip
import os
import struct
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataFormatError
from .tensor import SeededRng

IDX_DTYPES = {0x08: np.uint8, 0x09: np.int8, 0x0B: ">i2", 0x0C: ">i4", 0x0D: ">f4", 0x0E: ">f8"}
CIFAR_RECORD = 1 + 3072


def _read_maybe_gzip(path) -> bytes:
    raw = Path(path).read_bytes()
    if raw[:2] == b"\x1f\x8b":
        try:
            return gzip.decompress(raw)
        except (OSError, EOFError) as exc:
            raise DataFormatError(f"{path}: corrupt gzip stream ({exc})") from None
    return raw


def parse_idx(data: bytes) -> np.ndarray:
    """Decode an IDX blob (big-endian header: 0x0000, dtype byte, ndim, dims)."""
    if len(data) < 4:
        raise DataFormatError("truncated IDX header", len(data))
    zero, code, ndim = struct.unpack_from(">HBB", data, 0)
    if zero != 0 or code not in IDX_DTYPES:
        raise DataFormatError(f"bad IDX magic 0x{struct.unpack_from('>I', data, 0)[0]:08x}", 0)
    header = 4 + 4 * ndim
    if len(data) < header:
        raise DataFormatError("truncated IDX dimension list", len(data))
    dims = struct.unpack_from(f">{ndim}I", data, 4)
    dtype = np.dtype(IDX_DTYPES[code])
    expected = header + int(np.prod(dims)) * dtype.itemsize
    if len(data) != expected:
        raise DataFormatError(
            f"IDX body length mismatch: dims {dims} need {expected} bytes, file has {len(data)}",
            min(len(data), expected),
        )
    return np.frombuffer(data, dtype=dtype, offset=header).reshape(dims)


def read_idx(path) -> np.ndarray:
    return parse_idx(_read_maybe_gzip(path))


def write_idx(path, array: np.ndarray) -> None:
    """Write a uint8 array as (optionally gzipped, by .gz suffix) IDX."""
    arr = np.ascontiguousarray(array, dtype=np.uint8)
    blob = struct.pack(">HBB", 0, 0x08, arr.ndim) + struct.pack(f">{arr.ndim}I", *arr.shape)
    blob += arr.tobytes()
    path = Path(path)
    if path.suffix == ".gz":
        with gzip.GzipFile(path, "wb", mtime=0) as fh:
            fh.write(blob)
    else:
        path.write_bytes(blob)


MNIST_FILES = {
    "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
}


def bundled_mnist_dir() -> Path:
    return Path(str(resources.files("signsym") / "data" / "mnist5k"))


def _find(directory: Path, stem: str) -> Path:
    for name in (stem, stem + ".gz", stem.replace("-idx", ".idx")):
        if (directory / name).exists():
            return directory / name
    raise FileNotFoundError(f"{stem}[.gz] not found in {directory}")


def load_mnist(split: str = "train", data_dir=None):
    if split not in MNIST_FILES:
        raise ConfigError(f"MNIST split must be 'train' or 'test', got {split!r}")
    directory = Path(data_dir or os.environ.get("SIGNSYM_MNIST_DIR") or bundled_mnist_dir())
    img_stem, lab_stem = MNIST_FILES[split]
    images = read_idx(_find(directory, img_stem))
    labels = read_idx(_find(directory, lab_stem))
    if images.ndim != 3 or labels.ndim != 1 or len(images) != len(labels):
        raise DataFormatError(f"MNIST shapes disagree: images {images.shape}, labels {labels.shape}")
    x = images.astype(np.float64)[:, None] / 255.0
    return x, labels.astype(np.int64)


def parse_cifar_batch(data: bytes):
    if len(data) % CIFAR_RECORD:
        n = len(data) // CIFAR_RECORD
        raise DataFormatError(f"CIFAR-10 batch is not a whole number of {CIFAR_RECORD}-byte records",
                              n * CIFAR_RECORD)
    rec = np.frombuffer(data, dtype=np.uint8).reshape(-1, CIFAR_RECORD)
    labels = rec[:, 0].astype(np.int64)
    bad = np.flatnonzero(labels > 9)
    if len(bad):
        raise DataFormatError(f"CIFAR-10 label {labels[bad[0]]} out of range", int(bad[0]) * CIFAR_RECORD)
    x = rec[:, 1:].reshape(-1, 3, 32, 32).astype(np.float64) / 255.0
    return x, labels


def load_cifar10(split: str = "train", data_dir=None):
    directory = Path(data_dir or os.environ.get("SIGNSYM_CIFAR10_DIR") or ".")
    if split == "train":
        names = [f"data_batch_{i}.bin" for i in range(1, 6)]
    elif split == "test":
        names = ["test_batch.bin"]
    else:
        raise ConfigError(f"CIFAR-10 split must be 'train' or 'test', got {split!r}")
    parts = [parse_cifar_batch(_read_maybe_gzip(directory / n)) for n in names]
    return np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts])


def synthetic_blobs(split: str = "train", n: int | None = None, n_classes: int = 10,
                    dim: int = 32, spread: float = 0.12, seed: int = 0):
    """Gaussian clusters in [0, 1]^dim; class centres depend only on ``seed``."""
    if split not in ("train", "test"):
        raise ConfigError(f"split must be 'train' or 'test', got {split!r}")
    if n is None:
        n = 2000 if split == "train" else 500
    centers = SeededRng(seed, stream=1).uniform((n_classes, dim), 0.2, 0.8)
    rng = SeededRng(seed, stream=2 if split == "train" else 3)
    labels = np.arange(n) % n_classes
    labels = labels[rng.permutation(n)]
    x = centers[labels] + rng.normal((n, dim), 0.0, spread)
    return np.clip(x, 0.0, 1.0), labels.astype(np.int64)


def load_dataset(name: str, split: str = "train", data_dir=None, seed: int = 0):
    name = name.strip().lower()
    if name == "mnist":
        return load_mnist(split, data_dir)
    if name in ("cifar10", "cifar-10"):
        return load_cifar10(split, data_dir)
    if name in ("synthetic-blobs", "blobs", "synthetic_blobs"):
        return synthetic_blobs(split, seed=seed)
    raise ConfigError(f"unknown dataset {name!r}")
