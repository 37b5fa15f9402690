"""IDX (MNIST container) reading and one-class anomaly task construction."""
from __future__ import annotations

import gzip
import os
import shutil
import struct
import urllib.request
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .rng import Xoshiro256

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801
DATA_STREAM = 2  # rng sub-stream used for the training-subset shuffle

SPLIT_FILES = {
    "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
}
# uncompressed payload sizes; identical for MNIST and Fashion-MNIST
EXPECTED_BYTES = {
    "train-images-idx3-ubyte": 16 + 60000 * 784,
    "train-labels-idx1-ubyte": 8 + 60000,
    "t10k-images-idx3-ubyte": 16 + 10000 * 784,
    "t10k-labels-idx1-ubyte": 8 + 10000,
}
DEFAULT_MIRRORS = {
    "mnist": ["https://ossci-datasets.s3.amazonaws.com/mnist/"],
    "fmnist": ["http://fashion-mnist.s3-website.eu-central-1.amazonaws.com/"],
}
FMNIST_CLASSES = (
    "T-shirt/top", "Trouser", "Pullover", "Dress", "Coat",
    "Sandal", "Shirt", "Sneaker", "Bag", "Ankle boot",
)


class IdxFormatError(ValueError):
    pass


class UnsupportedShapeError(IdxFormatError):
    pass


class EmptyTaskError(ValueError):
    pass


def _read_bytes(path) -> bytes:
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:2] == b"\x1f\x8b":
        raw = gzip.decompress(raw)
    return raw


def load_idx_images(path) -> np.ndarray:
    """Read an IDX3 image file; returns uint8 array of shape (N, 28, 28)."""
    raw = _read_bytes(path)
    if len(raw) < 16:
        raise IdxFormatError(f"{path}: header truncated ({len(raw)} bytes)")
    magic, n, rows, cols = struct.unpack(">IIII", raw[:16])
    if magic != IMAGE_MAGIC:
        raise IdxFormatError(f"{path}: bad image magic 0x{magic:08x}")
    if (rows, cols) != (28, 28):
        raise UnsupportedShapeError(f"{path}: images are {rows}x{cols}, expected 28x28")
    need = 16 + n * rows * cols
    if len(raw) != need:
        raise IdxFormatError(f"{path}: payload is {len(raw)} bytes, header implies {need}")
    return np.frombuffer(raw, dtype=np.uint8, offset=16).reshape(n, rows, cols)


def load_idx_labels(path) -> np.ndarray:
    raw = _read_bytes(path)
    if len(raw) < 8:
        raise IdxFormatError(f"{path}: header truncated ({len(raw)} bytes)")
    magic, n = struct.unpack(">II", raw[:8])
    if magic != LABEL_MAGIC:
        raise IdxFormatError(f"{path}: bad label magic 0x{magic:08x}")
    if len(raw) != 8 + n:
        raise IdxFormatError(f"{path}: payload is {len(raw)} bytes, header implies {8 + n}")
    labels = np.frombuffer(raw, dtype=np.uint8, offset=8)
    if labels.size and labels.max() > 9:
        raise IdxFormatError(f"{path}: label {labels.max()} out of range 0-9")
    return labels


def write_idx_images(path, images: np.ndarray) -> None:
    images = np.asarray(images, dtype=np.uint8)
    n, rows, cols = images.shape
    payload = struct.pack(">IIII", IMAGE_MAGIC, n, rows, cols) + images.tobytes()
    _write(path, payload)


def write_idx_labels(path, labels: np.ndarray) -> None:
    labels = np.asarray(labels, dtype=np.uint8)
    _write(path, struct.pack(">II", LABEL_MAGIC, labels.size) + labels.tobytes())


def _write(path, payload: bytes) -> None:
    opener = gzip.open if str(path).endswith(".gz") else open
    with opener(path, "wb") as fh:
        fh.write(payload)


@dataclass(frozen=True)
class ImageSet:
    images: np.ndarray  # (N, 1, 28, 28) float64 in [0, 1]
    labels: np.ndarray  # (N,) int64
    source: str = ""

    def __post_init__(self):
        if len(self.images) != len(self.labels):
            raise ValueError(f"{len(self.images)} images but {len(self.labels)} labels")

    def __len__(self) -> int:
        return len(self.labels)

    @classmethod
    def from_raw(cls, images: np.ndarray, labels: np.ndarray, source: str = "") -> ImageSet:
        x = (np.asarray(images, dtype=np.float64) / 255.0)[:, None, :, :]
        return cls(x, np.asarray(labels, dtype=np.int64), source)

    def subset(self, idx) -> ImageSet:
        return ImageSet(self.images[idx], self.labels[idx], self.source)


def default_data_dir() -> Path:
    return Path(os.environ.get("LMSELAB_DATA", "data"))


def _locate(data_dir: Path, dataset: str, name: str) -> Path:
    for base in (data_dir / dataset, data_dir):
        for candidate in (base / name, base / (name + ".gz")):
            if candidate.exists():
                return candidate
    raise FileNotFoundError(f"{name}[.gz] not found under {data_dir / dataset} or {data_dir}")


def load_split(dataset: str, split: str, data_dir=None) -> ImageSet:
    """Load ``train`` or ``test`` of ``mnist``/``fmnist`` from local IDX files."""
    data_dir = Path(data_dir) if data_dir is not None else default_data_dir()
    img_name, lbl_name = SPLIT_FILES[split]
    images = load_idx_images(_locate(data_dir, dataset, img_name))
    labels = load_idx_labels(_locate(data_dir, dataset, lbl_name))
    return ImageSet.from_raw(images, labels, f"{dataset}/{split}")


def fetch_dataset(dataset: str, data_dir=None, mirrors=None) -> Path:
    """Download the four IDX files for ``dataset`` into ``data_dir/dataset``.

    Each ``<mirror><name>.gz`` is tried in turn; a file is accepted only if its
    decompressed length matches the official size. Existing valid files are
    left alone.
    """
    data_dir = Path(data_dir) if data_dir is not None else default_data_dir()
    target = data_dir / dataset
    target.mkdir(parents=True, exist_ok=True)
    mirrors = mirrors or DEFAULT_MIRRORS[dataset]
    for name, size in EXPECTED_BYTES.items():
        dest = target / name
        if dest.exists() and dest.stat().st_size == size:
            continue
        errors = []
        for mirror in mirrors:
            url = mirror.rstrip("/") + "/" + name + ".gz"
            try:
                with urllib.request.urlopen(url, timeout=60) as resp:
                    raw = resp.read()
                if raw[:2] == b"\x1f\x8b":
                    raw = gzip.decompress(raw)
            except OSError as exc:
                errors.append(f"{url}: {exc}")
                continue
            if len(raw) != size:
                errors.append(f"{url}: {len(raw)} bytes, expected {size}")
                continue
            tmp = dest.with_suffix(".part")
            tmp.write_bytes(raw)
            shutil.move(tmp, dest)
            break
        else:
            raise OSError(f"could not fetch {name}: " + "; ".join(errors))
    return target


@dataclass(frozen=True)
class AnomalyTask:
    """One-class split: train on ``normal_class`` only, test on everything.

    ``test_binary`` is 0 for normal test samples and 1 for anomalies.
    """

    dataset: str
    normal_class: int
    train_normal: ImageSet
    test_all: ImageSet
    test_binary: np.ndarray

    @property
    def task_id(self) -> str:
        return f"{self.dataset}-{self.normal_class}"


def make_task(
    train: ImageSet,
    test: ImageSet,
    normal_class: int,
    max_train: int | None = None,
    seed: int = 0,
    dataset: str | None = None,
) -> AnomalyTask:
    if not 0 <= int(normal_class) <= 9:
        raise ValueError(f"normal_class must be in 0..9, got {normal_class}")
    idx = np.flatnonzero(train.labels == normal_class)
    if idx.size == 0:
        raise EmptyTaskError(f"no training samples of class {normal_class}")
    if max_train is not None and idx.size > max_train:
        order = Xoshiro256(seed, stream=DATA_STREAM).permutation(idx.size)
        idx = idx[order[:max_train]]
    binary = (test.labels != normal_class).astype(np.int64)
    name = dataset or (train.source.split("/")[0] if train.source else "data")
    return AnomalyTask(name, int(normal_class), train.subset(idx), test, binary)
