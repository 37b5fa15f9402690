import os
from pathlib import Path

import numpy as np
import pytest

from lmselab import data as D

ROOT = Path(__file__).resolve().parents[1]

_acceptance_lines: list[str] = []


def mnist_dir():
    for cand in (os.environ.get("LMSELAB_DATA"), ROOT / "data"):
        if cand and (Path(cand) / "mnist").exists():
            return Path(cand)
    return None


@pytest.fixture(scope="session")
def data_dir():
    d = mnist_dir()
    if d is None:
        pytest.skip("MNIST IDX files not found; set LMSELAB_DATA (see README)")
    return d


@pytest.fixture(scope="session")
def mnist(data_dir):
    return D.load_split("mnist", "train", data_dir), D.load_split("mnist", "test", data_dir)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def make_fake_split(rng, n, classes=range(10)):
    """Blob images whose brightness pattern depends on the label."""
    labels = np.array([list(classes)[i % len(classes)] for i in range(n)], dtype=np.uint8)
    yy, xx = np.mgrid[0:28, 0:28]
    images = np.zeros((n, 28, 28), dtype=np.uint8)
    for i, lab in enumerate(labels):
        cy, cx = 6 + 2 * lab, 20 - lab
        blob = np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / 18.0) * 255
        noise = rng.integers(0, 20, (28, 28))
        images[i] = np.clip(blob + noise, 0, 255).astype(np.uint8)
    return images, labels


@pytest.fixture
def fake_data_dir(tmp_path, rng):
    """A tiny MNIST-shaped dataset on disk (60 train / 40 test images)."""
    root = tmp_path / "data"
    (root / "mnist").mkdir(parents=True)
    for split, n in (("train", 60), ("test", 40)):
        images, labels = make_fake_split(rng, n)
        img_name, lbl_name = D.SPLIT_FILES[split]
        D.write_idx_images(root / "mnist" / (img_name + ".gz"), images)
        D.write_idx_labels(root / "mnist" / lbl_name, labels)
    return root


@pytest.fixture(scope="session")
def acceptance_report():
    return _acceptance_lines


def pytest_terminal_summary(terminalreporter):
    if _acceptance_lines:
        terminalreporter.section("acceptance criteria")
        for line in _acceptance_lines:
            terminalreporter.write_line(line)
