"""Offline data preparation for the named reproduction experiments.

The wine table ships with scikit-learn and is written out as a plain CSV so
the normal CSV loader handles it. When no real MNIST IDX files are
supplied, a stand-in is built from scikit-learn's bundled 8x8 handwritten
digits, upsampled to 28x28 and written in genuine IDX format; it exercises
the identical pipeline at the same shapes (784 features, 10 classes) but is
an easier classification task than MNIST proper.
"""

from __future__ import annotations

import os

import numpy as np

from . import datasets
from .errors import ConfigError


def _require_sklearn():
    try:
        from sklearn import datasets as sk_datasets
    except ImportError:
        raise ConfigError(
            "the bundled wine/digits data needs scikit-learn; "
            "install with: pip install scikit-learn"
        ) from None
    return sk_datasets


def fetch_wine_csv(path) -> str:
    """Write the 178x13 wine table as CSV with a trailing label column."""
    sk = _require_sklearn()
    wine = sk.load_wine()
    header = [name.replace(" ", "_") for name in wine.feature_names] + ["label"]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row, label in zip(wine.data, wine.target):
            cells = [repr(float(v)) for v in row] + [f"class_{label}"]
            fh.write(",".join(cells) + "\n")
    return str(path)


def _upsample_to_28(images_8x8: np.ndarray) -> np.ndarray:
    # 8x8 -> 32x32 by pixel replication, then center-crop to 28x28.
    big = np.kron(images_8x8, np.ones((4, 4)))
    big = big[:, 2:30, 2:30]
    return np.clip(np.round(big * (255.0 / 16.0)), 0, 255).astype(np.uint8)


def build_digits_idx(out_dir, seed: int = 0, n_test: int = 500) -> dict:
    """Write stand-in IDX train/test files from the bundled digits data.

    Returns the four file paths keyed like the MNIST quartet.
    """
    sk = _require_sklearn()
    digits = sk.load_digits()
    images = _upsample_to_28(digits.images.reshape(-1, 8, 8))
    labels = digits.target.astype(np.uint8)
    rng = np.random.Generator(np.random.PCG64(seed))
    order = rng.permutation(len(labels))
    test_rows, train_rows = order[:n_test], order[n_test:]

    os.makedirs(out_dir, exist_ok=True)
    paths = {
        "train_images": os.path.join(out_dir, "digits-train-images-idx3-ubyte"),
        "train_labels": os.path.join(out_dir, "digits-train-labels-idx1-ubyte"),
        "test_images": os.path.join(out_dir, "digits-test-images-idx3-ubyte"),
        "test_labels": os.path.join(out_dir, "digits-test-labels-idx1-ubyte"),
    }
    datasets.write_idx_images(paths["train_images"], images[train_rows])
    datasets.write_idx_labels(paths["train_labels"], labels[train_rows])
    datasets.write_idx_images(paths["test_images"], images[test_rows])
    datasets.write_idx_labels(paths["test_labels"], labels[test_rows])
    return paths
