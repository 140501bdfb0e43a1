"""Deterministic synthetic image classification data in real file formats.

The desk-scale experiments need an MNIST-shaped dataset (28x28 grayscale,
10 classes) that narrow networks underfit and wider ones interpolate.  This
module synthesizes one — each class is a mixture of smoothed prototype
blobs with per-example shifts and pixel noise — and writes it through the
same IDX files the loaders parse, so the full ingestion path is exercised
even where the original archives are unavailable.
"""

from __future__ import annotations

import os

import numpy as np

from .data import write_idx

IDX_FILES = (
    "train-images-idx3-ubyte",
    "train-labels-idx1-ubyte",
    "t10k-images-idx3-ubyte",
    "t10k-labels-idx1-ubyte",
)


def _smooth(img: np.ndarray, passes: int) -> np.ndarray:
    """Cheap blur: repeated averaging with the 4-neighborhood."""
    out = img
    for _ in range(passes):
        padded = np.pad(out, ((0, 0), (1, 1), (1, 1)), mode="edge")
        out = (
            padded[:, 1:-1, 1:-1]
            + padded[:, :-2, 1:-1]
            + padded[:, 2:, 1:-1]
            + padded[:, 1:-1, :-2]
            + padded[:, 1:-1, 2:]
        ) / 5.0
    return out


def _prototypes(seed: int, side: int, classes: int, per_class: int) -> np.ndarray:
    """Fixed class prototypes in [0.1, 0.9], shape (classes, per_class, side, side)."""
    rng = np.random.default_rng([seed, 0])
    raw = rng.random((classes * per_class, side, side))
    smooth = _smooth(raw, passes=3)
    lo = smooth.min(axis=(1, 2), keepdims=True)
    hi = smooth.max(axis=(1, 2), keepdims=True)
    normed = (smooth - lo) / (hi - lo)
    return (0.1 + 0.8 * normed).reshape(classes, per_class, side, side)


def synthetic_images(
    n: int,
    seed: int,
    stream: int = 1,
    side: int = 28,
    classes: int = 10,
    prototypes_per_class: int = 12,
    noise: float = 0.22,
    max_shift: int = 2,
):
    """Sample ``n`` uint8 images with labels from the synthetic distribution.

    Prototypes depend on ``seed`` alone; per-example randomness comes from
    ``(seed, stream)`` so train and test draws are independent but share
    one underlying distribution.
    """
    protos = _prototypes(seed, side, classes, prototypes_per_class)
    rng = np.random.default_rng([seed, stream])
    labels = rng.integers(0, classes, size=n)
    which = rng.integers(0, prototypes_per_class, size=n)
    shifts = rng.integers(-max_shift, max_shift + 1, size=(n, 2))
    jitter = rng.normal(0.0, noise, size=(n, side, side))
    images = np.empty((n, side, side))
    for i in range(n):
        base = np.roll(protos[labels[i], which[i]], tuple(shifts[i]), axis=(0, 1))
        images[i] = base + jitter[i]
    np.clip(images, 0.0, 1.0, out=images)
    return np.round(images * 255.0).astype(np.uint8), labels.astype(np.uint8)


def ensure_synthetic_mnist(directory, n_train: int = 8000, n_test: int = 2000, seed: int = 7):
    """Write the four IDX files into ``directory`` unless already present.

    Existing files are kept, so repeated experiment runs reuse identical
    bytes.  Returns ``directory``.
    """
    os.makedirs(directory, exist_ok=True)
    paths = [os.path.join(directory, name) for name in IDX_FILES]
    if all(os.path.exists(p) for p in paths):
        return directory
    train_x, train_y = synthetic_images(n_train, seed, stream=1)
    test_x, test_y = synthetic_images(n_test, seed, stream=2)
    write_idx(train_x, train_y, paths[0], paths[1])
    write_idx(test_x, test_y, paths[2], paths[3])
    return directory
