"""Dataset ingestion: IDX and CIFAR binary files, downsampling, batching.

Loaders parse the standard binary distributions bit-exactly: IDX files
(big-endian magic 0x00000803 / 0x00000801) for MNIST-style data and the
CIFAR binary batch format (1 label byte for CIFAR-10, coarse+fine label
bytes for CIFAR-100, then 3072 channel-major pixels).  Pixels are scaled
to [0, 1] by /255 and nothing else.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import DataConsistencyError, FormatError, ShapeError, TruncatedFileError
from .network import Batch

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


@dataclass
class Dataset:
    """Flattened examples: ``images`` (n, D) in [0, 1], integer ``labels``."""

    images: np.ndarray
    labels: np.ndarray
    class_count: int
    name: str = ""

    def __post_init__(self):
        self.images = np.asarray(self.images, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if len(self.images) != len(self.labels):
            raise DataConsistencyError(
                f"{len(self.images)} images but {len(self.labels)} labels"
            )
        if len(self.labels) and self.labels.max() >= self.class_count:
            raise DataConsistencyError("label outside [0, class_count)")

    def __len__(self) -> int:
        return len(self.images)

    @property
    def dim(self) -> int:
        return self.images.shape[1]

    def subset(self, indices) -> "Dataset":
        return Dataset(
            images=self.images[indices],
            labels=self.labels[indices],
            class_count=self.class_count,
            name=self.name,
        )

    def as_batch(self) -> Batch:
        return Batch(inputs=self.images, labels=self.labels)


@dataclass(frozen=True)
class SplitSpec:
    """Disjoint train/validation split sizes and the shuffling seed."""

    train_count: int
    validation_count: int
    seed: int


def _read_be_u32(fh, path):
    chunk = fh.read(4)
    if len(chunk) != 4:
        raise TruncatedFileError(f"{path}: file ends inside the header")
    return struct.unpack(">I", chunk)[0]


def load_idx(images_path, labels_path, class_count: int | None = None) -> Dataset:
    """Load an IDX image/label file pair (the MNIST distribution format)."""
    with open(images_path, "rb") as fh:
        magic = _read_be_u32(fh, images_path)
        if magic != IDX_IMAGES_MAGIC:
            raise FormatError(
                f"{images_path}: bad magic {magic:#010x}, expected {IDX_IMAGES_MAGIC:#010x}"
            )
        count = _read_be_u32(fh, images_path)
        rows = _read_be_u32(fh, images_path)
        cols = _read_be_u32(fh, images_path)
        payload = fh.read()
    if len(payload) < count * rows * cols:
        raise TruncatedFileError(
            f"{images_path}: expected {count * rows * cols} pixel bytes, got {len(payload)}"
        )
    images = np.frombuffer(payload, dtype=np.uint8, count=count * rows * cols)
    images = images.reshape(count, rows * cols).astype(np.float64) / 255.0

    with open(labels_path, "rb") as fh:
        magic = _read_be_u32(fh, labels_path)
        if magic != IDX_LABELS_MAGIC:
            raise FormatError(
                f"{labels_path}: bad magic {magic:#010x}, expected {IDX_LABELS_MAGIC:#010x}"
            )
        n_labels = _read_be_u32(fh, labels_path)
        label_payload = fh.read()
    if len(label_payload) < n_labels:
        raise TruncatedFileError(
            f"{labels_path}: expected {n_labels} label bytes, got {len(label_payload)}"
        )
    labels = np.frombuffer(label_payload, dtype=np.uint8, count=n_labels).astype(np.int64)
    if n_labels != count:
        raise DataConsistencyError(
            f"{count} images but {n_labels} labels ({images_path}, {labels_path})"
        )
    if class_count is None:
        class_count = int(labels.max()) + 1 if n_labels else 0
    return Dataset(images=images, labels=labels, class_count=class_count, name="idx")


def write_idx(images_u8: np.ndarray, labels: np.ndarray, images_path, labels_path) -> None:
    """Write an (n, rows, cols) uint8 stack and labels as an IDX file pair."""
    images_u8 = np.asarray(images_u8, dtype=np.uint8)
    labels = np.asarray(labels, dtype=np.uint8)
    if images_u8.ndim != 3:
        raise ShapeError(f"images must be (n, rows, cols), got {images_u8.shape}")
    n, rows, cols = images_u8.shape
    if len(labels) != n:
        raise DataConsistencyError(f"{n} images but {len(labels)} labels")
    with open(images_path, "wb") as fh:
        fh.write(struct.pack(">IIII", IDX_IMAGES_MAGIC, n, rows, cols))
        fh.write(images_u8.tobytes())
    with open(labels_path, "wb") as fh:
        fh.write(struct.pack(">II", IDX_LABELS_MAGIC, n))
        fh.write(labels.tobytes())


_CIFAR_VARIANTS = {
    "cifar10": (1, 10),
    "cifar100": (2, 100),
}


def load_cifar_binary(paths, variant: str = "cifar10") -> Dataset:
    """Load CIFAR binary batch files; CIFAR-100 keeps the fine label."""
    if variant not in _CIFAR_VARIANTS:
        raise ValueError(f"variant must be one of {sorted(_CIFAR_VARIANTS)}")
    label_bytes, class_count = _CIFAR_VARIANTS[variant]
    record = label_bytes + 3072
    if isinstance(paths, (str, bytes)) or hasattr(paths, "__fspath__"):
        paths = [paths]
    images = []
    labels = []
    for path in paths:
        with open(path, "rb") as fh:
            raw = fh.read()
        if len(raw) == 0 or len(raw) % record != 0:
            raise FormatError(
                f"{path}: length {len(raw)} is not a positive multiple of {record}"
            )
        block = np.frombuffer(raw, dtype=np.uint8).reshape(-1, record)
        labels.append(block[:, label_bytes - 1].astype(np.int64))
        images.append(block[:, label_bytes:].astype(np.float64) / 255.0)
    return Dataset(
        images=np.concatenate(images),
        labels=np.concatenate(labels),
        class_count=class_count,
        name=variant,
    )


def _resize_matrix(n_in: int, n_out: int) -> np.ndarray:
    """Row-stochastic 1-D area-averaging matrix (fractional pixel overlap)."""
    edges_out = np.linspace(0.0, n_in, n_out + 1)
    m = np.zeros((n_out, n_in))
    for r in range(n_out):
        lo, hi = edges_out[r], edges_out[r + 1]
        first, last = int(np.floor(lo)), int(np.ceil(hi))
        for c in range(first, min(last, n_in)):
            overlap = min(hi, c + 1) - max(lo, c)
            if overlap > 0:
                m[r, c] = overlap
    return m / (n_in / n_out)


def downsample(ds: Dataset, side: int, to_grayscale: bool | None = None) -> Dataset:
    """Area-averaged resize of square images to ``side`` x ``side``.

    Color datasets (D = 3 * s^2) are averaged to grayscale first unless
    ``to_grayscale=False``, in which case channels are resized separately.
    """
    d = ds.dim
    if round(d**0.5) ** 2 == d:
        channels = 1
    elif d % 3 == 0 and round((d // 3) ** 0.5) ** 2 == d // 3:
        channels = 3
    else:
        raise ShapeError(f"{d} values per image is neither s^2 nor 3*s^2")
    s_in = round((d // channels) ** 0.5)
    imgs = ds.images.reshape(len(ds), channels, s_in, s_in)
    if channels == 3 and to_grayscale in (None, True):
        imgs = imgs.mean(axis=1, keepdims=True)
        channels = 1
    r = _resize_matrix(s_in, side)
    small = np.einsum("oi,ncij,pj->ncop", r, imgs, r)
    return Dataset(
        images=small.reshape(len(ds), channels * side * side),
        labels=ds.labels,
        class_count=ds.class_count,
        name=ds.name,
    )


class BatchStream:
    """Deterministic epoch-reshuffled mini-batches over a dataset.

    Every epoch draws a fresh permutation from a seed derived from
    ``(seed, epoch)``, so a run is reproducible from its base seed alone.
    The final short batch is kept.
    """

    def __init__(self, dataset: Dataset, batch_size: int, seed: int):
        if batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {batch_size}")
        self.dataset = dataset
        self.batch_size = batch_size
        self.seed = seed

    def epoch(self, epoch_index: int):
        rng = np.random.default_rng([self.seed, epoch_index])
        order = rng.permutation(len(self.dataset))
        for start in range(0, len(order), self.batch_size):
            idx = order[start : start + self.batch_size]
            yield Batch(inputs=self.dataset.images[idx], labels=self.dataset.labels[idx])


def split_and_batch(ds: Dataset, spec: SplitSpec, batch_size: int):
    """Seeded disjoint split into a training stream and a validation set.

    Returns ``(BatchStream over train, validation Dataset)``.
    """
    if spec.train_count + spec.validation_count > len(ds):
        raise DataConsistencyError(
            f"requested {spec.train_count}+{spec.validation_count} examples, "
            f"dataset has {len(ds)}"
        )
    rng = np.random.default_rng(spec.seed)
    order = rng.permutation(len(ds))
    train = ds.subset(order[: spec.train_count])
    val = ds.subset(order[spec.train_count : spec.train_count + spec.validation_count])
    return BatchStream(train, batch_size, spec.seed), val
