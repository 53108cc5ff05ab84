"""Dataset ingestion, synthetic generators, and deterministic preprocessing.

Two on-disk formats are supported bit-exactly: big-endian IDX tensors
(magic 0x00000803 for image stacks, 0x00000801 for label vectors) and
CIFAR-10 binary batches (3073-byte records: one label byte, then 1024-byte
R, G, B planes of a 32x32 image). Pixels are always normalized to [0, 1].
"""

from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

IDX_IMAGE_MAGIC = 0x00000803
IDX_LABEL_MAGIC = 0x00000801
CIFAR_RECORD_BYTES = 3073
CIFAR_TRAIN_FILES = tuple(f"data_batch_{i}.bin" for i in range(1, 6))
CIFAR_TEST_FILE = "test_batch.bin"

SPLIT_NAMES = ("train", "validation", "test")

SYNTHETIC_KINDS = ("constant", "stripes", "blobs")


class FormatError(ValueError):
    """A data file does not match its declared binary layout."""


@dataclass(frozen=True)
class SplitIndices:
    train: np.ndarray
    validation: np.ndarray
    test: np.ndarray


@dataclass(frozen=True)
class Dataset:
    """Images in [0,1] with optional labels and disjoint split indices."""

    images: np.ndarray
    labels: np.ndarray | None
    split_indices: SplitIndices

    def __post_init__(self):
        if self.images.ndim != 4:
            raise ValueError(f"images must be (N, H, W, C), got shape {self.images.shape}")
        if not np.isfinite(self.images).all():
            raise ValueError("images contain non-finite values")
        if self.images.size and (self.images.min() < 0.0 or self.images.max() > 1.0):
            raise ValueError("images must lie in [0, 1]")
        if self.labels is not None and len(self.labels) != len(self.images):
            raise ValueError(
                f"{len(self.labels)} labels for {len(self.images)} images"
            )
        seen = set()
        for name in SPLIT_NAMES:
            idx = getattr(self.split_indices, name)
            if len(idx) and (idx.min() < 0 or idx.max() >= len(self.images)):
                raise ValueError(f"{name} indices out of range")
            overlap = seen.intersection(idx.tolist())
            if overlap:
                raise ValueError(f"split indices overlap: {sorted(overlap)[:5]}")
            seen.update(idx.tolist())

    def images_for(self, split):
        if split not in SPLIT_NAMES:
            raise ValueError(f"unknown split {split!r}")
        return self.images[getattr(self.split_indices, split)]

    def labels_for(self, split):
        if split not in SPLIT_NAMES:
            raise ValueError(f"unknown split {split!r}")
        if self.labels is None:
            raise ValueError("dataset has no labels")
        return self.labels[getattr(self.split_indices, split)]


def _all_train_splits(n):
    return SplitIndices(
        train=np.arange(n, dtype=np.int64),
        validation=np.zeros(0, dtype=np.int64),
        test=np.zeros(0, dtype=np.int64),
    )


def _open_maybe_gz(path):
    path = Path(path)
    if path.suffix == ".gz":
        return gzip.open(path, "rb")
    return open(path, "rb")


def _read_idx(path, expected_magic, expected_ndim):
    with _open_maybe_gz(path) as fh:
        header = fh.read(4)
        if len(header) < 4:
            raise FormatError(f"{path}: truncated header")
        (magic,) = struct.unpack(">I", header)
        if magic != expected_magic:
            raise FormatError(
                f"{path}: magic 0x{magic:08x}, expected 0x{expected_magic:08x}"
            )
        raw_dims = fh.read(4 * expected_ndim)
        if len(raw_dims) < 4 * expected_ndim:
            raise FormatError(f"{path}: truncated dimension header")
        dims = struct.unpack(f">{expected_ndim}I", raw_dims)
        count = int(np.prod(dims, dtype=np.int64))
        payload = fh.read(count)
        if len(payload) < count:
            raise FormatError(f"{path}: payload holds {len(payload)} of {count} bytes")
        if fh.read(1):
            raise FormatError(f"{path}: trailing bytes after payload")
    return np.frombuffer(payload, dtype=np.uint8).reshape(dims)


def load_idx(image_path, label_path=None):
    """Loads an IDX image stack (and optionally its label vector).

    Transparently decompresses ``.gz`` paths. All indices land in the
    train split; use preprocess to reassign.
    """
    raw = _read_idx(image_path, IDX_IMAGE_MAGIC, expected_ndim=3)
    images = (raw.astype(np.float32) / 255.0)[..., None]
    labels = None
    if label_path is not None:
        labels = _read_idx(label_path, IDX_LABEL_MAGIC, expected_ndim=1).astype(np.int64)
        if len(labels) != len(images):
            raise FormatError(
                f"{label_path}: {len(labels)} labels for {len(images)} images"
            )
    return Dataset(images=images, labels=labels, split_indices=_all_train_splits(len(images)))


def _read_cifar_file(path):
    blob = Path(path).read_bytes()
    if len(blob) == 0 or len(blob) % CIFAR_RECORD_BYTES != 0:
        raise FormatError(
            f"{path}: {len(blob)} bytes is not a multiple of {CIFAR_RECORD_BYTES}"
        )
    records = np.frombuffer(blob, dtype=np.uint8).reshape(-1, CIFAR_RECORD_BYTES)
    labels = records[:, 0].astype(np.int64)
    if labels.max(initial=0) > 9:
        raise FormatError(f"{path}: label byte exceeds 9")
    planes = records[:, 1:].reshape(-1, 3, 32, 32)  # channel-major R, G, B
    images = planes.transpose(0, 2, 3, 1).astype(np.float32) / 255.0
    return images, labels


def load_cifar10(directory):
    """Loads the five train batches plus the test batch from ``directory``.

    Train records land in the train split, test records in the test split.
    """
    directory = Path(directory)
    images = []
    labels = []
    for name in CIFAR_TRAIN_FILES:
        imgs, labs = _read_cifar_file(directory / name)
        images.append(imgs)
        labels.append(labs)
    n_train = sum(len(i) for i in images)
    imgs, labs = _read_cifar_file(directory / CIFAR_TEST_FILE)
    images.append(imgs)
    labels.append(labs)
    images = np.concatenate(images)
    labels = np.concatenate(labels)
    splits = SplitIndices(
        train=np.arange(n_train, dtype=np.int64),
        validation=np.zeros(0, dtype=np.int64),
        test=np.arange(n_train, len(images), dtype=np.int64),
    )
    return Dataset(images=images, labels=labels, split_indices=splits)


def synthesize(kind, n, size, channels, seed, n_classes=10):
    """Deterministic labeled images for desk-scale runs and tests.

    constant: every pixel of class c is c/(n_classes - 1).
    stripes: even classes get horizontal bands, odd classes vertical, with
    a class-dependent period and mild seeded noise.
    blobs: one Gaussian bump per image at a class-indexed grid position
    with seeded jitter.
    """
    if kind not in SYNTHETIC_KINDS:
        raise ValueError(f"unknown synthetic kind {kind!r}")
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    labels = np.arange(n, dtype=np.int64) % n_classes
    images = np.zeros((n, size, size, 1), dtype=np.float32)
    if kind == "constant":
        shade = labels / max(n_classes - 1, 1)
        images += shade[:, None, None, None].astype(np.float32)
    elif kind == "stripes":
        coords = np.arange(size)
        for i, c in enumerate(labels):
            period = 2 + int(c) // 2
            bands = (coords // period) % 2
            plane = np.where(bands == 0, 0.2, 0.8)
            if c % 2 == 0:
                images[i, :, :, 0] = plane[:, None]  # horizontal bands
            else:
                images[i, :, :, 0] = plane[None, :]  # vertical bands
        noise = rng.normal(0.0, 0.03, size=images.shape)
        images = np.clip(images + noise, 0.0, 1.0).astype(np.float32)
    else:  # blobs
        grid = np.stack(np.meshgrid(np.arange(size), np.arange(size), indexing="ij"), axis=-1)
        sigma = max(size / 6.0, 1.0)
        for i, c in enumerate(labels):
            row = (int(c) % 3 + 1) / 4.0 * size
            col = (int(c) // 3 % 3 + 1) / 4.0 * size
            center = np.array([row, col]) + rng.uniform(-size / 16.0, size / 16.0, size=2)
            d2 = ((grid - center) ** 2).sum(axis=-1)
            images[i, :, :, 0] = np.exp(-d2 / (2.0 * sigma * sigma))
    if channels > 1:
        images = np.repeat(images, channels, axis=3)
    return Dataset(images=images, labels=labels, split_indices=_all_train_splits(n))


def _split_sizes(fractions, n):
    if len(fractions) != 3:
        raise ValueError("split_fractions must be (train, validation, test)")
    cum = np.cumsum(fractions)
    if abs(cum[-1] - 1.0) > 1e-9:
        raise ValueError(f"split fractions sum to {cum[-1]}, expected 1")
    return np.round(cum * n).astype(np.int64)


def preprocess(
    dataset,
    downsample_factor=1,
    subset_n=None,
    split_fractions=(0.8, 0.1, 0.1),
    seed=0,
    grayscale=False,
):
    """Downsamples, subsets, and reassigns splits, all seeded.

    Downsampling is average pooling by an integer factor that must divide
    both spatial dims. The subset is the first ``subset_n`` entries of a
    seeded permutation (kept in original order); splits then come from a
    second seeded shuffle with cumulative-rounded boundaries.
    """
    images = dataset.images
    labels = dataset.labels
    if grayscale:
        if images.shape[3] != 3:
            raise ValueError("grayscale conversion needs 3 channels")
        lum = 0.299 * images[..., 0] + 0.587 * images[..., 1] + 0.114 * images[..., 2]
        images = lum[..., None].astype(np.float32)
    if downsample_factor != 1:
        f = downsample_factor
        n, h, w, c = images.shape
        if f < 1 or h % f or w % f:
            raise ValueError(f"downsample factor {f} does not divide {h}x{w}")
        images = images.reshape(n, h // f, f, w // f, f, c).mean(axis=(2, 4)).astype(np.float32)
    rng = np.random.default_rng(seed)
    n = len(images)
    if subset_n is not None:
        if not 1 <= subset_n <= n:
            raise ValueError(f"subset_n {subset_n} out of range for {n} samples")
        keep = np.sort(rng.permutation(n)[:subset_n])
        images = images[keep]
        if labels is not None:
            labels = labels[keep]
        n = subset_n
    bounds = _split_sizes(split_fractions, n)
    perm = rng.permutation(n)
    splits = SplitIndices(
        train=np.sort(perm[: bounds[0]]).astype(np.int64),
        validation=np.sort(perm[bounds[0] : bounds[1]]).astype(np.int64),
        test=np.sort(perm[bounds[1] : bounds[2]]).astype(np.int64),
    )
    return Dataset(images=images, labels=labels, split_indices=splits)
