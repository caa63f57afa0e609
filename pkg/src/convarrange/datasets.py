"""Dataset loading, synthesis, normalization, augmentation, and corruption.

Images are always (N, C, H, W) float32, labels (N,) int64. The two on-disk
formats handled here are IDX (big-endian magic + dims, u8 pixels) and the
record-per-3073-bytes CIFAR binary layout (1 label byte + 3*32*32 pixels,
channel-major).
"""

import struct
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import BadMagic, DimMismatch, LabelOutOfRange, Truncated

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801

SIGNED_UNIT = "signed_unit"  # u8 -> [-1, 1]
POSITIVE_UNIT = "positive_unit"  # u8 -> [0, 1]
NORMALIZATIONS = (SIGNED_UNIT, POSITIVE_UNIT)


@dataclass
class Dataset:
    images: np.ndarray
    labels: np.ndarray
    class_count: int
    split: str = "train"

    def __post_init__(self):
        self.images = np.ascontiguousarray(self.images, dtype=np.float32)
        self.labels = np.ascontiguousarray(self.labels, dtype=np.int64)
        if self.images.ndim != 4:
            raise DimMismatch(f"images must be (N, C, H, W), got {self.images.shape}")
        if self.labels.shape != (self.images.shape[0],):
            raise DimMismatch(
                f"{self.images.shape[0]} images but {self.labels.shape} labels"
            )
        if self.labels.size and (
            self.labels.min() < 0 or self.labels.max() >= self.class_count
        ):
            raise LabelOutOfRange(
                f"labels must lie in [0, {self.class_count})"
            )

    def __len__(self):
        return self.images.shape[0]


def normalize_u8(pixels: np.ndarray, normalization: str) -> np.ndarray:
    if normalization == SIGNED_UNIT:
        return pixels.astype(np.float32) / 127.5 - 1.0
    if normalization == POSITIVE_UNIT:
        return pixels.astype(np.float32) / 255.0
    raise ValueError(f"unknown normalization {normalization!r}")


def _read_idx_images(buf: bytes, path) -> np.ndarray:
    if len(buf) < 4:
        raise Truncated(f"{path}: too short for a magic number")
    (magic,) = struct.unpack_from(">I", buf, 0)
    if magic != IDX_IMAGES_MAGIC:
        raise BadMagic(f"{path}: magic 0x{magic:08x}, want 0x{IDX_IMAGES_MAGIC:08x}")
    if len(buf) < 16:
        raise Truncated(f"{path}: header ends early")
    n, rows, cols = struct.unpack_from(">III", buf, 4)
    need = 16 + n * rows * cols
    if len(buf) < need:
        raise Truncated(f"{path}: want {need} bytes, have {len(buf)}")
    pixels = np.frombuffer(buf, dtype=np.uint8, count=n * rows * cols, offset=16)
    return pixels.reshape(n, 1, rows, cols)


def _read_idx_labels(buf: bytes, path) -> np.ndarray:
    if len(buf) < 4:
        raise Truncated(f"{path}: too short for a magic number")
    (magic,) = struct.unpack_from(">I", buf, 0)
    if magic != IDX_LABELS_MAGIC:
        raise BadMagic(f"{path}: magic 0x{magic:08x}, want 0x{IDX_LABELS_MAGIC:08x}")
    if len(buf) < 8:
        raise Truncated(f"{path}: header ends early")
    (n,) = struct.unpack_from(">I", buf, 4)
    if len(buf) < 8 + n:
        raise Truncated(f"{path}: want {8 + n} bytes, have {len(buf)}")
    return np.frombuffer(buf, dtype=np.uint8, count=n, offset=8).astype(np.int64)


def load_idx(images_path, labels_path, *, normalization=SIGNED_UNIT,
             class_count: int = 10, split: str = "train") -> Dataset:
    images_path, labels_path = Path(images_path), Path(labels_path)
    pixels = _read_idx_images(images_path.read_bytes(), images_path)
    labels = _read_idx_labels(labels_path.read_bytes(), labels_path)
    if pixels.shape[0] != labels.shape[0]:
        raise DimMismatch(
            f"{pixels.shape[0]} images vs {labels.shape[0]} labels"
        )
    return Dataset(normalize_u8(pixels, normalization), labels, class_count, split)


def load_cifar_binary(path, *, normalization=SIGNED_UNIT, class_count: int = 10,
                      split: str = "train") -> Dataset:
    path = Path(path)
    buf = path.read_bytes()
    record = 1 + 3 * 32 * 32
    if len(buf) == 0 or len(buf) % record:
        raise Truncated(f"{path}: {len(buf)} bytes is not a multiple of {record}")
    raw = np.frombuffer(buf, dtype=np.uint8).reshape(-1, record)
    labels = raw[:, 0].astype(np.int64)
    images = raw[:, 1:].reshape(-1, 3, 32, 32)
    return Dataset(normalize_u8(images, normalization), labels, class_count, split)


def _paint_shape(img: np.ndarray, class_id: int, rng) -> None:
    """Draw one bright (value 1.0) shape; position jitter stays >= 4 pixels
    from the border so +-4 shifts keep the shape mostly in frame.

    Classes 0-5 keep their identity under horizontal flips, so recipes that
    train with flip augmentation should stay at class_count <= 6; the two
    diagonal bands (6, 7) flip into each other."""
    size = img.shape[0]
    lo, hi = 4, size - 6
    if class_id == 0:  # horizontal bar
        r = int(rng.integers(lo, hi))
        img[r : r + 2, 2 : size - 2] = 1.0
    elif class_id == 1:  # vertical bar
        c = int(rng.integers(lo, hi))
        img[2 : size - 2, c : c + 2] = 1.0
    elif class_id == 2:  # plus sign
        r = int(rng.integers(lo + 1, hi - 1))
        c = int(rng.integers(lo + 1, hi - 1))
        img[r, c - 3 : c + 4] = 1.0
        img[r - 3 : r + 4, c] = 1.0
    elif class_id == 3:  # hollow box
        r = int(rng.integers(lo, hi - 4))
        c = int(rng.integers(lo, hi - 4))
        img[r : r + 6, c] = 1.0
        img[r : r + 6, c + 5] = 1.0
        img[r, c : c + 6] = 1.0
        img[r + 5, c : c + 6] = 1.0
    elif class_id == 4:  # top-left corner piece
        r = int(rng.integers(lo, hi - 4))
        c = int(rng.integers(lo, hi - 4))
        img[r : r + 2, c : c + 8] = 1.0
        img[r : r + 8, c : c + 2] = 1.0
    elif class_id == 5:  # bottom-right corner piece
        r = int(rng.integers(lo + 4, hi))
        c = int(rng.integers(lo + 4, hi))
        img[r : r + 2, c - 6 : c + 2] = 1.0
        img[r - 6 : r + 2, c : c + 2] = 1.0
    elif class_id == 6:  # main diagonal band
        d = int(rng.integers(-2, 3))
        for i in range(size):
            j = i + d
            if 0 <= j < size - 1:
                img[i, j : j + 2] = 1.0
    elif class_id == 7:  # anti-diagonal band
        d = int(rng.integers(-2, 3))
        for i in range(size):
            j = size - 1 - i + d
            if 0 <= j < size - 1:
                img[i, j : j + 2] = 1.0
    else:
        raise ValueError(f"no shape for class {class_id}")


def synth_shapes(n: int, class_count: int, seed: int, *, size: int = 16,
                 noise: float = 0.1, brightness: float = 0.0,
                 split: str = "train") -> Dataset:
    """n single-channel size x size images of bright geometric shapes on a
    dark background plus N(0, noise) pixel noise. Classes are balanced to
    within one sample; order is shuffled by the seed.

    brightness > 0 adds a per-image global offset drawn uniformly from
    [0, brightness] to every pixel: a class-independent illumination
    nuisance along the all-ones direction. Zero (the default) draws
    nothing, so older seeds reproduce exactly."""
    if not 2 <= class_count <= 8:
        raise ValueError(f"class_count {class_count} outside [2, 8]")
    if n < class_count:
        raise ValueError(f"n {n} < class_count {class_count}")
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 7]))
    labels = np.arange(n, dtype=np.int64) % class_count
    labels = labels[rng.permutation(n)]
    images = np.zeros((n, 1, size, size), dtype=np.float32)
    for i in range(n):
        _paint_shape(images[i, 0], int(labels[i]), rng)
        images[i, 0] += rng.normal(0.0, noise, (size, size)).astype(np.float32)
        if brightness > 0:
            images[i, 0] += np.float32(rng.uniform(0.0, brightness))
    return Dataset(images, labels, class_count, split)


def shift_image(image: np.ndarray, dh: int, dw: int) -> np.ndarray:
    """Translate one (C, H, W) image, zero-filling vacated pixels."""
    C, H, W = image.shape
    out = np.zeros_like(image)
    h0, h1 = max(dh, 0), H + min(dh, 0)
    w0, w1 = max(dw, 0), W + min(dw, 0)
    if h0 < h1 and w0 < w1:
        out[:, h0:h1, w0:w1] = image[:, h0 - dh : h1 - dh, w0 - dw : w1 - dw]
    return out


def augment_shift_flip(image: np.ndarray, rng, max_shift: int = 4) -> np.ndarray:
    """Random shift up to max_shift pixels per axis plus a fair-coin
    horizontal flip. Consumes exactly three rng draws per call."""
    dh = int(rng.integers(-max_shift, max_shift + 1))
    dw = int(rng.integers(-max_shift, max_shift + 1))
    out = shift_image(image, dh, dw)
    if rng.random() < 0.5:
        out = out[:, :, ::-1].copy()
    return out


def augment_batch(images: np.ndarray, rng, max_shift: int = 4) -> np.ndarray:
    out = np.empty_like(images)
    for i in range(images.shape[0]):
        out[i] = augment_shift_flip(images[i], rng, max_shift)
    return out


def _require_train(dataset: Dataset, what: str):
    if dataset.split != "train":
        raise ValueError(f"{what} applies to the train split, not {dataset.split!r}")


def randomize_labels(dataset: Dataset, fraction: float, seed: int) -> Dataset:
    """Redraw a seed-chosen round(fraction*N) subset of labels uniformly over
    all classes (a redraw may repeat the original label)."""
    _require_train(dataset, "label randomization")
    if not 0.0 <= fraction <= 1.0:
        raise ValueError(f"fraction {fraction} outside [0, 1]")
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 11]))
    n = len(dataset)
    count = int(round(fraction * n))
    labels = dataset.labels.copy()
    idx = rng.choice(n, size=count, replace=False)
    labels[idx] = rng.integers(0, dataset.class_count, size=count)
    return replace(dataset, labels=labels)


def pixel_shuffle(dataset: Dataset, seed: int, *, per_image: bool = False,
                  permutation=None) -> Dataset:
    """Permute pixel positions inside each channel. By default one global
    permutation is shared by every image, so per-position pixel statistics
    over the corpus are preserved while spatial structure is destroyed."""
    _require_train(dataset, "pixel shuffling")
    n, c, h, w = dataset.images.shape
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 13]))
    flat = dataset.images.reshape(n, c, h * w)
    if per_image:
        if permutation is not None:
            raise ValueError("explicit permutation conflicts with per_image")
        out = np.empty_like(flat)
        for i in range(n):
            out[i] = flat[i][:, rng.permutation(h * w)]
    else:
        perm = rng.permutation(h * w) if permutation is None else np.asarray(permutation)
        if perm.shape != (h * w,):
            raise ValueError(f"permutation must have shape ({h * w},)")
        out = flat[:, :, perm]
    return replace(dataset, images=out.reshape(n, c, h, w))


def split_train_val(dataset: Dataset, seed: int) -> tuple[Dataset, Dataset]:
    """Disjoint 90/10 split with val size round(0.1*N), order fixed by seed."""
    _require_train(dataset, "train/val splitting")
    n = len(dataset)
    n_val = int(round(0.1 * n))
    if not 0 < n_val < n:
        raise ValueError(f"cannot carve a 10% split out of {n} samples")
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 17]))
    perm = rng.permutation(n)
    val_idx = np.sort(perm[:n_val])
    train_idx = np.sort(perm[n_val:])
    train = Dataset(dataset.images[train_idx], dataset.labels[train_idx],
                    dataset.class_count, "train")
    val = Dataset(dataset.images[val_idx], dataset.labels[val_idx],
                  dataset.class_count, "val")
    return train, val
