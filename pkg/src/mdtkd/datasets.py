"""Toy two-class problem, MNIST IDX reader/writer and seeded mini-batching."""
from __future__ import annotations

import csv
import gzip
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DomainError, FormatError

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


@dataclass
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    num_classes: int
    name: str = ""

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.features.ndim != 2 or self.labels.shape != (self.features.shape[0],):
            raise ConfigError(
                f"{self.name or 'dataset'}: {self.features.shape} features vs {self.labels.shape} labels"
            )
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise ConfigError(f"{self.name or 'dataset'}: labels outside [0, {self.num_classes})")

    def __len__(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]


# ---------------------------------------------------------------------------
# toy problem


@dataclass
class ToySpec:
    """Geometry of the toy task.

    The true boundary is ``x = boundary_x(y)``: a sine bulge inside the inner box that
    fades to the straight line x = 0 at its top and bottom edges. Points closer than
    ``margin`` (horizontally) to the boundary are never emitted.
    """

    inner_box: tuple[float, float, float, float] = (-1.0, 1.0, -1.0, 1.0)
    outer_box: tuple[float, float, float, float] = (-2.0, 2.0, -2.0, 2.0)
    n_train: int = 1000
    n_unseen: int = 760
    margin: float = 0.1
    amplitude: float = 0.4
    seed: int = 0
    train_grid: int | None = None
    unseen_grid: int | None = None

    def validate(self) -> None:
        ix0, ix1, iy0, iy1 = self.inner_box
        ox0, ox1, oy0, oy1 = self.outer_box
        if not (ix0 < ix1 and iy0 < iy1):
            raise ConfigError(f"degenerate inner box {self.inner_box}")
        if not (ox0 < ix0 and ix1 < ox1 and oy0 < iy0 and iy1 < oy1):
            raise ConfigError("outer box must strictly contain the inner box")
        if not self.margin > 0:
            raise ConfigError(f"margin must be positive, got {self.margin}")
        if self.n_train < 1 or self.n_unseen < 1:
            raise ConfigError("sample counts must be positive")


def boundary_x(y, spec: ToySpec) -> np.ndarray:
    _, _, iy0, iy1 = spec.inner_box
    u = (np.asarray(y, dtype=np.float64) - 0.5 * (iy0 + iy1)) / (0.5 * (iy1 - iy0))
    inside = np.abs(u) <= 1.0
    bulge = spec.amplitude * np.sin(np.pi * u) * np.cos(0.5 * np.pi * u) ** 2
    return np.where(inside, bulge, 0.0)


def toy_labels(points, spec: ToySpec) -> np.ndarray:
    points = np.asarray(points, dtype=np.float64)
    return (points[:, 0] > boundary_x(points[:, 1], spec)).astype(np.int64)


def _cell_grid(box, k: int) -> np.ndarray:
    x0, x1, y0, y1 = box
    xs = x0 + (np.arange(k) + 0.5) * (x1 - x0) / k
    ys = y0 + (np.arange(k) + 0.5) * (y1 - y0) / k
    gx, gy = np.meshgrid(xs, ys)
    return np.column_stack([gx.ravel(), gy.ravel()])


def _in_box(points, box) -> np.ndarray:
    x0, x1, y0, y1 = box
    return (points[:, 0] >= x0) & (points[:, 0] <= x1) & (points[:, 1] >= y0) & (points[:, 1] <= y1)


def _admissible(k: int, spec: ToySpec, unseen: bool) -> np.ndarray:
    box = spec.outer_box if unseen else spec.inner_box
    pts = _cell_grid(box, k)
    keep = np.abs(pts[:, 0] - boundary_x(pts[:, 1], spec)) >= spec.margin
    if unseen:
        keep &= ~_in_box(pts, spec.inner_box)
    return pts[keep]


def _even_subset(points: np.ndarray, n: int) -> np.ndarray:
    idx = (np.arange(n) * len(points)) // n
    return points[idx]


def _sample(spec: ToySpec, n: int, k: int | None, unseen: bool, what: str) -> np.ndarray:
    if k is not None:
        pts = _admissible(k, spec, unseen)
        if len(pts) < n:
            raise ConfigError(
                f"{what} grid {k}x{k} yields only {len(pts)} admissible points, {n} requested"
            )
        return _even_subset(pts, n)
    k = 2
    while True:
        pts = _admissible(k, spec, unseen)
        if len(pts) >= n:
            return _even_subset(pts, n)
        if k > 4096:
            raise ConfigError(f"cannot place {n} {what} points (reached {len(pts)})")
        k += 1


def generate_toy(spec: ToySpec | None = None) -> tuple[Dataset, Dataset]:
    """Evenly spaced training points inside the inner box and unseen points in the outer ring.

    Deterministic given the spec; ``spec.seed`` is recorded only for provenance.
    """
    spec = spec or ToySpec()
    spec.validate()
    train_pts = _sample(spec, spec.n_train, spec.train_grid, False, "train")
    unseen_pts = _sample(spec, spec.n_unseen, spec.unseen_grid, True, "unseen")
    return (
        Dataset(train_pts, toy_labels(train_pts, spec), 2, "toy-train"),
        Dataset(unseen_pts, toy_labels(unseen_pts, spec), 2, "toy-unseen"),
    )


def write_toy_csv(ds: Dataset, path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["x", "y", "label"])
        for (x, y), label in zip(ds.features, ds.labels):
            w.writerow([repr(float(x)), repr(float(y)), int(label)])


def read_toy_csv(path, name: str = "") -> Dataset:
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    if not rows or rows[0] != ["x", "y", "label"]:
        raise FormatError(f"{path}: expected header x,y,label")
    body = rows[1:]
    feats = np.array([[float(r[0]), float(r[1])] for r in body]).reshape(-1, 2)
    labels = np.array([int(r[2]) for r in body], dtype=np.int64)
    return Dataset(feats, labels, 2, name or str(path))


# ---------------------------------------------------------------------------
# MNIST IDX


def _read_bytes(path) -> bytes:
    opener = gzip.open if str(path).endswith(".gz") else open
    with opener(path, "rb") as f:
        return f.read()


def _parse_idx(data: bytes, magic: int, ndims: int, path) -> tuple[tuple[int, ...], np.ndarray]:
    if len(data) < 4 + 4 * ndims:
        raise FormatError(f"{path}: header truncated")
    (got,) = struct.unpack_from(">I", data, 0)
    if got != magic:
        raise FormatError(f"{path}: magic is 0x{got:08x}, expected 0x{magic:08x}")
    dims = struct.unpack_from(f">{ndims}I", data, 4)
    expected = int(np.prod(dims))
    payload = np.frombuffer(data, dtype=np.uint8, offset=4 + 4 * ndims)
    if payload.size != expected:
        raise FormatError(f"{path}: payload has {payload.size} bytes, dims {dims} need {expected}")
    return dims, payload


def load_mnist(images_path, labels_path, name: str = "mnist") -> Dataset:
    """Read an IDX image/label pair; pixels become value/255, images flattened to 784 columns."""
    dims, pixels = _parse_idx(_read_bytes(images_path), IDX_IMAGES_MAGIC, 3, images_path)
    (n_labels,), labels = _parse_idx(_read_bytes(labels_path), IDX_LABELS_MAGIC, 1, labels_path)
    n = dims[0]
    if n != n_labels:
        raise FormatError(f"image count {n} != label count {n_labels}")
    if labels.size and labels.max() > 9:
        raise FormatError(f"{labels_path}: label value {labels.max()} outside 0..9")
    feats = pixels.reshape(n, dims[1] * dims[2]).astype(np.float64) / 255.0
    return Dataset(feats, labels.astype(np.int64), 10, name)


def save_mnist(ds: Dataset, images_path, labels_path, side: int = 28) -> None:
    """Inverse of :func:`load_mnist` (pixels are rounded back to bytes)."""
    n = len(ds)
    if ds.dim != side * side:
        raise ConfigError(f"features have {ds.dim} columns, expected {side * side}")
    pixels = np.rint(ds.features * 255.0).astype(np.uint8)
    with open(images_path, "wb") as f:
        f.write(struct.pack(">IIII", IDX_IMAGES_MAGIC, n, side, side))
        f.write(pixels.tobytes())
    with open(labels_path, "wb") as f:
        f.write(struct.pack(">II", IDX_LABELS_MAGIC, n))
        f.write(ds.labels.astype(np.uint8).tobytes())


def load_mnist_dir(directory) -> tuple[Dataset, Dataset]:
    """Official train/test pair from a directory holding the four IDX files (optionally .gz)."""
    from pathlib import Path

    d = Path(directory)

    def find(stem):
        for cand in (d / stem, d / f"{stem}.gz"):
            if cand.exists():
                return cand
        raise FileNotFoundError(f"{stem} not found in {d}")

    train = load_mnist(find("train-images-idx3-ubyte"), find("train-labels-idx1-ubyte"), "mnist-train")
    test = load_mnist(find("t10k-images-idx3-ubyte"), find("t10k-labels-idx1-ubyte"), "mnist-test")
    return train, test


# ---------------------------------------------------------------------------
# batching


def epoch_permutation(n: int, shuffle_seed: int, epoch: int) -> np.ndarray:
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([shuffle_seed, epoch])))
    return rng.permutation(n)


def batches(ds: Dataset, batch_size: int, shuffle_seed: int, epoch: int):
    """Yield (features, one-hot labels) for one epoch; the last partial batch is kept."""
    if batch_size < 1:
        raise DomainError(f"batch_size must be >= 1, got {batch_size}")
    order = epoch_permutation(len(ds), shuffle_seed, epoch)
    eye = np.eye(ds.num_classes)
    for start in range(0, len(ds), batch_size):
        idx = order[start:start + batch_size]
        yield ds.features[idx], eye[ds.labels[idx]]
