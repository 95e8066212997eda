"""Decision-boundary and confidence maps of 2-D classifiers.

A probe evaluates the network at the centers of an r x r cell grid. Arrays are
indexed ``[row, col]`` with rows running along y (ascending) and columns along x.
"""
from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, FormatError
from .nn import EVAL, Network

# class -> which RGB channels carry the confidence value
_PALETTE = [(1, 0, 0), (0, 0, 1), (0, 1, 0), (1, 1, 0), (1, 0, 1), (0, 1, 1)]


@dataclass
class GridSpec:
    x_range: tuple[float, float] = (-2.0, 2.0)
    y_range: tuple[float, float] = (-2.0, 2.0)
    resolution: int = 200

    def validate(self) -> None:
        if self.resolution < 2:
            raise ConfigError(f"resolution must be >= 2, got {self.resolution}")
        if not (self.x_range[0] < self.x_range[1] and self.y_range[0] < self.y_range[1]):
            raise ConfigError("grid ranges must be non-degenerate")

    def axes(self) -> tuple[np.ndarray, np.ndarray]:
        r = self.resolution
        (x0, x1), (y0, y1) = self.x_range, self.y_range
        xs = x0 + (np.arange(r) + 0.5) * (x1 - x0) / r
        ys = y0 + (np.arange(r) + 0.5) * (y1 - y0) / r
        return xs, ys


@dataclass
class ConfidenceGrid:
    xs: np.ndarray
    ys: np.ndarray
    probs: np.ndarray  # (rows, cols, N)
    classes: np.ndarray  # (rows, cols)
    confidence: np.ndarray  # (rows, cols)
    cell_w: float
    cell_h: float

    @classmethod
    def from_probs(cls, xs, ys, probs, cell_w, cell_h) -> "ConfidenceGrid":
        probs = np.asarray(probs, dtype=np.float64)
        return cls(np.asarray(xs, float), np.asarray(ys, float), probs, probs.argmax(axis=-1),
                   probs.max(axis=-1), float(cell_w), float(cell_h))

    @property
    def num_classes(self) -> int:
        return self.probs.shape[-1]


def probe(net: Network, gs: GridSpec | None = None, workers: int = 1, band_rows: int = 50) -> ConfidenceGrid:
    """EVAL-mode predictions on every grid cell, computed in row bands."""
    gs = gs or GridSpec()
    gs.validate()
    if net.input_size != 2:
        raise ConfigError(f"probe needs a 2-D input network, got input size {net.input_size}")
    xs, ys = gs.axes()
    r = gs.resolution
    starts = list(range(0, r, band_rows))

    def band(start):
        rows = ys[start:start + band_rows]
        gx, gy = np.meshgrid(xs, rows)
        probs, _ = net.forward(np.column_stack([gx.ravel(), gy.ravel()]), EVAL)
        return probs.reshape(len(rows), r, -1)

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(band, starts))
    else:
        parts = [band(s) for s in starts]
    cell_w = (gs.x_range[1] - gs.x_range[0]) / r
    cell_h = (gs.y_range[1] - gs.y_range[0]) / r
    return ConfidenceGrid.from_probs(xs, ys, np.concatenate(parts, axis=0), cell_w, cell_h)


def boundary_metrics(cg: ConfidenceGrid, tube_threshold: float = 0.9) -> dict:
    """Boundary length from 4-neighbour class changes, mean confidence, low-confidence fraction."""
    c = cg.classes
    across_x = int((c[:, 1:] != c[:, :-1]).sum())  # shared edge is vertical: length cell_h
    across_y = int((c[1:, :] != c[:-1, :]).sum())
    return {
        "boundary_length": across_x * cg.cell_h + across_y * cg.cell_w,
        "mean_confidence": float(cg.confidence.mean()),
        "tube_fraction": float((cg.confidence < tube_threshold).mean()),
    }


def region_confidence(cg: ConfidenceGrid, inner_box) -> dict:
    """Mean confidence of cells inside vs outside ``inner_box``; an empty region gives NaN."""
    x0, x1, y0, y1 = inner_box
    inside = ((cg.xs >= x0) & (cg.xs <= x1))[None, :] & ((cg.ys >= y0) & (cg.ys <= y1))[:, None]
    conf = cg.confidence
    return {
        "seen_mean": float(conf[inside].mean()) if inside.any() else float("nan"),
        "unseen_mean": float(conf[~inside].mean()) if (~inside).any() else float("nan"),
    }


def _to_byte(v) -> np.ndarray:
    # round half up
    return np.floor(np.clip(np.asarray(v, dtype=np.float64), 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)


def _image_rows(a: np.ndarray) -> np.ndarray:
    # top image row shows the largest y
    return a[::-1]


def export(cg: ConfidenceGrid, fmt: str, path) -> None:
    fmt = fmt.lower()
    try:
        if fmt == "csv":
            _write_csv(cg, path)
        elif fmt == "pgm":
            rows, cols = cg.confidence.shape
            with open(path, "wb") as f:
                f.write(f"P5\n{cols} {rows}\n255\n".encode())
                f.write(_image_rows(_to_byte(cg.confidence)).tobytes())
        elif fmt == "ppm":
            rows, cols = cg.confidence.shape
            value = _to_byte(cg.confidence)
            chans = np.array([_PALETTE[k % len(_PALETTE)] for k in range(cg.num_classes)], dtype=np.uint8)
            rgb = chans[cg.classes] * value[..., None]
            with open(path, "wb") as f:
                f.write(f"P6\n{cols} {rows}\n255\n".encode())
                f.write(_image_rows(rgb).astype(np.uint8).tobytes())
        else:
            raise ConfigError(f"unknown export format {fmt!r} (csv, pgm, ppm)")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc


def _write_csv(cg: ConfidenceGrid, path) -> None:
    n = cg.num_classes
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["x", "y", "class", "confidence"] + [f"p_{k}" for k in range(n)])
        for j, y in enumerate(cg.ys):
            for i, x in enumerate(cg.xs):
                w.writerow([f"{x:.9g}", f"{y:.9g}", int(cg.classes[j, i]), f"{cg.confidence[j, i]:.9g}"]
                           + [f"{p:.9g}" for p in cg.probs[j, i]])


def read_grid_csv(path) -> ConfidenceGrid:
    """Parse a CSV written by :func:`export`; cell sizes are recovered from the axes."""
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    head = rows[0]
    if head[:4] != ["x", "y", "class", "confidence"]:
        raise FormatError(f"{path}: unexpected header {head}")
    body = np.array([[float(v) for v in r] for r in rows[1:]])
    xs = np.unique(body[:, 0])
    ys = np.unique(body[:, 1])
    shape = (len(ys), len(xs))
    if shape[0] * shape[1] != len(body):
        raise FormatError(f"{path}: rows do not form a full grid")
    probs = body[:, 4:].reshape(*shape, -1)
    cg = ConfidenceGrid(xs, ys, probs, body[:, 2].astype(np.int64).reshape(shape),
                        body[:, 3].reshape(shape),
                        float(xs[1] - xs[0]) if len(xs) > 1 else 0.0,
                        float(ys[1] - ys[0]) if len(ys) > 1 else 0.0)
    return cg
