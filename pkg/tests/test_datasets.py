import gzip
import struct

import numpy as np
import pytest

from mdtkd.datasets import (
    Dataset, ToySpec, batches, boundary_x, epoch_permutation, generate_toy, load_mnist,
    load_mnist_dir, read_toy_csv, save_mnist, toy_labels, write_toy_csv,
)
from mdtkd.errors import ConfigError, DomainError, FormatError


def idx_images(pixels: np.ndarray) -> bytes:
    n, rows, cols = pixels.shape
    return struct.pack(">IIII", 0x803, n, rows, cols) + pixels.astype(np.uint8).tobytes()


def idx_labels(labels) -> bytes:
    labels = np.asarray(labels, dtype=np.uint8)
    return struct.pack(">II", 0x801, labels.size) + labels.tobytes()


# --- toy ---------------------------------------------------------------------------


def test_toy_default_counts_and_determinism():
    tr, un = generate_toy()
    assert len(tr) == 1000 and len(un) == 760
    tr2, un2 = generate_toy(ToySpec())
    assert np.array_equal(tr.features, tr2.features) and np.array_equal(tr.labels, tr2.labels)
    assert np.array_equal(un.features, un2.features) and np.array_equal(un.labels, un2.labels)
    assert tr.num_classes == 2 and tr.dim == 2


def test_toy_geometry():
    spec = ToySpec()
    tr, un = generate_toy(spec)
    ftr, fun = tr.features, un.features
    assert np.all((np.abs(ftr) <= 1).all(axis=1))
    assert np.all(np.abs(fun).max(axis=1) > 1) and np.all(np.abs(fun) <= 2)
    for ds in (tr, un):
        x, y = ds.features[:, 0], ds.features[:, 1]
        assert np.all(np.abs(x - boundary_x(y, spec)) >= spec.margin)
        assert np.array_equal(ds.labels, (x > boundary_x(y, spec)).astype(int))
    # outside the inner band of y the boundary is the straight line x = 0
    outside = np.abs(fun[:, 1]) > 1
    assert outside.any()
    assert np.array_equal(un.labels[outside], (fun[outside, 0] > 0).astype(int))
    # both classes present in both sets, and the boundary really is curved inside
    assert set(tr.labels) == {0, 1} and set(un.labels) == {0, 1}
    assert np.abs(boundary_x(np.linspace(-1, 1, 101), spec)).max() > 0.2


def test_boundary_continuous_at_inner_edges():
    spec = ToySpec()
    assert np.allclose(boundary_x([-1.0, 1.0, -1.0 - 1e-9, 1.0 + 1e-9], spec), 0, atol=1e-8)
    assert np.all(boundary_x([-1.5, 1.7, 3.0], spec) == 0)


def test_toy_labels_side():
    spec = ToySpec()
    assert list(toy_labels([[-0.5, 1.5], [0.5, 1.5]], spec)) == [0, 1]


def test_toy_grid_too_coarse_reports_counts():
    with pytest.raises(ConfigError, match="yields only"):
        generate_toy(ToySpec(train_grid=10))


@pytest.mark.parametrize("kw", [
    {"margin": 0.0},
    {"outer_box": (-1.0, 2.0, -2.0, 2.0)},
    {"inner_box": (1.0, 1.0, -1.0, 1.0)},
    {"n_train": 0},
])
def test_toy_invalid_spec(kw):
    with pytest.raises(ConfigError):
        generate_toy(ToySpec(**kw))


def test_toy_csv_roundtrip(tmp_path):
    tr, _ = generate_toy()
    path = tmp_path / "train.csv"
    write_toy_csv(tr, path)
    assert path.read_text().splitlines()[0] == "x,y,label"
    back = read_toy_csv(path)
    assert np.array_equal(back.features, tr.features)
    assert np.array_equal(back.labels, tr.labels)


# --- dataset type ---------------------------------------------------------------


def test_dataset_invariants():
    with pytest.raises(Exception):
        Dataset(np.zeros((3, 2)), np.array([0, 1]), 2)
    with pytest.raises(Exception):
        Dataset(np.zeros((2, 2)), np.array([0, 2]), 2)


# --- IDX -----------------------------------------------------------------------------


def test_idx_single_white_image(tmp_path):
    img, lab = tmp_path / "img", tmp_path / "lab"
    img.write_bytes(idx_images(np.full((1, 28, 28), 255)))
    lab.write_bytes(idx_labels([7]))
    # the header bytes written by hand match the IDX description
    assert img.read_bytes()[:16] == bytes.fromhex("00000803" "00000001" "0000001c" "0000001c")
    ds = load_mnist(img, lab)
    assert ds.features.shape == (1, 784) and np.all(ds.features == 1.0)
    assert list(ds.labels) == [7] and ds.num_classes == 10


def test_idx_wrong_magic(tmp_path):
    img, lab = tmp_path / "img", tmp_path / "lab"
    img.write_bytes(idx_images(np.zeros((2, 28, 28))))
    lab.write_bytes(idx_images(np.zeros((2, 28, 28))))
    with pytest.raises(FormatError, match="magic"):
        load_mnist(img, lab)


def test_idx_truncated_and_count_mismatch(tmp_path):
    img, lab = tmp_path / "img", tmp_path / "lab"
    img.write_bytes(idx_images(np.zeros((2, 28, 28)))[:-5])
    lab.write_bytes(idx_labels([1, 2]))
    with pytest.raises(FormatError, match="payload"):
        load_mnist(img, lab)
    img.write_bytes(idx_images(np.zeros((2, 28, 28))))
    lab.write_bytes(idx_labels([1, 2, 3]))
    with pytest.raises(FormatError, match="count"):
        load_mnist(img, lab)


def test_idx_roundtrip_bitwise(tmp_path):
    rng = np.random.default_rng(0)
    src_img = idx_images(rng.integers(0, 256, (5, 28, 28)))
    src_lab = idx_labels(rng.integers(0, 10, 5))
    (tmp_path / "i").write_bytes(src_img)
    (tmp_path / "l").write_bytes(src_lab)
    ds = load_mnist(tmp_path / "i", tmp_path / "l")
    save_mnist(ds, tmp_path / "i2", tmp_path / "l2")
    assert (tmp_path / "i2").read_bytes() == src_img
    assert (tmp_path / "l2").read_bytes() == src_lab


def test_idx_gzip_and_directory(tmp_path):
    pixels = np.arange(2 * 784).reshape(2, 28, 28) % 256
    for prefix in ("train", "t10k"):
        with gzip.open(tmp_path / f"{prefix}-images-idx3-ubyte.gz", "wb") as f:
            f.write(idx_images(pixels))
        (tmp_path / f"{prefix}-labels-idx1-ubyte").write_bytes(idx_labels([3, 4]))
    tr, te = load_mnist_dir(tmp_path)
    assert len(tr) == 2 and len(te) == 2
    assert tr.features[0, 255] == 1.0


def test_official_mnist_counts(mnist_dir):
    tr, te = load_mnist_dir(mnist_dir)
    assert (len(tr), tr.dim, tr.num_classes) == (60000, 784, 10)
    assert len(te) == 10000
    assert tr.features.min() == 0.0 and tr.features.max() == 1.0


# --- batching ---------------------------------------------------------------------


def small_ds(n=10, c=3):
    return Dataset(np.arange(n * 2, dtype=float).reshape(n, 2), np.arange(n) % c, c)


def test_batch_sizes():
    ds = small_ds()
    assert [len(x) for x, _ in batches(ds, 4, 0, 0)] == [4, 4, 2]
    assert [len(x) for x, _ in batches(ds, 10, 0, 0)] == [10]
    with pytest.raises(DomainError):
        list(batches(ds, 0, 0, 0))


def test_batches_cover_dataset_once():
    ds = small_ds(23)
    seen = np.concatenate([x[:, 0] for x, _ in batches(ds, 5, 3, 1)])
    assert sorted(seen) == sorted(ds.features[:, 0])
    for x, y in batches(ds, 5, 3, 1):
        assert np.all(y.sum(axis=1) == 1) and set(np.unique(y)) <= {0.0, 1.0}
        assert np.array_equal(y.argmax(axis=1), ds.labels[(x[:, 0] / 2).astype(int)])


def test_permutation_is_pure():
    assert np.array_equal(epoch_permutation(50, 1, 2), epoch_permutation(50, 1, 2))
    assert not np.array_equal(epoch_permutation(50, 1, 2), epoch_permutation(50, 1, 3))
    assert not np.array_equal(epoch_permutation(50, 1, 2), epoch_permutation(50, 2, 2))
