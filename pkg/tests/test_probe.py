import numpy as np
import pytest

from mdtkd.errors import ConfigError
from mdtkd.nn import NetworkSpec, build_network
from mdtkd.probe import (
    ConfidenceGrid, GridSpec, boundary_metrics, export, probe, read_grid_csv, region_confidence,
)


def grid_from(conf, classes=None, lo=-1.0, hi=1.0):
    """Two-class grid with the given max-class confidences (rows = y)."""
    conf = np.asarray(conf, dtype=float)
    r, c = conf.shape
    classes = np.zeros_like(conf, dtype=int) if classes is None else np.asarray(classes)
    probs = np.where(classes[..., None] == np.arange(2), conf[..., None], 1 - conf[..., None])
    w, h = (hi - lo) / c, (hi - lo) / r
    xs = lo + (np.arange(c) + 0.5) * w
    ys = lo + (np.arange(r) + 0.5) * h
    return ConfidenceGrid(xs, ys, probs, classes, conf, w, h)


def linear_net(w=(1.0, 0.0), scale=5.0):
    net = build_network(NetworkSpec([2, 2]))
    d = net.layers[0]
    d.W[...] = np.array([[-w[0], w[0]], [-w[1], w[1]]]) * scale
    d.b[...] = 0.0
    return net


def test_zero_net_probe():
    net = build_network(NetworkSpec([2, 3, 2]))
    for p, _ in net.parameters():
        p[...] = 0.0
    cg = probe(net, GridSpec(resolution=7))
    assert cg.classes.shape == (7, 7) and cg.probs.shape == (7, 7, 2)
    assert np.all(cg.confidence == 0.5)
    assert boundary_metrics(cg)["boundary_length"] == 0


def test_probe_point_count_and_axes():
    cg = probe(linear_net(), GridSpec((-2, 2), (-1, 1), 8))
    assert cg.classes.size == 64
    assert np.allclose(cg.xs, -2 + 0.25 + 0.5 * np.arange(8))
    assert np.allclose(cg.ys, -1 + 0.125 + 0.25 * np.arange(8))
    assert cg.cell_w == 0.5 and cg.cell_h == 0.25


def test_linear_separator_boundary_band():
    r = 10
    cg = probe(linear_net(), GridSpec(resolution=r))
    # class 1 exactly for x > 0: columns 5..9
    assert np.array_equal(cg.classes, np.tile((np.arange(r) >= r // 2).astype(int), (r, 1)))
    changes = np.argwhere(cg.classes[:, 1:] != cg.classes[:, :-1])
    assert set(changes[:, 1]) == {r // 2 - 1}
    m = boundary_metrics(cg)
    assert m["boundary_length"] == pytest.approx(r * cg.cell_h)


def test_probe_band_split_and_threads_agree():
    net = build_network(NetworkSpec([2, 6, 3], init_seed=4))
    gs = GridSpec(resolution=33)
    a = probe(net, gs)
    b = probe(net, gs, workers=3, band_rows=7)
    assert np.array_equal(a.probs, b.probs)


def test_probe_rejects_non_2d():
    with pytest.raises(ConfigError):
        probe(build_network(NetworkSpec([3, 2])))


@pytest.mark.parametrize("gs", [GridSpec(resolution=1), GridSpec((1, 1), (0, 1), 5)])
def test_grid_spec_validation(gs):
    with pytest.raises(ConfigError):
        probe(linear_net(), gs)


def test_metrics_examples():
    ones = grid_from(np.ones((4, 4)))
    m = boundary_metrics(ones)
    assert m == {"boundary_length": 0.0, "mean_confidence": 1.0, "tube_fraction": 0.0}
    r = 6
    split = (np.arange(r) >= 3).astype(int)
    cg = grid_from(np.ones((r, r)), np.tile(split, (r, 1)))
    assert boundary_metrics(cg)["boundary_length"] == pytest.approx(r * cg.cell_h)
    horiz = grid_from(np.ones((r, r)), np.tile(split, (r, 1)).T)
    assert boundary_metrics(horiz)["boundary_length"] == pytest.approx(r * horiz.cell_w)


def test_boundary_length_label_swap_invariant():
    rng = np.random.default_rng(0)
    classes = rng.integers(0, 2, (9, 9))
    a = grid_from(np.full((9, 9), 0.8), classes)
    b = grid_from(np.full((9, 9), 0.8), 1 - classes)
    assert boundary_metrics(a)["boundary_length"] == boundary_metrics(b)["boundary_length"]


def test_tube_fraction_threshold():
    cg = grid_from([[0.5, 0.89], [0.9, 1.0]])
    assert boundary_metrics(cg)["tube_fraction"] == 0.5
    assert boundary_metrics(cg, tube_threshold=0.95)["tube_fraction"] == 0.75


def test_region_confidence_examples():
    conf = np.full((4, 4), 0.6)
    conf[1:3, 1:3] = 1.0
    cg = grid_from(conf, lo=-2.0, hi=2.0)
    assert region_confidence(cg, (-1, 1, -1, 1)) == {"seen_mean": 1.0, "unseen_mean": pytest.approx(0.6)}
    const = grid_from(np.full((4, 4), 0.7), lo=-2.0, hi=2.0)
    rc = region_confidence(const, (-1, 1, -1, 1))
    assert rc["seen_mean"] == pytest.approx(rc["unseen_mean"], abs=1e-15)
    full = region_confidence(const, (-2, 2, -2, 2))
    assert np.isnan(full["unseen_mean"]) and full["seen_mean"] == pytest.approx(0.7)


# --- export ----------------------------------------------------------------------


def test_pgm_rounding(tmp_path):
    # rows are y ascending; the image's top row is the largest y
    cg = grid_from([[1.0, 1.0], [0.0, 0.5]])
    path = tmp_path / "c.pgm"
    export(cg, "pgm", path)
    data = path.read_bytes()
    assert data == b"P5\n2 2\n255\n" + bytes([0, 128, 255, 255])


def test_ppm_palette(tmp_path):
    cg = grid_from([[0.5, 1.0]], classes=[[0, 1]])
    path = tmp_path / "c.ppm"
    export(cg, "ppm", path)
    assert path.read_bytes() == b"P6\n2 1\n255\n" + bytes([128, 0, 0, 0, 0, 255])


def test_exports_deterministic(tmp_path):
    net = build_network(NetworkSpec([2, 5, 2], init_seed=1))
    for fmt in ("csv", "pgm", "ppm"):
        a, b = tmp_path / f"a.{fmt}", tmp_path / f"b.{fmt}"
        export(probe(net, GridSpec(resolution=12)), fmt, a)
        export(probe(net, GridSpec(resolution=12)), fmt, b)
        assert a.read_bytes() == b.read_bytes()


def test_csv_layout_and_roundtrip(tmp_path):
    net = build_network(NetworkSpec([2, 5, 3], init_seed=2))
    cg = probe(net, GridSpec(resolution=9))
    path = tmp_path / "g.csv"
    export(cg, "csv", path)
    lines = path.read_text().splitlines()
    assert lines[0] == "x,y,class,confidence,p_0,p_1,p_2"
    assert len(lines) == 9 * 9 + 1
    back = read_grid_csv(path)
    assert np.array_equal(back.classes, cg.classes)
    assert np.allclose(back.confidence, cg.confidence, atol=1e-6, rtol=0)
    assert np.allclose(back.probs, cg.probs, atol=1e-6, rtol=0)
    assert back.cell_w == pytest.approx(cg.cell_w)


def test_export_errors(tmp_path):
    cg = grid_from(np.ones((2, 2)))
    with pytest.raises(ConfigError):
        export(cg, "png", tmp_path / "x.png")
    bad = tmp_path / "missing" / "x.pgm"
    with pytest.raises(OSError, match="missing"):
        export(cg, "pgm", bad)
