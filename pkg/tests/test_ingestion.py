import csv

import numpy as np
import pytest

from phasegraph.errors import ParameterError
from phasegraph.hypergraph import hyperedges_from_attributes
from phasegraph.ingestion import (
    MUSHROOM_ATTRIBUTES, TableSchema, load_image, load_points_csv, load_table, make_four_corners,
    make_mushroom_table, make_two_moons, make_two_region_image, write_labels_csv, write_pgm,
    write_table_csv,
)


def test_plain_pgm(tmp_path):
    p = tmp_path / "a.pgm"
    p.write_text("P2\n2 2\n255\n0 255\n0 255\n")
    img = load_image(p)
    assert img.shape == (2, 2)
    np.testing.assert_array_equal(img.features.points, [[0], [1], [0], [1]])


def test_plain_ppm_colour(tmp_path):
    p = tmp_path / "a.ppm"
    p.write_text("P3\n2 1\n255\n255 0 0  0 0 255\n")
    np.testing.assert_array_equal(load_image(p).features.points, [[1, 0, 0], [0, 0, 1]])


def test_raw_pgm_and_maxval(tmp_path):
    p = tmp_path / "b.pgm"
    p.write_bytes(b"P5\n3 1\n255\n" + bytes([0, 51, 255]))
    np.testing.assert_allclose(load_image(p).features.points.ravel(), [0, 0.2, 1])
    q = tmp_path / "c.pgm"
    q.write_text("P2\n2 1\n4\n0 4\n")
    np.testing.assert_allclose(load_image(q).features.points.ravel(), [0, 1], atol=1e-4)


def test_malformed_header(tmp_path):
    p = tmp_path / "bad.pgm"
    p.write_text("P2\n2\n")
    with pytest.raises(ParameterError, match="malformed"):
        load_image(p)


def test_csv_image(tmp_path):
    p = tmp_path / "m.csv"
    p.write_text("0,0.5\n1,0.25\n")
    img = load_image(p)
    assert img.shape == (2, 2)
    np.testing.assert_array_equal(img.intensity, [[0, 0.5], [1, 0.25]])
    p.write_text("0,0.5\n1\n")
    with pytest.raises(ParameterError, match="row 2"):
        load_image(p)
    p.write_text("0,2\n")
    with pytest.raises(ParameterError):
        load_image(p)


def test_two_region_image(tmp_path):
    obs, clean, labels = make_two_region_image()
    assert obs.size == 4225 and set(np.unique(labels)) == {1, 2}
    assert set(np.unique(clean)) == {0.2, 0.8}
    p = tmp_path / "img.csv"
    p.write_text("\n".join(",".join(repr(float(v)) for v in r) for r in np.clip(obs, 0, 1)))
    assert load_image(p).features.n == 4225
    np.testing.assert_array_equal(obs, make_two_region_image()[0])


def test_pgm_round_trip(tmp_path):
    _, _, labels = make_two_region_image(size=9, radius=3, noise=0)
    p = tmp_path / "labels.pgm"
    write_pgm(p, labels.ravel(), labels.shape)
    img = load_image(p)
    assert img.shape == labels.shape
    np.testing.assert_array_equal(img.features.points.ravel() == 1.0, labels.ravel() == 2)
    with pytest.raises(ParameterError):
        write_pgm(p, labels.ravel()[:-1], labels.shape)


def test_two_moons():
    X, y = make_two_moons(3000, noise=0.0, seed=0)
    assert np.bincount(y)[1:].tolist() == [1500, 1500]
    P = X.points
    np.testing.assert_allclose(np.hypot(P[y == 1, 0], P[y == 1, 1]), 1, atol=1e-14)
    np.testing.assert_allclose(np.hypot(P[y == 2, 0] - 1, P[y == 2, 1] - 0.5), 1, atol=1e-14)
    np.testing.assert_array_equal(make_two_moons(seed=3)[0].points, make_two_moons(seed=3)[0].points)
    with pytest.raises(ParameterError):
        make_two_moons(3001)


def test_four_corners():
    X, y = make_four_corners(2000, spread=0.0)
    assert np.bincount(y)[1:].tolist() == [500] * 4
    assert len(np.unique(X.points, axis=0)) == 4
    np.testing.assert_array_equal(make_four_corners(seed=5)[0].points, make_four_corners(seed=5)[0].points)
    with pytest.raises(ParameterError):
        make_four_corners(2001)


def test_points_csv(tmp_path):
    p = tmp_path / "pts.csv"
    p.write_text("x,y,label\n0,1,1\n2,3,2\n")
    X, y = load_points_csv(p, "label")
    np.testing.assert_array_equal(X.points, [[0, 1], [2, 3]])
    np.testing.assert_array_equal(y, [1, 2])
    p.write_text("x,y\n0,1\n2\n")
    with pytest.raises(ParameterError, match="row 3"):
        load_points_csv(p)


def test_mushroom_table(tmp_path):
    t = make_mushroom_table(seed=0)
    p = tmp_path / "mushroom.csv"
    write_table_csv(p, t)
    loaded = load_table(p, TableSchema(label_column="class"))
    attrs = [c for c in loaded.columns if c != "class"]
    assert loaded.cells.shape[0] == 4062 and len(attrs) == 21
    assert attrs == [n for n, _ in MUSHROOM_ATTRIBUTES]
    j = loaded.columns.index("stalk-root")
    assert 0.25 < np.mean([v is None for v in loaded.cells[:, j]]) < 0.35
    h = hyperedges_from_attributes(loaded)
    assert h.n == 4062


def _write(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def test_student_style(tmp_path, rng):
    header = [f"a{j}" for j in range(30)] + ["G1", "G2", "G3"]
    rows = [[str(v) for v in rng.integers(0, 4, 30)] + [str(v) for v in rng.integers(0, 21, 3)] for _ in range(395)]
    _write(tmp_path / "s.csv", header, rows)
    t = load_table(tmp_path / "s.csv", TableSchema(label_column="G3", columns=tuple(header[:32])))
    assert t.cells.shape == (395, 33)
    h = hyperedges_from_attributes(t, include_columns=header[:32], bin_widths={"G1": 5, "G2": 5})
    assert h.n == 395


def test_zoo_style(tmp_path, rng):
    header = [f"f{j}" for j in range(18)] + ["type"]
    rows = [[str(v) for v in rng.integers(0, 2, 18)] + [str(1 + i % 7)] for i in range(101)]
    _write(tmp_path / "z.csv", header, rows)
    t = load_table(tmp_path / "z.csv", TableSchema(label_column="type"))
    assert t.cells.shape == (101, 19)
    assert len(set(t.cells[:, -1])) == 7


def test_table_errors(tmp_path):
    p = tmp_path / "t.csv"
    p.write_text("a,b\nx,y\nz\n")
    with pytest.raises(ParameterError, match="row 3"):
        load_table(p)
    p.write_text("a,b\nx,y\n")
    with pytest.raises(ParameterError, match="missing columns"):
        load_table(p, TableSchema(label_column="class"))


def test_labels_csv(tmp_path):
    p = tmp_path / "l.csv"
    write_labels_csv(p, [1, 2], np.array([[0.75, 0.25], [0.0, 1.0]]))
    assert p.read_text().splitlines() == ["vertex,label,p1,p2", "0,1,0.75,0.25", "1,2,0.0,1.0"]
