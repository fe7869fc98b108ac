import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays
from scipy.spatial.distance import cdist

from vesselpath.annd import (DistanceMatrix, Path, directed_annd, directed_matrix, distance_matrix,
                             nearest_neighbor_distance, nn_distances, read_matrix_csv, symmetric_annd,
                             write_matrix_csv)
from vesselpath.geo import LocalPoint

BACKENDS = ["numba", "numpy"]


def brute_nn(q, t):
    """Independent oracle: scipy's full pairwise distance table, row minima."""
    q = np.asarray(q, float).reshape(-1, 2)
    t = np.asarray(t, float).reshape(-1, 2)
    return cdist(q, t).min(axis=1)


coords = st.floats(-1e4, 1e4, allow_nan=False, width=64)
point_sets = st.integers(1, 40).flatmap(lambda n: arrays(np.float64, (n, 2), elements=coords))


def test_nearest_neighbor_distance():
    assert nearest_neighbor_distance(LocalPoint(3, 4), [(3, 4), (9, 9)]) == 0.0
    assert nearest_neighbor_distance((0, 0), [(3, 4), (6, 8)]) == 5.0
    with pytest.raises(ValueError):
        nearest_neighbor_distance((0, 0), np.empty((0, 2)))


@pytest.mark.parametrize("backend", BACKENDS)
@pytest.mark.parametrize("method", ["tree", "exhaustive"])
def test_nn_matches_scan(backend, method):
    rng = np.random.default_rng(5)
    q = rng.uniform(-500, 500, (1000, 2))
    t = rng.uniform(-500, 500, (1000, 2))
    d = (q[:, None, :] - t[None, :, :])
    expect = np.sqrt((d ** 2).sum(-1)).min(1)
    got = nn_distances(q, t, method=method, backend=backend)
    np.testing.assert_array_equal(got, expect)


def test_nn_on_clustered_and_duplicate_points():
    rng = np.random.default_rng(11)
    t = np.repeat(rng.normal(0, 1, (30, 2)), 5, axis=0)
    t = np.vstack([t, [[1e4, 1e4]]])
    q = np.vstack([t[:50], rng.normal(0, 50, (200, 2))])
    np.testing.assert_allclose(nn_distances(q, t), brute_nn(q, t), rtol=0, atol=1e-12)


def test_directed_examples():
    i, j = [(0, 0)], [(0, 0), (10, 0)]
    assert directed_annd(i, j) == 0.0
    assert directed_annd(j, i) == 5.0
    assert symmetric_annd(i, j) == 2.5
    a = [(0, 0), (1, 0), (2, 0)]
    b = [(0, 3), (1, 3), (2, 3)]
    assert directed_annd(a, b) == 3.0 and directed_annd(b, a) == 3.0


def test_empty_path_rejected():
    with pytest.raises(ValueError):
        directed_annd(np.empty((0, 2)), [(0, 0)])
    with pytest.raises(ValueError):
        Path("x", np.empty((0, 2)))
    with pytest.raises(ValueError):
        Path("x", [[0.0, np.nan]])


@settings(max_examples=60, deadline=None)
@given(point_sets, point_sets)
def test_directed_annd_matches_oracle(a, b):
    for backend in BACKENDS:
        got = directed_annd(a, b, backend=backend)
        assert got == pytest.approx(brute_nn(a, b).mean(), rel=1e-12, abs=1e-9)


@settings(max_examples=60, deadline=None)
@given(point_sets, point_sets, st.floats(-1e5, 1e5), st.floats(-1e5, 1e5), st.floats(1e-3, 1e3))
def test_annd_properties(a, b, dx, dy, scale):
    assert directed_annd(a, a) == 0.0
    assert symmetric_annd(a, b) == symmetric_annd(b, a)
    base = symmetric_annd(a, b)
    shift = np.array([dx, dy])
    assert symmetric_annd(a + shift, b + shift) == pytest.approx(base, rel=1e-9, abs=1e-6)
    assert symmetric_annd(a * scale, b * scale) == pytest.approx(base * scale, rel=1e-9, abs=1e-9)


def test_matrix_small():
    p = Path("a", [(0, 0), (5, 5)])
    dm = distance_matrix([p, Path("b", p.points)])
    assert dm.values.tolist() == [[0, 0], [0, 0]]
    dm = distance_matrix([Path("p", [(0, 0)]), Path("q", [(3, 4)]), Path("r", [(6, 8)])])
    np.testing.assert_array_equal(dm.values, [[0, 5, 10], [5, 0, 5], [10, 5, 0]])
    with pytest.raises(ValueError):
        distance_matrix([p])


@pytest.mark.parametrize("threads", [None, 1])
def test_matrix_backends_agree(threads):
    rng = np.random.default_rng(2)
    paths = [Path(f"p{k}", np.cumsum(rng.normal(0, 5, (rng.integers(1, 300), 2)), axis=0)) for k in range(9)]
    fast = directed_matrix(paths, threads=threads)
    slow = directed_matrix(paths, backend="numpy")
    for a in range(9):
        for b in range(9):
            expect = 0.0 if a == b else brute_nn(paths[a].points, paths[b].points).mean()
            assert fast[a, b] == pytest.approx(expect, rel=1e-12, abs=1e-12)
            assert slow[a, b] == pytest.approx(expect, rel=1e-12, abs=1e-12)


def test_matrix_invariants():
    with pytest.raises(ValueError):
        DistanceMatrix(("a", "b"), [[0, 1], [2, 0]])
    with pytest.raises(ValueError):
        DistanceMatrix(("a", "a"), [[0, 1], [1, 0]])
    with pytest.raises(ValueError):
        DistanceMatrix(("a", "b"), [[1, 1], [1, 0]])


def test_csv_round_trip(tmp_path):
    dm = distance_matrix([Path("p", [(0, 0)]), Path("q", [(3, 4.1)]), Path("r", [(6, 8)])])
    write_matrix_csv(dm, tmp_path / "m.csv")
    back = read_matrix_csv(tmp_path / "m.csv")
    assert back.ids == dm.ids
    np.testing.assert_array_equal(back.values, dm.values)
    (tmp_path / "bad.csv").write_text("id,a\nb,0\n")
    with pytest.raises(ValueError):
        read_matrix_csv(tmp_path / "bad.csv")


def test_synthetic_block_structure(labeled, paths):
    # twelve voyages, a few per class, compared with the scan oracle
    chosen = []
    for cls in ("NE", "NM", "NW", "S"):
        chosen += [n for n, lv in enumerate(labeled) if lv.class_label == cls][:3]
    sub = [paths[n] for n in chosen]
    dm = distance_matrix(sub)
    lab = np.array([labeled[n].class_label for n in chosen])
    for a in range(12):
        for b in range(a + 1, 12):
            pa, pb = sub[a].points, sub[b].points
            expect = (brute_nn(pa, pb).mean() + brute_nn(pb, pa).mean()) / 2
            assert dm.values[a, b] == pytest.approx(expect, rel=1e-12)
    same = dm.values[lab[:, None] == lab[None, :]]
    diff = dm.values[lab[:, None] != lab[None, :]]
    assert same.max() < 40.0 < diff.min()
