"""Average nearest neighbour distance (ANND) between paths.

For paths ``i`` and ``j`` the directed ANND is the mean, over the points of
``i``, of the Euclidean distance to the closest point of ``j``. It is not
symmetric in general; the value stored in a distance matrix is the mean of
both directions.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import _accel
from .geo import LocalPoint, Projection

METHODS = ("auto", "tree", "exhaustive")

# rows of the query block for the numpy scan, bounded so a block stays ~32 MB
_NUMPY_BLOCK_CELLS = 4_000_000


@dataclass(frozen=True)
class Path:
    voyage_id: str
    points: np.ndarray = field(repr=False)

    def __post_init__(self):
        pts = np.ascontiguousarray(self.points, dtype=np.float64).reshape(-1, 2)
        if pts.shape[0] == 0:
            raise ValueError(f"path {self.voyage_id!r} has no points")
        if not np.all(np.isfinite(pts)):
            raise ValueError(f"path {self.voyage_id!r} has non-finite points")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    def __len__(self):
        return self.points.shape[0]


def path_from_voyage(voyage, proj: Projection) -> Path:
    return Path(voyage.id, proj.forward(voyage.lat, voyage.lon))


@dataclass(frozen=True)
class DistanceMatrix:
    ids: tuple
    values: np.ndarray = field(repr=False)
    directed: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        m = len(self.ids)
        if v.shape != (m, m):
            raise ValueError(f"matrix shape {v.shape} does not match {m} ids")
        if len(set(self.ids)) != m:
            raise ValueError("duplicate ids in distance matrix")
        if not np.all(np.isfinite(v)) or np.any(v < 0):
            raise ValueError("distance matrix entries must be finite and >= 0")
        if np.any(np.diag(v) != 0):
            raise ValueError("distance matrix diagonal must be zero")
        if not np.array_equal(v, v.T):
            raise ValueError("distance matrix must be symmetric")
        object.__setattr__(self, "ids", tuple(self.ids))
        object.__setattr__(self, "values", v)

    def __len__(self):
        return len(self.ids)

    def subset(self, ids: Sequence[str]) -> "DistanceMatrix":
        pos = {k: n for n, k in enumerate(self.ids)}
        idx = [pos[k] for k in ids]
        return DistanceMatrix(tuple(ids), self.values[np.ix_(idx, idx)])


def _as_array(p) -> np.ndarray:
    if isinstance(p, LocalPoint):
        return np.array([p.x, p.y])
    return np.asarray(p, dtype=np.float64).reshape(2)


def _points(path) -> np.ndarray:
    if isinstance(path, Path):
        return path.points
    pts = np.asarray(path, dtype=np.float64).reshape(-1, 2)
    if pts.shape[0] == 0:
        raise ValueError("path has no points")
    return pts


def nearest_neighbor_distance(p, path) -> float:
    """Distance from point ``p`` to its nearest point in ``path`` (linear scan)."""
    q = _as_array(p)
    pts = _points(path)
    d = np.sqrt((pts[:, 0] - q[0]) ** 2 + (pts[:, 1] - q[1]) ** 2)
    return float(d.min())


def _nn_numpy(q: np.ndarray, pts: np.ndarray) -> np.ndarray:
    out = np.empty(q.shape[0])
    step = max(1, _NUMPY_BLOCK_CELLS // pts.shape[0])
    px = pts[:, 0][None, :]
    py = pts[:, 1][None, :]
    for s in range(0, q.shape[0], step):
        blk = q[s:s + step]
        dx = px - blk[:, 0:1]
        dy = py - blk[:, 1:2]
        out[s:s + step] = np.sqrt((dx * dx + dy * dy).min(axis=1))
    return out


def nn_distances(query, target, method: str = "auto", backend: str = "auto") -> np.ndarray:
    """Nearest-neighbour distance from every query point to ``target``."""
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}")
    q = np.ascontiguousarray(_points(query))
    t = np.ascontiguousarray(_points(target))
    if _accel.resolve_backend(backend) == "numpy":
        return _nn_numpy(q, t)
    from . import _kernels as K

    if method == "exhaustive":
        return K.nn_dists_brute(q, t)
    tree = K.build_tree(t)
    return K.nn_dists_tree(q, tree[0], *tree[2:])


def directed_annd(i, j, method: str = "auto", backend: str = "auto") -> float:
    d = nn_distances(i, j, method=method, backend=backend)
    return float(d.sum() / d.shape[0])


def symmetric_annd(i, j, method: str = "auto", backend: str = "auto") -> float:
    return (directed_annd(i, j, method, backend) + directed_annd(j, i, method, backend)) / 2.0


def directed_matrix(paths: Sequence[Path], method: str = "auto", backend: str = "auto",
                    threads: int | None = None) -> np.ndarray:
    """m x m array of directed ANND, row i holding i -> j."""
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}")
    pts_list = [np.ascontiguousarray(_points(p)) for p in paths]
    m = len(pts_list)
    if _accel.resolve_backend(backend) == "numpy" or method == "exhaustive":
        out = np.zeros((m, m))
        for a in range(m):
            for b in range(m):
                if a != b:
                    out[a, b] = directed_annd(pts_list[a], pts_list[b], method, backend)
        return out

    from . import _kernels as K

    _accel.set_threads(threads)
    off = np.zeros(m + 1, np.int64)
    off[1:] = np.cumsum([p.shape[0] for p in pts_list])
    trees = [K.build_tree(p) for p in pts_list]
    noff = np.zeros(m + 1, np.int64)
    noff[1:] = np.cumsum([t[2].shape[0] for t in trees])
    allpts = np.concatenate(pts_list)
    tp = np.concatenate([t[0] for t in trees])
    # node fields 2..9 and per-point leaf lookup 10, concatenated across paths
    nodes = [np.concatenate([t[k] for t in trees]) for k in range(2, 11)]
    return K.directed_matrix_tree(allpts, off, tp, *nodes, noff)


def distance_matrix(paths: Sequence[Path], method: str = "auto", backend: str = "auto",
                    threads: int | None = None) -> DistanceMatrix:
    if len(paths) < 2:
        raise ValueError("distance matrix needs at least 2 paths")
    ids = [p.voyage_id for p in paths]
    d = directed_matrix(paths, method, backend, threads)
    sym = (d + d.T) / 2.0
    np.fill_diagonal(sym, 0.0)
    return DistanceMatrix(tuple(ids), sym, directed=d)


def write_matrix_csv(dm: DistanceMatrix, path, directed: bool = False) -> None:
    vals = dm.directed if directed else dm.values
    if vals is None:
        raise ValueError("matrix carries no directed values")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["voyage_id", *dm.ids])
        for vid, row in zip(dm.ids, vals):
            # shortest round-trip repr, so reading the CSV back is lossless
            w.writerow([vid, *(repr(float(x)) for x in row)])


def read_matrix_csv(path) -> DistanceMatrix:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0][0] != "voyage_id":
        raise ValueError(f"{path}: not a distance-matrix CSV (header must start with voyage_id)")
    ids = rows[0][1:]
    body = rows[1:]
    if [r[0] for r in body] != ids:
        raise ValueError(f"{path}: row ids do not match column ids")
    vals = np.array([[float(x) for x in r[1:]] for r in body], dtype=np.float64)
    return DistanceMatrix(tuple(ids), vals)
