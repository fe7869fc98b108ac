"""Agglomerative clustering on a precomputed distance matrix.

Inter-cluster distances are maintained with the Lance-Williams update for
single, complete and average (UPGMA) linkage. When several pairs share the
minimum height, the pair whose (smallest member id, smallest member id) key
sorts first is merged, so the tree does not depend on input order.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import ClusteringError, assignment

LINKAGES = ("single", "complete", "average")


@dataclass(frozen=True)
class Merge:
    left: int
    right: int
    height: float
    size: int


@dataclass(frozen=True)
class Dendrogram:
    """Merge history. Leaves are nodes 0..m-1; merge n creates node m+n."""

    ids: tuple
    merges: tuple
    linkage: str = "average"

    def __post_init__(self):
        if len(self.merges) != max(len(self.ids) - 1, 0):
            raise ClusteringError("a dendrogram over m leaves has m-1 merges")

    @property
    def heights(self) -> np.ndarray:
        return np.array([mg.height for mg in self.merges])

    def members(self) -> list:
        """Leaf-index sets for every node."""
        nodes = [frozenset([n]) for n in range(len(self.ids))]
        for mg in self.merges:
            nodes.append(nodes[mg.left] | nodes[mg.right])
        return nodes

    def canonical(self) -> list:
        """Merges described by member ids, comparable across input orderings."""
        nodes = self.members()
        out = []
        for mg in self.merges:
            a = tuple(sorted(self.ids[n] for n in nodes[mg.left]))
            b = tuple(sorted(self.ids[n] for n in nodes[mg.right]))
            out.append((min(a, b), max(a, b), mg.height, mg.size))
        return out

    def to_json(self) -> dict:
        return {
            "format": "vesselpath.dendrogram/1",
            "linkage": self.linkage,
            "ids": list(self.ids),
            "merges": [{"left": mg.left, "right": mg.right, "height": mg.height, "size": mg.size}
                       for mg in self.merges],
        }

    @classmethod
    def from_json(cls, data: dict) -> "Dendrogram":
        merges = tuple(Merge(int(x["left"]), int(x["right"]), float(x["height"]), int(x["size"]))
                       for x in data["merges"])
        return cls(tuple(data["ids"]), merges, data.get("linkage", "average"))

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=1)


def linkage(matrix, method: str = "average") -> Dendrogram:
    if method not in LINKAGES:
        raise ClusteringError(f"unknown linkage {method!r}; expected one of {LINKAGES}")
    ids = tuple(matrix.ids)
    D = np.array(matrix.values, dtype=np.float64)
    m = len(ids)
    np.fill_diagonal(D, np.inf)

    active = np.ones(m, dtype=bool)
    node = np.arange(m)            # row -> current dendrogram node id
    size = np.ones(m, dtype=np.int64)
    key = list(ids)                # row -> smallest member id
    merges = []
    for step in range(m - 1):
        sub = np.where(active[:, None] & active[None, :], D, np.inf)
        h = sub.min()
        rows, cols = np.nonzero(sub == h)
        cand = [(min(key[r], key[c]), max(key[r], key[c]), r, c) for r, c in zip(rows, cols) if r < c]
        _, _, a, b = min(cand)
        if key[b] < key[a]:
            a, b = b, a
        na, nb = size[a], size[b]
        merges.append(Merge(int(node[a]), int(node[b]), float(h), int(na + nb)))

        if method == "single":
            new = np.minimum(D[a], D[b])
        elif method == "complete":
            new = np.maximum(D[a], D[b])
        else:
            # a weighted mean of values >= h; clamp so rounding cannot dip below h
            new = np.maximum((na * D[a] + nb * D[b]) / (na + nb), h)
        D[a, :] = new
        D[:, a] = new
        D[a, a] = np.inf
        D[b, :] = np.inf
        D[:, b] = np.inf
        active[b] = False
        size[a] = na + nb
        node[a] = m + step
        key[a] = min(key[a], key[b])
    return Dendrogram(ids, tuple(merges), method)


def _flat(d: Dendrogram, n_merges: int):
    m = len(d.ids)
    parent = list(range(2 * m))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for n, mg in enumerate(d.merges[:n_merges]):
        parent[find(mg.left)] = m + n
        parent[find(mg.right)] = m + n
    return assignment(d.ids, [find(n) for n in range(m)])


def flat_by_height(d: Dendrogram, cutoff: float):
    """Clusters left after discarding every merge above ``cutoff``."""
    if not cutoff > 0:
        raise ClusteringError(f"cutoff must be positive, got {cutoff}")
    heights = d.heights
    # merge heights are monotone for the supported linkages, so a prefix suffices
    n = int(np.searchsorted(heights, cutoff, side="right")) if heights.size else 0
    if heights.size and np.any(np.diff(heights) < 0):
        raise ClusteringError("non-monotone dendrogram cannot be cut by height")
    return _flat(d, n)


def cut_dendrogram(d: Dendrogram, k: int):
    m = len(d.ids)
    if not 1 <= k <= m:
        raise ClusteringError(f"k must lie in [1, {m}], got {k}")
    return _flat(d, m - k)


def hierarchical_cluster(matrix, linkage_method: str = "average", cutoff: float = 100.0):
    if not cutoff > 0:
        raise ClusteringError(f"cutoff must be positive, got {cutoff}")
    d = linkage(matrix, linkage_method)
    return d, flat_by_height(d, cutoff)
