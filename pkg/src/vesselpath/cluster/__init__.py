"""Clustering engines applied to the ANND distance matrix."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class ClusteringError(ValueError):
    pass


@dataclass(frozen=True)
class ClusterAssignment:
    ids: tuple
    labels: np.ndarray = field(repr=False)
    k: int

    def __post_init__(self):
        lab = np.asarray(self.labels, dtype=np.int64)
        if lab.shape != (len(self.ids),):
            raise ClusteringError("one label per id required")
        if lab.size and (lab.min() < 0 or lab.max() >= self.k):
            raise ClusteringError(f"labels must lie in [0, {self.k})")
        if len(np.unique(lab)) != self.k:
            raise ClusteringError("every cluster index must be used")
        lab.setflags(write=False)
        object.__setattr__(self, "ids", tuple(self.ids))
        object.__setattr__(self, "labels", lab)

    def as_dict(self) -> dict:
        return dict(zip(self.ids, (int(x) for x in self.labels)))

    def __eq__(self, other):
        return (isinstance(other, ClusterAssignment) and self.ids == other.ids
                and self.k == other.k and np.array_equal(self.labels, other.labels))

    __hash__ = None


def canonical_labels(labels) -> tuple[np.ndarray, int]:
    """Renumber cluster indices by order of first appearance."""
    labels = np.asarray(labels)
    remap = {}
    out = np.empty(labels.shape[0], dtype=np.int64)
    for n, x in enumerate(labels.tolist()):
        if x not in remap:
            remap[x] = len(remap)
        out[n] = remap[x]
    return out, len(remap)


def assignment(ids, labels) -> ClusterAssignment:
    lab, k = canonical_labels(labels)
    return ClusterAssignment(tuple(ids), lab, k)


from .hierarchical import Dendrogram, cut_dendrogram, hierarchical_cluster, linkage  # noqa: E402
from .kmeans import KMeansResult, kmeans, kmeans_fit, kmeans_plus_plus  # noqa: E402
from .gmm import GaussianMixture, gmm_cluster, gmm_fit, gmm_log_likelihood  # noqa: E402

__all__ = [
    "ClusterAssignment", "ClusteringError", "Dendrogram", "GaussianMixture", "KMeansResult",
    "assignment", "canonical_labels", "cut_dendrogram", "gmm_cluster", "gmm_fit",
    "gmm_log_likelihood", "hierarchical_cluster", "kmeans", "kmeans_fit", "kmeans_plus_plus",
    "linkage",
]
