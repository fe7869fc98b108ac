"""Lloyd's k-means with k-means++ seeding.

Each path is described by its row of the distance matrix. Restarts draw
their randomness from ``SeedSequence(seed).spawn``, so restart ``r`` sees
the same stream whether restarts run serially or in parallel.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import ClusteringError, assignment


@dataclass(frozen=True)
class KMeansResult:
    labels: np.ndarray = field(repr=False)
    centers: np.ndarray = field(repr=False)
    wcss: float
    history: tuple = field(repr=False)   # WCSS after every assignment step
    restart: int = 0


def _sq_dists(X, C):
    d = (X * X).sum(1)[:, None] - 2.0 * X @ C.T + (C * C).sum(1)[None, :]
    return np.maximum(d, 0.0)


def _sq_to(X, c):
    diff = X - c
    return (diff * diff).sum(1)


def kmeans_plus_plus(X, k: int, rng: np.random.Generator) -> np.ndarray:
    """D^2-weighted seeding; returns indices of the k chosen rows."""
    n = X.shape[0]
    chosen = [int(rng.integers(n))]
    closest = _sq_to(X, X[chosen[0]])
    for _ in range(1, k):
        total = closest.sum()
        if total > 0:
            probs = closest / total
        else:
            # every remaining row duplicates a centre; fall back to uniform
            probs = np.ones(n)
            probs[chosen] = 0.0
            probs /= probs.sum()
        nxt = int(rng.choice(n, p=probs))
        chosen.append(nxt)
        closest = np.minimum(closest, _sq_to(X, X[nxt]))
    return np.array(chosen)


def _lloyd(X, centers, max_iter: int):
    n, k = X.shape[0], centers.shape[0]
    history = []
    labels = None
    for _ in range(max_iter):
        d = _sq_dists(X, centers)
        new = d.argmin(axis=1)
        # re-seed any empty cluster at the row farthest from its centre
        for c in range(k):
            if not np.any(new == c):
                own = d[np.arange(n), new]
                far = int(own.argmax())
                new[far] = c
                centers[c] = X[far]
                d = _sq_dists(X, centers)
        wcss = float(_sq_to_assigned(X, centers, new))
        history.append(wcss)
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
        for c in range(k):
            centers[c] = X[labels == c].mean(axis=0)
    wcss = float(_sq_to_assigned(X, centers, labels))
    if wcss < history[-1]:
        history.append(wcss)
    return labels, centers, history


def _sq_to_assigned(X, centers, labels):
    diff = X - centers[labels]
    return (diff * diff).sum()


def kmeans_fit(features, k: int, seed: int = 0, n_init: int = 10, max_iter: int = 300) -> KMeansResult:
    X = np.asarray(features, dtype=np.float64)
    if X.ndim != 2:
        raise ClusteringError("features must be a 2-d array")
    n = X.shape[0]
    if not 1 <= k <= n:
        raise ClusteringError(f"k must lie in [1, {n}], got {k}")
    best = None
    for r, child in enumerate(np.random.SeedSequence(seed).spawn(n_init)):
        rng = np.random.default_rng(child)
        centers = X[kmeans_plus_plus(X, k, rng)].copy()
        labels, centers, hist = _lloyd(X, centers, max_iter)
        res = KMeansResult(labels, centers, hist[-1], tuple(hist), r)
        if best is None or res.wcss < best.wcss:
            best = res
    return best


def kmeans(features, k: int, seed: int = 0, n_init: int = 10, ids=None):
    """Cluster rows of ``features`` (a DistanceMatrix or an array)."""
    if hasattr(features, "values") and hasattr(features, "ids"):
        ids = features.ids
        features = features.values
    X = np.asarray(features, dtype=np.float64)
    if ids is None:
        ids = tuple(str(n) for n in range(X.shape[0]))
    res = kmeans_fit(X, k, seed=seed, n_init=n_init)
    return assignment(ids, res.labels)
