"""Full-covariance Gaussian mixtures fitted by EM.

Covariances are regularised with a fixed ridge ``lam * I`` folded into the
M-step, ``cov_k = (S_k + lam * I) / N_k`` with ``lam = reg * N`` and
``reg = 1e-6 * trace(cov(X)) / d``. That is the exact maximiser of the
log-likelihood penalised by ``-lam/2 * sum_k trace(inv(cov_k))``, so EM never
decreases the penalised objective, and every covariance eigenvalue stays at
or above ``reg``. The recorded ``history`` is that objective per point.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import ClusteringError, assignment
from .kmeans import kmeans_plus_plus

REG_SCALE = 1e-6
_LOG2PI = math.log(2.0 * math.pi)
_TINY = 1e-300


class GMMFitError(ClusteringError):
    pass


@dataclass(frozen=True, eq=False)
class GaussianMixture:
    weights: np.ndarray
    means: np.ndarray
    covariances: np.ndarray
    history: tuple = field(default=(), repr=False)
    reg: float = 0.0

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64).reshape(-1)
        mu = np.asarray(self.means, dtype=np.float64)
        cov = np.asarray(self.covariances, dtype=np.float64)
        k = w.shape[0]
        if mu.ndim != 2 or mu.shape[0] != k or cov.shape != (k, mu.shape[1], mu.shape[1]):
            raise ClusteringError("inconsistent mixture parameter shapes")
        if abs(w.sum() - 1.0) > 1e-12 or np.any(w < 0):
            raise ClusteringError("mixture weights must be nonnegative and sum to 1")
        if not np.allclose(cov, np.transpose(cov, (0, 2, 1)), rtol=0, atol=1e-9 * max(1.0, np.abs(cov).max())):
            raise ClusteringError("covariances must be symmetric")
        chol = np.linalg.cholesky(cov)  # raises LinAlgError if not positive definite
        for name, val in (("weights", w), ("means", mu), ("covariances", cov), ("_chol", chol)):
            val.setflags(write=False)
            object.__setattr__(self, name, val)

    @property
    def n_components(self) -> int:
        return self.weights.shape[0]

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    def component_log_density(self, X) -> np.ndarray:
        """(n, k) array of log(weight_k) + log N(x; mean_k, cov_k)."""
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.dim:
            raise ClusteringError(f"point dimension {X.shape[1]} != mixture dimension {self.dim}")
        return _log_weighted(X, self.weights, self.means, self._chol)

    def score_samples(self, X) -> np.ndarray:
        return _logsumexp(self.component_log_density(X))

    def responsibilities(self, X) -> np.ndarray:
        lw = self.component_log_density(X)
        return np.exp(lw - _logsumexp(lw)[:, None])

    def to_dict(self) -> dict:
        return {
            "weights": self.weights.tolist(),
            "means": self.means.tolist(),
            "covariances": self.covariances.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "GaussianMixture":
        return cls(np.array(data["weights"]), np.array(data["means"]), np.array(data["covariances"]))


def _logsumexp(a):
    mx = a.max(axis=1)
    mx = np.where(np.isfinite(mx), mx, 0.0)
    return mx + np.log(np.exp(a - mx[:, None]).sum(axis=1))


def _log_weighted(X, w, mu, chol):
    n, d = X.shape
    out = np.empty((n, w.shape[0]))
    for c in range(w.shape[0]):
        L = chol[c]
        z = np.linalg.solve(L, (X - mu[c]).T) if d > 2 else _solve2(L, X - mu[c])
        maha = (z * z).sum(axis=0)
        logdet = 2.0 * np.log(np.diag(L)).sum()
        out[:, c] = math.log(max(w[c], _TINY)) - 0.5 * (maha + logdet + d * _LOG2PI)
    return out


def _solve2(L, diff):
    # forward substitution for a 2x2 lower-triangular factor
    z0 = diff[:, 0] / L[0, 0]
    z1 = (diff[:, 1] - L[1, 0] * z0) / L[1, 1]
    return np.vstack([z0, z1])


def gmm_log_likelihood(g: GaussianMixture, p) -> float:
    p = np.asarray(p, dtype=np.float64)
    if p.ndim == 1:
        return float(g.score_samples(p[None, :])[0])
    return g.score_samples(p)


def _estep(X, w, mu, cov, lam):
    chol = np.linalg.cholesky(cov)
    lw = _log_weighted(X, w, mu, chol)
    ll = _logsumexp(lw)
    penalty = 0.0
    if lam > 0:
        for c in range(w.shape[0]):
            inv_l = np.linalg.inv(chol[c])
            penalty += (inv_l * inv_l).sum()   # trace(inv(cov)) = ||inv(L)||_F^2
    obj = (ll.sum() - 0.5 * lam * penalty) / X.shape[0]
    return obj, lw - ll[:, None]


def _mstep(X, logr, lam):
    n, d = X.shape
    r = np.exp(logr)
    nk = np.maximum(r.sum(axis=0), 10 * np.finfo(float).eps)
    w = nk / n
    w = w / w.sum()
    mu = (r.T @ X) / nk[:, None]
    cov = np.empty((w.shape[0], d, d))
    eye = np.eye(d)
    for c in range(w.shape[0]):
        diff = X - mu[c]
        S = (r[:, c, None] * diff).T @ diff
        cov[c] = (S + lam * eye) / nk[c]
        cov[c] = (cov[c] + cov[c].T) / 2.0
    return w, mu, cov


def _one_run(X, k, rng, lam, tol, max_iter, base_cov):
    n, d = X.shape
    mu = X[kmeans_plus_plus(X, k, rng)].copy()
    w = np.full(k, 1.0 / k)
    cov = np.repeat(base_cov[None], k, axis=0)
    obj, logr = _estep(X, w, mu, cov, lam)
    hist = [obj]
    for _ in range(max_iter):
        w, mu, cov = _mstep(X, logr, lam)
        new, logr = _estep(X, w, mu, cov, lam)
        hist.append(new)
        if new - obj < tol:
            break
        obj = new
    return w, mu, cov, hist


def gmm_fit(points, n_components: int, seed: int = 0, n_init: int = 5,
            tol: float = 1e-6, max_iter: int = 200) -> GaussianMixture:
    X = np.asarray(points, dtype=np.float64)
    if X.ndim != 2:
        raise GMMFitError("points must be a 2-d array")
    n, d = X.shape
    if n_components < 1:
        raise GMMFitError("need at least one component")
    if np.unique(X, axis=0).shape[0] < n_components:
        raise GMMFitError(f"fewer distinct points than components ({n_components})")
    data_cov = np.atleast_2d(np.cov(X, rowvar=False, bias=True))
    reg = REG_SCALE * float(np.trace(data_cov)) / d
    if reg <= 0:
        reg = REG_SCALE
    lam = reg * n
    base_cov = data_cov + reg * np.eye(d)

    best = None
    for child in np.random.SeedSequence(seed).spawn(n_init):
        rng = np.random.default_rng(child)
        w, mu, cov, hist = _one_run(X, n_components, rng, lam, tol, max_iter, base_cov)
        if best is None or hist[-1] > best[3][-1]:
            best = (w, mu, cov, hist)
    w, mu, cov, hist = best
    return GaussianMixture(w, mu, cov, tuple(hist), reg)


def gmm_cluster(features, k: int, seed: int = 0, n_init: int = 5, ids=None):
    if hasattr(features, "values") and hasattr(features, "ids"):
        ids = features.ids
        features = features.values
    X = np.asarray(features, dtype=np.float64)
    if ids is None:
        ids = tuple(str(n) for n in range(X.shape[0]))
    g = gmm_fit(X, k, seed=seed, n_init=n_init)
    labels = g.component_log_density(X).argmax(axis=1)
    return assignment(ids, labels)
