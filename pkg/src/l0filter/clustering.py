"""Baseline clustering algorithms: single linkage, k-means, kernel k-means and EM.

The randomized methods run ``restarts`` independent starts and keep the best
objective; ties go to the lowest restart index. Kernel k-means and EM run all
restarts together as stacked arrays.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numba
import numpy as np
from scipy.spatial.distance import cdist, pdist
from scipy.special import logsumexp

logger = logging.getLogger(__name__)

DEFAULT_GAMMA = 0.1
DEFAULT_RESTARTS = 100


@dataclass(frozen=True)
class Partition:
    """Cluster ids in ``[0, k)``, one per sample, every cluster non-empty."""

    assignment: np.ndarray
    k: int

    def __post_init__(self):
        a = np.array(self.assignment, dtype=np.int64, copy=True)
        if a.ndim != 1 or a.size == 0:
            raise ValueError("assignment must be a non-empty 1-D array")
        if a.min() < 0 or a.max() >= self.k:
            raise ValueError(f"cluster ids must lie in [0, {self.k})")
        if np.bincount(a, minlength=self.k).min() == 0:
            raise ValueError("partition has an empty cluster")
        a.setflags(write=False)
        object.__setattr__(self, "assignment", a)

    @classmethod
    def from_labels(cls, labels) -> "Partition":
        """Relabel arbitrary ids to 0..k-1 by order of first appearance."""
        labels = np.asarray(labels)
        _, first, inv = np.unique(labels, return_index=True, return_inverse=True)
        order = np.argsort(np.argsort(first))
        return cls(order[inv.ravel()], first.size)

    @property
    def m(self) -> int:
        return self.assignment.size

    def sizes(self) -> np.ndarray:
        return np.bincount(self.assignment, minlength=self.k)


@dataclass(frozen=True)
class KernelSpec:
    """Gaussian kernel ``exp(-gamma ||x - y||^2)``; ``kind="linear"`` gives ``x . y``."""

    gamma: float = DEFAULT_GAMMA
    kind: str = "gaussian"

    def __post_init__(self):
        if self.kind not in ("gaussian", "linear"):
            raise ValueError(f"unknown kernel kind {self.kind!r}")
        if self.kind == "gaussian" and not self.gamma > 0:
            raise ValueError("gamma must be positive")

    def gram(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        if self.kind == "linear":
            return points @ points.T
        sq = cdist(points, points, "sqeuclidean")
        return np.exp(-self.gamma * sq)


def gaussian_kernel(x, y, gamma: float = DEFAULT_GAMMA) -> float:
    d = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
    return float(np.exp(-gamma * np.dot(d, d)))


def kernel_distance(x, y, kernel: KernelSpec = KernelSpec()) -> float:
    """Squared feature-space distance ``K(x,x) - 2 K(x,y) + K(y,y)``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if kernel.kind == "linear":
        return float(np.dot(x - y, x - y))
    d = x - y
    # 2 (1 - e^{-g r^2}) without cancellation
    return float(-2.0 * np.expm1(-kernel.gamma * np.dot(d, d)))


def kernel_distance_matrix(points: np.ndarray, kernel: KernelSpec = KernelSpec()) -> np.ndarray:
    sq = cdist(points, points, "sqeuclidean")
    if kernel.kind == "linear":
        return sq
    return -2.0 * np.expm1(-kernel.gamma * sq)


def _check_k(k: int, m: int) -> None:
    if not 1 <= k <= m:
        raise ValueError(f"k={k} out of range for {m} samples")


# ---------------------------------------------------------------- single linkage


@numba.njit(cache=True)
def _kruskal_cut(order, rows, cols, m, k):
    parent = np.arange(m)
    comps = m
    for e in order:
        if comps == k:
            break
        a = rows[e]
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        b = cols[e]
        while parent[b] != b:
            parent[b] = parent[parent[b]]
            b = parent[b]
        if a != b:
            if a < b:
                parent[b] = a
            else:
                parent[a] = b
            comps -= 1
    roots = np.empty(m, dtype=np.int64)
    for i in range(m):
        a = i
        while parent[a] != a:
            a = parent[a]
        roots[i] = a
    return roots


def single_linkage(points: np.ndarray, k: int) -> Partition:
    """Agglomerate by minimum Euclidean distance until ``k`` clusters remain.

    Equal distances are merged in lexicographic order of the pair (i, j).
    """
    points = np.asarray(points, dtype=float)
    m = points.shape[0]
    _check_k(k, m)
    if k == m:
        return Partition(np.arange(m), m)
    d = pdist(points, "sqeuclidean")
    rows, cols = np.triu_indices(m, 1)
    # pdist order is already lexicographic in (i, j); a stable sort keeps it for ties
    order = np.argsort(d, kind="stable")
    roots = _kruskal_cut(order, rows.astype(np.int64), cols.astype(np.int64), m, k)
    return Partition.from_labels(roots)


# ---------------------------------------------------------------- k-means


def _lloyd(points, centers, max_iter=300):
    """One Lloyd run from the given centers; returns (assign, centers, objective, history)."""
    k = centers.shape[0]
    centers = centers.copy()
    assign = None
    history = []
    for _ in range(max_iter):
        d = cdist(points, centers, "sqeuclidean")
        new = np.argmin(d, axis=1)
        if assign is not None:
            # keep the current cluster on ties so that runs terminate
            keep = d[np.arange(len(new)), assign] <= d[np.arange(len(new)), new]
            new = np.where(keep, assign, new)
        counts = np.bincount(new, minlength=k)
        for c in np.flatnonzero(counts == 0):
            own = d[np.arange(len(new)), new]
            own[counts[new] <= 1] = -np.inf
            far = int(np.argmax(own))
            counts[new[far]] -= 1
            new[far] = c
            counts[c] = 1
        centers = np.zeros_like(centers)
        np.add.at(centers, new, points)
        centers /= counts[:, None]
        obj = float(((points - centers[new]) ** 2).sum())
        history.append(obj)
        if assign is not None and np.array_equal(new, assign):
            break
        assign = new
    return new, centers, history[-1], history


def kmeans(points: np.ndarray, k: int, restarts: int = DEFAULT_RESTARTS,
           seed: int = 0, max_iter: int = 300) -> tuple[Partition, np.ndarray, float]:
    """Best of ``restarts`` Lloyd runs seeded at distinct random samples."""
    points = np.asarray(points, dtype=float)
    m = points.shape[0]
    _check_k(k, m)
    if restarts < 1:
        raise ValueError("restarts must be >= 1")
    rng = np.random.default_rng(seed)
    best = None
    for _ in range(restarts):
        init = points[rng.choice(m, size=k, replace=False)]
        assign, centers, obj, _ = _lloyd(points, init, max_iter)
        if best is None or obj < best[2]:
            best = (assign, centers, obj)
    return Partition(best[0], k), best[1], best[2]


# ---------------------------------------------------------------- kernel k-means


def _kkm_distances(K, diag, H):
    """Feature-space squared distances of every sample to every cluster mean.

    ``H`` is the (runs, m, k) one-hot assignment tensor.
    """
    R, m, k = H.shape
    counts = H.sum(axis=1)
    S = (K @ H.transpose(1, 0, 2).reshape(m, R * k)).reshape(m, R, k).transpose(1, 0, 2)
    within = np.einsum("rjc,rjc->rc", H, S)
    with np.errstate(divide="ignore", invalid="ignore"):
        dist = diag[None, :, None] - 2.0 * S / counts[:, None, :] + within[:, None, :] / counts[:, None, :] ** 2
    return np.maximum(dist, 0.0), counts


def _repair_empty(K, diag, assign, k):
    """Move the sample farthest from its cluster mean into each empty cluster."""
    for r in range(assign.shape[0]):
        while True:
            counts = np.bincount(assign[r], minlength=k)
            empty = np.flatnonzero(counts == 0)
            if empty.size == 0:
                break
            H = np.eye(k)[assign[r]][None]
            dist, _ = _kkm_distances(K, diag, H)
            own = dist[0, np.arange(assign.shape[1]), assign[r]]
            own[counts[assign[r]] <= 1] = -np.inf
            assign[r, int(np.argmax(own))] = empty[0]
    return assign


def _kernel_kmeans_runs(K, k, init, max_iter=300):
    """Batch kernel k-means from the initial assignments ``init`` (runs x m)."""
    R, m = init.shape
    diag = np.diag(K).copy()
    assign = _repair_empty(K, diag, init.copy(), k)
    eye = np.eye(k)
    active = np.ones(R, dtype=bool)
    objective = np.full(R, np.inf)
    history = [[] for _ in range(R)]
    for _ in range(max_iter):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        H = eye[assign[idx]]
        dist, _ = _kkm_distances(K, diag, H)
        cur = np.take_along_axis(dist, assign[idx][:, :, None], axis=2)[:, :, 0]
        obj = cur.sum(axis=1)
        new = np.argmin(dist, axis=2)
        best = np.take_along_axis(dist, new[:, :, None], axis=2)[:, :, 0]
        new = np.where(best < cur, new, assign[idx])
        for q, r in enumerate(idx):
            objective[r] = obj[q]
            history[r].append(float(obj[q]))
        changed = np.any(new != assign[idx], axis=1)
        new = _repair_empty(K, diag, new, k)
        assign[idx] = new
        active[idx[~changed]] = False
    return assign, objective, history


def kernel_kmeans(points: np.ndarray, k: int, kernel: KernelSpec = KernelSpec(),
                  restarts: int = DEFAULT_RESTARTS, seed: int = 0,
                  max_iter: int = 300) -> tuple[Partition, float]:
    """Kernel k-means from uniformly random initial assignments, best of ``restarts``.

    The objective is the total squared feature-space distance of the samples
    to their cluster means.
    """
    points = np.asarray(points, dtype=float)
    m = points.shape[0]
    _check_k(k, m)
    if restarts < 1:
        raise ValueError("restarts must be >= 1")
    rng = np.random.default_rng(seed)
    init = rng.integers(0, k, size=(restarts, m))
    assign, objective, _ = _kernel_kmeans_runs(kernel.gram(points), k, init, max_iter)
    best = int(np.argmin(objective))
    return Partition(assign[best], k), float(objective[best])


# ---------------------------------------------------------------- EM for Gaussian mixtures


@dataclass(frozen=True)
class GaussianMixture:
    weights: np.ndarray
    means: np.ndarray
    covariances: np.ndarray


COV_FLOOR = 1e-6


def _floor_covariances(covs):
    """Add ``COV_FLOOR * I`` to covariances that are not safely positive definite."""
    n = covs.shape[-1]
    low = np.linalg.eigvalsh(covs)[..., 0] <= COV_FLOOR
    if np.any(low):
        covs = covs.copy()
        covs[low] += COV_FLOOR * np.eye(n)
    return covs


def _log_densities(X, weights, means, covs):
    """log(pi_c N(x_i | mu_c, S_c)) with shape (runs, m, k)."""
    n = X.shape[1]
    L = np.linalg.cholesky(covs)
    Linv = np.linalg.inv(L)
    diff = X[None, None, :, :] - means[:, :, None, :]
    y = diff @ np.swapaxes(Linv, -1, -2)
    maha = (y * y).sum(axis=-1)
    logdet = 2.0 * np.log(np.diagonal(L, axis1=-2, axis2=-1)).sum(axis=-1)
    with np.errstate(divide="ignore"):
        logw = np.log(weights)
    lp = -0.5 * (n * np.log(2.0 * np.pi) + logdet[:, :, None] + maha) + logw[:, :, None]
    return lp.transpose(0, 2, 1)


def _em_runs(X, means, covs, weights, max_iter=500, tol=1e-8):
    R, k, n = means.shape
    m = X.shape[0]
    active = np.ones(R, dtype=bool)
    loglik = np.full(R, -np.inf)
    history = [[] for _ in range(R)]
    for _ in range(max_iter):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        lp = _log_densities(X, weights[idx], means[idx], covs[idx])
        lse = logsumexp(lp, axis=2)
        ll = lse.sum(axis=1)
        resp = np.exp(lp - lse[:, :, None])
        nk = resp.sum(axis=1)
        ok = nk > 1e-10
        safe = np.where(ok, nk, 1.0)
        rT = np.swapaxes(resp, 1, 2)
        new_means = (rT @ X) / safe[:, :, None]
        diff = X[None, None, :, :] - new_means[:, :, None, :]
        new_covs = (np.swapaxes(diff * rT[:, :, :, None], -1, -2) @ diff) / safe[:, :, None, None]
        new_means = np.where(ok[:, :, None], new_means, means[idx])
        new_covs = np.where(ok[:, :, None, None], new_covs, covs[idx])
        means[idx] = new_means
        covs[idx] = _floor_covariances(new_covs)
        weights[idx] = nk / m
        for q, r in enumerate(idx):
            history[r].append(float(ll[q]))
            prev = loglik[r]
            loglik[r] = ll[q]
            if abs(ll[q] - prev) < tol:
                active[r] = False
    # final log-likelihood at the returned parameters
    lp = _log_densities(X, weights, means, covs)
    lse = logsumexp(lp, axis=2)
    return means, covs, weights, lse.sum(axis=1), lp, history


def _hard_assign(lp: np.ndarray, k: int) -> np.ndarray:
    """Maximum-responsibility labels; an empty component takes its most probable sample."""
    assign = np.argmax(lp, axis=1)
    for _ in range(k):
        counts = np.bincount(assign, minlength=k)
        empty = np.flatnonzero(counts == 0)
        if empty.size == 0:
            break
        c = empty[0]
        score = lp[:, c] - lp[np.arange(lp.shape[0]), assign]
        score[counts[assign] <= 1] = -np.inf
        assign[int(np.argmax(score))] = c
    return assign


def em_gaussian_mixture(points: np.ndarray, k: int, restarts: int = DEFAULT_RESTARTS,
                        seed: int = 0, max_iter: int = 500,
                        tol: float = 1e-8) -> tuple[Partition, GaussianMixture, float]:
    """Full-covariance EM, best of ``restarts`` by final log-likelihood.

    Each start uses k distinct random samples as means, the global covariance
    for every component and uniform mixing weights. Iteration stops when the
    log-likelihood changes by less than ``tol`` or after ``max_iter`` steps.
    """
    X = np.asarray(points, dtype=float)
    m, n = X.shape
    _check_k(k, m)
    if restarts < 1:
        raise ValueError("restarts must be >= 1")
    if k > 1 and np.all(X == X[0]):
        raise ValueError("all samples are identical; a mixture with k > 1 is undefined")
    rng = np.random.default_rng(seed)
    glob = np.atleast_2d(np.cov(X, rowvar=False, bias=True))
    means = np.stack([X[rng.choice(m, size=k, replace=False)] for _ in range(restarts)])
    covs = _floor_covariances(np.broadcast_to(glob, (restarts, k, n, n)).copy())
    weights = np.full((restarts, k), 1.0 / k)
    means, covs, weights, ll, lp, _ = _em_runs(X, means, covs, weights, max_iter, tol)
    ll = np.where(np.isfinite(ll), ll, -np.inf)
    best = int(np.argmax(ll))
    assign = _hard_assign(lp[best], k)
    mix = GaussianMixture(weights[best].copy(), means[best].copy(), covs[best].copy())
    return Partition(assign, k), mix, float(ll[best])


ALGORITHMS = ("SL", "EMGM", "KKM")


def run_algorithm(name: str, points: np.ndarray, k: int, restarts: int = DEFAULT_RESTARTS,
                  seed: int = 0, gamma: float = DEFAULT_GAMMA) -> Partition:
    """Dispatch one of the three benchmark algorithms by name."""
    if name == "SL":
        return single_linkage(points, k)
    if name == "KKM":
        return kernel_kmeans(points, k, KernelSpec(gamma), restarts, seed)[0]
    if name == "EMGM":
        return em_gaussian_mixture(points, k, restarts, seed)[0]
    raise ValueError(f"unknown algorithm {name!r}; expected one of {ALGORITHMS}")
