"""Independent checks used by the test-suite: convex-hull membership,
finite differences, exhaustive partition search and the alpha envelope."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterator

import numpy as np

from .clustering import KernelSpec, Partition
from .model import Problem, eval_l0_objective, eval_smooth_objective

MAX_EXHAUSTIVE_M = 10


@dataclass(frozen=True)
class HullCertificate:
    theta: np.ndarray
    residual: float


def _affine_min_norm(P: np.ndarray) -> np.ndarray:
    """Coefficients (summing to 1) of the minimum-norm point of the affine hull of the columns."""
    s = P.shape[1]
    A = np.zeros((s + 1, s + 1))
    A[:s, :s] = P.T @ P
    A[:s, s] = 1.0
    A[s, :s] = 1.0
    b = np.zeros(s + 1)
    b[s] = 1.0
    sol = np.linalg.lstsq(A, b, rcond=None)[0]
    return sol[:s]


def hull_membership(point, data, tol: float = 1e-6) -> tuple[bool, HullCertificate]:
    """Decide whether ``point`` lies in the convex hull of the rows of ``data``.

    Solves ``min ||sum_i theta_i x_i - point||`` over the unit simplex with
    Wolfe's minimum-norm-point active-set method and reports membership when
    the residual is at most ``tol``.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    X = getattr(data, "points", data)
    X = np.asarray(X, dtype=float)
    point = np.asarray(point, dtype=float)
    Q = (X - point).T  # columns are the shifted samples
    m = Q.shape[1]
    norms = np.einsum("ij,ij->j", Q, Q)
    scale = max(float(norms.max()), 1e-300)

    active = [int(np.argmin(norms))]
    lam = np.array([1.0])
    x = Q[:, active[0]].copy()
    for _ in range(50 * m + 100):
        dots = Q.T @ x
        j = int(np.argmin(dots))
        xx = float(x @ x)
        if xx - dots[j] <= 1e-14 * scale or j in active:
            break
        active.append(j)
        lam = np.append(lam, 0.0)
        while True:
            mu = _affine_min_norm(Q[:, active])
            if np.all(mu > 1e-15):
                lam = mu
                break
            neg = mu <= 1e-15
            ratios = lam[neg] / (lam[neg] - mu[neg])
            step = float(ratios.min()) if ratios.size else 0.0
            lam = lam + step * (mu - lam)
            keep = lam > 1e-15
            keep[np.flatnonzero(neg)[np.argmin(ratios)]] = False
            active = [a for a, kp in zip(active, keep) if kp]
            lam = lam[keep]
            lam /= lam.sum()
        x = Q[:, active] @ lam
    theta = np.zeros(m)
    theta[active] = lam
    theta = np.maximum(theta, 0.0)
    theta /= theta.sum()
    residual = float(np.linalg.norm(X.T @ theta - point))
    return residual <= tol, HullCertificate(theta, residual)


def finite_difference_gradient(fun: Callable[[np.ndarray], float], z: np.ndarray,
                               step: float = 1e-6) -> np.ndarray:
    """Central-difference gradient estimate, one coordinate at a time."""
    if step <= 0:
        raise ValueError("step must be positive")
    z = np.array(z, dtype=float)
    g = np.empty_like(z)
    flat = z.reshape(-1)
    gf = g.reshape(-1)
    for q in range(flat.size):
        orig = flat[q]
        flat[q] = orig + step
        fp = fun(z)
        flat[q] = orig - step
        fm = fun(z)
        flat[q] = orig
        gf[q] = (fp - fm) / (2.0 * step)
    return g


def restricted_growth_strings(m: int, k: int) -> Iterator[np.ndarray]:
    """All labelings of m items into exactly k non-empty blocks, each partition once."""
    a = np.zeros(m, dtype=np.int64)

    def rec(i, used):
        if m - i < k - used:
            return
        if i == m:
            if used == k:
                yield a.copy()
            return
        for c in range(min(used + 1, k)):
            a[i] = c
            yield from rec(i + 1, max(used, c + 1))

    if m == 0:
        return
    a[0] = 0
    yield from rec(1, 1)


def exhaustive_partition_search(points, k: int,
                                objective: Callable[[np.ndarray, np.ndarray], float]
                                ) -> tuple[Partition, float]:
    """Global minimum of ``objective(points, assignment)`` over all k-partitions."""
    points = np.asarray(points, dtype=float)
    m = points.shape[0]
    if m > MAX_EXHAUSTIVE_M:
        raise ValueError(f"exhaustive search is limited to m <= {MAX_EXHAUSTIVE_M}")
    if not 1 <= k <= m:
        raise ValueError(f"k={k} out of range for {m} samples")
    best, best_val = None, np.inf
    for a in restricted_growth_strings(m, k):
        v = objective(points, a)
        if v < best_val:
            best, best_val = a, v
    return Partition(best, k), float(best_val)


def within_scatter(points: np.ndarray, assignment: np.ndarray) -> float:
    """k-means objective: squared distances to the cluster means."""
    total = 0.0
    for c in np.unique(assignment):
        block = points[assignment == c]
        total += float(((block - block.mean(axis=0)) ** 2).sum())
    return total


def kernel_scatter(kernel: KernelSpec) -> Callable[[np.ndarray, np.ndarray], float]:
    """Kernel k-means objective: squared feature-space distances to the cluster means."""

    def objective(points, assignment):
        K = kernel.gram(points)
        total = 0.0
        for c in np.unique(assignment):
            idx = np.flatnonzero(assignment == c)
            total += float(np.trace(K[np.ix_(idx, idx)]) - K[np.ix_(idx, idx)].sum() / idx.size)
        return total

    return objective


def check_envelope_relations(problem: Problem, z, alpha: float, alpha2: float,
                             rel_slack: float = 1e-15) -> bool:
    """``g(z; alpha) <= g(z; alpha2) <= phi(z)`` for ``0 < alpha < alpha2``."""
    if not 0 < alpha < alpha2:
        raise ValueError("need 0 < alpha < alpha2")
    g1 = eval_smooth_objective(problem.smooth(alpha), z)
    g2 = eval_smooth_objective(problem.smooth(alpha2), z)
    phi = eval_l0_objective(problem, z)
    slack = rel_slack * abs(phi)
    return bool(g1 <= g2 + slack and g2 <= phi + slack)
