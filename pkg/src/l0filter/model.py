"""Pair weights and the penalized least-squares objectives.

Three objectives share the least-squares fit term ``sum_i ||x_i - z_i||^2``
and differ in the pair penalty, weighted by ``w_ij`` and scaled by ``lam``:

* exact:  ``s(||z_i - z_j||)``, 0 if the centroids coincide and 1 otherwise
* smooth: ``1 - exp(-alpha ||z_i - z_j||^2)``
* ridge:  ``||z_i - z_j||^2``
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import pdist

from . import _kernels
from .data import Dataset

DEFAULT_THETA = 0.1


@dataclass(frozen=True)
class PairWeights:
    """Symmetric pair weights packed as the strict upper triangle (i < j)."""

    weights: np.ndarray
    m: int
    theta: float = DEFAULT_THETA

    def __post_init__(self):
        w = np.ascontiguousarray(self.weights, dtype=float)
        if w.shape != (self.m * (self.m - 1) // 2,):
            raise ValueError(f"expected {self.m * (self.m - 1) // 2} packed weights, got {w.shape}")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite and nonnegative")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    def index(self, i: int, j: int) -> int:
        if i == j:
            raise ValueError("no weight on the diagonal")
        if i > j:
            i, j = j, i
        return i * self.m - i * (i + 1) // 2 + (j - i - 1)

    def weight(self, i: int, j: int) -> float:
        return float(self.weights[self.index(i, j)])

    def dense(self) -> np.ndarray:
        """Full symmetric matrix with a zero diagonal."""
        W = np.zeros((self.m, self.m))
        iu = np.triu_indices(self.m, 1)
        W[iu] = self.weights
        return W + W.T

    def laplacian(self) -> np.ndarray:
        W = self.dense()
        return np.diag(W.sum(axis=1)) - W


def compute_weights(data: Dataset | np.ndarray, theta: float = DEFAULT_THETA) -> PairWeights:
    """``w_ij = exp(-theta ||x_i - x_j||^2)`` for every pair i < j."""
    x = data.points if isinstance(data, Dataset) else np.asarray(data, dtype=float)
    if x.shape[0] < 2:
        raise ValueError("at least two samples are needed for pair weights")
    if theta <= 0:
        raise ValueError("theta must be positive")
    return PairWeights(np.exp(-theta * pdist(x, "sqeuclidean")), x.shape[0], theta)


@dataclass(frozen=True)
class Problem:
    """Data, weights and penalty parameter of a penalized fit."""

    x: np.ndarray
    weights: PairWeights
    lam: float

    def __post_init__(self):
        x = np.ascontiguousarray(self.x, dtype=float)
        if x.ndim != 2 or x.shape[0] != self.weights.m:
            raise ValueError(f"data shape {x.shape} does not match {self.weights.m} weights rows")
        if self.lam < 0:
            raise ValueError("lam must be nonnegative")
        object.__setattr__(self, "x", x)

    @property
    def w(self) -> np.ndarray:
        return self.weights.weights

    def smooth(self, alpha: float) -> "SmoothProblem":
        return SmoothProblem(self.x, self.weights, self.lam, alpha)

    def _check(self, z) -> np.ndarray:
        z = np.ascontiguousarray(z, dtype=float)
        if z.shape != self.x.shape:
            raise ValueError(f"centroid shape {z.shape} does not match data shape {self.x.shape}")
        return z


@dataclass(frozen=True)
class SmoothProblem(Problem):
    alpha: float = 1.0

    def __post_init__(self):
        super().__post_init__()
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")


def eval_l0_objective(problem: Problem, z) -> float:
    z = problem._check(z)
    return _kernels.fit_term(problem.x, z) + problem.lam * _kernels.l0_penalty(z, problem.w)


def eval_smooth_objective(problem: SmoothProblem, z) -> float:
    z = problem._check(z)
    return (_kernels.fit_term(problem.x, z)
            + problem.lam * _kernels.smooth_penalty(z, problem.w, problem.alpha))


def smooth_value_grad(problem: SmoothProblem, z) -> tuple[float, np.ndarray, np.ndarray]:
    """Objective, gradient and the per-pair curvature factors in one pass."""
    z = problem._check(z)
    coef = np.empty_like(problem.w)
    f, g = _kernels.smooth_value_grad(problem.x, z, problem.w, problem.lam, problem.alpha, coef)
    return f, g, coef


def grad_smooth(problem: SmoothProblem, z) -> np.ndarray:
    return smooth_value_grad(problem, z)[1]


def hessvec_smooth(problem: SmoothProblem, z, d) -> np.ndarray:
    """Hessian of the smoothed objective at ``z`` applied to ``d``, matrix-free."""
    z = problem._check(z)
    d = problem._check(d)
    coef = smooth_value_grad(problem, z)[2]
    return _kernels.smooth_hessvec(z, coef, problem.alpha, d)


def eval_ridge_objective(problem: Problem, z) -> float:
    z = problem._check(z)
    return _kernels.ridge_value_grad(problem.x, z, problem.w, problem.lam)[0]


def grad_ridge(problem: Problem, z) -> np.ndarray:
    z = problem._check(z)
    return _kernels.ridge_value_grad(problem.x, z, problem.w, problem.lam)[1]
