"""Minimization of the smoothed objective by truncated Newton with continuation in alpha.

For each sharpness value ``alpha_t`` of the schedule

    alpha_1 = 1,  alpha_{t+1} = min(alpha_max, (1 + exp(-0.07 t)) alpha_t)

the smoothed problem is minimized to a gradient sup-norm of
``eps_t = max(1e-5, 1e-2 / alpha_t)``, starting from the previous solution.
"""

from __future__ import annotations

import csv
import logging
import math
import time
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial.distance import pdist

from . import _kernels
from .data import Dataset
from .model import PairWeights

logger = logging.getLogger(__name__)


class SolverError(RuntimeError):
    """Numerical failure of a minimization (non-finite values, line-search breakdown)."""

    def __init__(self, msg: str, alpha: Optional[float] = None, lam: Optional[float] = None):
        super().__init__(msg)
        self.alpha = alpha
        self.lam = lam


@dataclass(frozen=True)
class SolverConfig:
    alpha_init: float = 1.0
    alpha_max: float = 1e3
    alpha_rate: float = 0.07
    eps_floor: float = 1e-5
    eps_scale: float = 1e-2
    max_outer: int = 500
    cg_max: Optional[int] = None  # default 10 * m * n
    nonmonotone_memory: int = 10
    armijo: float = 1e-4
    backtrack: float = 0.5
    max_halvings: int = 60
    tau_rel: float = 1e-3
    precondition: bool = True  # diagonal scaling of the CG inner loop

    def __post_init__(self):
        if not 0 < self.alpha_init <= self.alpha_max:
            raise ValueError("need 0 < alpha_init <= alpha_max")
        if min(self.eps_floor, self.eps_scale, self.armijo, self.tau_rel) <= 0:
            raise ValueError("tolerances must be positive")
        if self.nonmonotone_memory < 1:
            raise ValueError("nonmonotone memory must be >= 1")

    def alphas(self) -> list[float]:
        out = [self.alpha_init]
        t = 1
        while out[-1] < self.alpha_max:
            out.append(min(self.alpha_max, (1.0 + math.exp(-self.alpha_rate * t)) * out[-1]))
            t += 1
        return out

    def tolerance(self, alpha: float) -> float:
        return max(self.eps_floor, self.eps_scale / alpha)


@dataclass
class TNResult:
    z: np.ndarray
    f: float
    grad_norm: float
    iterations: int
    truncated: bool = False
    hessvecs: int = 0


def _cg_direction(hessvec, g: np.ndarray, max_iter: int,
                  minv: Optional[np.ndarray] = None) -> tuple[np.ndarray, int]:
    """Approximately solve H d = -g by (preconditioned) conjugate gradients.

    ``minv`` is the inverse of a positive diagonal preconditioner, same shape
    as ``g``. Stops on the residual cut ``min(0.5, sqrt(|g|)) |g|`` or on
    nonpositive curvature, in which case the current iterate is returned
    (the scaled steepest descent ``-minv * g`` if curvature fails on the
    first step).
    """
    gnorm = math.sqrt(float(np.vdot(g, g)))
    cut = min(0.5, math.sqrt(gnorm)) * gnorm
    d = np.zeros_like(g)
    r = -g
    y = r if minv is None else minv * r
    p = y.copy()
    ry = float(np.vdot(r, y))
    for k in range(max_iter):
        hp = hessvec(p)
        curv = float(np.vdot(p, hp))
        if curv <= 1e-12 * float(np.vdot(p, p)):
            return (-(g if minv is None else minv * g) if k == 0 else d), k + 1
        a = ry / curv
        d += a * p
        r -= a * hp
        if math.sqrt(float(np.vdot(r, r))) <= cut:
            return d, k + 1
        y = r if minv is None else minv * r
        ry_new = float(np.vdot(r, y))
        p *= ry_new / ry
        p += y
        ry = ry_new
    return d, max_iter


def truncated_newton_minimize(value_grad: Callable, hessvec: Callable, z0: np.ndarray,
                              grad_tol: float, config: SolverConfig = SolverConfig(),
                              precond: Optional[Callable] = None) -> TNResult:
    """Nonmonotone truncated-Newton minimization.

    Parameters
    ----------
    value_grad : callable
        ``value_grad(z) -> (f, g, aux)``; ``aux`` is handed to ``hessvec``.
    hessvec : callable
        ``hessvec(z, aux, d) -> H(z) d``.
    z0 : ndarray
        Starting point; returned unchanged if its gradient already meets ``grad_tol``.
    grad_tol : float
        Target sup-norm of the gradient.
    precond : callable, optional
        ``precond(z, aux) -> minv``, the inverse of a positive diagonal
        approximation of the Hessian, used by the inner CG loop.

    The step is accepted by Armijo's rule against the largest objective of the
    last ``config.nonmonotone_memory`` iterates.
    """
    if grad_tol <= 0:
        raise ValueError("grad_tol must be positive")
    z = np.array(z0, dtype=float)
    f, g, aux = value_grad(z)
    if not (np.isfinite(f) and np.all(np.isfinite(g))):
        raise SolverError("non-finite objective or gradient at the starting point")
    cg_max = config.cg_max or 10 * z.size
    window = deque([f], maxlen=config.nonmonotone_memory)
    n_hv = 0
    for it in range(config.max_outer):
        gsup = float(np.max(np.abs(g)))
        if gsup <= grad_tol:
            return TNResult(z, f, gsup, it, False, n_hv)
        minv = None if precond is None else precond(z, aux)
        d, k = _cg_direction(lambda v: hessvec(z, aux, v), g, cg_max, minv)
        n_hv += k
        slope = float(np.vdot(g, d))
        if slope >= 0:
            d, slope = -g, -float(np.vdot(g, g))
        f_ref = max(window)
        step = 1.0
        for _ in range(config.max_halvings):
            z_new = z + step * d
            f_new, g_new, aux_new = value_grad(z_new)
            if not np.isfinite(f_new):
                raise SolverError("non-finite objective during line search")
            if f_new <= f_ref + config.armijo * step * slope:
                break
            step *= config.backtrack
        else:
            raise SolverError(f"line search failed after {config.max_halvings} halvings")
        if not np.all(np.isfinite(g_new)):
            raise SolverError("non-finite gradient")
        z, f, g, aux = z_new, f_new, g_new, aux_new
        window.append(f)
    gsup = float(np.max(np.abs(g)))
    return TNResult(z, f, gsup, config.max_outer, gsup > grad_tol, n_hv)


@dataclass(frozen=True)
class StageRecord:
    t: int
    alpha: float
    eps: float
    iterations: int
    grad_norm: float
    objective: float
    seconds: float
    start_objective: float = float("nan")


@dataclass
class SolveTrace:
    lam: float
    stages: list[StageRecord] = field(default_factory=list)
    total_seconds: float = 0.0

    @property
    def converged(self) -> bool:
        return bool(self.stages) and all(s.grad_norm <= s.eps for s in self.stages)


def _points(data) -> np.ndarray:
    return data.points if isinstance(data, Dataset) else np.ascontiguousarray(data, dtype=float)


def solve_smooth_l0(data, weights: PairWeights, lam: float, config: SolverConfig = SolverConfig(),
                    z0: Optional[np.ndarray] = None) -> tuple[np.ndarray, SolveTrace]:
    """Minimize the smoothed objective along the alpha continuation schedule.

    ``z0`` defaults to the data points themselves.
    """
    x = _points(data)
    if lam < 0:
        raise ValueError("lam must be nonnegative")
    z = x.copy() if z0 is None else np.array(z0, dtype=float)
    w = weights.weights
    trace = SolveTrace(lam=float(lam))
    t0 = time.perf_counter()

    for t, alpha in enumerate(config.alphas(), start=1):
        eps = config.tolerance(alpha)

        def value_grad(zz, alpha=alpha):
            coef = np.empty_like(w)
            f, g = _kernels.smooth_value_grad(x, zz, w, lam, alpha, coef)
            return f, g, coef

        def hessvec(zz, coef, d, alpha=alpha):
            return _kernels.smooth_hessvec(zz, coef, alpha, d)

        def precond(zz, coef):
            # inverse of 2 + sum_j coef_ij, a positive bound on each diagonal block
            diag = 2.0 + _kernels.pair_row_sums(coef, zz.shape[0])
            return np.repeat((1.0 / diag)[:, None], zz.shape[1], axis=1)
        ts = time.perf_counter()
        start_f = value_grad(z)[0]
        try:
            res = truncated_newton_minimize(value_grad, hessvec, z, eps, config,
                                            precond if config.precondition else None)
        except SolverError as exc:
            raise SolverError(f"lam={lam:g}, alpha={alpha:g}: {exc}", alpha=alpha, lam=lam) from exc
        if res.truncated:
            logger.warning("lam=%g alpha=%g: stopped after %d iterations with |grad|=%.3g",
                           lam, alpha, res.iterations, res.grad_norm)
        z = res.z
        trace.stages.append(StageRecord(t, alpha, eps, res.iterations, res.grad_norm, res.f,
                                        time.perf_counter() - ts, start_f))
    trace.total_seconds = time.perf_counter() - t0
    return z, trace


def solve_ridge(data, weights: PairWeights, lam: float, grad_tol: float = 1e-5,
                max_iter: Optional[int] = None) -> np.ndarray:
    """Minimize the ridge-penalized objective by conjugate gradients.

    The minimizer solves ``(I + lam L) z = x`` column by column, where ``L`` is
    the weighted graph Laplacian; iteration stops once the sup-norm of the
    objective gradient ``2 ((I + lam L) z - x)`` is at most ``grad_tol``.
    """
    x = _points(data)
    if lam < 0:
        raise ValueError("lam must be nonnegative")
    W = weights.dense()
    deg = W.sum(axis=1)

    def apply(v):
        return v + lam * (deg[:, None] * v - W @ v)

    z = x.copy()
    r = x - apply(z)
    if 2.0 * np.max(np.abs(r)) <= grad_tol:
        return z
    p = r.copy()
    rr = np.einsum("ij,ij->j", r, r)
    max_iter = max_iter or 10 * x.size
    for _ in range(max_iter):
        ap = apply(p)
        pap = np.einsum("ij,ij->j", p, ap)
        a = np.divide(rr, pap, out=np.zeros_like(rr), where=pap > 0)
        z += a * p
        r -= a * ap
        if 2.0 * np.max(np.abs(r)) <= grad_tol:
            # recompute to guard against drift of the recursive residual
            r = x - apply(z)
            if 2.0 * np.max(np.abs(r)) <= grad_tol:
                return z
        rr_new = np.einsum("ij,ij->j", r, r)
        beta = np.divide(rr_new, rr, out=np.zeros_like(rr), where=rr > 0)
        p = r + beta * p
        rr = rr_new
    raise SolverError(f"ridge solve did not reach |grad| <= {grad_tol:g} in {max_iter} iterations",
                      lam=lam)


@dataclass(frozen=True)
class MergeGroups:
    """Connected components of the graph joining centroids closer than ``tau``."""

    labels: np.ndarray
    n_groups: int
    representatives: np.ndarray
    tau: float


def diameter(points: np.ndarray) -> float:
    points = np.asarray(points, dtype=float)
    if points.shape[0] < 2:
        return 0.0
    return float(np.sqrt(pdist(points, "sqeuclidean").max()))


def merge_centroids(z: np.ndarray, data, tau_rel: float = 1e-3,
                    diam: Optional[float] = None) -> MergeGroups:
    """Group centroids whose chain of pairwise distances stays within ``tau_rel * diam(X)``."""
    if tau_rel <= 0:
        raise ValueError("tau_rel must be positive")
    z = np.asarray(z, dtype=float)
    m = z.shape[0]
    tau = tau_rel * (diameter(_points(data)) if diam is None else diam)
    if m == 1:
        return MergeGroups(np.zeros(1, dtype=np.int64), 1, z.copy(), tau)
    close = np.flatnonzero(pdist(z, "euclidean") <= tau)
    rows, cols = np.triu_indices(m, 1)
    adj = coo_matrix((np.ones(close.size), (rows[close], cols[close])), shape=(m, m))
    n_groups, labels = connected_components(adj, directed=False)
    labels = labels.astype(np.int64)
    counts = np.bincount(labels, minlength=n_groups)
    reps = np.zeros((n_groups, z.shape[1]))
    np.add.at(reps, labels, z)
    return MergeGroups(labels, int(n_groups), reps / counts[:, None], tau)


def _collapses(x, weights, lam, config, method, diam) -> bool:
    if method == "l0":
        z, _ = solve_smooth_l0(x, weights, lam, config)
    else:
        z = solve_ridge(x, weights, lam, config.eps_floor)
    return merge_centroids(z, x, config.tau_rel, diam).n_groups == 1


def find_lambda_max(data, weights: PairWeights, config: SolverConfig = SolverConfig(),
                    method: str = "l0", bisections: int = 10, limit: float = 1e12) -> float:
    """Smallest penalty (to ``bisections`` halvings) at which all centroids merge.

    Doubles from 1 until the solution collapses to one group, then bisects
    between the last non-collapsing and the first collapsing value. The
    returned value always comes from a collapsing solve.
    """
    x = _points(data)
    if x.shape[0] < 2:
        raise ValueError("need at least two samples")
    if method not in ("l0", "ridge"):
        raise ValueError(f"unknown method {method!r}")
    diam = diameter(x)
    lo, hi = 0.0, 1.0
    while not _collapses(x, weights, hi, config, method, diam):
        lo, hi = hi, 2.0 * hi
        if hi > limit:
            raise SolverError(f"no collapse up to lambda={limit:g}")
    for _ in range(bisections):
        mid = 0.5 * (lo + hi)
        if _collapses(x, weights, mid, config, method, diam):
            hi = mid
        else:
            lo = mid
    return hi


def build_lambda_grid(lambda_max: float, n: int = 150, decades: float = 4.0) -> np.ndarray:
    """``[0]`` followed by ``n - 1`` geometric values from ``lambda_max 10^-decades`` to ``lambda_max``."""
    if n < 1:
        raise ValueError("grid needs at least one value")
    if lambda_max <= 0:
        raise ValueError("lambda_max must be positive")
    if n == 1:
        return np.zeros(1)
    if n == 2:
        return np.array([0.0, lambda_max])
    tail = np.geomspace(lambda_max * 10.0 ** -decades, lambda_max, n - 1)
    tail[-1] = lambda_max
    return np.concatenate([[0.0], tail])


TRACE_COLUMNS = ("lambda", "t", "alpha", "epsilon", "iterations", "grad_norm", "objective", "seconds")


def write_trace_csv(traces: Sequence[SolveTrace], path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_COLUMNS)
        for tr in traces:
            for s in tr.stages:
                w.writerow([format(tr.lam, ".17g"), s.t, format(s.alpha, ".17g"), format(s.eps, ".17g"),
                            s.iterations, format(s.grad_norm, ".17g"), format(s.objective, ".17g"),
                            format(s.seconds, ".17g")])


def alpha_time_profile(traces: Sequence[SolveTrace]) -> list[tuple[float, float]]:
    """Mean seconds spent per alpha stage over a set of solves: ``[(alpha, mean_seconds), ...]``."""
    by_alpha: dict[float, list[float]] = {}
    for tr in traces:
        for s in tr.stages:
            by_alpha.setdefault(s.alpha, []).append(s.seconds)
    return [(a, float(np.mean(v))) for a, v in sorted(by_alpha.items())]
