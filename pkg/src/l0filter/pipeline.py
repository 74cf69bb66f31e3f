"""Filter-then-cluster pipelines.

For every penalty value on a grid the samples are replaced by their fitted
centroids, the centroids are clustered by the chosen algorithm, the resulting
labels are carried back to the original samples, and the partition is scored
by the kernel criterion on the original samples. The lowest score wins; ties
go to the smaller penalty.

The pipeline functions take the data as given. ``prepare_dataset`` scales raw
samples to [-1, 1] and computes the pair weights in one step.
"""

from __future__ import annotations

import csv
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .clustering import (DEFAULT_GAMMA, DEFAULT_RESTARTS, KernelSpec, Partition, kmeans,
                         kernel_distance_matrix, run_algorithm)
from .data import Dataset, fit_scale
from .evaluation import CriterionValue, adjusted_rand_index, criterion_c
from .model import DEFAULT_THETA, PairWeights, compute_weights
from .solver import (MergeGroups, SolverConfig, SolveTrace, SolverError, build_lambda_grid,
                     diameter, find_lambda_max, merge_centroids, solve_ridge, solve_smooth_l0)

logger = logging.getLogger(__name__)

DEFAULT_GRID_SIZE = 150
WEIGHT_MODES = ("scaled", "raw")


def prepare_dataset(data: Dataset, weights: str = "scaled",
                    theta: float = DEFAULT_THETA) -> tuple[Dataset, PairWeights]:
    """Scale ``data`` to [-1, 1] and compute pair weights.

    ``weights="scaled"`` computes the weights on the scaled samples, the
    same points the filter is fitted to. ``"raw"`` measures the weight
    distances in the original coordinates instead, which keeps the weights
    local on data with a wide range but can push the collapse penalty out
    of reach when groups are far apart.
    """
    if weights not in WEIGHT_MODES:
        raise ValueError(f"weights must be one of {WEIGHT_MODES}")
    _, scaled = fit_scale(data)
    return scaled, compute_weights(data if weights == "raw" else scaled, theta)


def derive_seed(seed: int, index: int) -> int:
    """Independent per-index seed derived from a base seed."""
    return int(np.random.SeedSequence([seed, index]).generate_state(1, np.uint64)[0])


@dataclass
class FilterSolution:
    lam: float
    z: Optional[np.ndarray]
    seconds: float
    trace: Optional[SolveTrace] = None
    error: Optional[str] = None


def _solve_one(args):
    method, x, weights, lam, config, z0 = args
    t0 = time.perf_counter()
    try:
        if method == "l0":
            z, trace = solve_smooth_l0(x, weights, lam, config, z0)
        else:
            z, trace = solve_ridge(x, weights, lam, config.eps_floor), None
    except SolverError as exc:
        logger.warning("%s solve failed at lambda=%g: %s", method, lam, exc)
        return FilterSolution(lam, None, time.perf_counter() - t0, None, str(exc))
    return FilterSolution(lam, z, time.perf_counter() - t0, trace)


def compute_filter_path(data: Dataset, lambda_grid: Sequence[float], method: str = "l0",
                        weights: Optional[PairWeights] = None,
                        config: SolverConfig = SolverConfig(),
                        warm_start: bool = False, n_jobs: int = 1) -> list[FilterSolution]:
    """Solve the filter problem for every penalty on the grid.

    Each solve starts from the samples unless ``warm_start`` chains the
    previous solution along the grid (which forces serial execution).
    Failures are recorded per penalty value rather than raised.
    """
    if method not in ("l0", "ridge"):
        raise ValueError(f"unknown filter method {method!r}")
    x = data.points
    weights = weights or compute_weights(data)
    grid = [float(v) for v in lambda_grid]
    if warm_start:
        out, z0 = [], None
        for lam in grid:
            sol = _solve_one((method, x, weights, lam, config, z0))
            out.append(sol)
            z0 = sol.z if sol.z is not None else z0
        return out
    jobs = [(method, x, weights, lam, config, None) for lam in grid]
    if n_jobs == 1:
        return [_solve_one(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=n_jobs) as pool:
        return list(pool.map(_solve_one, jobs))


@dataclass
class PipelineEntry:
    lam: float
    z: Optional[np.ndarray]
    groups: Optional[MergeGroups]
    partition: Optional[Partition]
    criterion: Optional[CriterionValue]
    seconds: float
    trace: Optional[SolveTrace] = None
    error: Optional[str] = None

    @property
    def score(self) -> float:
        return np.inf if self.criterion is None else self.criterion.value


@dataclass
class PipelineResult:
    entries: list[PipelineEntry]
    best_index: int
    method: str = "l0"
    algorithm: str = "SL"
    labels: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def partition(self) -> Partition:
        return self.entries[self.best_index].partition

    @property
    def best_lambda(self) -> float:
        return self.entries[self.best_index].lam

    @property
    def traces(self) -> list[SolveTrace]:
        return [e.trace for e in self.entries if e.trace is not None]

    def ari(self) -> Optional[float]:
        if self.labels is None:
            return None
        return adjusted_rand_index(self.partition, self.labels)

    def write_csv(self, path) -> None:
        """Per-penalty summary: lambda, num_merge_groups, criterion, ari_if_labels, seconds."""
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["lambda", "num_merge_groups", "criterion", "ari_if_labels", "seconds"])
            for e in self.entries:
                ari = ("" if self.labels is None or e.partition is None
                       else format(adjusted_rand_index(e.partition, self.labels), ".17g"))
                w.writerow([format(e.lam, ".17g"),
                            "" if e.groups is None else e.groups.n_groups,
                            "NA" if e.criterion is None else format(e.criterion.value, ".17g"),
                            ari, format(e.seconds, ".17g")])

    def write_partition_csv(self, path) -> None:
        write_partition_csv(self.partition, path)


def write_partition_csv(partition: Partition, path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index", "cluster"])
        for i, c in enumerate(partition.assignment):
            w.writerow([i, int(c)])


def select_best(entries: Sequence[PipelineEntry]) -> int:
    """Index of the lowest criterion value; equal values resolve to the smaller penalty."""
    ok = [i for i, e in enumerate(entries) if e.partition is not None]
    if not ok:
        raise SolverError("every penalty value failed")
    return min(ok, key=lambda i: (entries[i].score, entries[i].lam, i))


def cluster_filter_path(data: Dataset, path: Sequence[FilterSolution], k: int, algorithm: str,
                        restarts: int = DEFAULT_RESTARTS, seed: int = 0,
                        gamma: float = DEFAULT_GAMMA, method: str = "l0",
                        config: SolverConfig = SolverConfig()) -> PipelineResult:
    """Cluster every filtered point set, map labels back by index and select the best."""
    if not 2 <= k <= data.m:
        raise ValueError(f"k={k} out of range for {data.m} samples")
    dist = kernel_distance_matrix(data.points, KernelSpec(gamma))
    diam = diameter(data.points)
    entries = []
    for t, sol in enumerate(path):
        if sol.z is None:
            entries.append(PipelineEntry(sol.lam, None, None, None, None, sol.seconds, sol.trace, sol.error))
            continue
        groups = merge_centroids(sol.z, data.points, config.tau_rel, diam)
        try:
            # labels of the centroids are the labels of their samples
            part = run_algorithm(algorithm, sol.z, k, restarts, derive_seed(seed, t), gamma)
        except (ValueError, np.linalg.LinAlgError) as exc:
            logger.warning("%s failed at lambda=%g: %s", algorithm, sol.lam, exc)
            entries.append(PipelineEntry(sol.lam, sol.z, groups, None, None, sol.seconds, sol.trace, str(exc)))
            continue
        crit = criterion_c(part, data.points, KernelSpec(gamma), dist)
        entries.append(PipelineEntry(sol.lam, sol.z, groups, part, crit, sol.seconds, sol.trace))
    return PipelineResult(entries, select_best(entries), method, algorithm, data.labels)


def default_grid(data: Dataset, method: str = "l0", weights: Optional[PairWeights] = None,
                 config: SolverConfig = SolverConfig(), n: int = DEFAULT_GRID_SIZE) -> np.ndarray:
    weights = weights or compute_weights(data)
    return build_lambda_grid(find_lambda_max(data, weights, config, method), n)


def _run_filter_pipeline(method, data, k, algorithm, lambda_grid, weights, config, restarts,
                         seed, gamma, warm_start, n_jobs) -> PipelineResult:
    weights = weights or compute_weights(data, DEFAULT_THETA)
    if lambda_grid is None:
        lambda_grid = default_grid(data, method, weights, config)
    if len(lambda_grid) == 0:
        raise ValueError("empty lambda grid")
    path = compute_filter_path(data, lambda_grid, method, weights, config, warm_start, n_jobs)
    return cluster_filter_path(data, path, k, algorithm, restarts, seed, gamma, method, config)


def run_l0_filter_pipeline(data: Dataset, k: int, algorithm: str,
                           lambda_grid: Optional[Sequence[float]] = None,
                           weights: Optional[PairWeights] = None,
                           config: SolverConfig = SolverConfig(),
                           restarts: int = DEFAULT_RESTARTS, seed: int = 0,
                           gamma: float = DEFAULT_GAMMA, warm_start: bool = False,
                           n_jobs: int = 1) -> PipelineResult:
    """Smoothed l0 filter followed by ``algorithm``, penalty chosen by the criterion.

    Without ``lambda_grid`` the default grid of 150 values up to the collapse
    penalty is built first.
    """
    return _run_filter_pipeline("l0", data, k, algorithm, lambda_grid, weights, config,
                                restarts, seed, gamma, warm_start, n_jobs)


def run_ridge_filter_pipeline(data: Dataset, k: int, algorithm: str,
                              lambda_grid: Optional[Sequence[float]] = None,
                              weights: Optional[PairWeights] = None,
                              config: SolverConfig = SolverConfig(),
                              restarts: int = DEFAULT_RESTARTS, seed: int = 0,
                              gamma: float = DEFAULT_GAMMA, n_jobs: int = 1) -> PipelineResult:
    """Same as the l0 pipeline with the ridge-penalized fit; its grid uses the ridge collapse."""
    return _run_filter_pipeline("ridge", data, k, algorithm, lambda_grid, weights, config,
                                restarts, seed, gamma, False, n_jobs)


def run_km_filter(data: Dataset, k: int, multiplier: int, algorithm: str,
                  restarts: int = DEFAULT_RESTARTS, seed: int = 0,
                  gamma: float = DEFAULT_GAMMA) -> Partition:
    """Represent the samples by ``multiplier * k`` k-means centroids, cluster those,
    and give every sample the cluster of its centroid."""
    kbar = multiplier * k
    if kbar > data.m:
        raise ValueError(f"k-means filter needs {kbar} centroids but only {data.m} samples")
    reps, centers, _ = kmeans(data.points, kbar, restarts, derive_seed(seed, 0))
    part = run_algorithm(algorithm, centers, k, restarts, derive_seed(seed, 1), gamma)
    return Partition(part.assignment[reps.assignment], k)


def run_baseline(data: Dataset, k: int, algorithm: str, restarts: int = DEFAULT_RESTARTS,
                 seed: int = 0, gamma: float = DEFAULT_GAMMA) -> Partition:
    if not 2 <= k <= data.m:
        raise ValueError(f"k={k} out of range for {data.m} samples")
    # same derived seed as the lambda = 0 entry of a filter pipeline
    return run_algorithm(algorithm, data.points, k, restarts, derive_seed(seed, 0), gamma)
