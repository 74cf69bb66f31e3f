"""Partition scores: the kernel within/between criterion and the adjusted Rand index."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .clustering import KernelSpec, Partition, kernel_distance_matrix

WORST = math.inf


@dataclass(frozen=True)
class CriterionValue:
    """``value = (1 / d_b) * sum_i d_w[i] / n_p[i]``; lower is better.

    Singleton clusters contribute 0 to the sum. ``value`` is ``inf`` when no
    between-cluster distance is available (``d_b == 0``).
    """

    value: float
    d_w: np.ndarray
    n_p: np.ndarray
    d_b: float


def criterion_c(partition: Partition, points: np.ndarray, kernel: KernelSpec = KernelSpec(),
                distances: Optional[np.ndarray] = None) -> CriterionValue:
    """Score a partition of ``points`` by kernel distances within and between clusters.

    ``distances`` may carry a precomputed ``kernel_distance_matrix(points, kernel)``
    when many partitions of the same samples are scored.
    """
    if partition.k < 2:
        raise ValueError("the criterion needs at least two clusters")
    if distances is None:
        distances = kernel_distance_matrix(np.asarray(points, dtype=float), kernel)
    if distances.shape[0] != partition.m:
        raise ValueError("partition and data sizes differ")
    H = np.eye(partition.k)[partition.assignment]
    block = H.T @ distances @ H
    # each unordered pair is counted twice in the symmetric block sums
    d_w = 0.5 * np.diag(block)
    sizes = partition.sizes()
    n_p = sizes * (sizes - 1) // 2
    d_b = 0.5 * (block.sum() - np.trace(block))
    ratio = np.divide(d_w, n_p, out=np.zeros_like(d_w), where=n_p > 0)
    value = float(ratio.sum() / d_b) if d_b > 0 else WORST
    return CriterionValue(value, d_w, n_p, float(d_b))


def _labels(p) -> np.ndarray:
    return np.asarray(p.assignment if isinstance(p, Partition) else p)


def _pairs(v) -> float:
    v = np.asarray(v, dtype=float)
    return float((v * (v - 1.0) / 2.0).sum())


def adjusted_rand_index(p, q) -> float:
    """Hubert-Arabie adjusted Rand index of two labelings of the same samples.

    Accepts ``Partition`` objects or plain label arrays.
    """
    a = _labels(p)
    b = _labels(q)
    if a.shape != b.shape:
        raise ValueError(f"labelings have different lengths: {a.size} vs {b.size}")
    _, ai = np.unique(a, return_inverse=True)
    _, bi = np.unique(b, return_inverse=True)
    table = np.zeros((ai.max() + 1, bi.max() + 1))
    np.add.at(table, (ai.ravel(), bi.ravel()), 1)
    index = _pairs(table)
    rows = _pairs(table.sum(axis=1))
    cols = _pairs(table.sum(axis=0))
    total = _pairs([a.size])
    expected = rows * cols / total if total > 0 else 0.0
    max_index = 0.5 * (rows + cols)
    if max_index == expected:
        # both labelings are all-one-cluster or both all-singletons
        return 1.0
    return (index - expected) / (max_index - expected)
