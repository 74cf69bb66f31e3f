"""Smoothed l0 centroid filtering as a preprocessing step for clustering."""

from .clustering import (ALGORITHMS, KernelSpec, Partition, em_gaussian_mixture, kernel_kmeans,
                         kmeans, run_algorithm, single_linkage)
from .data import (DataError, Dataset, ScalingTransform, SyntheticSpec, fit_scale,
                   generate_synthetic, load_csv, scale_dataset, write_csv)
from .evaluation import CriterionValue, adjusted_rand_index, criterion_c
from .model import (PairWeights, Problem, SmoothProblem, compute_weights, eval_l0_objective,
                    eval_ridge_objective, eval_smooth_objective, grad_ridge, grad_smooth,
                    hessvec_smooth)
from .pipeline import (PipelineEntry, PipelineResult, compute_filter_path, run_baseline,
                       prepare_dataset, run_km_filter, run_l0_filter_pipeline, run_ridge_filter_pipeline)
from .solver import (MergeGroups, SolverConfig, SolverError, SolveTrace, build_lambda_grid,
                     find_lambda_max, merge_centroids, solve_ridge, solve_smooth_l0)

__version__ = "0.1.0"

__all__ = [
    "ALGORITHMS",
    "KernelSpec",
    "Partition",
    "em_gaussian_mixture",
    "kernel_kmeans",
    "kmeans",
    "run_algorithm",
    "single_linkage",
    "DataError",
    "Dataset",
    "ScalingTransform",
    "SyntheticSpec",
    "fit_scale",
    "generate_synthetic",
    "load_csv",
    "scale_dataset",
    "write_csv",
    "CriterionValue",
    "adjusted_rand_index",
    "criterion_c",
    "PairWeights",
    "Problem",
    "SmoothProblem",
    "compute_weights",
    "eval_l0_objective",
    "eval_ridge_objective",
    "eval_smooth_objective",
    "grad_ridge",
    "grad_smooth",
    "hessvec_smooth",
    "PipelineEntry",
    "PipelineResult",
    "compute_filter_path",
    "run_baseline",
    "prepare_dataset",
    "run_km_filter",
    "run_l0_filter_pipeline",
    "run_ridge_filter_pipeline",
    "MergeGroups",
    "SolverConfig",
    "SolverError",
    "SolveTrace",
    "build_lambda_grid",
    "find_lambda_max",
    "merge_centroids",
    "solve_ridge",
    "solve_smooth_l0",
]
