"""Command-line harness.

Verbs: ``generate``, ``filter``, ``cluster``, ``bench`` and ``timing``.
Exit codes: 0 success, 2 invalid input or configuration, 3 numerical failure.

Bench configuration grammar (``--config``)::

    # comments start with '#'
    grid_size  = 150            # lambda values per filter path
    restarts   = 100
    seeds      = 0, 1, 2, 3, 4
    methods    = baseline, l0, ridge, km5, km10, km20
    algorithms = SL, EMGM, KKM
    gamma      = 0.1
    weights    = scaled         # coordinates used for the pair weights: scaled | raw
    jobs       = 1

    [dataset]                   # repeat once per dataset
    name = case_i
    case = i                    # synthetic case, regenerated per seed
    k    = 2

    [dataset]
    name      = iris
    path      = data/uci/iris.data   # relative to the config file
    label_col = -1
    drop_cols = 0                    # optional, comma separated
    k         = 3

Keys before the first section are global. Unknown keys are errors.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .clustering import ALGORITHMS, DEFAULT_GAMMA, DEFAULT_RESTARTS
from .data import SYNTHETIC_CASES, DataError, Dataset, SyntheticSpec, generate_synthetic, load_csv, write_csv
from .evaluation import adjusted_rand_index
from .pipeline import (DEFAULT_GRID_SIZE, WEIGHT_MODES, cluster_filter_path, compute_filter_path,
                       default_grid, prepare_dataset, run_baseline, run_km_filter,
                       write_partition_csv)
from .solver import (SolverConfig, SolverError, alpha_time_profile, build_lambda_grid,
                     diameter, find_lambda_max, merge_centroids, write_trace_csv)

logger = logging.getLogger("l0filter")

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC = 0, 2, 3
METHODS = ("baseline", "l0", "ridge", "km5", "km10", "km20")
DEFAULT_WEIGHTS = "scaled"


class ConfigError(ValueError):
    pass


def _fmt(v: float) -> str:
    return "NA" if v is None or not np.isfinite(v) else format(float(v), ".17g")


# ---------------------------------------------------------------- config


@dataclass
class DatasetSpec:
    name: str
    k: int
    case: Optional[str] = None
    path: Optional[Path] = None
    label_col: Optional[int] = None
    drop_cols: tuple = ()

    def load(self, seed: int) -> Dataset:
        if self.case is not None:
            return generate_synthetic(SyntheticSpec(self.case, seed))
        return load_csv(self.path, self.label_col, self.drop_cols, self.name)


@dataclass
class BenchConfig:
    datasets: list[DatasetSpec] = field(default_factory=list)
    methods: tuple = METHODS
    algorithms: tuple = ALGORITHMS
    grid_size: int = DEFAULT_GRID_SIZE
    restarts: int = DEFAULT_RESTARTS
    seeds: tuple = (0,)
    gamma: float = DEFAULT_GAMMA
    weights: str = DEFAULT_WEIGHTS
    jobs: int = 1

    def validate(self) -> None:
        if not self.datasets:
            raise ConfigError("no [dataset] sections")
        if not self.methods:
            raise ConfigError("empty methods list")
        if not self.algorithms:
            raise ConfigError("empty algorithms list")
        bad = [m for m in self.methods if m not in METHODS]
        if bad:
            raise ConfigError(f"unknown methods {bad}; known: {', '.join(METHODS)}")
        bad = [a for a in self.algorithms if a not in ALGORITHMS]
        if bad:
            raise ConfigError(f"unknown algorithms {bad}; known: {', '.join(ALGORITHMS)}")
        if self.weights not in WEIGHT_MODES:
            raise ConfigError(f"weights must be one of {WEIGHT_MODES}")
        if self.grid_size < 1 or self.restarts < 1 or self.jobs < 1 or not self.seeds:
            raise ConfigError("grid_size, restarts, jobs must be >= 1 and seeds non-empty")
        names = [d.name for d in self.datasets]
        if len(set(names)) != len(names):
            raise ConfigError("dataset names must be unique")
        for d in self.datasets:
            if (d.case is None) == (d.path is None):
                raise ConfigError(f"dataset {d.name!r} needs exactly one of case/path")
            if d.case is not None and d.case not in SYNTHETIC_CASES:
                raise ConfigError(f"dataset {d.name!r}: unknown case {d.case!r}")
            if d.path is not None and not d.path.is_file():
                raise ConfigError(f"dataset {d.name!r}: no such file {d.path}")
            if d.k < 2:
                raise ConfigError(f"dataset {d.name!r}: k must be >= 2")


def _list(value: str) -> tuple:
    return tuple(v.strip() for v in value.split(",") if v.strip())


def parse_config(text: str, base: Path = Path(".")) -> BenchConfig:
    cfg = BenchConfig()
    sections: list[dict] = []
    current = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if line != "[dataset]":
                raise ConfigError(f"line {lineno}: unknown section {line}")
            current = {}
            sections.append(current)
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        target = cfg.__dict__ if current is None else current
        if current is not None:
            if key in current:
                raise ConfigError(f"line {lineno}: duplicate key {key!r}")
            current[key] = value
            continue
        try:
            if key in ("grid_size", "restarts", "jobs"):
                target[key] = int(value)
            elif key == "gamma":
                target[key] = float(value)
            elif key == "seeds":
                target[key] = tuple(int(v) for v in _list(value))
            elif key in ("methods", "algorithms"):
                target[key] = _list(value)
            elif key == "weights":
                target[key] = value
            else:
                raise ConfigError(f"line {lineno}: unknown key {key!r}")
        except ValueError as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"line {lineno}: bad value for {key}: {value!r}") from exc

    for i, sec in enumerate(sections):
        unknown = set(sec) - {"name", "case", "path", "label_col", "drop_cols", "k"}
        if unknown:
            raise ConfigError(f"dataset section {i + 1}: unknown keys {sorted(unknown)}")
        try:
            k = int(sec["k"])
            label = int(sec["label_col"]) if "label_col" in sec else None
            drop = tuple(int(v) for v in _list(sec.get("drop_cols", "")))
        except KeyError as exc:
            raise ConfigError(f"dataset section {i + 1}: missing {exc.args[0]!r}") from exc
        except ValueError as exc:
            raise ConfigError(f"dataset section {i + 1}: {exc}") from exc
        path = sec.get("path")
        if path is not None:
            path = Path(path)
            path = path if path.is_absolute() else base / path
        name = sec.get("name") or sec.get("case") or (path.stem if path else f"dataset{i}")
        cfg.datasets.append(DatasetSpec(name, k, sec.get("case"), path, label, drop))
    cfg.validate()
    return cfg


def load_config(path) -> BenchConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text, path.parent)


# ---------------------------------------------------------------- helpers


def method_label(method: str, algorithm: str) -> str:
    return algorithm if method == "baseline" else f"{method}+{algorithm}"


def _write_rows(path: Path, header: Sequence[str], rows) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _write_profile(path: Path, traces) -> None:
    _write_rows(path, ["alpha", "mean_seconds"],
                [[_fmt(a), _fmt(s)] for a, s in alpha_time_profile(traces)])


# ---------------------------------------------------------------- verbs


def cmd_generate(args) -> int:
    try:
        data = generate_synthetic(SyntheticSpec(args.case, args.seed))
        write_csv(data, args.out)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    print(f"m={data.m} n={data.n} k={data.n_classes}")
    return EXIT_OK


def _load_input(args) -> Dataset:
    return load_csv(args.input, args.label_col, tuple(args.drop_col or ()))


def _grid(args, scaled, weights, method, config) -> np.ndarray:
    if args.lam:
        return np.array(sorted(set(args.lam)), dtype=float)
    lmax = find_lambda_max(scaled, weights, config, method)
    logger.info("lambda_max = %.6g", lmax)
    return build_lambda_grid(lmax, args.grid_size)


def cmd_filter(args) -> int:
    try:
        data = _load_input(args)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
    except (DataError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    config = SolverConfig()
    scaled, weights = prepare_dataset(data, args.weights)
    try:
        grid = _grid(args, scaled, weights, args.method, config)
    except SolverError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    path = compute_filter_path(scaled, grid, args.method, weights, config, n_jobs=args.jobs)
    if all(sol.z is None for sol in path):
        print("error: the solver failed for every lambda", file=sys.stderr)
        return EXIT_NUMERIC
    diam = diameter(scaled.points)
    rows = []
    try:
        for t, sol in enumerate(path):
            name = f"centroids_{t:03d}.csv"
            if sol.z is not None:
                _write_rows(out / name, [f"z{j}" for j in range(scaled.n)],
                            [[_fmt(v) for v in row] for row in sol.z])
                groups = merge_centroids(sol.z, scaled.points, config.tau_rel, diam).n_groups
            else:
                name, groups = "", ""
            rows.append([t, _fmt(sol.lam), groups, _fmt(sol.seconds), name])
        _write_rows(out / "path.csv", ["t", "lambda", "num_merge_groups", "seconds", "file"], rows)
        traces = [s.trace for s in path if s.trace is not None]
        if traces:
            write_trace_csv(traces, out / "trace.csv")
            _write_profile(out / "alpha_profile.csv", traces)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    print(f"{len(path)} lambda values, results in {out}")
    return EXIT_OK


def cmd_cluster(args) -> int:
    try:
        data = _load_input(args)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
    except (DataError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    if not 2 <= args.k <= data.m:
        print(f"error: k={args.k} out of range for {data.m} samples", file=sys.stderr)
        return EXIT_INPUT
    config = SolverConfig()
    scaled, weights = prepare_dataset(data, args.weights)
    method = args.method
    try:
        if method == "baseline":
            part = run_baseline(scaled, args.k, args.algorithm, args.restarts, args.seed, args.gamma)
        elif method.startswith("km"):
            part = run_km_filter(scaled, args.k, int(method[2:]), args.algorithm, args.restarts,
                                 args.seed, args.gamma)
        else:
            grid = _grid(args, scaled, weights, method, config)
            path = compute_filter_path(scaled, grid, method, weights, config, n_jobs=args.jobs)
            res = cluster_filter_path(scaled, path, args.k, args.algorithm, args.restarts,
                                      args.seed, args.gamma, method, config)
            res.write_csv(out / "path.csv")
            if res.traces:
                write_trace_csv(res.traces, out / "trace.csv")
            part = res.partition
            print(f"selected lambda = {res.best_lambda:.6g}")
    except SolverError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    write_partition_csv(part, out / "partition.csv")
    if data.labels is not None:
        print(f"ARI = {adjusted_rand_index(part, data.labels):.4f}")
    return EXIT_OK


def cmd_timing(args) -> int:
    try:
        data = _load_input(args)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
    except (DataError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    config = SolverConfig()
    scaled, weights = prepare_dataset(data, args.weights)
    try:
        grid = _grid(args, scaled, weights, "l0", config)
    except SolverError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    path = compute_filter_path(scaled, grid, "l0", weights, config, n_jobs=args.jobs)
    traces = [s.trace for s in path if s.trace is not None]
    if not traces:
        print("error: the solver failed for every lambda", file=sys.stderr)
        return EXIT_NUMERIC
    _write_rows(out / "lambda_times.csv", ["lambda", "seconds", "stages"],
                [[_fmt(tr.lam), _fmt(tr.total_seconds), len(tr.stages)] for tr in traces])
    write_trace_csv(traces, out / "trace.csv")
    _write_profile(out / "alpha_profile.csv", traces)
    secs = [tr.total_seconds for tr in traces]
    print(f"{len(traces)} solves, mean {np.mean(secs):.3f} s, max {np.max(secs):.3f} s")
    return EXIT_OK


# ---------------------------------------------------------------- bench


@dataclass
class CellResult:
    dataset: str
    method: str
    algorithm: str
    seed: int
    ari: float
    seconds: float
    error: str = ""


def _bench_unit(cfg: BenchConfig, spec: DatasetSpec, seed: int):
    """All methods and algorithms for one dataset and seed; filter paths are shared."""
    cells, traces = [], []
    config = SolverConfig()
    try:
        data = spec.load(seed)
    except (DataError, OSError, ValueError) as exc:
        return [CellResult(spec.name, m, a, seed, np.nan, 0.0, str(exc))
                for m in cfg.methods for a in cfg.algorithms], traces
    scaled, weights = prepare_dataset(data, cfg.weights)

    def record(method, algorithm, fn):
        t0 = time.perf_counter()
        try:
            part, extra = fn()
            ari = adjusted_rand_index(part, data.labels)
            err = ""
        except (SolverError, ValueError, np.linalg.LinAlgError) as exc:
            ari, err, extra = np.nan, str(exc), 0.0
            logger.warning("%s / %s seed %d: %s", spec.name, method_label(method, algorithm), seed, exc)
        cells.append(CellResult(spec.name, method, algorithm, seed, ari,
                                time.perf_counter() - t0 + extra, err))

    for method in cfg.methods:
        if method in ("l0", "ridge"):
            t0 = time.perf_counter()
            try:
                grid = default_grid(scaled, method, weights, config, cfg.grid_size)
                path = compute_filter_path(scaled, grid, method, weights, config)
            except SolverError as exc:
                for a in cfg.algorithms:
                    cells.append(CellResult(spec.name, method, a, seed, np.nan, 0.0, str(exc)))
                continue
            shared = time.perf_counter() - t0
            traces.extend((spec.name, seed, s.trace) for s in path if s.trace is not None)
            for a in cfg.algorithms:
                record(method, a, lambda a=a, path=path: (
                    cluster_filter_path(scaled, path, spec.k, a, cfg.restarts, seed, cfg.gamma,
                                        method, config).partition, shared))
        elif method == "baseline":
            for a in cfg.algorithms:
                record(method, a, lambda a=a: (
                    run_baseline(scaled, spec.k, a, cfg.restarts, seed, cfg.gamma), 0.0))
        else:
            mult = int(method[2:])
            for a in cfg.algorithms:
                record(method, a, lambda a=a: (
                    run_km_filter(scaled, spec.k, mult, a, cfg.restarts, seed, cfg.gamma), 0.0))
    return cells, traces


def run_bench(cfg: BenchConfig, out: Path) -> list[CellResult]:
    out.mkdir(parents=True, exist_ok=True)
    units = [(spec, seed) for spec in cfg.datasets for seed in cfg.seeds]
    if cfg.jobs == 1:
        results = [_bench_unit(cfg, spec, seed) for spec, seed in units]
    else:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            results = list(pool.map(_bench_unit, [cfg] * len(units), *zip(*units)))
    cells = [c for r, _ in results for c in r]
    traces = [t for _, r in results for t in r]
    write_bench_outputs(cfg, cells, traces, out)
    return cells


def ari_table(cfg: BenchConfig, cells: Sequence[CellResult]) -> list[tuple[str, list[float]]]:
    """Rows in algorithm-major order (baseline first); each value is the mean ARI over seeds."""
    rows = []
    for a in cfg.algorithms:
        for m in cfg.methods:
            vals = []
            for d in cfg.datasets:
                v = [c.ari for c in cells if (c.dataset, c.method, c.algorithm) == (d.name, m, a)]
                vals.append(float(np.mean(v)) if v and np.all(np.isfinite(v)) else np.nan)
            rows.append((method_label(m, a), vals))
    return rows


def format_table(header: Sequence[str], rows: Sequence[tuple[str, list[float]]]) -> str:
    cells = [list(header)] + [[name] + ["NA" if not np.isfinite(v) else f"{v:.4f}" for v in vals]
                              for name, vals in rows]
    widths = [max(len(r[j]) for r in cells) for j in range(len(header))]
    lines = ["  ".join(c.ljust(w) if j == 0 else c.rjust(w) for j, (c, w) in enumerate(zip(r, widths)))
             for r in cells]
    return "\n".join(lines) + "\n"


def write_bench_outputs(cfg: BenchConfig, cells, traces, out: Path) -> None:
    names = [d.name for d in cfg.datasets]
    rows = ari_table(cfg, cells)
    _write_rows(out / "ari_table.csv", ["method"] + names,
                [[name] + [_fmt(v) for v in vals] for name, vals in rows])
    (out / "ari_table.txt").write_text(format_table(["method"] + names, rows))
    _write_rows(out / "cells.csv", ["dataset", "method", "algorithm", "seed", "ari", "seconds", "error"],
                [[c.dataset, c.method, c.algorithm, c.seed, _fmt(c.ari), _fmt(c.seconds), c.error]
                 for c in cells])
    with (out / "trace.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["dataset", "seed", "lambda", "t", "alpha", "epsilon", "iterations",
                    "grad_norm", "objective", "seconds"])
        for name, seed, tr in traces:
            for s in tr.stages:
                w.writerow([name, seed, _fmt(tr.lam), s.t, _fmt(s.alpha), _fmt(s.eps), s.iterations,
                            _fmt(s.grad_norm), _fmt(s.objective), _fmt(s.seconds)])
    for name in names:
        tr = [t for d, _, t in traces if d == name]
        if tr:
            _write_profile(out / f"alpha_profile_{name}.csv", tr)


def cmd_bench(args) -> int:
    try:
        cfg = load_config(args.config)
        if args.jobs is not None:
            cfg.jobs = args.jobs
            cfg.validate()
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    try:
        cells = run_bench(cfg, Path(args.out))
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    print((Path(args.out) / "ari_table.txt").read_text(), end="")
    if not any(np.isfinite(c.ari) for c in cells):
        print("error: every cell failed", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


# ---------------------------------------------------------------- parser


def _input_args(p) -> None:
    p.add_argument("input", help="CSV file of samples")
    p.add_argument("--label-col", type=int, default=None, help="column holding class labels")
    p.add_argument("--drop-col", type=int, action="append", help="column to ignore (repeatable)")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--weights", choices=WEIGHT_MODES, default=DEFAULT_WEIGHTS,
                   help="coordinates used for the pair weights")
    p.add_argument("--jobs", type=int, default=1)


def _grid_args(p) -> None:
    p.add_argument("--grid-size", type=int, default=DEFAULT_GRID_SIZE)
    p.add_argument("--lambda", dest="lam", type=float, action="append",
                   help="explicit lambda value (repeatable); skips the grid search")


def _positive(v: str) -> int:
    n = int(v)
    if n < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return n


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="l0filter", description=__doc__.split("\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("generate", help="write a synthetic dataset")
    p.add_argument("--case", required=True, choices=SYNTHETIC_CASES)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("filter", help="solve the filter problem along a lambda grid")
    _input_args(p)
    _grid_args(p)
    p.add_argument("--method", choices=("l0", "ridge"), default="l0")
    p.set_defaults(func=cmd_filter)

    p = sub.add_parser("cluster", help="filter, cluster and select lambda")
    _input_args(p)
    _grid_args(p)
    p.add_argument("--method", choices=METHODS, default="l0")
    p.add_argument("--algorithm", choices=ALGORITHMS, default="SL")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--restarts", type=_positive, default=DEFAULT_RESTARTS)
    p.add_argument("--gamma", type=float, default=DEFAULT_GAMMA)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("bench", help="run the methods x datasets ARI benchmark")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--jobs", type=_positive, default=None)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("timing", help="per-lambda and per-alpha solve times")
    _input_args(p)
    _grid_args(p)
    p.set_defaults(func=cmd_timing)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "grid_size", 1) < 1:
        print("error: --grid-size must be >= 1", file=sys.stderr)
        return EXIT_INPUT
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
