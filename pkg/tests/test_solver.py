import math

import numpy as np
import pytest

from l0filter.data import SyntheticSpec, generate_synthetic, scale_dataset
from l0filter.model import Problem, compute_weights, eval_l0_objective, eval_smooth_objective, grad_ridge
from l0filter.solver import (SolverConfig, SolverError, build_lambda_grid, diameter, find_lambda_max,
                             merge_centroids, solve_ridge, solve_smooth_l0, truncated_newton_minimize,
                             write_trace_csv, alpha_time_profile)

TWO = np.array([[0.0, 0.0], [1.0, 0.0]])


def dense_ridge(x, weights, lam):
    return np.linalg.solve(np.eye(len(x)) + lam * weights.laplacian(), x)


def ridge_oracles(x, weights, lam):
    L = weights.laplacian()
    A = np.eye(len(x)) + lam * L

    def value_grad(z):
        r = A @ z - x
        return float(np.sum(z * (A @ z)) - 2 * np.sum(z * x) + np.sum(x * x)), 2 * r, None

    return value_grad, lambda z, aux, d: 2 * (A @ d)


def test_schedule():
    cfg = SolverConfig()
    alphas = cfg.alphas()
    assert alphas[0] == 1.0 and alphas[-1] == 1e3
    assert all(b > a for a, b in zip(alphas, alphas[1:]))
    for t in range(1, len(alphas) - 1):
        assert alphas[t] == pytest.approx((1 + math.exp(-0.07 * t)) * alphas[t - 1], rel=1e-15)
    assert cfg.tolerance(1.0) == 1e-2 and cfg.tolerance(1e3) == 1e-5
    with pytest.raises(ValueError):
        SolverConfig(alpha_init=2e3)
    with pytest.raises(ValueError):
        SolverConfig(nonmonotone_memory=0)


def test_tn_matches_direct_solve_on_quadratic():
    rng = np.random.default_rng(0)
    x = rng.standard_normal((12, 2))
    w = compute_weights(x)
    vg, hv = ridge_oracles(x, w, 3.0)
    res = truncated_newton_minimize(vg, hv, x.copy(), 1e-9)
    assert not res.truncated
    np.testing.assert_allclose(res.z, dense_ridge(x, w, 3.0), atol=1e-5)


def test_tn_immediate_exit():
    vg, hv = ridge_oracles(TWO, compute_weights(TWO), 0.0)
    res = truncated_newton_minimize(vg, hv, TWO, 1e-5)
    assert res.iterations == 0 and np.array_equal(res.z, TWO)


def test_tn_nonfinite_start():
    with pytest.raises(SolverError):
        truncated_newton_minimize(lambda z: (np.nan, z, None), lambda z, a, d: d, TWO, 1e-5)


def test_tn_negative_curvature_direction():
    # f = -sum z^2 + sum z^4 has a saddle at the origin direction; start near it
    def vg(z):
        return float(np.sum(z ** 4 - z ** 2)), 4 * z ** 3 - 2 * z, None

    res = truncated_newton_minimize(vg, lambda z, a, d: (12 * z ** 2 - 2) * d, np.full((2, 2), 0.1), 1e-8)
    np.testing.assert_allclose(np.abs(res.z), 1 / math.sqrt(2), atol=1e-6)


def test_lambda_zero_returns_data():
    rng = np.random.default_rng(1)
    x = rng.standard_normal((10, 3))
    z, trace = solve_smooth_l0(x, compute_weights(x), 0.0)
    assert np.max(np.abs(z - x)) <= 1e-6
    assert trace.stages[-1].alpha == 1e3


def test_identical_pair_stays():
    x = np.array([[0.3, -0.2], [0.3, -0.2]])
    z, _ = solve_smooth_l0(x, compute_weights(x), 5.0)
    np.testing.assert_allclose(z, x, atol=1e-12)


def test_two_points_merge_at_midpoint():
    w = compute_weights(TWO)
    z, _ = solve_smooth_l0(TWO, w, 10.0)
    # 1-D oracle: z1 = (a, 0), z2 = (1 - a, 0); grid search a at alpha = 1000
    p = Problem(TWO, w, 10.0).smooth(1e3)
    grid = np.linspace(0, 0.5, 50001)
    vals = [eval_smooth_objective(p, np.array([[a, 0], [1 - a, 0]])) for a in grid]
    a_star = grid[int(np.argmin(vals))]
    assert a_star == pytest.approx(0.5, abs=1e-4)
    np.testing.assert_allclose(z, [[0.5, 0], [0.5, 0]], atol=1e-3)
    assert merge_centroids(z, TWO).n_groups == 1


def test_trace_contract():
    d = scale_dataset(generate_synthetic(SyntheticSpec("i", 2)))
    w = compute_weights(d)
    z, trace = solve_smooth_l0(d, w, 0.003)
    assert trace.converged
    alphas = [s.alpha for s in trace.stages]
    assert all(b > a for a, b in zip(alphas, alphas[1:])) and alphas[-1] == 1e3
    for s in trace.stages:
        assert s.grad_norm <= s.eps
    for a, b in zip(trace.stages, trace.stages[1:]):
        assert b.objective >= a.objective - 10 * b.eps
        # warm start never worsened beyond tolerance
        assert b.start_objective >= b.objective - 10 * b.eps
    phi = eval_l0_objective(Problem(d.points, w, 0.003), z)
    assert trace.stages[-1].objective <= phi
    z2, trace2 = solve_smooth_l0(d, w, 0.003)
    assert np.array_equal(z, z2)
    assert [s.objective for s in trace.stages] == [s.objective for s in trace2.stages]


def test_ridge_solutions():
    rng = np.random.default_rng(3)
    for m in (2, 10, 30):
        x = rng.standard_normal((m, 2))
        w = compute_weights(x)
        for lam in (0.0, 0.5, 50.0):
            z = solve_ridge(x, w, lam)
            np.testing.assert_allclose(z, dense_ridge(x, w, lam), atol=1e-5, rtol=0)
            assert np.max(np.abs(grad_ridge(Problem(x, w, lam), z))) <= 1e-5
    x = rng.standard_normal((8, 2))
    assert np.array_equal(solve_ridge(x, compute_weights(x), 0.0), x)
    z = solve_ridge(x, compute_weights(x), 1e6)
    assert np.max(np.abs(z - x.mean(axis=0))) <= 1e-3


def test_merge_examples():
    x = np.array([[0.0, 0.0], [10.0, 0.0], [0.0, 10.0]])
    tau = 1e-3 * diameter(x)
    assert merge_centroids(np.zeros((3, 2)), x).n_groups == 1
    assert merge_centroids(x, x).n_groups == 3
    chain = np.array([[0.0, 0.0], [0.9 * tau, 0.0], [1.8 * tau, 0.0]])
    g = merge_centroids(chain, x)
    assert g.n_groups == 1 and g.labels.tolist() == [0, 0, 0]
    np.testing.assert_allclose(g.representatives, [[0.9 * tau, 0.0]])
    with pytest.raises(ValueError):
        merge_centroids(x, x, tau_rel=0.0)


def test_lambda_grid():
    grid = build_lambda_grid(2.0)
    assert len(grid) == 150 and grid[0] == 0.0 and grid[-1] == 2.0
    assert np.all(np.diff(grid) > 0)
    ratios = grid[2:] / grid[1:-1]
    np.testing.assert_allclose(ratios, ratios[0], rtol=1e-12)
    assert grid[1] == pytest.approx(2e-4)
    with pytest.raises(ValueError):
        build_lambda_grid(0.0)


def test_find_lambda_max_collapses():
    d = scale_dataset(generate_synthetic(SyntheticSpec("i", 4)))
    w = compute_weights(d)
    cfg = SolverConfig()
    lmax = find_lambda_max(d, w, cfg)
    z, _ = solve_smooth_l0(d, w, lmax, cfg)
    assert merge_centroids(z, d).n_groups == 1
    z0, _ = solve_smooth_l0(d, w, lmax * 1e-4, cfg)
    assert merge_centroids(z0, d).n_groups > 1


def test_find_lambda_max_degenerate_weights():
    from l0filter.model import PairWeights
    x = np.array([[0.0], [1.0]])
    with pytest.raises(SolverError):
        find_lambda_max(x, PairWeights(np.zeros(1), 2), SolverConfig(), limit=16.0)


def test_trace_export(tmp_path):
    x = np.random.default_rng(5).standard_normal((6, 2))
    w = compute_weights(x)
    traces = [solve_smooth_l0(x, w, lam)[1] for lam in (0.1, 1.0)]
    write_trace_csv(traces, tmp_path / "t.csv")
    lines = (tmp_path / "t.csv").read_text().splitlines()
    assert lines[0] == "lambda,t,alpha,epsilon,iterations,grad_norm,objective,seconds"
    assert len(lines) == 1 + sum(len(t.stages) for t in traces)
    prof = alpha_time_profile(traces)
    assert [a for a, _ in prof] == SolverConfig().alphas()


def test_tn_preconditioned_matches_direct_solve_on_stiff_quadratic():
    # badly scaled rows: diagonal scaling should not change the answer, only the work
    rng = np.random.default_rng(5)
    x = rng.standard_normal((15, 2))
    scale = 10.0 ** rng.uniform(0, 4, size=15)
    A = np.diag(scale) + 0.1 * np.ones((15, 15))

    def vg(z):
        return float(np.sum(z * (A @ z)) - 2 * np.sum(z * x)), 2 * (A @ z - x), None

    hv = lambda z, aux, d: 2 * (A @ d)
    minv = np.repeat((1.0 / (2 * np.diag(A)))[:, None], 2, axis=1)
    plain = truncated_newton_minimize(vg, hv, np.zeros_like(x), 1e-8)
    pre = truncated_newton_minimize(vg, hv, np.zeros_like(x), 1e-8, precond=lambda z, aux: minv)
    direct = np.linalg.solve(A, x)
    np.testing.assert_allclose(plain.z, direct, atol=1e-8)
    np.testing.assert_allclose(pre.z, direct, atol=1e-8)
    assert pre.hessvecs <= plain.hessvecs


@pytest.mark.parametrize("precondition", [True, False])
def test_smooth_solve_reaches_tolerance_either_way(precondition):
    x = scale_dataset(generate_synthetic(SyntheticSpec("i", 3))).points
    w = compute_weights(x)
    z, trace = solve_smooth_l0(x, w, 0.003, SolverConfig(precondition=precondition))
    assert trace.converged and trace.stages[-1].grad_norm <= 1e-5
