import numpy as np
import pytest

from boxflow.boxsimplex import (
    BoxSimplexInstance,
    NumericOverflowError,
    ParameterError,
    SolverConfig,
    iteration_budget,
    solve,
    solve_decide,
)
from boxflow.sparsemat import ColSparseMatrix

from test_sparsemat import random_col_sparse


def make_instance(A_dense, b, c):
    A = ColSparseMatrix.from_dense(np.asarray(A_dense, dtype=float))
    return BoxSimplexInstance(A, np.asarray(b, float), np.asarray(c, float))


def random_instance(rng, n=None, d=None, s=3):
    n = n or int(rng.integers(2, 101))
    d = d or int(rng.integers(2, 101))
    A = random_col_sparse(n, d, s, rng)
    if A.one_to_one_norm() == 0.0:
        A = ColSparseMatrix.identity(max(n, d))
        n = d = max(n, d)
    b = rng.normal(size=d)
    c = rng.normal(size=n)
    return BoxSimplexInstance(A, b, c)


def test_zero_matrix_game():
    inst = make_instance([[0.0]], [0.0], [0.0])
    pt = solve(inst, 0.1)
    assert pt.gap == 0.0
    assert inst.L == 0.0


def test_scalar_game_gap():
    inst = make_instance([[1.0]], [0.0], [0.0])
    pt = solve(inst, 0.1)
    assert pt.gap <= 0.1
    # one-dimensional simplex forces y = 1; optimum is x = -1, value -1
    assert inst.eval_box_form(np.array([-1.0])) == -1.0


def test_closed_form_1x2_game():
    # A = [[1, -1]], b = 0, c = (-1): V = min_x |x| - x = 0 on x >= 0.
    inst = make_instance([[1.0, -1.0]], [0.0, 0.0], [-1.0])
    pt = solve(inst, 0.05)
    assert pt.gap <= 0.05
    value_lo = inst.eval_simplex_form(pt.y)
    value_up = inst.eval_box_form(pt.x)
    assert value_lo <= 0.0 + 1e-12
    assert value_up >= 0.0 - 1e-12


def test_eval_simplex_vertex():
    rng = np.random.default_rng(0)
    inst = random_instance(rng, n=6, d=4)
    dense = inst.A.to_dense()
    for j in range(4):
        y = np.zeros(4)
        y[j] = 1.0
        want = -(np.abs(dense[:, j] + inst.c).sum() + inst.b[j])
        assert np.isclose(inst.eval_simplex_form(y), want, atol=1e-12)


def test_eval_zero_instance():
    inst = make_instance(np.zeros((3, 2)), np.zeros(2), np.zeros(3))
    assert inst.eval_simplex_form(np.array([0.5, 0.5])) == 0.0
    assert inst.eval_box_form(np.zeros(3)) == 0.0


def test_eval_box_one_hot_identity():
    inst = make_instance([[1.0]], [0.0], [0.0])
    assert inst.eval_box_form(np.array([1.0])) == 1.0


def test_weak_duality_sweep():
    rng = np.random.default_rng(1)
    inst = random_instance(rng, n=8, d=6)
    for _ in range(1000):
        x = rng.uniform(-1, 1, size=8)
        y = rng.uniform(0, 1, size=6)
        y /= y.sum()
        assert inst.eval_box_form(x) >= inst.eval_simplex_form(y) - 1e-9
        assert inst.gap(x, y) >= -1e-9


def test_gap_zero_at_scalar_optimum():
    inst = make_instance([[1.0]], [0.0], [0.0])
    assert abs(inst.gap(np.array([-1.0]), np.array([1.0]))) <= 1e-12


def test_solver_certifies_random_instances():
    rng = np.random.default_rng(2)
    for _ in range(5):
        inst = random_instance(rng, n=20, d=40)
        eps = 0.1
        pt = solve(inst, eps)
        assert pt.gap <= eps
        assert np.abs(pt.x).max() <= 1.0
        assert pt.y.min() >= 0.0
        assert abs(pt.y.sum() - 1.0) <= 1e-12


def test_parameter_errors():
    inst = make_instance([[1.0]], [0.0], [0.0])
    with pytest.raises(ParameterError):
        solve(inst, 0.0)
    with pytest.raises(ParameterError):
        solve(inst, -1.0)
    with pytest.raises(ParameterError):
        solve(inst, 2.0)  # eps >= L


def test_iteration_budget_formula():
    # T = ceil(6 (8 log2 d + 1) L / eps)
    assert iteration_budget(16, 48.0, 0.1) == int(np.ceil(6 * (8 * 4 + 1) * 48 / 0.1))
    inst = make_instance([[1.0, -1.0]], [0.0, 0.0], [-1.0])
    cfg = SolverConfig(early_exit=False)
    pt = solve(inst, 0.5, cfg)
    assert pt.scheduled_iterations == iteration_budget(2, inst.L, 0.5)
    assert pt.iterations == pt.scheduled_iterations
    assert not pt.early_exit


def test_full_budget_meets_guarantee_small():
    rng = np.random.default_rng(3)
    cfg = SolverConfig(early_exit=False)
    for _ in range(3):
        inst = random_instance(rng, n=6, d=8)
        eps = 0.3
        pt = solve(inst, eps, cfg)
        assert pt.gap <= eps


def test_determinism():
    rng = np.random.default_rng(4)
    inst = random_instance(rng, n=15, d=12)
    pt1 = solve(inst, 0.1)
    pt2 = solve(inst, 0.1)
    assert np.array_equal(pt1.x, pt2.x)
    assert np.array_equal(pt1.y, pt2.y)
    assert pt1.gap == pt2.gap
    assert pt1.iterations == pt2.iterations


def test_iterate_feasibility_trace():
    rng = np.random.default_rng(5)
    inst = random_instance(rng, n=10, d=10)
    cfg = SolverConfig(collect_trace=True, check_every=5)
    pt = solve(inst, 0.05, cfg)
    assert len(pt.trace) >= 1
    for (_it, gap, entropy) in pt.trace:
        assert gap >= -1e-9
        assert entropy >= 0.0


def test_solve_decide_stops_early():
    rng = np.random.default_rng(6)
    inst = random_instance(rng, n=30, d=30)
    # An absurdly generous threshold is decided almost immediately.
    pt, up, lo = solve_decide(inst, 0.05, upper_at_most=inst.L * 0.9)
    assert up <= inst.L * 0.9
    assert pt.iterations <= pt.scheduled_iterations


def test_log_domain_survives_long_runs():
    # Strongly scaled instance drives the simplex iterates to extremes.
    inst = make_instance([[5.0, -5.0], [-5.0, 5.0]], [4.0, -4.0], [0.0, 0.0])
    pt = solve(inst, 0.02)
    assert np.isfinite(pt.y).all()
    assert pt.gap <= 0.02
