import math

import numpy as np
import pytest

from oscillab.fields import constant_identity, linear_solution, make_example
from oscillab.solver import (
    ConvergenceError, DiscreteProblem, EllipticityError, Grid, SolverError, assemble_and_solve, ball_norm_sq,
    continuity_recovery, harmonic_replacement, l2_error, pcg, replacement_cascade,
)


def variable_A(x):
    a = np.zeros(np.shape(x)[:-1] + (2, 2))
    a[..., 0, 0] = 2 + np.sin(x[..., 0])
    a[..., 1, 1] = 1 + 0.5 * np.cos(x[..., 1])
    a[..., 0, 1] = a[..., 1, 0] = 0.2 * np.sin(x[..., 0] + x[..., 1])
    return a


def exact(x):
    return np.sin(np.pi * x[:, 0]) * np.sin(np.pi * x[:, 1]) + x[:, 0]


def exact_grad(x):
    c, s = np.cos(np.pi * x), np.sin(np.pi * x)
    return np.stack([np.pi * c[:, 0] * s[:, 1] + 1, np.pi * s[:, 0] * c[:, 1]], -1)


def manufactured(x):
    return np.einsum("mij,mj->mi", variable_A(x), exact_grad(x))


def test_grid_rejects_non_power_of_two():
    with pytest.raises(ValueError):
        Grid(100)
    with pytest.raises(ValueError):
        Grid(1)


def test_grid_geometry():
    g = Grid(4, half_side=2.0)
    assert g.h == 1.0
    assert g.n_nodes == 25
    assert g.boundary_mask().sum() == 16
    assert np.allclose(g.node_coords()[0], [-2, -2])
    pts, W, _ = g.gauss_points(2)
    assert pts.shape == (16, 4, 2)
    assert W.sum() * 16 == pytest.approx(16.0)


def test_bilinear_solution_is_reproduced():
    # x1 x2 is harmonic and lies in the Q1 space, so the discrete solution is exact
    sol = assemble_and_solve(DiscreteProblem(np.eye(2), boundary=lambda x: x[:, 0] * x[:, 1]), Grid(32), tol=1e-13)
    xy = Grid(32).node_coords()
    assert np.max(np.abs(sol.values - xy[:, 0] * xy[:, 1])) < 1e-10


def test_zero_data_gives_zero():
    sol = assemble_and_solve(DiscreteProblem(variable_A, boundary=lambda x: np.zeros(len(x))), Grid(16))
    assert np.all(sol.values == 0)
    assert sol.iterations == 0


def test_manufactured_second_order():
    errs = []
    for m in (32, 64, 128):
        sol = assemble_and_solve(DiscreteProblem(variable_A, boundary=exact, f=manufactured), Grid(m), tol=1e-12)
        errs.append(l2_error(sol, exact))
    factors = [errs[0] / errs[1], errs[1] / errs[2]]
    assert all(3.5 <= f <= 4.5 for f in factors), factors


def test_galerkin_residual_and_energy_bound():
    sol = assemble_and_solve(DiscreteProblem(variable_A, boundary=exact), Grid(64), tol=1e-11)
    assert sol.solve_residual <= 1e-11
    assert sol.galerkin_residual <= 1e-10
    e = sol.energy
    assert e["lambdaMin"] * e["gradL2sq"] <= e["form"] * (1 + 1e-12)
    assert e["form"] <= e["LambdaMax"] * e["gradL2sq"] * (1 + 1e-12)


def test_convergence_error_reports_iterations():
    with pytest.raises(ConvergenceError) as info:
        assemble_and_solve(DiscreteProblem(variable_A, boundary=exact), Grid(32), max_iter=2)
    assert info.value.iterations == 2


def test_non_elliptic_coefficient_rejected():
    with pytest.raises(EllipticityError):
        assemble_and_solve(DiscreteProblem(np.diag([1.0, -1.0]), boundary=exact), Grid(8))


def test_non_symmetric_coefficient_rejected():
    with pytest.raises(SolverError):
        assemble_and_solve(DiscreteProblem(np.array([[1.0, 0.5], [0.0, 1.0]]), boundary=exact), Grid(8))


def test_pcg_small_spd():
    import scipy.sparse as sp

    K = sp.csr_matrix(np.array([[4.0, 1.0], [1.0, 3.0]]))
    x, its, res = pcg(K, np.array([1.0, 2.0]), tol=1e-14)
    assert np.allclose(K @ x, [1.0, 2.0])
    assert its <= 2


def test_gradient_at_interior_point():
    sol = assemble_and_solve(DiscreteProblem(np.eye(2), boundary=lambda x: 3 * x[:, 0] - x[:, 1]), Grid(8))
    assert np.allclose(sol.gradient_at(np.array([[0.1, -0.3]])), [[3.0, -1.0]])
    assert np.allclose(sol.gradient_at_origin(), [3.0, -1.0])
    assert sol.gradient(np.array([[0.2, 0.2]])).shape == (1, 1, 2)


def test_point_outside_grid_raises():
    sol = assemble_and_solve(DiscreteProblem(np.eye(2), boundary=exact), Grid(4))
    with pytest.raises(SolverError):
        sol.value_at(np.array([[3.0, 0.0]]))


def test_solution_rows():
    sol = assemble_and_solve(DiscreteProblem(np.eye(2), boundary=lambda x: x[:, 0]), Grid(4))
    rows = list(sol.to_rows())
    assert len(rows) == 25
    assert all(len(r) == 5 for r in rows)
    assert all(r[3] == pytest.approx(1.0) for r in rows)


def test_ball_norm_area():
    _, area = ball_norm_sq(lambda x: np.ones((len(x), 1)), Grid(128), 1.0)
    assert area == pytest.approx(math.pi, rel=1e-3)


def test_replacement_with_equal_coefficient_is_exact():
    Abar = np.array([[2.0, 0.3], [0.3, 1.0]])
    grid = Grid.for_ball(2.0, 64)
    u = assemble_and_solve(DiscreteProblem(Abar, boundary=exact), grid, tol=1e-12)
    rec = harmonic_replacement(u, Abar, Abar, 1.0, cells=64, tol=1e-12)
    assert rec.err_grad_l2 < 1e-9
    assert rec.coef_dev == 0.0


def test_replacement_rejects_large_radius():
    with pytest.raises(ValueError):
        harmonic_replacement(linear_solution([[1.0, 0.0]]), np.eye(2), np.eye(2), 2.0)


def test_replacement_rejects_foreign_grid():
    u = assemble_and_solve(DiscreteProblem(np.eye(2), boundary=exact), Grid.for_ball(2.0, 32))
    with pytest.raises(SolverError):
        harmonic_replacement(u, np.eye(2), np.eye(2), 1.0, cells=64)


def test_constant_cascade():
    P = np.array([[0.6, -0.8]])
    seq = replacement_cascade(linear_solution(P), constant_identity(), k_max=3, cells=32)
    assert np.all(seq.a() < 1e-8)
    assert np.allclose(seq.b(), 1.0, atol=1e-8)
    assert all(ok for *_, ok in seq.triangle_check())
    cont = continuity_recovery(seq)
    assert cont.summable
    assert np.all(cont.increments < 1e-8)
    assert len(list(seq.as_rows())) == 4


def test_cascade_level_matches_single_replacement():
    A, u = make_example("PropC1")
    seq = replacement_cascade(u, A, k_max=1, cells=64)
    lv = seq.levels[1]
    rec = harmonic_replacement(u, A, lv.Abar, lv.R, cells=64, norm_radius=lv.R)
    assert lv.a == pytest.approx(rec.err_grad_l2 / lv.R, rel=1e-9)


def test_propc1_cascade_tracks_radial_profile():
    A, u = make_example("PropC1")
    seq = replacement_cascade(u, A, k_max=3, cells=128)
    from oscillab.fields import c1_ansatz

    v = c1_ansatz(2).v(np.array([lv.R for lv in seq.levels]))
    ratio = seq.b() / v
    assert np.all((ratio > 0.5) & (ratio < 2.0)), ratio
    assert all(ok for *_, ok in seq.triangle_check())
    assert np.all(seq.a() >= 0)


def test_recursion_witness_zero_modulus():
    seq = replacement_cascade(linear_solution([[1.0, 2.0]]), constant_identity(), k_max=2, cells=16)
    w = seq.recursion_witness(lambda t: 0.0)
    assert w["C"] == 0.0


def test_discrete_input_resolution_policy():
    u = assemble_and_solve(DiscreteProblem(np.eye(2), boundary=exact), Grid.for_ball(2.0, 64))
    with pytest.raises(SolverError):
        replacement_cascade(u, constant_identity(), k_max=3, cells=32)


def test_discrete_input_cascade_runs():
    u = assemble_and_solve(DiscreteProblem(np.eye(2), boundary=lambda x: x[:, 0]), Grid.for_ball(2.0, 64))
    seq = replacement_cascade(u, constant_identity(), k_max=1, cells=32)
    assert np.all(seq.a() < 1e-8)
    assert np.allclose(seq.b(), 1.0)


def test_continuity_recovery_for_dini_field():
    A, u = make_example("Synthetic", modulus="pow:0.5")
    cont = continuity_recovery(replacement_cascade(u, A, k_max=4, cells=64))
    assert cont.summable, cont.ratios
