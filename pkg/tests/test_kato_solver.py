import numpy as np
import pytest
from numpy.testing import assert_allclose

from rotflow.field_grid import (Grid, SolverParams, VectorField, lp_norm,
                                relative_divergence)
from rotflow.fields import (gaussian_stream_field, gradient_bump,
                            random_solenoidal, taylor_green,
                            taylor_green_wavenumber)
from rotflow.kato_solver import (Trajectory, _simpson_weights, convective_term,
                                 duhamel_residual, kato_constants,
                                 nonlinear_term, picard_iterate, solve_mild)
from rotflow.ou_kernel import OUEvolution
from rotflow.propagator import MatrixFunSpec
from rotflow.vector_evolution import (NotSolenoidalError, evolve_vector,
                                      leray_project)

ROT2 = np.array([[0.0, -1.0], [1.0, 0.0]])


@pytest.fixture(scope="module")
def grid():
    return Grid(2, np.pi, 128)


def heat_evo(params=None):
    return OUEvolution(MatrixFunSpec.zero(2), solver=params)


# ---------------------------------------------------------------------------
# quadrature weights

@pytest.mark.parametrize("panels", [1, 2, 3, 4, 5, 8, 11, 64])
def test_simpson_weights_integrate_cubics(panels):
    w = _simpson_weights(panels)
    assert len(w) == panels + 1
    xs = np.arange(panels + 1, dtype=float)
    for k in range(4 if panels >= 2 else 2):
        exact = panels ** (k + 1) / (k + 1)
        assert w @ xs ** k == pytest.approx(exact, rel=1e-13)


def test_simpson_zero_panels():
    assert_allclose(_simpson_weights(0), [0.0])


# ---------------------------------------------------------------------------
# the convective term

def test_nonlinear_term_of_constant_field(grid):
    u = VectorField(grid, np.stack([np.full(grid.shape, 1.2),
                                    np.full(grid.shape, -0.7)]))
    out = nonlinear_term(u)
    assert np.max(np.abs(out.values)) < 1e-12


def test_taylor_green_convective_term_is_gradient(grid):
    u = taylor_green(grid, mode=1)
    conv = convective_term(u, dealias=True)
    projected = nonlinear_term(u, dealias=True)
    # (u . grad) u is a pure gradient: the projection kills it
    assert lp_norm(projected, 2) <= 1e-8 * lp_norm(conv, 2)


def test_single_mode_shear_self_advects_to_zero(grid):
    k = 2.0 * np.pi / grid.L
    u = VectorField(grid, np.stack([np.sin(k * grid.coords()[1]),
                                    np.zeros(grid.shape)]))
    out = nonlinear_term(u)
    assert np.max(np.abs(out.values)) < 1e-12


def test_nonlinear_term_rejects_gradient_field(grid):
    u = gradient_bump(grid, 0.4)
    with pytest.raises(NotSolenoidalError):
        nonlinear_term(u)


# ---------------------------------------------------------------------------
# Picard iteration

def test_first_iterate_is_linear_solution(grid):
    evo = heat_evo()
    u0 = gaussian_stream_field(grid, 0.35)
    times = np.linspace(0.0, 0.25, 9)
    prev = Trajectory.zero(grid, times, p=2.0, q=4.0)
    traj = picard_iterate(evo, prev, u0)
    for i, t in enumerate(times):
        expected = evolve_vector(evo, u0, 0.0, t)
        assert np.max(np.abs(traj.fields[i].values - expected.values)) < 1e-12


def test_zero_data_converges_immediately(grid):
    evo = heat_evo()
    u0 = VectorField(grid, np.zeros((2,) + grid.shape))
    traj, report = solve_mild(evo, u0, 0.5,
                              SolverParams(duhamel_steps=8), p=2.0, q=4.0)
    assert report.converged
    assert report.iterations == 1
    assert report.duhamel_residual == 0.0
    assert all(np.all(f.values == 0.0) for f in traj.fields)


def test_taylor_green_exact_decay(grid):
    evo = heat_evo()
    u0 = taylor_green(grid, mode=1)
    k = taylor_green_wavenumber(grid, 1)
    params = SolverParams(duhamel_steps=16, picard_tol=1e-10)
    traj, report = solve_mild(evo, u0, 1.0, params, p=2.0, q=4.0)
    assert report.converged
    worst = 0.0
    for t, f in zip(traj.times, traj.fields):
        expected = np.exp(-2.0 * k ** 2 * t) * u0.values
        worst = max(worst, np.max(np.abs(f.values - expected)))
    assert worst < 1e-6
    assert report.duhamel_residual < 1e-6


def test_trajectory_stays_solenoidal():
    # box margin: evolved width sqrt(sigma^2 + 2 T) about L/5.8
    g = Grid(2, 4.0, 128)
    evo = OUEvolution(MatrixFunSpec.constant(0.9 * ROT2))
    u0 = gaussian_stream_field(g, 0.42, amplitude=0.05)
    params = SolverParams(duhamel_steps=8, picard_max_iter=6, picard_tol=1e-9)
    traj, _ = solve_mild(evo, u0, 0.15, params, p=2.0, q=4.0)
    for f in traj.fields:
        assert relative_divergence(f) <= 1e-5


def test_small_data_contracts(grid):
    evo = OUEvolution(MatrixFunSpec.constant(ROT2))
    u0 = gaussian_stream_field(grid, 0.35, amplitude=0.05)
    params = SolverParams(duhamel_steps=12, picard_tol=1e-9,
                          picard_max_iter=20)
    traj, report = solve_mild(evo, u0, 0.3, params, p=2.0, q=4.0)
    assert report.converged
    gaps = [c.diff_q_norm + c.diff_grad_norm for c in report.constants]
    floor = 100 * np.finfo(float).eps * lp_norm(u0, 2.0)
    for a, b in zip(gaps, gaps[1:]):
        if a <= floor:
            break
        assert b <= 0.9 * a
    assert report.duhamel_residual <= 10.0 * params.picard_tol


def test_nonconvergence_flagged(grid):
    evo = heat_evo()
    u0 = taylor_green(grid, mode=1, amplitude=40.0)
    # force the quadratic term to dominate: dealias off, huge data, long T
    params = SolverParams(duhamel_steps=8, picard_max_iter=3,
                          picard_tol=1e-14, dealias=True)
    u0 = VectorField(grid, u0.values + gaussian_stream_field(
        grid, 0.5, amplitude=30.0).values)
    traj, report = solve_mild(evo, u0, 2.0, params, p=2.0, q=4.0)
    assert not report.converged
    assert report.iterations == 3
    assert len(traj.fields) == 9


def test_solve_rejects_nonsolenoidal_data(grid):
    evo = heat_evo()
    u0 = gradient_bump(grid, 0.4)
    with pytest.raises(NotSolenoidalError):
        solve_mild(evo, u0, 0.2, SolverParams(duhamel_steps=4))


# ---------------------------------------------------------------------------
# convergence bookkeeping

def test_constants_of_zero_pair(grid):
    times = np.linspace(0.0, 1.0, 5)
    z = Trajectory.zero(grid, times, p=2.0, q=4.0)
    c = kato_constants((z, z))
    assert (c.weighted_q_norm, c.weighted_grad_norm) == (0.0, 0.0)
    assert (c.diff_q_norm, c.diff_grad_norm) == (0.0, 0.0)
    assert c.radius == 0.0


def test_linear_iterate_bounded_by_initial_norm(grid):
    # p = q: no time weight; the heat evolution contracts every L^p norm
    evo = heat_evo()
    u0 = gaussian_stream_field(grid, 0.35)
    times = np.linspace(0.0, 0.3, 7)
    prev = Trajectory.zero(grid, times, p=2.0, q=2.0)
    traj = picard_iterate(evo, prev, u0)
    c = kato_constants((traj, traj))
    assert c.weighted_q_norm <= lp_norm(u0, 2.0) * (1.0 + 1e-10)


def test_holder_bound_on_convective_term(grid):
    # ||(u.grad)u||_r <= ||u||_q ||grad u||_p with 1/r = 1/p + 1/q
    p, q = 2.0, 4.0
    r = 1.0 / (1.0 / p + 1.0 / q)
    u = gaussian_stream_field(grid, 0.4, amplitude=0.8)
    conv = convective_term(u, dealias=False)
    lhs = lp_norm(conv, r)
    from rotflow.kato_solver import _gradient_stack
    rhs = lp_norm(u, q) * lp_norm(_gradient_stack(u), p)
    assert lhs <= rhs * (1.0 + 1e-10)


def test_gamma_exponent(grid):
    times = np.linspace(0.0, 1.0, 3)
    traj = Trajectory.zero(grid, times, p=2.0, q=4.0)
    assert traj.gamma == pytest.approx(0.25)
    traj2 = Trajectory.zero(grid, times, p=3.0, q=3.0)
    assert traj2.gamma == 0.0


def test_report_csv_rows(grid):
    evo = heat_evo()
    u0 = gaussian_stream_field(grid, 0.35, amplitude=0.02)
    params = SolverParams(duhamel_steps=6, picard_tol=1e-9)
    _, report = solve_mild(evo, u0, 0.2, params, p=2.0, q=4.0)
    rows = report.csv_rows()
    assert rows[0] == ["iterate", "weighted_q_norm", "weighted_grad_norm",
                       "diff_q_norm", "diff_grad_norm", "radius"]
    assert len(rows) == len(report.constants) + 1
    # radius column equals the max of the two weighted norms
    for row, c in zip(rows[1:], report.constants):
        assert float(row[5]) == max(c.weighted_q_norm, c.weighted_grad_norm)


def test_duhamel_residual_detects_wrong_trajectory(grid):
    evo = heat_evo()
    u0 = taylor_green(grid, mode=1)
    times = np.linspace(0.0, 0.5, 9)
    wrong = Trajectory(times=times, fields=[u0.copy() for _ in times],
                       p=2.0, q=4.0)
    res = duhamel_residual(evo, wrong, u0)
    assert res > 1e-2
