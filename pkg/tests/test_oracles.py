# -*- coding: utf-8 -*-

# python std lib
import math
import os

# deqgan imports
from deqgan import oracles
from deqgan.artifacts import write_array_file
from deqgan.autodiff import Tape, jet_inputs
from deqgan.exceptions import (
    DeqganArgumentException,
    DeqganCacheException,
    DeqganSolverException,
)
from deqgan.oracles import (
    GroundTruthCache,
    IvpSpec,
    fd_poisson_solve,
    laplacian_matrix,
    load_truth,
    mesh_digest,
    numerical_jets,
    oracle_truth,
    rk45_solve,
    rk4_solve,
    traditional_baseline,
)
from deqgan.problems import Problem, analytic_solution, build_lhs

# 3rd party imports
import numpy as np
import pytest
import scipy.sparse.linalg as spla


def test_rk4_exp_baseline():
    baseline = traditional_baseline(Problem("exp"), 101)

    assert baseline.method == "rk4"
    assert baseline.points.shape == (101, 1)
    assert baseline.mse < 2e-12


def test_rk4_fourth_order_convergence():
    problem = Problem("exp")
    errors = []

    for n in [80, 160]:
        solution = rk4_solve(problem.ivp(), n)
        errors.append(np.abs(solution.y[:, 0] - np.exp(-solution.t)).max())

    assert 12.0 <= errors[0] / errors[1] <= 20.0


def test_rk4_harmonic_oscillator():
    solution = rk4_solve(Problem("sho").ivp(), 400)

    assert np.abs(solution.y[:, 0] - np.sin(solution.t)).max() < 1e-7
    assert np.abs(solution.y[:, 1] - np.cos(solution.t)).max() < 1e-7


@pytest.mark.parametrize("n_steps", [1, 3, 10])
def test_rk4_is_exact_on_polynomials(n_steps):
    cubic = rk4_solve(IvpSpec(lambda t, y: 3.0 * t * t, [0.0], (0.0, 2.0)), n_steps)
    still = rk4_solve(IvpSpec(lambda t, y: 0.0 * y, [1.5], (0.0, 2.0)), n_steps)

    assert np.abs(cubic.y[:, 0] - cubic.t ** 3).max() < 1e-12
    assert np.all(still.y == 1.5)


def test_rk4_queries_must_hit_endpoints():
    solution = rk4_solve(Problem("exp").ivp(), 10)

    assert solution([1.0, 3.0]).shape == (2, 1)

    with pytest.raises(DeqganArgumentException):
        solution([0.05])


def test_rk4_non_finite_state():
    spec = IvpSpec(lambda t, y: y * y, [1.0], (0.0, 5.0))

    with pytest.raises(DeqganSolverException):
        rk4_solve(spec, 50)


def test_ivp_interval_must_be_ordered():
    with pytest.raises(DeqganArgumentException):
        IvpSpec(lambda t, y: y, [1.0], (1.0, 1.0))


def test_rk45_harmonic_oscillator():
    t = np.linspace(0.0, 2.0 * math.pi, 400)
    solution = rk45_solve(Problem("sho").ivp())

    assert np.abs(solution(t)[:, 0] - np.sin(t)).max() < 1e-8


def test_rk45_sir_conserves_population():
    t = np.linspace(0.0, 10.0, 800)
    values = rk45_solve(Problem("sir").ivp())(t)

    assert np.abs(values.sum(axis=1) - 1.0).max() < 1e-9


def test_rk45_nlo_is_tolerance_consistent():
    t = np.linspace(0.0, 4.0 * math.pi, 400)
    coarse = rk45_solve(Problem("nlo").ivp(), rtol=1e-10, atol=1e-10)(t)
    fine = rk45_solve(Problem("nlo").ivp(), rtol=1e-12, atol=1e-12)(t)

    assert np.abs(coarse - fine).max() < 1e-8


def test_rk45_matches_scipy():
    from scipy.integrate import solve_ivp

    problem = Problem("nlo")
    t = np.linspace(0.0, 4.0 * math.pi, 50)
    ours = rk45_solve(problem.ivp())(t)
    reference = solve_ivp(problem.ivp_rhs(), (0.0, 4.0 * math.pi), [0.0, 0.5], method="DOP853",
                          t_eval=t, rtol=1e-12, atol=1e-12)

    assert np.abs(ours - reference.y.T).max() < 1e-8


def test_rk45_dense_output_at_step_endpoints():
    solution = rk45_solve(Problem("nas").ivp(), rtol=1e-8, atol=1e-8)

    assert solution.t[0] == 0.0
    assert solution.t[-1] == 2.0 * math.pi
    assert np.array_equal(solution(solution.t), solution.y)

    with pytest.raises(DeqganArgumentException):
        solution([7.0])


def test_rk45_step_underflow():
    spec = IvpSpec(lambda t, y: y * y, [1.0], (0.0, 2.0))

    with pytest.raises(DeqganSolverException):
        rk45_solve(spec, max_steps=100000)


def test_rk45_needs_positive_tolerances():
    with pytest.raises(DeqganArgumentException):
        rk45_solve(Problem("exp").ivp(), rtol=0.0)


@pytest.mark.parametrize("key", ["nlo", "sir"])
def test_oracle_solution_solves_equation(key):
    problem = Problem(key)
    solution = rk45_solve(problem.ivp(), rtol=1e-12, atol=1e-12)
    start, end = problem.domain[0]
    points = np.linspace(start + 0.5, end - 0.5, 60)[:, None]

    tape = Tape()
    coords, _ = jet_inputs(tape, points)
    jets = numerical_jets(solution, tape, points, problem.observed)
    lhs = build_lhs(problem, coords, jets)

    assert np.abs(lhs.value).max() < 1e-6


def test_fd_zero_source():
    grid = fd_poisson_solve(lambda x, y: 0.0, n=9)

    assert grid.solution.shape == (9, 9)
    assert not grid.solution.any()


def test_fd_poisson_accuracy():
    grid = fd_poisson_solve(n=32)
    truth = analytic_solution(Problem("pos"), grid.points())

    assert grid.residual < 1e-9
    assert not grid.solution[0].any()
    assert not grid.solution[:, -1].any()
    assert np.mean((grid.values() - truth) ** 2) <= 3e-8


def test_fd_second_order_convergence():
    errors = []

    for n in [17, 33]:
        grid = fd_poisson_solve(n=n)
        truth = analytic_solution(Problem("pos"), grid.points())
        errors.append(np.abs(grid.values() - truth).max())

    assert 3.2 <= errors[0] / errors[1] <= 4.8


def test_fd_matrix_is_symmetric():
    matrix = laplacian_matrix(12)

    assert matrix.shape == (100, 100)
    assert abs(matrix - matrix.T).max() == 0.0


def test_fd_cg_energy_norm_decreases():
    grid = fd_poisson_solve(n=64)
    exact = spla.spsolve(grid.matrix.tocsc(), grid.rhs)
    energies = []

    for iteration, iterate, residual in grid.history:
        assert iteration % 50 == 0
        assert residual >= 0.0
        error = iterate - exact
        energies.append(float(error @ (grid.matrix @ error)))

    assert len(energies) >= 2

    significant = [e for e in energies if e > 1e-16 * energies[0]]

    assert all(b < a for a, b in zip(significant, significant[1:]))


def test_fd_grid_needs_interior():
    with pytest.raises(DeqganArgumentException):
        fd_poisson_solve(n=2)


def test_pos_baseline_uses_finite_differences():
    baseline = traditional_baseline(Problem("pos"), 32)

    assert baseline.method == "fd"
    assert baseline.points.shape == (32 * 32, 2)
    assert baseline.mse <= 3e-8


def test_mesh_digest_depends_on_points():
    a = np.linspace(0.0, 1.0, 5)[:, None]

    assert mesh_digest(a) == mesh_digest(a.copy())
    assert mesh_digest(a) != mesh_digest(a * 2.0)


def test_cache_round_trip(tmp_path):
    cache = GroundTruthCache(tmp_path)
    points = np.linspace(0.0, 1.0, 7)[:, None]
    values = np.arange(7.0)[:, None] / 3.0

    assert cache.load("nlo", 1e-10, points) is None

    cache.store("nlo", 1e-10, points, values)
    path = cache.path("nlo", 1e-10, points)

    assert os.path.basename(path).startswith("nlo-1e-10-")
    assert np.array_equal(cache.load("nlo", 1e-10, points), values)
    assert cache.load("nlo", 1e-12, points) is None


def test_cache_rejects_foreign_file(tmp_path):
    cache = GroundTruthCache(tmp_path)
    points = np.linspace(0.0, 1.0, 4)[:, None]
    write_array_file(cache.path("nlo", 1e-10, points), {"problem": "sir"}, np.zeros((4, 1)))

    with pytest.raises(DeqganCacheException):
        cache.load("nlo", 1e-10, points)


def test_get_or_compute_integrates_once(tmp_path, monkeypatch):
    cache = GroundTruthCache(tmp_path)
    problem = Problem("sir")
    points = problem.mesh(11).points

    first = cache.get_or_compute(problem, points)

    def fail(*args, **kwargs):
        raise AssertionError("ground truth recomputed")

    monkeypatch.setattr(oracles, "oracle_truth", fail)
    second = cache.get_or_compute(problem, points)

    assert first.shape == (11, 3)
    assert np.array_equal(first, second)


def test_load_truth_never_integrates(tmp_path):
    problem = Problem("nlo")
    points = problem.mesh(5).points

    with pytest.raises(DeqganCacheException) as excinfo:
        load_truth(problem, points, GroundTruthCache(tmp_path))

    assert "deqgan oracle --preset=nlo" in str(excinfo.value)

    with pytest.raises(DeqganCacheException):
        load_truth(problem, points)


def test_load_truth_prefers_closed_form():
    problem = Problem("exp")
    points = problem.mesh(5).points

    assert np.array_equal(load_truth(problem, points), analytic_solution(problem, points))


def test_oracle_truth_observes_position_only():
    problem = Problem("nlo")
    points = problem.mesh(9).points

    assert oracle_truth(problem, points).shape == (9, 1)
