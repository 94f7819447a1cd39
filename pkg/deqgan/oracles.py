# -*- coding: utf-8 -*-
"""
Traditional solvers: fixed step RK4, adaptive Dormand-Prince RK45 with dense
output, and a five point finite difference Poisson solver. RK45 produces the
ground truth of the problems without a closed form solution.
"""

# python std lib
import hashlib
import logging
import os

# deqgan imports
from deqgan.artifacts import read_array_file, write_array_file
from deqgan.autodiff import Jet
from deqgan.constants import (
    CG_CHECK_EVERY,
    CG_MAX_ITERATIONS,
    CG_TOLERANCE,
    ORACLE_TOLERANCE,
)
from deqgan.exceptions import (
    DeqganArgumentException,
    DeqganCacheException,
    DeqganSolverException,
)
from deqgan.problems import analytic_solution, pos_source

# 3rd party imports
import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla


log = logging.getLogger(__name__)


class IvpSpec():
    """
    Explicit first order system x' = f(t, x) on (t_start, t_end).

    :type rhs: callable
    :type initial: sequence of float
    :type interval: tuple
    :type points: numpy.ndarray or None, output times
    """

    def __init__(self, rhs, initial, interval, points=None):
        start, end = (float(v) for v in interval)

        if not end > start:
            raise DeqganArgumentException(f"Integration interval ({start}, {end}) is empty")

        self.rhs = rhs
        self.initial = np.atleast_1d(np.asarray(initial, dtype=np.float64))
        self.interval = (start, end)
        self.points = None if points is None else np.asarray(points, dtype=np.float64)

    @property
    def dim(self):
        return self.initial.shape[0]

    def f(self, t, y):
        return np.atleast_1d(np.asarray(self.rhs(t, y), dtype=np.float64))


class StepSolution():
    """
    States at the step endpoints of a fixed step integration. Queries must
    land on endpoints.
    """

    def __init__(self, t, y):
        self.t = t
        self.y = y

    def __call__(self, points):
        points = np.atleast_1d(np.asarray(points, dtype=np.float64))
        idx = np.clip(np.searchsorted(self.t, points), 0, len(self.t) - 1)
        left = np.clip(idx - 1, 0, len(self.t) - 1)
        idx = np.where(np.abs(self.t[left] - points) < np.abs(self.t[idx] - points), left, idx)

        scale = max(1.0, float(np.max(np.abs(self.t))))

        if np.any(np.abs(self.t[idx] - points) > 1e-9 * scale):
            raise DeqganArgumentException("RK4 output points must coincide with step endpoints")

        return self.y[idx]


def rk4_solve(spec, n_steps):
    """
    Classic fourth order Runge-Kutta with ``n_steps`` equal steps.

    :type spec: IvpSpec
    :type n_steps: int

    :rtype: StepSolution
    """
    if n_steps < 1:
        raise DeqganArgumentException(f"RK4 needs at least one step, got {n_steps}")

    start, end = spec.interval
    h = (end - start) / n_steps
    t = start + h * np.arange(n_steps + 1)
    t[-1] = end
    y = np.empty((n_steps + 1, spec.dim))
    y[0] = spec.initial

    for k in range(n_steps):
        tk, yk = t[k], y[k]
        k1 = spec.f(tk, yk)
        k2 = spec.f(tk + 0.5 * h, yk + 0.5 * h * k1)
        k3 = spec.f(tk + 0.5 * h, yk + 0.5 * h * k2)
        k4 = spec.f(tk + h, yk + h * k3)
        y[k + 1] = yk + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)

        if not np.all(np.isfinite(y[k + 1])):
            raise DeqganSolverException(f"RK4 state became non-finite at step {k + 1}")

    return StepSolution(t, y)


# Dormand-Prince 5(4) tableau
_DP_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0])
_DP_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
]
_DP_B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84])
# difference between the 5th and 4th order weights, last entry for the FSAL stage
_DP_E = np.array([-71 / 57600, 0.0, 71 / 16695, -71 / 1920, 17253 / 339200, -22 / 525, 1 / 40])
# quartic interpolant, one column per power of the step fraction
_DP_P = np.array([
    [1.0, -8048581381 / 2820520608, 8663915743 / 2820520608, -12715105075 / 11282082432],
    [0.0, 0.0, 0.0, 0.0],
    [0.0, 131558114200 / 32700410799, -68118460800 / 10900136933, 87487479700 / 32700410799],
    [0.0, -1754552775 / 470086768, 14199869525 / 1410260304, -10690763975 / 1880347072],
    [0.0, 127303824393 / 49829197408, -318862633887 / 49829197408, 701980252875 / 199316789632],
    [0.0, -282668133 / 205662961, 2019193451 / 616988883, -1453857185 / 822651844],
    [0.0, 40617522 / 29380423, -110615467 / 29380423, 69997945 / 29380423],
])


class DenseSolution():
    """
    Accepted RK45 steps with their interpolation coefficients.

    Calling the solution evaluates the quartic interpolant; points that fall
    exactly on a step endpoint return the stored step state.
    """

    def __init__(self, t, y, q):
        self.t = np.asarray(t)
        self.y = np.asarray(y)
        self.q = np.asarray(q)
        self.h = np.diff(self.t)

    @property
    def n_steps(self):
        return len(self.h)

    def __call__(self, points):
        points = np.atleast_1d(np.asarray(points, dtype=np.float64))

        if np.any(points < self.t[0]) or np.any(points > self.t[-1]):
            raise DeqganArgumentException(
                f"Dense output requested outside ({self.t[0]}, {self.t[-1]})"
            )

        idx = np.clip(np.searchsorted(self.t, points, side="right") - 1, 0, self.n_steps - 1)
        x = (points - self.t[idx]) / self.h[idx]
        powers = np.cumprod(np.repeat(x[:, None], 4, axis=1), axis=1)
        out = self.y[idx] + self.h[idx][:, None] * np.einsum("ndk,nk->nd", self.q[idx], powers)

        at_left = points == self.t[idx]
        at_right = points == self.t[idx + 1]
        out[at_left] = self.y[idx[at_left]]
        out[at_right] = self.y[idx[at_right] + 1]

        return out


def _rms(x):
    return float(np.sqrt(np.mean(x * x)))


def _initial_step(spec, t0, y0, f0, rtol, atol):
    scale = atol + np.abs(y0) * rtol
    d0, d1 = _rms(y0 / scale), _rms(f0 / scale)
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    f1 = spec.f(t0 + h0, y0 + h0 * f0)
    d2 = _rms((f1 - f0) / scale) / h0

    if max(d1, d2) <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** (1 / 5)

    return min(100 * h0, h1, spec.interval[1] - t0)


def rk45_solve(spec, rtol=ORACLE_TOLERANCE, atol=ORACLE_TOLERANCE, max_steps=1000000):
    """
    Adaptive Dormand-Prince integration with error per step kept under
    ``atol + rtol * |y|`` in the RMS norm.

    :rtype: DenseSolution
    """
    if rtol <= 0 or atol <= 0:
        raise DeqganArgumentException(f"RK45 tolerances must be positive, got rtol={rtol} atol={atol}")

    start, end = spec.interval
    t, y = start, spec.initial.copy()
    f = spec.f(t, y)
    h = _initial_step(spec, t, y, f, rtol, atol)

    ts, ys, qs = [t], [y.copy()], []
    k = np.empty((7, spec.dim))
    rejected = 0

    while t < end:
        if len(qs) >= max_steps:
            raise DeqganSolverException(f"RK45 exceeded {max_steps} steps at t={t}")

        min_step = 10 * np.abs(np.nextafter(t, np.inf) - t)
        h = min(h, end - t)

        if h < min_step:
            raise DeqganSolverException(f"RK45 step size underflow at t={t}")

        step_rejected = False

        while True:
            k[0] = f

            for s in range(1, 6):
                dy = np.dot(k[:s].T, _DP_A[s]) * h
                k[s] = spec.f(t + _DP_C[s] * h, y + dy)

            y_new = y + h * np.dot(k[:6].T, _DP_B)
            t_new = t + h if t + h < end else end
            f_new = spec.f(t_new, y_new)
            k[6] = f_new

            if not np.all(np.isfinite(y_new)):
                raise DeqganSolverException(f"RK45 state became non-finite at t={t_new}")

            scale = atol + np.maximum(np.abs(y), np.abs(y_new)) * rtol
            error = _rms(h * np.dot(k.T, _DP_E) / scale)

            if error <= 1.0:
                factor = 10.0 if error == 0 else min(10.0, 0.9 * error ** -0.2)

                if step_rejected:
                    factor = min(1.0, factor)

                break

            h *= max(0.2, 0.9 * error ** -0.2)
            step_rejected = True
            rejected += 1

            if h < min_step:
                raise DeqganSolverException(f"RK45 step size underflow at t={t}")

        qs.append(k.T @ _DP_P)
        t, y, f = t_new, y_new, f_new
        ts.append(t)
        ys.append(y.copy())
        h *= factor

    log.debug(f"RK45 finished in {len(qs)} steps ({rejected} rejected) at rtol={rtol}")

    return DenseSolution(ts, ys, qs)


class FdGrid():
    """
    Finite difference Poisson solution on the unit square.

    ``n`` points per dimension including the boundary, ``h = 1 / (n - 1)``,
    ``(n - 2)**2`` unknowns. ``solution`` and ``source`` are (n, n) arrays
    indexed [x, y].
    """

    def __init__(self, n, source, solution, matrix, rhs, iterations, residual, history):
        self.n = n
        self.h = 1.0 / (n - 1)
        self.axis = np.linspace(0.0, 1.0, n)
        self.source = source
        self.solution = solution
        self.matrix = matrix
        self.rhs = rhs
        self.iterations = iterations
        self.residual = residual
        self.history = history

    def points(self):
        x, y = np.meshgrid(self.axis, self.axis, indexing="ij")
        return np.stack([x.ravel(), y.ravel()], axis=1)

    def values(self):
        return self.solution.reshape(-1, 1)


def laplacian_matrix(n):
    """
    Negative five point Laplacian on the (n - 2)**2 interior unknowns,
    symmetric positive definite.
    """
    m = n - 2
    h = 1.0 / (n - 1)
    ones = np.ones(m)
    second = sp.diags([-ones[:-1], 2.0 * ones, -ones[:-1]], [-1, 0, 1]) / (h * h)
    eye = sp.identity(m)

    return (sp.kron(second, eye) + sp.kron(eye, second)).tocsr()


def fd_poisson_solve(source=pos_source, n=32, rtol=CG_TOLERANCE, maxiter=CG_MAX_ITERATIONS):
    """
    Solve u_xx + u_yy = source with zero Dirichlet boundary by conjugate
    gradients.

    :type source: callable (x, y) -> array
    :type n: int

    :rtype: FdGrid
    """
    if n < 3:
        raise DeqganArgumentException(f"Finite difference grid needs n >= 3, got {n}")

    axis = np.linspace(0.0, 1.0, n)
    x, y = np.meshgrid(axis, axis, indexing="ij")
    samples = np.asarray(source(x, y), dtype=np.float64) * np.ones_like(x)

    matrix = laplacian_matrix(n)
    rhs = -samples[1:-1, 1:-1].ravel()
    history = []
    count = [0]

    def monitor(xk):
        count[0] += 1

        if count[0] % CG_CHECK_EVERY == 0:
            residual = float(np.linalg.norm(rhs - matrix @ xk))
            history.append((count[0], xk.copy(), residual))
            log.debug(f"CG iteration {count[0]} residual {residual:.3e}")

    interior, info = spla.cg(matrix, rhs, rtol=rtol, atol=0.0, maxiter=maxiter, callback=monitor)
    residual = float(np.linalg.norm(rhs - matrix @ interior))

    if info != 0:
        raise DeqganSolverException(
            f"CG did not converge in {maxiter} iterations, residual {residual:.3e}",
            residual=residual,
        )

    solution = np.zeros((n, n))
    solution[1:-1, 1:-1] = interior.reshape(n - 2, n - 2)
    log.debug(f"CG converged in {count[0]} iterations, residual {residual:.3e}")

    return FdGrid(n, samples, solution, matrix, rhs, count[0], residual, history)


class Baseline():
    """
    Traditional solver result on a problem mesh.
    """

    def __init__(self, problem, method, points, prediction, truth):
        self.problem = problem
        self.method = method
        self.points = points
        self.prediction = prediction
        self.truth = truth
        self.mse = float(np.mean((prediction - truth) ** 2))

    def __repr__(self):
        return f"Baseline({self.problem.key}, {self.method}, mse={self.mse:.3e})"


def oracle_truth(problem, points, tolerance=ORACLE_TOLERANCE):
    """
    RK45 ground truth of an initial value problem at ``points``.
    """
    solution = rk45_solve(problem.ivp(), rtol=tolerance, atol=tolerance)
    times = np.asarray(points, dtype=np.float64).reshape(len(points), -1)[:, 0]

    return solution(times)[:, problem.observed]


def traditional_baseline(problem, mesh_size, truth=None):
    """
    RK4 on the training mesh (mesh points are step endpoints) or finite
    differences for the Poisson problem, scored against the ground truth.

    ``truth`` maps points to reference values; defaults to the closed form
    solution, or a fresh RK45 solution for problems without one.

    :rtype: Baseline
    """
    if problem.key == "pos":
        grid = fd_poisson_solve(pos_source, mesh_size)
        points, prediction, method = grid.points(), grid.values(), "fd"
    else:
        mesh = problem.mesh(mesh_size)
        solution = rk4_solve(problem.ivp(mesh), mesh_size - 1)
        points, method = mesh.points, "rk4"
        prediction = solution(points[:, 0])[:, problem.observed]

    if truth is None:
        truth = analytic_solution if problem.has_analytic else oracle_truth

    reference = truth(problem, points)
    baseline = Baseline(problem, method, points, prediction, reference)
    log.info(f"{method.upper()} baseline on {problem.key}: mse={baseline.mse:.3e}")

    return baseline


def numerical_jets(solution, tape, points, observed=None, h1=1e-3, h2=2e-2):
    """
    Fourth order central differences of a dense solution, packaged as
    constant jets for ``problems.build_lhs``. Points need a margin of two
    steps from the ends of the solution interval.

    :rtype: list of Jet
    """
    t = np.asarray(points, dtype=np.float64).reshape(len(points), -1)[:, 0]
    values = solution(t)
    observed = list(range(values.shape[1])) if observed is None else observed

    d1 = (-solution(t + 2 * h1) + 8 * solution(t + h1) - 8 * solution(t - h1) + solution(t - 2 * h1)) / (12 * h1)
    d2 = (
        -solution(t + 2 * h2) + 16 * solution(t + h2) - 30 * values + 16 * solution(t - h2) - solution(t - 2 * h2)
    ) / (12 * h2 * h2)

    return [
        Jet(tape.constant(values[:, j:j + 1]), [tape.constant(d1[:, j:j + 1])], [tape.constant(d2[:, j:j + 1])])
        for j in observed
    ]


def mesh_digest(points):
    points = np.ascontiguousarray(points, dtype="<f8")
    return hashlib.sha1(points.tobytes()).hexdigest()


class GroundTruthCache():
    """
    Directory of ground truth arrays, one file per (problem, tolerance, mesh).
    """

    def __init__(self, directory):
        self.directory = os.fspath(directory)

    def path(self, key, tolerance, points):
        return os.path.join(self.directory, f"{key}-{tolerance:.0e}-{mesh_digest(points)[:16]}.truth")

    def load(self, key, tolerance, points):
        path = self.path(key, tolerance, points)

        if not os.path.exists(path):
            log.info(f"Ground truth cache miss for {key} at {path}")
            return None

        header, values = read_array_file(path)

        if header.get("problem") != key or header.get("mesh") != mesh_digest(points):
            raise DeqganCacheException(f"Cache file {path} does not belong to problem '{key}' on this mesh")

        log.info(f"Ground truth cache hit for {key}")

        return values

    def store(self, key, tolerance, points, values):
        header = {
            "problem": key,
            "tolerance": tolerance,
            "mesh": mesh_digest(points),
        }
        return write_array_file(self.path(key, tolerance, points), header, values)

    def get_or_compute(self, problem, points, tolerance=ORACLE_TOLERANCE):
        values = self.load(problem.key, tolerance, points)

        if values is None:
            values = oracle_truth(problem, points, tolerance)
            self.store(problem.key, tolerance, points, values)

        return values


def load_truth(problem, points, cache=None, tolerance=ORACLE_TOLERANCE):
    """
    Ground truth at ``points``, closed form when available, else from the
    cache. Never integrates on its own.
    """
    if problem.has_analytic:
        return analytic_solution(problem, points)

    values = None if cache is None else cache.load(problem.key, tolerance, points)

    if values is None:
        raise DeqganCacheException(
            f"Ground truth for '{problem.key}' is not cached, run `deqgan oracle --preset={problem.key}` first"
        )

    return values


__all__ = [
    "Baseline",
    "DenseSolution",
    "FdGrid",
    "GroundTruthCache",
    "IvpSpec",
    "StepSolution",
    "fd_poisson_solve",
    "laplacian_matrix",
    "load_truth",
    "mesh_digest",
    "numerical_jets",
    "oracle_truth",
    "rk45_solve",
    "rk4_solve",
    "traditional_baseline",
]
