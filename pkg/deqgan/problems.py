# -*- coding: utf-8 -*-

# python std lib
import copy
import logging

# deqgan imports
from deqgan.autodiff import Jet, jet_apply, jet_column
from deqgan.constants import (
    CONDITION_CHOICES,
    PROBLEM_CONSTANTS,
    PROBLEM_DOMAINS,
    PROBLEM_KEYS,
)
from deqgan.exceptions import (
    DeqganArgumentException,
    DeqganConfigException,
    DeqganContractException,
)

# 3rd party imports
import numpy as np


log = logging.getLogger(__name__)

OUTPUT_DIMS = {"exp": 1, "sho": 1, "nlo": 1, "nas": 2, "sir": 3, "pos": 1}
ORDERS = {"exp": 1, "sho": 2, "nlo": 2, "nas": 1, "sir": 1, "pos": 2}
ANALYTIC = ["exp", "sho", "nas", "pos"]


class Mesh():
    """
    Endpoint inclusive uniform grid, tensor product in two dimensions.
    """

    def __init__(self, domain, counts):
        if len(domain) != len(counts):
            raise DeqganArgumentException("Mesh needs one point count per dimension")

        if min(counts) < 2:
            raise DeqganArgumentException(f"Mesh needs at least two points per dimension, got {counts}")

        self.domain = [tuple(float(v) for v in bounds) for bounds in domain]
        self.counts = tuple(int(c) for c in counts)
        self.spacing = tuple((hi - lo) / (c - 1) for (lo, hi), c in zip(self.domain, self.counts))

        axes = [np.linspace(lo, hi, c) for (lo, hi), c in zip(self.domain, self.counts)]
        grids = np.meshgrid(*axes, indexing="ij")
        self.points = np.stack([g.ravel() for g in grids], axis=1)

    @property
    def size(self):
        return self.points.shape[0]

    @property
    def dim(self):
        return self.points.shape[1]

    def axes(self):
        return [np.linspace(lo, hi, c) for (lo, hi), c in zip(self.domain, self.counts)]

    def __repr__(self):
        return f"Mesh(domain={self.domain}, counts={self.counts})"


def adjust_ic_first_order(psi, t, t0, x0):
    """
    x0 + (1 - e^{-(t - t0)}) psi, exactly x0 at t0.
    """
    decay = 1.0 - _exp_neg(t - t0)
    return decay * psi + x0


def adjust_ic_second_order(psi, t, t0, x0, v0):
    """
    x0 + v0 (1 - e^{-(t - t0)}) + (1 - e^{-(t - t0)})^2 psi.

    Value x0 and first derivative v0 hold exactly at t0.
    """
    decay = 1.0 - _exp_neg(t - t0)
    return decay * decay * psi + decay * v0 + x0


def adjust_ic_polynomial_first_order(psi, t, t0, x0):
    return (t - t0) * psi + x0


def adjust_ic_polynomial_second_order(psi, t, t0, x0, v0):
    dt = t - t0
    return dt * dt * psi + dt * v0 + x0


def adjust_dirichlet_2d(psi, x, y):
    """
    x (1 - x) y (1 - y) psi, zero on every edge of the unit square.
    """
    return x * (1.0 - x) * y * (1.0 - y) * psi


def _exp_neg(jet):
    return jet_apply("exp", -jet)


def pos_source(x, y):
    """
    Right hand side of the Poisson problem.
    """
    return 2.0 * x * (y - 1.0) * (y - 2.0 * x + x * y + 2.0) * np.exp(x - y)


class Problem():
    """
    One benchmark equation with its domain, conditions and residual.

    :type key: str
    :type constants: dict
    :type condition: str
    """

    def __init__(self, key, constants=None, condition="exponential"):
        key = str(key).lower()

        if key not in PROBLEM_KEYS:
            raise DeqganConfigException(f"Unknown problem '{key}', valid problems are {', '.join(PROBLEM_KEYS)}")

        if condition not in CONDITION_CHOICES:
            raise DeqganConfigException(f"Unknown condition transform '{condition}'")

        self.key = key
        self.condition = condition
        self.domain = copy.deepcopy(PROBLEM_DOMAINS[key])
        self.input_dim = len(self.domain)
        self.output_dim = OUTPUT_DIMS[key]
        self.order = ORDERS[key]
        self.constants = dict(PROBLEM_CONSTANTS[key])

        for name, value in (constants or {}).items():
            if name not in self.constants:
                raise DeqganConfigException(f"Problem '{key}' has no constant '{name}'")

            self.constants[name] = float(value)

    def __repr__(self):
        return f"Problem({self.key})"

    @property
    def has_analytic(self):
        return self.key in ANALYTIC

    def mesh(self, count):
        return Mesh(self.domain, [count] * self.input_dim)

    def adjust(self, coords, psi):
        """
        Apply the condition transform to every output head of ``psi``.

        :type coords: list of Jet, one (batch, 1) jet per input coordinate
        :type psi: Jet, (batch, output_dim)

        :rtype: list of Jet
        """
        c = self.constants
        heads = [jet_column(psi, j) for j in range(self.output_dim)]

        if self.key == "pos":
            return [adjust_dirichlet_2d(heads[0], coords[0], coords[1])]

        t = coords[0]
        first, second = adjust_ic_first_order, adjust_ic_second_order

        if self.condition == "polynomial":
            first, second = adjust_ic_polynomial_first_order, adjust_ic_polynomial_second_order

        if self.order == 2:
            return [second(heads[0], t, c["t0"], c["x0"], c["v0"])]

        return [first(head, t, c["t0"], x0) for head, x0 in zip(heads, self.initial_state())]

    def initial_state(self):
        c = self.constants

        if self.key == "exp":
            return [c["x0"]]
        if self.key in ["sho", "nlo"]:
            return [c["x0"], c["v0"]]
        if self.key == "nas":
            return [c["x0"], c["y0"]]
        if self.key == "sir":
            return [c["s0"], c["i0"], c["r0"]]

        raise DeqganContractException(f"Problem '{self.key}' is not an initial value problem")

    def ivp_rhs(self):
        """
        Explicit first order form f(t, y) used by the traditional solvers.
        Second order equations become (x, v) systems.
        """
        c = self.constants

        if self.key == "exp":
            return lambda t, y: -y

        if self.key == "sho":
            return lambda t, y: np.array([y[1], -y[0]])

        if self.key == "nlo":
            def nlo(t, y):
                x, v = y
                acc = -(2.0 * c["beta"] * v + c["omega"] ** 2 * x + c["phi"] * x ** 2 + c["epsilon"] * x ** 3)
                return np.array([v, acc])

            return nlo

        if self.key == "nas":
            return lambda t, y: np.array([-t * y[1], t * y[0]])

        if self.key == "sir":
            def sir(t, y):
                s, i, _ = y
                infection = c["beta"] * i * s / c["n"]
                recovery = c["gamma"] * i
                return np.array([-infection, infection - recovery, recovery])

            return sir

        raise DeqganContractException(f"Problem '{self.key}' is not an initial value problem")

    def ivp(self, mesh=None):
        """
        :rtype: deqgan.oracles.IvpSpec
        """
        from deqgan.oracles import IvpSpec

        (start, end), = self.domain
        points = None if mesh is None else mesh.points[:, 0]

        return IvpSpec(self.ivp_rhs(), self.initial_state(), (start, end), points)

    def analytic_jets(self, tape, points):
        return analytic_jets(self, tape, points)

    @property
    def observed(self):
        """
        Indices of the first order state that are solution outputs.
        """
        if self.order == 2:
            return [0]

        return list(range(self.output_dim))


def build_lhs(problem, inputs, adjusted):
    """
    Residual of the equation with every term moved to the left, one column
    per equation.

    :type problem: Problem
    :type inputs: list of Jet, one per input coordinate
    :type adjusted: list of Jet, one per output

    :rtype: Node, shape (batch, output_dim)
    """
    if len(adjusted) != problem.output_dim:
        raise DeqganArgumentException(
            f"Problem '{problem.key}' needs {problem.output_dim} adjusted outputs, got {len(adjusted)}"
        )

    builder = _LHS_BUILDERS.get(problem.key)

    if builder is None:
        raise DeqganConfigException(f"No residual defined for problem '{problem.key}'")

    columns = builder(problem.constants, inputs, adjusted)
    tape = adjusted[0].tape

    if len(columns) == 1:
        return tape.lift(columns[0])

    return tape.concat(columns)


def _lhs_exp(c, inputs, adjusted):
    x = adjusted[0]
    return [x.d1[0] + x.value]


def _lhs_sho(c, inputs, adjusted):
    x = adjusted[0]
    return [x.d2[0] + x.value]


def _lhs_nlo(c, inputs, adjusted):
    x = adjusted[0]
    u = x.value
    return [
        x.d2[0]
        + 2.0 * c["beta"] * x.d1[0]
        + c["omega"] ** 2 * u
        + c["phi"] * u ** 2
        + c["epsilon"] * u ** 3
    ]


def _lhs_nas(c, inputs, adjusted):
    t = inputs[0].value
    x, y = adjusted
    return [x.d1[0] + t * y.value, y.d1[0] - t * x.value]


def _lhs_sir(c, inputs, adjusted):
    s, i, r = adjusted
    infection = c["beta"] * i.value * s.value / c["n"]
    recovery = c["gamma"] * i.value
    return [s.d1[0] + infection, i.d1[0] - infection + recovery, r.d1[0] - recovery]


def _lhs_pos(c, inputs, adjusted):
    u = adjusted[0]
    source = pos_source(inputs[0].value.value, inputs[1].value.value)
    return [u.d2[0] + u.d2[1] - source]


_LHS_BUILDERS = {
    "exp": _lhs_exp,
    "sho": _lhs_sho,
    "nlo": _lhs_nlo,
    "nas": _lhs_nas,
    "sir": _lhs_sir,
    "pos": _lhs_pos,
}


def analytic_solution(problem, points):
    """
    Closed form solution at ``points``, shape (batch, output_dim).
    """
    values, _, _ = _analytic(problem, points)
    return values


def analytic_jets(problem, tape, points):
    """
    Closed form solution with its exact derivatives, as constant jets.
    """
    values, d1, d2 = _analytic(problem, points)

    return [
        Jet(
            tape.constant(values[:, j:j + 1]),
            [tape.constant(d1[:, j:j + 1, k]) for k in range(problem.input_dim)],
            [tape.constant(d2[:, j:j + 1, k]) for k in range(problem.input_dim)],
        )
        for j in range(problem.output_dim)
    ]


def _analytic(problem, points):
    if not problem.has_analytic:
        raise DeqganContractException(
            f"Problem '{problem.key}' has no closed form solution, use the oracle ground truth"
        )

    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    n = points.shape[0]
    values = np.zeros((n, problem.output_dim))
    d1 = np.zeros((n, problem.output_dim, problem.input_dim))
    d2 = np.zeros_like(d1)

    if problem.key == "exp":
        t = points[:, 0] - problem.constants["t0"]
        e = problem.constants["x0"] * np.exp(-t)
        values[:, 0], d1[:, 0, 0], d2[:, 0, 0] = e, -e, e

    elif problem.key == "sho":
        c = problem.constants
        s = points[:, 0] - c["t0"]
        x = c["x0"] * np.cos(s) + c["v0"] * np.sin(s)
        v = -c["x0"] * np.sin(s) + c["v0"] * np.cos(s)
        values[:, 0], d1[:, 0, 0], d2[:, 0, 0] = x, v, -x

    elif problem.key == "nas":
        # (x, y) rotates by (t^2 - t0^2) / 2 from (x0, y0)
        c = problem.constants
        t = points[:, 0]
        phase = 0.5 * (t * t - c["t0"] ** 2)
        cos, sin = np.cos(phase), np.sin(phase)
        x = c["x0"] * cos - c["y0"] * sin
        y = c["x0"] * sin + c["y0"] * cos
        values[:, 0], d1[:, 0, 0], d2[:, 0, 0] = x, -t * y, -y - t * t * x
        values[:, 1], d1[:, 1, 0], d2[:, 1, 0] = y, t * x, x - t * t * y

    elif problem.key == "pos":
        x, y = points[:, 0], points[:, 1]
        p = x * (1.0 - x) * np.exp(x)
        px = (1.0 - x - x * x) * np.exp(x)
        pxx = -(x * x + 3.0 * x) * np.exp(x)
        q = y * (1.0 - y) * np.exp(-y)
        qy = (1.0 - 3.0 * y + y * y) * np.exp(-y)
        qyy = (-4.0 + 5.0 * y - y * y) * np.exp(-y)
        values[:, 0] = p * q
        d1[:, 0, 0], d1[:, 0, 1] = px * q, p * qy
        d2[:, 0, 0], d2[:, 0, 1] = pxx * q, p * qyy

    return values, d1, d2


def get_problem(key, constants=None, condition="exponential"):
    return Problem(key, constants=constants, condition=condition)


__all__ = [
    "Mesh",
    "Problem",
    "adjust_dirichlet_2d",
    "adjust_ic_first_order",
    "adjust_ic_polynomial_first_order",
    "adjust_ic_polynomial_second_order",
    "adjust_ic_second_order",
    "analytic_jets",
    "analytic_solution",
    "build_lhs",
    "get_problem",
    "pos_source",
]
