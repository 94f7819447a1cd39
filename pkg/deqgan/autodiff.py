# -*- coding: utf-8 -*-
"""
Differentiation engine.

Two cooperating pieces:

- ``Tape`` records operations on float64 arrays (a whole batch of mesh points
  per node) and runs reverse-mode passes to obtain weight gradients.
- ``Jet`` carries a value with its first and diagonal second derivatives with
  respect to each input coordinate. Every jet operation is recorded on the
  tape, so a loss assembled from input derivatives stays weight-differentiable.
"""

# python std lib
import logging

# deqgan imports
from deqgan.exceptions import DeqganArgumentException, DeqganContractException

# 3rd party imports
import numpy as np


log = logging.getLogger(__name__)


def _unbroadcast(grad, shape):
    """
    Reduce a broadcast gradient back to the shape of its operand.
    """
    if grad.shape == shape:
        return grad

    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)

    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)

    return grad.reshape(shape)


def _softplus(x):
    return np.logaddexp(0.0, x)


def _sigmoid(x):
    # Split on sign so exp never overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


class Node():
    """
    One recorded operation. ``id`` is the position on the tape.
    """

    __slots__ = ("tape", "id", "value", "parents", "vjp", "name")
    # numpy defers to the reflected operators below
    __array_ufunc__ = None

    def __init__(self, tape, id_, value, parents=(), vjp=None, name=None):
        self.tape = tape
        self.id = id_
        self.value = value
        self.parents = parents
        self.vjp = vjp
        self.name = name

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        return f"Node(id={self.id}, shape={self.value.shape}, name={self.name})"

    def __add__(self, other):
        return self.tape.add(self, other)

    def __radd__(self, other):
        return self.tape.add(other, self)

    def __sub__(self, other):
        return self.tape.sub(self, other)

    def __rsub__(self, other):
        return self.tape.sub(other, self)

    def __mul__(self, other):
        return self.tape.mul(self, other)

    def __rmul__(self, other):
        return self.tape.mul(other, self)

    def __truediv__(self, other):
        return self.tape.div(self, other)

    def __rtruediv__(self, other):
        return self.tape.div(other, self)

    def __neg__(self):
        return self.tape.neg(self)

    def __pow__(self, n):
        return self.tape.pow(self, n)


class Tape():
    """
    Append-only record of operations. Operands always precede their results,
    so append order is a topological order and one reverse sweep visits every
    node exactly once.
    """

    def __init__(self):
        self.nodes = []
        self.parameters = {}

    def __len__(self):
        return len(self.nodes)

    def _record(self, value, parents=(), vjp=None, name=None):
        node = Node(self, len(self.nodes), value, parents, vjp, name)
        self.nodes.append(node)
        return node

    def lift(self, x):
        """
        Return ``x`` as a node on this tape, wrapping plain numbers and arrays
        as constants.
        """
        if isinstance(x, Node):
            if x.tape is not self:
                raise DeqganContractException(f"{x!r} belongs to another tape")

            return x

        return self.constant(x)

    def constant(self, value):
        return self._record(np.asarray(value, dtype=np.float64))

    def parameter(self, name, value):
        """
        Register a trainable array. Gradients are reported under ``name``.
        """
        if name in self.parameters:
            raise DeqganContractException(f"Parameter '{name}' is already on the tape")

        node = self._record(np.asarray(value, dtype=np.float64), name=name)
        self.parameters[name] = node

        return node

    # Elementwise binary primitives

    def add(self, a, b):
        a, b = self.lift(a), self.lift(b)
        return self._record(a.value + b.value, (a, b), lambda g: (g, g))

    def sub(self, a, b):
        a, b = self.lift(a), self.lift(b)
        return self._record(a.value - b.value, (a, b), lambda g: (g, -g))

    def mul(self, a, b):
        a, b = self.lift(a), self.lift(b)
        return self._record(
            a.value * b.value,
            (a, b),
            lambda g: (g * b.value, g * a.value),
        )

    def div(self, a, b):
        a, b = self.lift(a), self.lift(b)
        return self._record(
            a.value / b.value,
            (a, b),
            lambda g: (g / b.value, -g * a.value / (b.value * b.value)),
        )

    # Elementwise unary primitives

    def neg(self, a):
        a = self.lift(a)
        return self._record(-a.value, (a,), lambda g: (-g,))

    def pow(self, a, n):
        """
        Integer power.
        """
        if int(n) != n:
            raise DeqganArgumentException(f"Only integer powers are supported, got {n}")

        n = int(n)
        a = self.lift(a)

        if n == 0:
            return self._record(np.ones_like(a.value), (a,), lambda g: (np.zeros_like(g),))

        return self._record(
            a.value ** n,
            (a,),
            lambda g: (g * n * a.value ** (n - 1),),
        )

    def exp(self, a):
        a = self.lift(a)
        out = np.exp(a.value)
        return self._record(out, (a,), lambda g: (g * out,))

    def tanh(self, a):
        a = self.lift(a)
        out = np.tanh(a.value)
        return self._record(out, (a,), lambda g: (g * (1.0 - out * out),))

    def log(self, a):
        a = self.lift(a)
        return self._record(np.log(a.value), (a,), lambda g: (g / a.value,))

    def sigmoid(self, a):
        a = self.lift(a)
        out = _sigmoid(a.value)
        return self._record(out, (a,), lambda g: (g * out * (1.0 - out),))

    def softplus(self, a):
        """
        log(1 + e^a) in its overflow free form.
        """
        a = self.lift(a)
        return self._record(_softplus(a.value), (a,), lambda g: (g * _sigmoid(a.value),))

    def abs(self, a):
        a = self.lift(a)
        return self._record(np.abs(a.value), (a,), lambda g: (g * np.sign(a.value),))

    def huber(self, a, delta=1.0):
        """
        0.5 a^2 for |a| <= delta, delta (|a| - 0.5 delta) beyond.
        """
        a = self.lift(a)
        x = a.value
        inside = np.abs(x) <= delta
        out = np.where(inside, 0.5 * x * x, delta * (np.abs(x) - 0.5 * delta))
        return self._record(out, (a,), lambda g: (g * np.clip(x, -delta, delta),))

    def clip(self, a, low, high):
        """
        Clamp into [low, high]. No gradient flows through clamped entries.
        """
        a = self.lift(a)
        x = a.value
        inside = (x >= low) & (x <= high)
        return self._record(np.clip(x, low, high), (a,), lambda g: (g * inside,))

    # Matrix primitives, rows of ``x`` are batch entries

    def matmul(self, x, w):
        """
        x @ w.T
        """
        x, w = self.lift(x), self.lift(w)
        self._check_matmul(x, w)
        return self._record(
            x.value @ w.value.T,
            (x, w),
            lambda g: (g @ w.value, g.T @ x.value),
        )

    def affine(self, x, w, b):
        """
        x @ w.T + b
        """
        x, w, b = self.lift(x), self.lift(w), self.lift(b)
        self._check_matmul(x, w)
        return self._record(
            x.value @ w.value.T + b.value,
            (x, w, b),
            lambda g: (g @ w.value, g.T @ x.value, g.sum(axis=0)),
        )

    def _check_matmul(self, x, w):
        if x.value.ndim != 2 or w.value.ndim != 2 or x.value.shape[1] != w.value.shape[1]:
            raise DeqganArgumentException(
                f"Cannot multiply batch of shape {x.value.shape} with weight of shape {w.value.shape}"
            )

    # Reductions and reshaping

    def sum(self, a):
        a = self.lift(a)
        return self._record(
            np.asarray(a.value.sum()),
            (a,),
            lambda g: (np.full_like(a.value, g),),
        )

    def mean(self, a):
        a = self.lift(a)
        size = a.value.size
        return self._record(
            np.asarray(a.value.mean()),
            (a,),
            lambda g: (np.full_like(a.value, g / size),),
        )

    def column(self, a, j):
        """
        Select column ``j`` of a batch, keeping it two dimensional.
        """
        a = self.lift(a)

        def vjp(g):
            out = np.zeros_like(a.value)
            out[:, j:j + 1] = g
            return (out,)

        return self._record(a.value[:, j:j + 1].copy(), (a,), vjp)

    def concat(self, columns):
        """
        Join batches side by side.
        """
        columns = [self.lift(c) for c in columns]
        widths = [c.value.shape[1] for c in columns]
        edges = np.cumsum([0] + widths)

        def vjp(g):
            return tuple(g[:, edges[i]:edges[i + 1]] for i in range(len(columns)))

        return self._record(np.hstack([c.value for c in columns]), tuple(columns), vjp)

    def backward(self, loss):
        """
        Reverse sweep from the scalar ``loss``.

        :type loss: Node

        :rtype: GradientMap
        """
        loss = self.lift(loss)

        if loss.value.size != 1:
            raise DeqganContractException(
                f"backward needs a scalar loss, got shape {loss.value.shape}"
            )

        adjoints = {loss.id: np.ones_like(loss.value)}

        for node in reversed(self.nodes[:loss.id + 1]):
            grad = adjoints.get(node.id)

            if grad is None or node.vjp is None:
                continue

            for parent, parent_grad in zip(node.parents, node.vjp(grad)):
                parent_grad = _unbroadcast(np.asarray(parent_grad), parent.value.shape)

                if parent.id in adjoints:
                    adjoints[parent.id] = adjoints[parent.id] + parent_grad
                else:
                    adjoints[parent.id] = parent_grad

        return GradientMap({
            name: adjoints[node.id] if node.id in adjoints else np.zeros_like(node.value)
            for name, node in self.parameters.items()
        })


class GradientMap(dict):
    """
    Parameter name to gradient array, same shapes as the parameters.
    """

    def subset(self, names):
        return GradientMap({name: self[name] for name in names})

    def scaled(self, factor):
        return GradientMap({name: factor * grad for name, grad in self.items()})


def backward(tape, loss):
    return tape.backward(loss)


class Jet():
    """
    A value with first and diagonal second derivatives per input coordinate.

    Each field is a tape node of shape (batch, width); ``d1[k]`` and ``d2[k]``
    are the derivatives with respect to input coordinate ``k``.
    """

    __slots__ = ("value", "d1", "d2")
    __array_ufunc__ = None

    def __init__(self, value, d1, d2):
        if len(d1) != len(d2):
            raise DeqganArgumentException("Jet needs one second derivative per first derivative")

        self.value = value
        self.d1 = tuple(d1)
        self.d2 = tuple(d2)

    @property
    def dim(self):
        return len(self.d1)

    @property
    def tape(self):
        return self.value.tape

    def numpy(self):
        """
        (value, d1, d2) as arrays, derivatives stacked on the last axis.
        """
        return (
            self.value.value,
            np.stack([d.value for d in self.d1], axis=-1),
            np.stack([d.value for d in self.d2], axis=-1),
        )

    def __repr__(self):
        return f"Jet(shape={self.value.shape}, dim={self.dim})"

    def __add__(self, other):
        return jet_apply("add", self, other)

    def __radd__(self, other):
        return jet_apply("add", other, self)

    def __sub__(self, other):
        return jet_apply("sub", self, other)

    def __rsub__(self, other):
        return jet_apply("sub", other, self)

    def __mul__(self, other):
        return jet_apply("mul", self, other)

    def __rmul__(self, other):
        return jet_apply("mul", other, self)

    def __truediv__(self, other):
        return jet_apply("div", self, other)

    def __rtruediv__(self, other):
        return jet_apply("div", other, self)

    def __neg__(self):
        return jet_apply("neg", self)

    def __pow__(self, n):
        return jet_apply("pow", self, n=n)


def jet_constant(tape, value, dim):
    """
    A jet that does not depend on the inputs.
    """
    value = tape.lift(value)
    zero = tape.constant(np.zeros_like(value.value))
    return Jet(value, [zero] * dim, [zero] * dim)


def jet_lift(tape, x, dim):
    """
    Seed input coordinate ``dim`` of the points ``x``.

    ``x`` is a single point (n,) or a batch (batch, n). The result has value
    ``x[..., dim]`` as a (batch, 1) column, unit first derivative along
    ``dim`` and zero second derivatives.
    """
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    n = x.shape[1]

    if not 0 <= dim < n:
        raise DeqganArgumentException(f"Input coordinate {dim} out of range for {n} dimensional input")

    value = tape.constant(x[:, dim:dim + 1])
    one = tape.constant(np.ones_like(value.value))
    zero = tape.constant(np.zeros_like(value.value))
    d1 = [one if k == dim else zero for k in range(n)]

    return Jet(value, d1, [zero] * n)


def jet_inputs(tape, x):
    """
    Every coordinate of ``x`` lifted and stacked into one (batch, n) jet.
    """
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    coords = [jet_lift(tape, x, k) for k in range(x.shape[1])]

    return coords, jet_stack(coords)


def jet_stack(jets):
    jets = list(jets)
    _check_dims(jets)
    tape = jets[0].tape

    return Jet(
        tape.concat([j.value for j in jets]),
        [tape.concat([j.d1[k] for j in jets]) for k in range(jets[0].dim)],
        [tape.concat([j.d2[k] for j in jets]) for k in range(jets[0].dim)],
    )


def jet_column(jet, j):
    tape = jet.tape
    return Jet(
        tape.column(jet.value, j),
        [tape.column(d, j) for d in jet.d1],
        [tape.column(d, j) for d in jet.d2],
    )


def _check_dims(args):
    dims = {a.dim for a in args if isinstance(a, Jet)}

    if len(dims) > 1:
        raise DeqganArgumentException(f"Jets of mixed input dimensionality {sorted(dims)}")


def _unary(u, f, df, d2f):
    """
    value f(u), d1 f'(u) u1, d2 f''(u) u1^2 + f'(u) u2
    """
    return Jet(
        f,
        [df * a for a in u.d1],
        [d2f * a * a + df * b for a, b in zip(u.d1, u.d2)],
    )


def _jet_tanh(u):
    tape = u.tape
    a = tape.tanh(u.value)
    s = 1.0 - a * a
    return _unary(u, a, s, -2.0 * a * s)


def _jet_exp(u):
    e = u.tape.exp(u.value)
    return _unary(u, e, e, e)


def _jet_log(u):
    tape = u.tape
    inv = 1.0 / u.value
    return _unary(u, tape.log(u.value), inv, -(inv * inv))


def _jet_sigmoid(u):
    s = u.tape.sigmoid(u.value)
    ds = s * (1.0 - s)
    return _unary(u, s, ds, ds * (1.0 - 2.0 * s))


def _jet_pow(u, n):
    if int(n) != n:
        raise DeqganArgumentException(f"Only integer powers are supported, got {n}")

    n = int(n)

    if n == 0:
        return jet_constant(u.tape, np.ones_like(u.value.value), u.dim)

    if n == 1:
        return u

    tape = u.tape
    df = n * tape.pow(u.value, n - 1)
    d2f = n * (n - 1) * tape.pow(u.value, n - 2) if n != 2 else tape.constant(2.0)

    return _unary(u, tape.pow(u.value, n), df, d2f)


def _jet_neg(u):
    tape = u.tape
    return Jet(tape.neg(u.value), [tape.neg(a) for a in u.d1], [tape.neg(b) for b in u.d2])


def _jet_add(u, v):
    return Jet(
        u.value + v.value,
        [a + b for a, b in zip(u.d1, v.d1)],
        [a + b for a, b in zip(u.d2, v.d2)],
    )


def _jet_sub(u, v):
    return Jet(
        u.value - v.value,
        [a - b for a, b in zip(u.d1, v.d1)],
        [a - b for a, b in zip(u.d2, v.d2)],
    )


def _jet_mul(u, v):
    return Jet(
        u.value * v.value,
        [a * v.value + u.value * b for a, b in zip(u.d1, v.d1)],
        [
            a2 * v.value + 2.0 * a1 * b1 + u.value * b2
            for a1, b1, a2, b2 in zip(u.d1, v.d1, u.d2, v.d2)
        ],
    )


def _jet_div(u, v):
    return _jet_mul(u, _jet_pow(v, -1))


def _jet_affine(u, w, b=None):
    """
    Linear layer over the width axis, bias only touches the value.
    """
    tape = u.tape
    value = tape.matmul(u.value, w) if b is None else tape.affine(u.value, w, b)
    return Jet(value, [tape.matmul(a, w) for a in u.d1], [tape.matmul(a, w) for a in u.d2])


def _jet_scalar(f, u, v):
    """
    Binary op where one side is constant with respect to the inputs.
    """
    if isinstance(u, Jet):
        jet, c, jet_first = u, v, True
    else:
        jet, c, jet_first = v, u, False

    if f == "add":
        return Jet(jet.value + c, jet.d1, jet.d2)

    if f == "sub" and jet_first:
        return Jet(jet.value - c, jet.d1, jet.d2)

    if f == "sub":
        return Jet(c - jet.value, [-a for a in jet.d1], [-b for b in jet.d2])

    if f == "mul":
        return Jet(jet.value * c, [a * c for a in jet.d1], [b * c for b in jet.d2])

    if jet_first:
        return Jet(jet.value / c, [a / c for a in jet.d1], [b / c for b in jet.d2])

    return _jet_scalar("mul", c, _jet_pow(jet, -1))


_UNARY = {
    "tanh": _jet_tanh,
    "exp": _jet_exp,
    "log": _jet_log,
    "sigmoid": _jet_sigmoid,
    "neg": _jet_neg,
}

_BINARY = {
    "add": _jet_add,
    "sub": _jet_sub,
    "mul": _jet_mul,
    "div": _jet_div,
}


def jet_apply(f, *args, **params):
    """
    Propagate jets through the primitive ``f``.

    Unary: tanh, exp, log, sigmoid, neg, pow (``n=`` keyword).
    Binary: add, sub, mul, div; one side may be a plain number or array.
    affine: ``jet_apply("affine", jet, W, b)`` with W, b tape nodes.
    """
    jets = [a for a in args if isinstance(a, Jet)]

    if not jets:
        raise DeqganArgumentException(f"jet_apply('{f}') needs at least one Jet argument")

    _check_dims(jets)

    if f in _UNARY:
        return _UNARY[f](args[0])

    if f == "pow":
        return _jet_pow(args[0], params["n"])

    if f in _BINARY:
        u, v = args

        if isinstance(u, Jet) and isinstance(v, Jet):
            return _BINARY[f](u, v)

        return _jet_scalar(f, u, v)

    if f == "affine":
        return _jet_affine(*args)

    raise DeqganArgumentException(f"Unknown jet primitive '{f}'")


__all__ = [
    "GradientMap",
    "Jet",
    "Node",
    "Tape",
    "backward",
    "jet_apply",
    "jet_column",
    "jet_constant",
    "jet_inputs",
    "jet_lift",
    "jet_stack",
]
