# -*- coding: utf-8 -*-

# python std lib
import json
import logging

# deqgan imports
from deqgan.autodiff import Jet, jet_apply, jet_stack
from deqgan.constants import SPECTRAL_SIGMA_FLOOR
from deqgan.exceptions import (
    DeqganArgumentException,
    DeqganConfigException,
    DeqganTrainingException,
)

# 3rd party imports
import numpy as np


log = logging.getLogger(__name__)


class SpectralState():
    """
    Power iteration state of one layer. ``u`` estimates the leading left
    singular vector and is kept between training steps.
    """

    def __init__(self, u, v=None):
        u = np.asarray(u, dtype=np.float64)
        self.u = _renormalized(u, np.full(u.shape, 1.0 / np.sqrt(u.size)))
        self.v = None if v is None else np.asarray(v, dtype=np.float64)
        self.sigma = None
        self.degenerate = 0

    @classmethod
    def for_weight(cls, weight, rng):
        return cls(rng.normal(size=weight.shape[0]))


def _renormalized(candidate, previous):
    """
    ``candidate`` scaled to unit length, or ``previous`` when it is too short
    to carry a direction.
    """
    norm = np.linalg.norm(candidate)

    if norm < SPECTRAL_SIGMA_FLOOR:
        return previous

    return candidate / norm


def power_iterate(weight, state):
    """
    One power iteration step, updates ``state`` in place and returns sigma.

    Directions of a (near) zero weight are left where they were, so ``u`` and
    ``v`` stay unit vectors and recover once the weight does.
    """
    if state.u.shape[0] != weight.shape[0]:
        raise DeqganArgumentException(
            f"Spectral state of length {state.u.shape[0]} does not match {weight.shape[0]} rows"
        )

    if state.v is None:
        state.v = np.full(weight.shape[1], 1.0 / np.sqrt(weight.shape[1]))

    state.v = _renormalized(weight.T @ state.u, state.v)
    state.u = _renormalized(weight @ state.v, state.u)
    sigma = float(state.u @ weight @ state.v)

    if sigma < SPECTRAL_SIGMA_FLOOR:
        state.degenerate += 1
        log.warning(f"Degenerate layer in spectral normalization, sigma={sigma:.3e} ({state.degenerate} so far)")
        sigma = SPECTRAL_SIGMA_FLOOR

    state.sigma = sigma

    return sigma


def spectral_normalize(weight, state):
    """
    Divide ``weight`` by its spectral norm estimated with one power iteration.

    :type weight: numpy.ndarray
    :type state: SpectralState

    :rtype: numpy.ndarray
    """
    sigma = power_iterate(weight, state)
    return weight / sigma


def _xavier_uniform(rng, fan_out, fan_in):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_out, fan_in))


class Mlp():
    """
    Input projection, ``num_layers`` square tanh layers, output projection.

    Hidden layer i computes tanh(W_i h + b_i) + h when ``residual`` is set.
    Projections are plain affine maps.
    """

    def __init__(self, input_dim, output_dim, hidden_units, num_layers, residual=True,
                 spectral_norm=False, seed=0, name="net"):
        if min(input_dim, output_dim, hidden_units, num_layers) < 1:
            raise DeqganArgumentException("Network dimensions must be positive")

        self.input_dim = input_dim
        self.output_dim = output_dim
        self.hidden_units = hidden_units
        self.num_layers = num_layers
        self.residual = residual
        self.spectral_norm = spectral_norm
        self.seed = seed
        self.name = name

        rng = np.random.default_rng(seed)
        shapes = [(hidden_units, input_dim)]
        shapes += [(hidden_units, hidden_units)] * num_layers
        shapes += [(output_dim, hidden_units)]

        self.weights = [_xavier_uniform(rng, *shape) for shape in shapes]
        self.biases = [np.zeros(shape[0]) for shape in shapes]
        self.spectral = [SpectralState.for_weight(w, rng) for w in self.weights] if spectral_norm else None

    @property
    def num_affine(self):
        return len(self.weights)

    def parameters(self):
        """
        Name to array mapping. The arrays are the live weights, updating them
        in place updates the network.
        """
        params = {}

        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            params[f"{self.name}.W{i}"] = w
            params[f"{self.name}.b{i}"] = b

        return params

    def power_iterate(self):
        """
        Advance every layer's spectral state by one step.
        """
        if self.spectral:
            for w, state in zip(self.weights, self.spectral):
                power_iterate(w, state)

    def register(self, tape):
        """
        Put the parameters on ``tape``. Returns (weights, biases) as nodes with
        spectral normalization applied when enabled.
        """
        weights, biases = [], []

        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            w_node = tape.parameter(f"{self.name}.W{i}", w)
            b_node = tape.parameter(f"{self.name}.b{i}", b)

            if self.spectral:
                state = self.spectral[i]

                if state.v is None:
                    power_iterate(w, state)

                # sigma = u^T W v with u, v held fixed
                sigma = tape.sum(w_node * np.outer(state.u, state.v))
                w_node = w_node / _floor(tape, sigma)

            weights.append(w_node)
            biases.append(b_node)

        return weights, biases

    def forward_values(self, tape, x, layers=None):
        """
        Plain forward pass of a (batch, input_dim) node, no input derivatives.
        """
        x = tape.lift(x)

        if x.value.ndim != 2 or x.value.shape[1] != self.input_dim:
            raise DeqganArgumentException(
                f"{self.name} expects input of width {self.input_dim}, got shape {x.value.shape}"
            )

        weights, biases = layers or self.register(tape)
        h = tape.affine(x, weights[0], biases[0])

        for w, b in zip(weights[1:-1], biases[1:-1]):
            a = tape.tanh(tape.affine(h, w, b))
            h = a + h if self.residual else a

        return tape.affine(h, weights[-1], biases[-1])

    def snapshot(self):
        layers = []

        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            layer = {
                "weight": {"shape": list(w.shape), "data": w.ravel().tolist()},
                "bias": {"shape": list(b.shape), "data": b.ravel().tolist()},
            }

            if self.spectral:
                layer["u"] = self.spectral[i].u.tolist()

            layers.append(layer)

        return {
            "name": self.name,
            "input_dim": self.input_dim,
            "output_dim": self.output_dim,
            "hidden_units": self.hidden_units,
            "num_layers": self.num_layers,
            "residual": self.residual,
            "spectral_norm": self.spectral_norm,
            "seed": self.seed,
            "layers": layers,
        }

    @classmethod
    def from_snapshot(cls, data):
        net = cls(
            data["input_dim"],
            data["output_dim"],
            data["hidden_units"],
            data["num_layers"],
            residual=data["residual"],
            spectral_norm=data["spectral_norm"],
            seed=data["seed"],
            name=data["name"],
        )

        if len(data["layers"]) != net.num_affine:
            raise DeqganArgumentException(
                f"Snapshot has {len(data['layers'])} layers, architecture needs {net.num_affine}"
            )

        for i, layer in enumerate(data["layers"]):
            weight = np.asarray(layer["weight"]["data"], dtype=np.float64).reshape(layer["weight"]["shape"])
            bias = np.asarray(layer["bias"]["data"], dtype=np.float64).reshape(layer["bias"]["shape"])

            if weight.shape != net.weights[i].shape or bias.shape != net.biases[i].shape:
                raise DeqganArgumentException(f"Layer {i} of snapshot has the wrong shape")

            net.weights[i][...] = weight
            net.biases[i][...] = bias

            if net.spectral and "u" in layer:
                net.spectral[i] = SpectralState(layer["u"])

        return net


def _floor(tape, sigma):
    if sigma.value < SPECTRAL_SIGMA_FLOOR:
        return tape.constant(SPECTRAL_SIGMA_FLOOR)

    return sigma


def forward(net, inputs, tape=None):
    """
    Run ``net`` on jets.

    ``inputs`` is either one (batch, input_dim) Jet or a list of per
    coordinate (batch, 1) Jets. Returns a (batch, output_dim) Jet.
    """
    if not isinstance(inputs, Jet):
        inputs = jet_stack(inputs)

    if inputs.value.value.shape[1] != net.input_dim:
        raise DeqganArgumentException(
            f"{net.name} expects input of width {net.input_dim}, got {inputs.value.value.shape[1]}"
        )

    tape = tape or inputs.tape
    weights, biases = net.register(tape)

    h = jet_apply("affine", inputs, weights[0], biases[0])

    for w, b in zip(weights[1:-1], biases[1:-1]):
        a = jet_apply("tanh", jet_apply("affine", h, w, b))
        h = a + h if net.residual else a

    return jet_apply("affine", h, weights[-1], biases[-1])


def save_weights(path, nets):
    """
    Write a JSON snapshot of several networks keyed by name.
    """
    from deqgan.artifacts import atomic_write

    payload = {net.name: net.snapshot() for net in nets}
    atomic_write(path, json.dumps(payload))


def load_weights(path):
    with open(path) as f:
        payload = json.load(f)

    return {name: Mlp.from_snapshot(data) for name, data in payload.items()}


class AdamState():
    """
    Moments of every parameter plus the step counter.
    """

    def __init__(self, params, lr, betas=(0.9, 0.999), eps=1e-8):
        self.lr = float(lr)
        self.beta1, self.beta2 = (float(b) for b in betas)
        self.eps = eps
        self.step = 0
        self.m = {name: np.zeros_like(p) for name, p in params.items()}
        self.v = {name: np.zeros_like(p) for name, p in params.items()}


def adam_step(params, grads, state, ascend=False, iteration=None):
    """
    One bias corrected Adam update, in place.

    ``ascend`` climbs the gradient instead of descending it.
    """
    for name, grad in grads.items():
        if name not in params:
            continue

        if not np.all(np.isfinite(grad)):
            raise DeqganTrainingException(
                f"Non-finite gradient for {name} at iteration {iteration}",
                iteration=iteration,
                parameter=name,
            )

    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2

    for name, p in params.items():
        g = grads[name]

        if ascend:
            g = -g

        state.m[name] = b1 * state.m[name] + (1.0 - b1) * g
        state.v[name] = b2 * state.v[name] + (1.0 - b2) * g * g
        m_hat = state.m[name] / (1.0 - b1 ** t)
        v_hat = state.v[name] / (1.0 - b2 ** t)
        p -= state.lr * m_hat / (np.sqrt(v_hat) + state.eps)

    return params


def decay_lr(state, gamma):
    """
    Exponential learning rate decay, applied once per iteration.
    """
    if not 0.0 < gamma <= 1.0:
        raise DeqganConfigException(f"Learning rate decay gamma must be in (0, 1], got {gamma}")

    state.lr *= gamma

    return state


__all__ = [
    "AdamState",
    "Mlp",
    "SpectralState",
    "adam_step",
    "decay_lr",
    "forward",
    "load_weights",
    "power_iterate",
    "save_weights",
    "spectral_normalize",
]
