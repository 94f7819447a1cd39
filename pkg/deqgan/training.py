# -*- coding: utf-8 -*-
"""
Adversarial and classical residual trainers, evaluation and curve
post-processing.
"""

# python std lib
import copy
import logging
import time

# deqgan imports
from deqgan.autodiff import Tape, jet_inputs
from deqgan.constants import (
    CLASSICAL_PRESETS,
    LOGIT_LIMIT,
    LOSS_CHOICES,
    ORACLE_TOLERANCE,
    PRESETS,
    PROBLEM_KEYS,
    TRAIN_DEFAULTS,
)
from deqgan.exceptions import (
    DeqganArgumentException,
    DeqganConfigException,
    DeqganTrainingException,
)
from deqgan.nets import AdamState, Mlp, adam_step, decay_lr, forward
from deqgan.oracles import load_truth
from deqgan.problems import analytic_solution, build_lhs, get_problem

# 3rd party imports
import numpy as np


log = logging.getLogger(__name__)

CURVE_COLUMNS = ["iteration", "g_loss", "d_loss", "mse_raw", "mse_smoothed"]


class TrainConfig():
    """
    Everything one training run depends on. Start from ``from_preset`` to get
    the tuned hyperparameters of a problem.

    Residual losses pick up ``CLASSICAL_PRESETS`` on top of the problem
    column, explicit keyword arguments win over both.
    """

    FIELDS = ["problem"] + list(PRESETS["exp"].keys()) + list(TRAIN_DEFAULTS.keys()) + ["constants"]

    def __init__(self, problem, **kwargs):
        unknown = sorted(set(kwargs) - set(self.FIELDS))

        if unknown:
            raise DeqganConfigException(f"Unknown training options: {', '.join(unknown)}")

        if problem not in PROBLEM_KEYS:
            raise DeqganConfigException(f"Unknown problem '{problem}', valid problems are {', '.join(PROBLEM_KEYS)}")

        self.problem = problem
        settings = dict(copy.deepcopy(TRAIN_DEFAULTS), constants={})
        settings.update(copy.deepcopy(PRESETS[problem]))

        if kwargs.get("loss", settings["loss"]) != "gan":
            settings.update(copy.deepcopy(CLASSICAL_PRESETS.get(problem, {})))

        settings.update(kwargs)

        for name, value in settings.items():
            setattr(self, name, value)

        self.gen_betas = tuple(self.gen_betas)
        self.disc_betas = tuple(self.disc_betas)
        self.validate()

    @classmethod
    def from_preset(cls, key, **overrides):
        return cls(str(key).lower(), **overrides)

    def validate(self):
        if self.loss not in LOSS_CHOICES:
            raise DeqganConfigException(f"Unknown loss '{self.loss}', valid losses are {', '.join(LOSS_CHOICES)}")

        for name in ["gamma", "gamma_disc"]:
            gamma = getattr(self, name)

            if gamma is not None and not 0.0 < gamma <= 1.0:
                raise DeqganConfigException(f"{name} must be in (0, 1], got {gamma}")

        if self.tau <= 0:
            raise DeqganConfigException(f"tau must be positive, got {self.tau}")

    def replace(self, **kwargs):
        data = self.to_dict()
        data.update(kwargs)
        return TrainConfig(**data)

    def to_dict(self):
        data = {name: copy.deepcopy(getattr(self, name)) for name in self.FIELDS}
        data["gen_betas"] = list(self.gen_betas)
        data["disc_betas"] = list(self.disc_betas)
        return data

    @classmethod
    def from_dict(cls, data):
        return cls(**data)

    def __eq__(self, other):
        return isinstance(other, TrainConfig) and self.to_dict() == other.to_dict()

    def __repr__(self):
        return f"TrainConfig({self.problem}, loss={self.loss}, seed={self.seed}, N={self.num_iterations})"


class RunRecord():
    """
    Per iteration losses and validation MSE of one run.

    ``final_mse`` is the minimum of the smoothed validation series, so it is
    reproducible from the stored series.
    """

    def __init__(self, config, g_loss=None, d_loss=None, mse=None, wall_clock=0.0, status="ok", error=None):
        self.config = config
        self.g_loss = list(g_loss or [])
        self.d_loss = list(d_loss or [])
        self.mse = list(mse or [])
        self.wall_clock = wall_clock
        self.status = status
        self.error = error

    @property
    def iterations(self):
        return len(self.g_loss)

    @property
    def seeds(self):
        seed = self.config.get("seed")
        perturb = self.config.get("perturb_seed")

        return {"weights": seed, "perturbation": seed if perturb is None else perturb}

    def smoothed(self):
        return moving_average(self.mse, self.config.get("smoothing_window", 50))

    @property
    def final_mse(self):
        smoothed = self.smoothed()

        if smoothed.size == 0 or np.all(np.isnan(smoothed)):
            return float("nan")

        return float(np.nanmin(smoothed))

    def curve_rows(self):
        smoothed = self.smoothed()

        for i in range(self.iterations):
            yield [i + 1, self.g_loss[i], self.d_loss[i], self.mse[i], smoothed[i]]

    def to_dict(self):
        return {
            "config": self.config,
            "loss": self.config.get("loss"),
            "problem": self.config.get("problem"),
            "final_mse": self.final_mse,
            "iterations": self.iterations,
            "wall_clock": self.wall_clock,
            "seeds": self.seeds,
            "status": self.status,
            "error": self.error,
            "series": {"g_loss": self.g_loss, "d_loss": self.d_loss, "mse": self.mse},
        }

    @classmethod
    def from_dict(cls, data):
        series = data.get("series", {})
        return cls(
            data["config"],
            g_loss=series.get("g_loss"),
            d_loss=series.get("d_loss"),
            mse=series.get("mse"),
            wall_clock=data.get("wall_clock", 0.0),
            status=data.get("status", "ok"),
            error=data.get("error"),
        )


class TrainStates():
    """
    Optimizer state of both players plus their decay rates.
    """

    def __init__(self, gen, disc=None, gamma=1.0, gamma_disc=None):
        self.gen = gen
        self.disc = disc
        self.gamma = gamma
        self.gamma_disc = gamma if gamma_disc is None else gamma_disc

    def decay(self):
        decay_lr(self.gen, self.gamma)

        if self.disc is not None:
            decay_lr(self.disc, self.gamma_disc)


def perturb_mesh(mesh, tau, rng, variance=False):
    """
    Add N(0, spacing / tau) noise to every coordinate and clamp to the domain.

    ``spacing / tau`` is the standard deviation unless ``variance`` is set.

    :type mesh: deqgan.problems.Mesh
    :type tau: float
    :type rng: numpy.random.Generator

    :rtype: numpy.ndarray
    """
    if not tau > 0:
        raise DeqganArgumentException(f"Perturbation precision tau must be positive, got {tau}")

    scale = np.asarray(mesh.spacing) / tau

    if variance:
        scale = np.sqrt(scale)

    points = mesh.points + rng.normal(size=mesh.points.shape) * scale
    low = np.array([lo for lo, _ in mesh.domain])
    high = np.array([hi for _, hi in mesh.domain])

    return np.clip(points, low, high)


def _residual(G, problem, points, tape):
    coords, stacked = jet_inputs(tape, points)
    psi = forward(G, stacked)
    adjusted = problem.adjust(coords, psi)

    return coords, adjusted, build_lhs(problem, coords, adjusted)


def residual_loss(tape, lhs, kind, delta=1.0):
    """
    Mean L1, L2 or Huber loss of a residual batch against zero.
    """
    if kind == "l2":
        return tape.mean(lhs * lhs)

    if kind == "l1":
        return tape.mean(tape.abs(lhs))

    if kind == "huber":
        return tape.mean(tape.huber(lhs, delta))

    raise DeqganConfigException(f"Unknown residual loss '{kind}'")


def _logits(tape, D, x, layers):
    return tape.clip(D.forward_values(tape, x, layers), -LOGIT_LIMIT, LOGIT_LIMIT)


def adversarial_losses(tape, D, lhs, layers=None, non_saturating=False, mirror=False):
    """
    Generator and discriminator objectives in logit form.

    g_loss = mean log(1 - sigmoid(D(lhs))), d_loss = mean log sigmoid(D(0))
    + mean log(1 - sigmoid(D(lhs))). The real batch is always zero and the
    logits are clipped to +-LOGIT_LIMIT, so both losses stay bounded.

    ``non_saturating`` swaps g_loss for mean log(1 + exp(-D(lhs))), that is
    -log sigmoid. ``mirror`` feeds D the batch ``-lhs`` next to ``lhs``; the
    zero real batch does not change under that sign flip, and every fake mean
    runs over both halves.
    """
    layers = layers or D.register(tape)
    real = tape.constant(np.zeros_like(lhs.value))
    fakes = [lhs, -lhs] if mirror else [lhs]
    d_fakes = [_logits(tape, D, fake, layers) for fake in fakes]
    d_real = _logits(tape, D, real, layers)

    def fake_mean(terms):
        return sum(tape.mean(t) for t in terms) / len(terms)

    fake_term = fake_mean([-tape.softplus(d) for d in d_fakes])
    d_loss = tape.mean(-tape.softplus(-d_real)) + fake_term

    if non_saturating:
        g_loss = fake_mean([tape.softplus(-d) for d in d_fakes])
    else:
        g_loss = fake_term

    return g_loss, d_loss


def _check_finite(value, name, iteration):
    if not np.isfinite(value):
        raise DeqganTrainingException(f"{name} is {value} at iteration {iteration}", iteration=iteration)


def deqgan_step(G, D, problem, mesh, states, rng, tau=3.0, perturb_variance=False, non_saturating=True,
                mirror=True, update_generator=True, update_discriminator=True, iteration=None):
    """
    One full batch adversarial iteration. Both gradients come from the same
    residual batch; G is updated first, then D, then both rates decay.

    :rtype: tuple (float, float)
    """
    if D.input_dim != problem.output_dim or G.output_dim != problem.output_dim:
        raise DeqganArgumentException(
            f"Networks do not fit problem '{problem.key}' with {problem.output_dim} outputs"
        )

    points = perturb_mesh(mesh, tau, rng, perturb_variance)
    D.power_iterate()

    tape = Tape()
    _, _, lhs = _residual(G, problem, points, tape)
    g_loss, d_loss = adversarial_losses(tape, D, lhs, non_saturating=non_saturating, mirror=mirror)

    g_value, d_value = float(g_loss.value), float(d_loss.value)
    _check_finite(g_value, "Generator loss", iteration)
    _check_finite(d_value, "Discriminator loss", iteration)

    g_params, d_params = G.parameters(), D.parameters()
    g_grads = tape.backward(g_loss).subset(g_params) if update_generator else None
    d_grads = tape.backward(d_loss).subset(d_params) if update_discriminator else None

    if update_generator:
        adam_step(g_params, g_grads, states.gen, iteration=iteration)

    if update_discriminator:
        adam_step(d_params, d_grads, states.disc, ascend=True, iteration=iteration)

    states.decay()

    return g_value, d_value


def classical_step(G, problem, mesh, state, loss_kind, rng, tau=3.0, perturb_variance=False, huber_delta=1.0,
                   iteration=None):
    """
    One Adam descent step on the mean residual loss.

    :type state: TrainStates
    """
    points = perturb_mesh(mesh, tau, rng, perturb_variance)

    tape = Tape()
    _, _, lhs = _residual(G, problem, points, tape)
    loss = residual_loss(tape, lhs, loss_kind, huber_delta)
    value = float(loss.value)
    _check_finite(value, "Residual loss", iteration)

    params = G.parameters()
    adam_step(params, tape.backward(loss).subset(params), state.gen, iteration=iteration)
    state.decay()

    return value


def predict(G, problem, points):
    """
    Condition adjusted prediction and absolute residual at ``points``.

    :rtype: tuple (numpy.ndarray, numpy.ndarray), both (batch, output_dim)
    """
    tape = Tape()
    _, adjusted, lhs = _residual(G, problem, points, tape)
    values = np.hstack([a.value.value for a in adjusted])

    return values, np.abs(lhs.value)


def evaluate_mse(G, problem, points, truth=None, cache=None):
    """
    Mean over points and outputs of the squared error against ground truth.
    Never feeds any gradient.
    """
    if truth is None:
        truth = load_truth(problem, points, cache)

    prediction, _ = predict(G, problem, points)

    return float(np.mean((prediction - truth) ** 2))


def moving_average(series, window=50):
    """
    Trailing simple moving average; the first ``window - 1`` entries average
    the available prefix. A NaN only poisons the windows that contain it.
    """
    if window < 1:
        raise DeqganArgumentException(f"Moving average window must be >= 1, got {window}")

    series = np.asarray(series, dtype=np.float64)

    if series.size == 0:
        return series

    missing = np.isnan(series)
    total = np.cumsum(np.where(missing, 0.0, series))
    holes = np.cumsum(missing)

    out = total.copy()
    out[window:] = total[window:] - total[:-window]
    gaps = holes.copy()
    gaps[window:] = holes[window:] - holes[:-window]
    counts = np.minimum(np.arange(1, series.size + 1), window)

    out = out / counts
    out[gaps > 0] = np.nan

    return out


def build_meshes(config):
    """
    Problem, training mesh and the denser evaluation mesh of a config.
    """
    problem = get_problem(config.problem, config.constants, config.condition)
    mesh = problem.mesh(config.mesh_size)

    return problem, mesh, problem.mesh(config.mesh_size * config.eval_density)


class Trainer():
    """
    Owns the networks, optimizer states, rng and meshes of one run.

    ``truth`` holds the reference values on the evaluation mesh. When it is
    missing and no closed form exists the validation series is NaN; training
    itself never depends on it.
    """

    def __init__(self, config, truth=None, cache=None, generator=None, discriminator=None):
        self.config = config
        self.problem, self.mesh, self.eval_mesh = build_meshes(config)
        self.adversarial = config.loss == "gan"

        self.G = generator or Mlp(
            self.problem.input_dim,
            self.problem.output_dim,
            config.gen_units,
            config.gen_layers,
            residual=config.residual,
            seed=config.seed,
            name="G",
        )
        self.D = None

        if self.adversarial:
            self.D = discriminator or Mlp(
                self.problem.output_dim,
                1,
                config.disc_units,
                config.disc_layers,
                residual=config.residual,
                spectral_norm=config.spectral_norm,
                seed=[config.seed, 1],
                name="D",
            )

        perturb_seed = config.seed if config.perturb_seed is None else config.perturb_seed
        self.rng = np.random.default_rng(perturb_seed)

        self.states = TrainStates(
            AdamState(self.G.parameters(), config.lr_gen, config.gen_betas, config.adam_eps),
            AdamState(self.D.parameters(), config.lr_disc, config.disc_betas, config.adam_eps) if self.D else None,
            gamma=config.gamma,
            gamma_disc=config.gamma_disc,
        )

        self.truth = truth if truth is not None else self._resolve_truth(cache)

    def _resolve_truth(self, cache):
        if self.problem.has_analytic:
            return analytic_solution(self.problem, self.eval_mesh.points)

        if cache is not None:
            truth = cache.load(self.problem.key, ORACLE_TOLERANCE, self.eval_mesh.points)

            if truth is not None:
                return truth

        log.warning(f"No ground truth for '{self.problem.key}', validation MSE will be NaN")

        return None

    @property
    def nets(self):
        return [net for net in [self.G, self.D] if net is not None]

    def step(self, iteration):
        c = self.config

        if self.adversarial:
            return deqgan_step(
                self.G,
                self.D,
                self.problem,
                self.mesh,
                self.states,
                self.rng,
                tau=c.tau,
                perturb_variance=c.perturb_variance,
                non_saturating=c.non_saturating,
                mirror=c.mirror_residuals,
                iteration=iteration,
            )

        loss = classical_step(
            self.G,
            self.problem,
            self.mesh,
            self.states,
            c.loss,
            self.rng,
            tau=c.tau,
            perturb_variance=c.perturb_variance,
            huber_delta=c.huber_delta,
            iteration=iteration,
        )

        return loss, float("nan")

    def evaluate(self):
        if self.truth is None:
            return float("nan")

        return evaluate_mse(self.G, self.problem, self.eval_mesh.points, self.truth)

    def train(self, num_iterations=None):
        """
        Run the configured number of iterations.

        :rtype: RunRecord
        """
        n = num_iterations or self.config.num_iterations
        record = RunRecord(self.config.to_dict())
        record.config["num_iterations"] = n
        started = time.perf_counter()
        mse = float("nan")

        log.info(f"Training {self.problem.key} with {self.config.loss} loss for {n} iterations")

        for i in range(1, n + 1):
            try:
                g_loss, d_loss = self.step(i)
            except DeqganTrainingException as e:
                record.status = "failed"
                record.error = str(e)
                record.wall_clock = time.perf_counter() - started
                e.record = record
                raise

            if (i - 1) % self.config.eval_every == 0:
                mse = self.evaluate()

            record.g_loss.append(g_loss)
            record.d_loss.append(d_loss)
            record.mse.append(mse)

            if i % self.config.log_every == 0 or i == n:
                log.info(f"iteration {i}: g_loss={g_loss:.4e} d_loss={d_loss:.4e} mse={mse:.4e}")

        record.wall_clock = time.perf_counter() - started

        return record


def run_trials(config, n_trials=5, truth=None, cache=None, callback=None):
    """
    Repeat a run with weight and perturbation seeds 0 .. n_trials - 1.

    ``callback(trial, trainer, record)`` sees every finished trial while its
    networks are still alive.

    :rtype: list of RunRecord
    """
    records = []

    for trial in range(n_trials):
        trial_config = config.replace(seed=trial, perturb_seed=trial)
        log.info(f"Trial {trial + 1}/{n_trials}")
        trainer = Trainer(trial_config, truth=truth, cache=cache)
        record = trainer.train()
        records.append(record)

        if callback is not None:
            callback(trial, trainer, record)

    return records


def trial_bands(records):
    """
    Per iteration median and 25/75 percentiles of the smoothed MSE across runs.
    """
    if not records:
        raise DeqganArgumentException("trial_bands needs at least one record")

    curves = np.vstack([r.smoothed() for r in records])

    return {
        "iteration": np.arange(1, curves.shape[1] + 1),
        "median": np.nanmedian(curves, axis=0),
        "p25": np.nanpercentile(curves, 25, axis=0),
        "p75": np.nanpercentile(curves, 75, axis=0),
    }


__all__ = [
    "CURVE_COLUMNS",
    "RunRecord",
    "TrainConfig",
    "TrainStates",
    "Trainer",
    "adversarial_losses",
    "build_meshes",
    "classical_step",
    "deqgan_step",
    "evaluate_mse",
    "moving_average",
    "perturb_mesh",
    "predict",
    "residual_loss",
    "run_trials",
    "trial_bands",
]
