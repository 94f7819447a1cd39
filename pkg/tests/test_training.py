# -*- coding: utf-8 -*-

# python std lib
import math

# deqgan imports
from deqgan.autodiff import Tape
from deqgan.constants import CLASSICAL_PRESETS, LOGIT_LIMIT, PRESETS, SIGMA_CLAMP
from deqgan.exceptions import (
    DeqganArgumentException,
    DeqganConfigException,
    DeqganTrainingException,
)
from deqgan.nets import AdamState, Mlp
from deqgan.problems import Mesh, Problem
from deqgan.training import (
    RunRecord,
    TrainConfig,
    TrainStates,
    Trainer,
    adversarial_losses,
    classical_step,
    deqgan_step,
    evaluate_mse,
    moving_average,
    perturb_mesh,
    residual_loss,
    run_trials,
    trial_bands,
)

# 3rd party imports
import numpy as np
import pytest


def _small(problem="exp", **kwargs):
    settings = dict(num_iterations=15, mesh_size=20, gen_units=8, gen_layers=2, disc_units=6, disc_layers=2)
    settings.update(kwargs)
    return TrainConfig.from_preset(problem, **settings)


def _weights(nets):
    return [w.copy() for net in nets for w in net.weights + net.biases]


def test_perturbation_standard_deviation():
    mesh = Mesh([(0.0, 10.0)], [101])
    rng = np.random.default_rng(0)
    noise = np.concatenate([(perturb_mesh(mesh, 3.0, rng) - mesh.points)[1:-1, 0] for _ in range(1000)])

    assert abs(noise.std() / (0.1 / 3.0) - 1.0) < 0.05
    assert abs(noise.mean()) < 1e-3


def test_perturbation_as_variance():
    mesh = Mesh([(0.0, 10.0)], [101])
    rng = np.random.default_rng(1)
    noise = np.concatenate([(perturb_mesh(mesh, 3.0, rng, variance=True) - mesh.points)[5:-5, 0]
                            for _ in range(300)])

    assert abs(noise.std() / math.sqrt(0.1 / 3.0) - 1.0) < 0.05


def test_infinite_precision_keeps_the_mesh():
    mesh = Mesh([(0.0, 1.0)], [11])

    assert np.array_equal(perturb_mesh(mesh, math.inf, np.random.default_rng(0)), mesh.points)


def test_two_dimensional_perturbation_stays_in_domain():
    mesh = Problem("pos").mesh(32)
    points = perturb_mesh(mesh, 3.0, np.random.default_rng(2))
    moved = points != mesh.points

    assert points.shape == mesh.points.shape
    assert points.min() >= 0.0 and points.max() <= 1.0
    assert moved[:, 0].any() and moved[:, 1].any()
    assert not np.array_equal(points[:, 0] - mesh.points[:, 0], points[:, 1] - mesh.points[:, 1])


def test_perturbation_needs_positive_tau():
    with pytest.raises(DeqganArgumentException):
        perturb_mesh(Mesh([(0.0, 1.0)], [3]), 0.0, np.random.default_rng(0))


@pytest.mark.parametrize("residual, kind, expected", [
    (0.5, "huber", 0.125),
    (2.0, "huber", 1.5),
    (2.0, "l1", 2.0),
    (2.0, "l2", 4.0),
    (-2.0, "l1", 2.0),
])
def test_residual_losses(residual, kind, expected):
    tape = Tape()
    loss = residual_loss(tape, tape.constant([[residual]]), kind)

    assert float(loss.value) == expected


def test_huber_matches_half_l2_inside_delta():
    residuals = np.random.default_rng(3).uniform(-1.0, 1.0, size=(50, 1))
    tape = Tape()
    lhs = tape.constant(residuals)

    assert math.isclose(float(residual_loss(tape, lhs, "huber").value),
                        0.5 * float(residual_loss(tape, lhs, "l2").value))


def test_unknown_residual_loss():
    tape = Tape()

    with pytest.raises(DeqganConfigException):
        residual_loss(tape, tape.constant([[1.0]]), "l3")


def _zero_discriminator():
    D = Mlp(1, 1, 4, 2, spectral_norm=False, name="D")

    for p in D.parameters().values():
        p[...] = 0.0

    return D


def test_untrained_discriminator_losses():
    tape = Tape()
    lhs = tape.constant(np.linspace(-1.0, 1.0, 9)[:, None])
    g_loss, d_loss = adversarial_losses(tape, _zero_discriminator(), lhs)

    assert math.isclose(float(d_loss.value), 2.0 * math.log(0.5))
    assert math.isclose(float(g_loss.value), math.log(0.5))


def test_perfect_discriminator_saturates_generator_loss():
    D = _zero_discriminator()
    D.biases[-1][...] = -50.0
    lhs = np.ones((4, 1))
    tape = Tape()
    g_loss, _ = adversarial_losses(tape, D, tape.constant(lhs))
    tape = Tape()
    g_alt, _ = adversarial_losses(tape, D, tape.constant(lhs), non_saturating=True)

    assert abs(float(g_loss.value)) <= 1.01 * SIGMA_CLAMP
    assert float(g_alt.value) == pytest.approx(-math.log(SIGMA_CLAMP), rel=1e-12)


@pytest.mark.parametrize("bias", [1e3, -1e3])
def test_huge_logits_are_clamped(bias):
    D = _zero_discriminator()
    D.biases[-1][...] = bias
    lhs = np.full((3, 1), 1e6)

    for non_saturating in [False, True]:
        tape = Tape()
        g_loss, d_loss = adversarial_losses(tape, D, tape.constant(lhs), non_saturating=non_saturating)
        grads = tape.backward(g_loss)

        assert abs(float(g_loss.value)) <= LOGIT_LIMIT + 1e-9
        assert math.isfinite(float(d_loss.value))
        assert not any(grad.any() for grad in grads.values())

    tape = Tape()
    g_loss, d_loss = adversarial_losses(tape, D, tape.constant(lhs))

    if bias > 0:
        assert float(g_loss.value) == pytest.approx(math.log(SIGMA_CLAMP), rel=1e-9)
    else:
        assert float(d_loss.value) == pytest.approx(math.log(SIGMA_CLAMP), rel=1e-9)


def test_mirrored_batch_is_even_in_the_residual():
    D = Mlp(1, 1, 5, 2, spectral_norm=True, seed=4, name="D")
    D.power_iterate()
    values = np.linspace(-0.5, 1.5, 7)[:, None]
    losses = []

    for sign in [1.0, -1.0]:
        tape = Tape()
        g_loss, d_loss = adversarial_losses(tape, D, tape.constant(sign * values), non_saturating=True, mirror=True)
        losses.append((float(g_loss.value), float(d_loss.value)))

    assert losses[0] == pytest.approx(losses[1], rel=1e-12)


def test_mirrored_generator_loss_is_stationary_at_zero():
    D = Mlp(1, 1, 5, 2, spectral_norm=True, seed=6, name="D")
    D.power_iterate()
    tape = Tape()
    lhs = tape.parameter("lhs", np.zeros((4, 1)))
    g_loss, _ = adversarial_losses(tape, D, lhs, non_saturating=True, mirror=True)

    assert np.allclose(tape.backward(g_loss)["lhs"], 0.0, rtol=0, atol=1e-15)

    tape = Tape()
    lhs = tape.parameter("lhs", np.zeros((4, 1)))
    g_loss, _ = adversarial_losses(tape, D, lhs, non_saturating=True)

    assert np.abs(tape.backward(g_loss)["lhs"]).max() > 1e-6


def test_real_batch_is_always_zero():
    D = Mlp(1, 1, 5, 2, seed=4, name="D")
    D.power_iterate()
    gaps = []

    for scale in [0.0, 1.0, 7.5]:
        tape = Tape()
        lhs = tape.constant(scale * np.linspace(-1.0, 1.0, 6)[:, None])
        g_loss, d_loss = adversarial_losses(tape, D, lhs)
        gaps.append(float(d_loss.value) - float(g_loss.value))

    assert gaps[1] == pytest.approx(gaps[0], abs=1e-12)
    assert gaps[2] == pytest.approx(gaps[0], abs=1e-12)


def _players(problem):
    G = Mlp(problem.input_dim, problem.output_dim, 8, 2, seed=0, name="G")
    D = Mlp(problem.output_dim, 1, 6, 2, spectral_norm=True, seed=1, name="D")
    states = TrainStates(AdamState(G.parameters(), 0.01), AdamState(D.parameters(), 0.01), gamma=0.99)

    return G, D, states


@pytest.mark.parametrize("update_generator, update_discriminator", [(True, False), (False, True)])
def test_update_isolation(update_generator, update_discriminator):
    problem = Problem("nas")
    G, D, states = _players(problem)
    g_before, d_before = _weights([G]), _weights([D])

    deqgan_step(G, D, problem, problem.mesh(16), states, np.random.default_rng(0),
                update_generator=update_generator, update_discriminator=update_discriminator)

    g_same = all(np.array_equal(a, b) for a, b in zip(g_before, _weights([G])))
    d_same = all(np.array_equal(a, b) for a, b in zip(d_before, _weights([D])))

    assert g_same != update_generator
    assert d_same != update_discriminator


def test_deqgan_step_decays_both_rates():
    problem = Problem("exp")
    G, D, states = _players(problem)
    states.gamma_disc = 0.5

    deqgan_step(G, D, problem, problem.mesh(10), states, np.random.default_rng(0))

    assert math.isclose(states.gen.lr, 0.0099)
    assert states.disc.lr == 0.005


def test_deqgan_step_checks_network_shapes():
    problem = Problem("sir")
    G, D, states = _players(Problem("exp"))

    with pytest.raises(DeqganArgumentException):
        deqgan_step(G, D, problem, problem.mesh(10), states, np.random.default_rng(0))


def test_classical_step_reduces_loss():
    problem = Problem("exp")
    G = Mlp(1, 1, 10, 2, seed=0, name="G")
    states = TrainStates(AdamState(G.parameters(), 0.01))
    mesh = problem.mesh(30)
    rng = np.random.default_rng(0)
    losses = [classical_step(G, problem, mesh, states, "l2", rng, tau=math.inf) for _ in range(60)]

    assert losses[-1] < losses[0]


def test_non_finite_loss_aborts_with_record():
    config = _small(loss="l2")
    G = Mlp(1, 1, config.gen_units, config.gen_layers, name="G")
    G.weights[0][...] = np.nan

    with pytest.raises(DeqganTrainingException) as excinfo:
        Trainer(config, generator=G).train()

    assert excinfo.value.iteration == 1
    assert excinfo.value.record.status == "failed"
    assert excinfo.value.record.iterations == 0


@pytest.mark.parametrize("loss", ["gan", "l1", "l2", "huber"])
def test_training_is_deterministic(loss):
    config = _small(loss=loss, seed=3)
    first, second = Trainer(config), Trainer(config)
    a, b = first.train(), second.train()

    assert a.g_loss == b.g_loss
    assert a.d_loss == b.d_loss or loss != "gan"
    assert all(np.array_equal(x, y) for x, y in zip(_weights(first.nets), _weights(second.nets)))


def test_training_never_reads_ground_truth():
    config = _small(loss="gan", seed=1)
    truth = np.zeros((config.mesh_size * config.eval_density, 1))
    with_truth, without_truth = Trainer(config, truth=truth), Trainer(config, truth=truth + 5.0)

    a, b = with_truth.train(), without_truth.train()

    assert a.mse != b.mse
    assert all(np.array_equal(x, y) for x, y in zip(_weights(with_truth.nets), _weights(without_truth.nets)))


def test_missing_ground_truth_gives_nan_series():
    config = _small("nlo", loss="l2", num_iterations=3)
    record = Trainer(config).train()

    assert all(math.isnan(m) for m in record.mse)
    assert math.isnan(record.final_mse)


def test_perturbation_seed_is_separate():
    base = _small(loss="l2", seed=2)
    first, second = Trainer(base), Trainer(base.replace(perturb_seed=9))

    assert all(np.array_equal(x, y) for x, y in zip(_weights(first.nets), _weights(second.nets)))

    a, b = first.train(), second.train()

    assert a.g_loss != b.g_loss
    assert b.seeds == {"weights": 2, "perturbation": 9}


def test_zero_network_exp_mse():
    problem = Problem("exp")
    G = Mlp(1, 1, 5, 2, name="G")

    for p in G.parameters().values():
        p[...] = 0.0

    points = problem.mesh(100).points
    expected = np.mean((1.0 - np.exp(-points[:, 0])) ** 2)

    assert math.isclose(evaluate_mse(G, problem, points), expected, rel_tol=1e-12)


def test_moving_average():
    assert np.array_equal(moving_average([3.0] * 7, 4), [3.0] * 7)
    assert moving_average([0.0, 0.0, 0.0, 1.0], 2)[-1] == 0.5

    series = np.random.default_rng(5).normal(size=300)
    smoothed = moving_average(series, 50)
    brute = [series[max(0, i - 49):i + 1].mean() for i in range(300)]

    assert np.allclose(smoothed, brute, rtol=1e-12, atol=1e-10)

    with pytest.raises(DeqganArgumentException):
        moving_average(series, 0)


def test_final_mse_is_min_of_smoothed_series():
    record = RunRecord({"smoothing_window": 2}, mse=[4.0, 2.0, float("nan"), 1.0, 3.0])

    assert record.final_mse == 2.0
    assert math.isnan(RunRecord({}, mse=[float("nan")] * 3).final_mse)
    assert math.isnan(RunRecord({}).final_mse)


def test_run_record_round_trip():
    record = RunRecord({"problem": "exp", "loss": "l2", "seed": 1}, [1.0, 0.5], [0.0, 0.0], [0.1, 0.05], 2.5)
    again = RunRecord.from_dict(record.to_dict())

    assert again.to_dict() == record.to_dict()
    assert list(record.curve_rows())[-1] == pytest.approx([2, 0.5, 0.0, 0.05, 0.075])
    assert record.to_dict()["seeds"] == {"weights": 1, "perturbation": 1}


def test_presets():
    nlo = TrainConfig.from_preset("NLO")

    assert nlo.problem == "nlo"
    assert (nlo.num_iterations, nlo.mesh_size) == (20000, 400)
    assert (nlo.gen_units, nlo.gen_layers, nlo.disc_units, nlo.disc_layers) == (40, 4, 30, 3)
    assert (nlo.lr_gen, nlo.lr_disc, nlo.gamma) == (0.006, 0.0007, 0.999)
    assert nlo.gen_betas == (0.102, 0.763)
    assert nlo.disc_betas == (0.541, 0.677)
    assert nlo.tau == 3.0
    assert nlo.loss == "gan"


def test_config_round_trip_and_replace():
    config = _small(loss="huber", constants={"x0": 2.0})
    again = TrainConfig.from_dict(config.to_dict())

    assert again == config
    assert config.replace(seed=7).seed == 7
    assert config.seed == 0


@pytest.mark.parametrize("overrides", [
    {"loss": "wgan"},
    {"gamma": 0.0},
    {"gamma_disc": 1.5},
    {"tau": 0.0},
    {"learning_rate": 0.1},
])
def test_invalid_config(overrides):
    with pytest.raises(DeqganConfigException):
        TrainConfig.from_preset("exp", **overrides)


def test_unknown_problem():
    with pytest.raises(DeqganConfigException):
        TrainConfig.from_preset("heat")


def test_run_trials_and_bands():
    seen = []
    config = _small(loss="l2", num_iterations=6)
    records = run_trials(config, 3, callback=lambda trial, trainer, record: seen.append((trial, trainer.config.seed)))
    bands = trial_bands(records)

    assert seen == [(0, 0), (1, 1), (2, 2)]
    assert [r.seeds["perturbation"] for r in records] == [0, 1, 2]
    assert list(bands["iteration"]) == [1, 2, 3, 4, 5, 6]
    assert np.all(bands["p25"] <= bands["median"])
    assert np.all(bands["median"] <= bands["p75"])

    with pytest.raises(DeqganArgumentException):
        trial_bands([])


def test_classical_presets():
    exp = TrainConfig.from_preset("exp", loss="l2")

    assert (exp.num_iterations, exp.lr_gen, exp.gen_betas, exp.gamma) == (10000, 0.009, (0.444, 0.633), 0.998)
    assert (exp.mesh_size, exp.gen_units, exp.gen_layers) == (100, 30, 2)
    assert TrainConfig.from_preset("exp").num_iterations == 2000
    assert TrainConfig.from_preset("exp", loss="huber", lr_gen=0.001).lr_gen == 0.001
    assert TrainConfig.from_preset("sho", loss="l2").num_iterations == 10000


def test_adversarial_defaults():
    config = TrainConfig.from_preset("exp")

    assert config.non_saturating
    assert config.mirror_residuals


@pytest.mark.slow
@pytest.mark.parametrize("problem, loss, limit", [
    ("exp", "l2", 3e-7),
    ("exp", "huber", 1e-7),
    ("exp", "l1", 1e-3),
    ("sho", "l2", 3e-8),
    ("sho", "huber", 1e-8),
])
def test_classical_presets_reach_tuned_accuracy(problem, loss, limit):
    record = Trainer(TrainConfig.from_preset(problem, loss=loss)).train()

    assert record.final_mse <= limit


@pytest.mark.slow
def test_exp_preset_solves_the_equation():
    best = math.inf

    for seed in range(10):
        record = Trainer(TrainConfig.from_preset("exp", seed=seed)).train()
        best = min(best, record.final_mse)

        if best <= 1e-8:
            break

    assert best <= 1e-8


@pytest.mark.slow
@pytest.mark.parametrize("problem", ["exp", "sho"])
def test_adversarial_training_beats_l2_on_the_same_schedule(problem):
    # Residual losses run on the adversarial column of the problem here
    schedule = {name: PRESETS[problem][name] for name in CLASSICAL_PRESETS.get(problem, {})}
    gan = min(r.final_mse for r in run_trials(TrainConfig.from_preset(problem), 5))
    l2 = min(r.final_mse for r in run_trials(TrainConfig.from_preset(problem, loss="l2", **schedule), 5))

    assert 10.0 * gan <= l2
