# -*- coding: utf-8 -*-
# python std lib
import math

PROBLEM_KEYS = ["exp", "sho", "nlo", "nas", "sir", "pos"]
LOSS_CHOICES = ["gan", "l1", "l2", "huber"]
MODE_CHOICES = ["train", "search", "oracle", "evaluate"]
CONDITION_CHOICES = ["exponential", "polynomial"]
TABLE_COLUMNS = ["l1", "l2", "huber", "gan", "traditional"]
TABLE_HEADERS = {
    "l1": "L1",
    "l2": "L2",
    "huber": "Huber",
    "gan": "DEQGAN",
    "traditional": "Traditional",
}

# Equation constants, overridable per experiment
PROBLEM_CONSTANTS = {
    "exp": {"t0": 0.0, "x0": 1.0},
    "sho": {"t0": 0.0, "x0": 0.0, "v0": 1.0},
    "nlo": {
        "t0": 0.0,
        "x0": 0.0,
        "v0": 0.5,
        "beta": 0.1,
        "omega": 1.0,
        "phi": 1.0,
        "epsilon": 0.1,
    },
    "nas": {"t0": 0.0, "x0": 1.0, "y0": 0.0},
    "sir": {
        "t0": 0.0,
        "s0": 0.99,
        "i0": 0.01,
        "r0": 0.0,
        "beta": 3.0,
        "gamma": 1.0,
        "n": 1.0,
    },
    "pos": {},
}

PROBLEM_DOMAINS = {
    "exp": [(0.0, 10.0)],
    "sho": [(0.0, 2.0 * math.pi)],
    "nlo": [(0.0, 4.0 * math.pi)],
    "nas": [(0.0, 2.0 * math.pi)],
    "sir": [(0.0, 10.0)],
    "pos": [(0.0, 1.0), (0.0, 1.0)],
}

# Tuned DEQGAN hyperparameters, one column per problem
PRESETS = {
    "exp": {
        "num_iterations": 2000,
        "mesh_size": 100,
        "gen_units": 30,
        "gen_layers": 2,
        "disc_units": 20,
        "disc_layers": 4,
        "lr_gen": 0.008,
        "lr_disc": 0.0005,
        "gen_betas": (0.671, 0.143),
        "disc_betas": (0.866, 0.165),
        "gamma": 0.991,
    },
    "sho": {
        "num_iterations": 10000,
        "mesh_size": 400,
        "gen_units": 40,
        "gen_layers": 4,
        "disc_units": 40,
        "disc_layers": 2,
        "lr_gen": 0.009,
        "lr_disc": 0.002,
        "gen_betas": (0.444, 0.633),
        "disc_betas": (0.271, 0.142),
        "gamma": 0.998,
    },
    "nlo": {
        "num_iterations": 20000,
        "mesh_size": 400,
        "gen_units": 40,
        "gen_layers": 4,
        "disc_units": 30,
        "disc_layers": 3,
        "lr_gen": 0.006,
        "lr_disc": 0.0007,
        "gen_betas": (0.102, 0.763),
        "disc_betas": (0.541, 0.677),
        "gamma": 0.999,
    },
    "nas": {
        "num_iterations": 50000,
        "mesh_size": 800,
        "gen_units": 30,
        "gen_layers": 3,
        "disc_units": 50,
        "disc_layers": 2,
        "lr_gen": 0.006,
        "lr_disc": 0.001,
        "gen_betas": (0.706, 0.861),
        "disc_betas": (0.538, 0.615),
        "gamma": 0.9998,
    },
    "sir": {
        "num_iterations": 30000,
        "mesh_size": 800,
        "gen_units": 40,
        "gen_layers": 2,
        "disc_units": 20,
        "disc_layers": 3,
        "lr_gen": 0.010,
        "lr_disc": 0.002,
        "gen_betas": (0.207, 0.169),
        "disc_betas": (0.193, 0.617),
        "gamma": 0.9996,
    },
    "pos": {
        "num_iterations": 4000,
        "mesh_size": 32,
        "gen_units": 40,
        "gen_layers": 4,
        "disc_units": 20,
        "disc_layers": 4,
        "lr_gen": 0.008,
        "lr_disc": 0.002,
        "gen_betas": (0.410, 0.447),
        "disc_betas": (0.593, 0.915),
        "gamma": 0.996,
    },
}

# Generator schedules for the residual losses where the adversarial column
# decays too fast to converge. Architecture stays as in PRESETS.
CLASSICAL_PRESETS = {
    "exp": {
        "num_iterations": 10000,
        "lr_gen": 0.009,
        "gen_betas": (0.444, 0.633),
        "gamma": 0.998,
    },
}

TRAIN_DEFAULTS = {
    "loss": "gan",
    "tau": 3.0,
    "perturb_variance": False,
    "seed": 0,
    "perturb_seed": None,
    "residual": True,
    "spectral_norm": True,
    "non_saturating": True,
    "mirror_residuals": True,
    "huber_delta": 1.0,
    "gamma_disc": None,
    "condition": "exponential",
    "eval_density": 2,
    "eval_every": 1,
    "log_every": 500,
    "adam_eps": 1e-8,
    "smoothing_window": 50,
}

ORACLE_TOLERANCE = 1e-10
# Discriminator probabilities are kept inside [SIGMA_CLAMP, 1 - SIGMA_CLAMP]
SIGMA_CLAMP = 1e-12
LOGIT_LIMIT = math.log((1.0 - SIGMA_CLAMP) / SIGMA_CLAMP)
SPECTRAL_SIGMA_FLOOR = 1e-12
CG_MAX_ITERATIONS = 10000
CG_TOLERANCE = 1e-12
CG_CHECK_EVERY = 50

STABILITY_TRIALS = 500
STABILITY_ITERATIONS = 500
STABILITY_SEEDS = list(range(10))
STABILITY_LR_RANGE = (1e-6, 1e-2)
STABILITY_MSE_FILTER = 1e-8

CONFIGURABLES = ["DEQGAN_CACHE_DIR", "DEQGAN_LOG_LEVEL", "DEQGAN_WORKERS"]
DEFAULTS = {"DEQGAN_CACHE_DIR": "", "DEQGAN_LOG_LEVEL": "INFO", "DEQGAN_WORKERS": "1"}
VALIDATORS = {
    "DEQGAN_LOG_LEVEL": "^(DEBUG|INFO|WARNING|ERROR|CRITICAL)$",
    "DEQGAN_WORKERS": "^[1-9][0-9]*$",
}
VALID_EXAMPLES = {
    "DEQGAN_LOG_LEVEL": "example: export DEQGAN_LOG_LEVEL=DEBUG",
    "DEQGAN_WORKERS": "example: echo 'DEQGAN_WORKERS: 8' >> ~/.config/deqgan.yaml",
}

_SAMPLER_SCHEMA = {
    "type": "object",
    "properties": {
        "kind": {"enum": ["log_uniform", "uniform", "choice"]},
        "low": {"type": "number"},
        "high": {"type": "number"},
        "values": {"type": "array"},
    },
    "required": ["kind"],
    "additionalProperties": False,
}

TRAIN_SCHEMA = {
    "type": "object",
    "properties": {
        "num_iterations": {"type": "integer", "minimum": 1},
        "mesh_size": {"type": "integer", "minimum": 2},
        "gen_units": {"type": "integer", "minimum": 1},
        "gen_layers": {"type": "integer", "minimum": 1},
        "disc_units": {"type": "integer", "minimum": 1},
        "disc_layers": {"type": "integer", "minimum": 1},
        "lr_gen": {"type": "number", "minimum": 0},
        "lr_disc": {"type": "number", "minimum": 0},
        "gen_betas": {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2},
        "disc_betas": {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2},
        "gamma": {"type": "number"},
        "gamma_disc": {"type": ["number", "null"]},
        "tau": {"type": "number", "minimum": 0},
        "perturb_variance": {"type": "boolean"},
        "perturb_seed": {"type": ["integer", "null"]},
        "residual": {"type": "boolean"},
        "spectral_norm": {"type": "boolean"},
        "non_saturating": {"type": "boolean"},
        "mirror_residuals": {"type": "boolean"},
        "huber_delta": {"type": "number", "minimum": 0},
        "condition": {"enum": CONDITION_CHOICES},
        "eval_density": {"type": "integer", "minimum": 1},
        "eval_every": {"type": "integer", "minimum": 1},
        "log_every": {"type": "integer", "minimum": 1},
        "adam_eps": {"type": "number", "minimum": 0},
        "smoothing_window": {"type": "integer", "minimum": 1},
        "constants": {"type": "object", "additionalProperties": {"type": "number"}},
    },
    "additionalProperties": False,
}

SEARCH_SCHEMA = {
    "type": "object",
    "properties": {
        "params": {"type": "object", "additionalProperties": _SAMPLER_SCHEMA},
        "mse_filter": {"type": "number", "minimum": 0},
    },
    "additionalProperties": False,
}

EXPERIMENT_SCHEMA = {
    "type": "object",
    "properties": {
        "mode": {"enum": MODE_CHOICES},
        "preset": {"enum": PROBLEM_KEYS},
        "loss": {"enum": LOSS_CHOICES},
        "seed": {"type": "integer", "minimum": 0},
        "iterations": {"type": "integer", "minimum": 1},
        "out": {"type": "string"},
        "trials": {"type": "integer", "minimum": 1},
        "workers": {"type": "integer", "minimum": 1},
        "master_seed": {"type": "integer", "minimum": 0},
        "save_weights": {"type": ["string", "null"]},
        "load_weights": {"type": ["string", "null"]},
        "train": TRAIN_SCHEMA,
        "search": SEARCH_SCHEMA,
    },
    "required": ["preset"],
    "additionalProperties": False,
}

__all__ = [
    "CG_CHECK_EVERY",
    "CG_MAX_ITERATIONS",
    "CG_TOLERANCE",
    "CLASSICAL_PRESETS",
    "CONDITION_CHOICES",
    "CONFIGURABLES",
    "DEFAULTS",
    "EXPERIMENT_SCHEMA",
    "LOGIT_LIMIT",
    "LOSS_CHOICES",
    "MODE_CHOICES",
    "ORACLE_TOLERANCE",
    "PRESETS",
    "PROBLEM_CONSTANTS",
    "PROBLEM_DOMAINS",
    "PROBLEM_KEYS",
    "SEARCH_SCHEMA",
    "SIGMA_CLAMP",
    "SPECTRAL_SIGMA_FLOOR",
    "STABILITY_ITERATIONS",
    "STABILITY_LR_RANGE",
    "STABILITY_MSE_FILTER",
    "STABILITY_SEEDS",
    "STABILITY_TRIALS",
    "TABLE_COLUMNS",
    "TABLE_HEADERS",
    "TRAIN_DEFAULTS",
    "TRAIN_SCHEMA",
    "VALID_EXAMPLES",
    "VALIDATORS",
]
