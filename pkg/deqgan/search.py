# -*- coding: utf-8 -*-
"""
Random hyperparameter search over independent training runs.
"""

# python std lib
import copy
import logging
import math
from concurrent.futures import ProcessPoolExecutor

# deqgan imports
from deqgan.artifacts import write_csv
from deqgan.constants import (
    STABILITY_ITERATIONS,
    STABILITY_LR_RANGE,
    STABILITY_MSE_FILTER,
    STABILITY_SEEDS,
)
from deqgan.exceptions import DeqganArgumentException, DeqganConfigException
from deqgan.training import RunRecord, TrainConfig, Trainer

# 3rd party imports
import numpy as np


log = logging.getLogger(__name__)

SAMPLER_KINDS = ["log_uniform", "uniform", "choice"]
EXPORT_COLUMNS = ["trial", "seed", "lr_G", "lr_D", "log10_mse", "passed_filter", "status"]


def _check_sampler(name, sampler):
    kind = sampler.get("kind")

    if kind not in SAMPLER_KINDS:
        raise DeqganConfigException(f"Sampler for '{name}' has unknown kind '{kind}'")

    if kind == "choice":
        if not sampler.get("values"):
            raise DeqganConfigException(f"Choice sampler for '{name}' needs a non-empty 'values' list")

        return

    low, high = sampler.get("low"), sampler.get("high")

    if low is None or high is None or not low < high:
        raise DeqganConfigException(f"Sampler for '{name}' needs low < high, got {low} and {high}")

    if kind == "log_uniform" and low <= 0:
        raise DeqganConfigException(f"Log-uniform sampler for '{name}' needs a positive lower bound")


class SearchSpace():
    """
    Base training configuration plus one sampler per searched field.

    :type base: deqgan.training.TrainConfig
    :type params: dict, field name to sampler
    :type mse_filter: float
    """

    def __init__(self, base, params, mse_filter=STABILITY_MSE_FILTER):
        for name, sampler in params.items():
            if name not in TrainConfig.FIELDS or name == "problem":
                raise DeqganConfigException(f"Cannot search over unknown training field '{name}'")

            _check_sampler(name, sampler)

        self.base = base
        self.params = copy.deepcopy(params)
        self.mse_filter = mse_filter

    @classmethod
    def stability_study(cls, base=None):
        """
        Seeds 0..9 and both learning rates log-uniform, every other field at
        the tuned EXP values.
        """
        low, high = STABILITY_LR_RANGE
        base = base or TrainConfig.from_preset("exp", num_iterations=STABILITY_ITERATIONS)
        params = {
            "seed": {"kind": "choice", "values": list(STABILITY_SEEDS)},
            "lr_gen": {"kind": "log_uniform", "low": low, "high": high},
            "lr_disc": {"kind": "log_uniform", "low": low, "high": high},
        }

        return cls(base, params, STABILITY_MSE_FILTER)

    def sample(self, rng):
        """
        One draw per field, fields visited in sorted order.
        """
        values = {}

        for name in sorted(self.params):
            sampler = self.params[name]
            kind = sampler["kind"]

            if kind == "choice":
                choices = sampler["values"]
                values[name] = choices[int(rng.integers(len(choices)))]
            elif kind == "uniform":
                values[name] = float(rng.uniform(sampler["low"], sampler["high"]))
            else:
                low, high = math.log(sampler["low"]), math.log(sampler["high"])
                values[name] = float(math.exp(rng.uniform(low, high)))

        return values

    def to_dict(self):
        return {"params": copy.deepcopy(self.params), "mse_filter": self.mse_filter}

    @classmethod
    def from_dict(cls, data, base):
        if not data.get("params"):
            space = cls.stability_study(base)
            space.mse_filter = data.get("mse_filter", space.mse_filter)
            return space

        return cls(base, data["params"], data.get("mse_filter", STABILITY_MSE_FILTER))


class SearchResult():
    """
    One entry per trial, ordered by trial index.
    """

    def __init__(self, trials, master_seed, mse_filter=STABILITY_MSE_FILTER):
        self.trials = sorted(trials, key=lambda t: t["trial"])
        self.master_seed = master_seed
        self.mse_filter = mse_filter

    def __len__(self):
        return len(self.trials)

    def records(self):
        return [RunRecord.from_dict(t["record"]) for t in self.trials if t.get("record")]

    def to_dict(self):
        return {
            "master_seed": self.master_seed,
            "mse_filter": self.mse_filter,
            "trials": [{k: v for k, v in t.items() if k != "record"} for t in self.trials],
        }


def trial_rng(master_seed, trial):
    return np.random.default_rng([master_seed, trial])


def _run_trial(trial, config_data, sampled, truth):
    """
    Worker entry point, must stay importable at module level.
    """
    entry = {"trial": trial, "sampled": sampled, "config": config_data}

    try:
        config = TrainConfig.from_dict(config_data)
        record = Trainer(config, truth=truth).train()
        entry.update(final_mse=record.final_mse, status="ok", error=None, record=record.to_dict())
    except Exception as e:
        log.warning(f"Search trial {trial} failed: {e}")
        entry.update(final_mse=math.inf, status="failed", error=str(e), record=None)

    return entry


def random_search(space, n_trials, master_seed=0, workers=1, truth=None):
    """
    Sample ``n_trials`` configurations from ``space`` and train each one.

    Trial ``i`` draws from a generator seeded with (master_seed, i), so the
    sampled configurations do not depend on ``workers``. Failed runs are kept
    with an infinite MSE.

    :rtype: SearchResult
    """
    if n_trials < 1:
        raise DeqganArgumentException(f"random_search needs at least one trial, got {n_trials}")

    jobs = []

    for trial in range(n_trials):
        sampled = space.sample(trial_rng(master_seed, trial))
        jobs.append((trial, dict(space.base.to_dict(), **sampled), sampled, truth))

    log.info(f"Running {n_trials} search trials on {workers} worker(s)")

    if workers <= 1:
        entries = [_run_trial(*job) for job in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            entries = list(pool.map(_run_trial, *zip(*jobs)))

    failed = sum(1 for e in entries if e["status"] != "ok")

    if failed:
        log.warning(f"{failed} of {n_trials} search trials failed")

    return SearchResult(entries, master_seed, space.mse_filter)


def _log10(mse):
    if mse is None or math.isnan(mse):
        return float("nan")

    if mse <= 0:
        return -math.inf

    return math.log10(mse)


def parallel_coordinate_rows(result, mse_filter=None):
    threshold = result.mse_filter if mse_filter is None else mse_filter
    rows = []

    for entry in result.trials:
        config = entry["config"]
        mse = entry["final_mse"]
        passed = entry["status"] == "ok" and not math.isnan(mse) and mse <= threshold
        rows.append([
            entry["trial"],
            config["seed"],
            config["lr_gen"],
            config["lr_disc"],
            _log10(mse),
            passed,
            entry["status"],
        ])

    return rows


def export_parallel_coordinates(result, path, mse_filter=None):
    """
    Write one CSV row per trial with its seed, both learning rates, log10 of
    the final MSE and whether it passes ``mse_filter``.
    """
    if not len(result):
        raise DeqganArgumentException("Cannot export an empty search result")

    rows = parallel_coordinate_rows(result, mse_filter)
    write_csv(path, EXPORT_COLUMNS, rows)

    return rows


__all__ = [
    "EXPORT_COLUMNS",
    "SearchResult",
    "SearchSpace",
    "export_parallel_coordinates",
    "parallel_coordinate_rows",
    "random_search",
    "trial_rng",
]
