# -*- coding: utf-8 -*-

# python std lib
import copy
import logging
import os

# deqgan imports
from deqgan.artifacts import read_json, write_csv, write_json
from deqgan.constants import (
    EXPERIMENT_SCHEMA,
    PROBLEM_KEYS,
    STABILITY_ITERATIONS,
    STABILITY_TRIALS,
    TABLE_COLUMNS,
    TABLE_HEADERS,
)
from deqgan.core import Deqgan
from deqgan.exceptions import DeqganConfigException, DeqganTrainingException
from deqgan.nets import load_weights, save_weights
from deqgan.oracles import GroundTruthCache, load_truth, traditional_baseline
from deqgan.search import SearchSpace, export_parallel_coordinates, random_search
from deqgan.training import (
    CURVE_COLUMNS,
    TrainConfig,
    Trainer,
    build_meshes,
    evaluate_mse,
    predict,
    run_trials,
    trial_bands,
)

# 3rd party imports
import anyconfig
import numpy as np
from jinja2 import Template


log = logging.getLogger(__name__)

DEFAULT_MODE = "train"
DEFAULT_LOSS = "gan"


def render_variables(data, variables):
    """
    Render every string value of ``data`` as a jinja2 template.
    """
    if isinstance(data, dict):
        return {key: render_variables(value, variables) for key, value in data.items()}

    if isinstance(data, list):
        return [render_variables(value, variables) for value in data]

    if isinstance(data, str):
        return Template(data).render(variables)

    return data


class ExperimentConfig():
    """
    One experiment: which problem, which mode, where the artifacts go, plus
    overrides of the training and search settings.
    """

    KEYS = list(EXPERIMENT_SCHEMA["properties"].keys())

    def __init__(self, data):
        self.data = self.validate(data)

    def __getattr__(self, name):
        if name in ExperimentConfig.KEYS:
            return self.__dict__["data"].get(name)

        raise AttributeError(name)

    @staticmethod
    def validate(data):
        data = {key: value for key, value in dict(data).items() if value is not None}
        ok, errors = anyconfig.validate(data, EXPERIMENT_SCHEMA, ac_schema_errors=True)

        if not ok:
            if isinstance(errors, str):
                errors = [errors]

            raise DeqganConfigException("Invalid experiment config: " + "; ".join(errors))

        return data

    @classmethod
    def from_file(cls, path, overrides=None):
        """
        Load a yaml or json document. A top level ``variables`` mapping is
        rendered into every string and then dropped.
        """
        if not os.path.isfile(path):
            raise DeqganConfigException(f"Experiment config file '{path}' does not exist")

        raw = anyconfig.load(path)
        data = dict(raw) if raw else {}
        variables = data.pop("variables", None) or {}

        if variables:
            data = render_variables(data, variables)

        for key, value in (overrides or {}).items():
            if value is not None:
                data[key] = value

        return cls(data)

    @classmethod
    def from_dict(cls, data):
        return cls(copy.deepcopy(data))

    def to_dict(self):
        return copy.deepcopy(self.data)

    def __eq__(self, other):
        return isinstance(other, ExperimentConfig) and self.data == other.data

    @property
    def run_mode(self):
        return self.mode or DEFAULT_MODE

    def train_config(self):
        overrides = copy.deepcopy(self.train or {})
        overrides["loss"] = self.loss or DEFAULT_LOSS

        if self.seed is not None:
            overrides["seed"] = self.seed

        if self.iterations is not None:
            overrides["num_iterations"] = self.iterations
        elif self.run_mode == "search":
            overrides["num_iterations"] = STABILITY_ITERATIONS

        return TrainConfig.from_preset(self.preset, **overrides)

    def search_space(self):
        return SearchSpace.from_dict(self.search or {}, self.train_config())


class Experiment(Deqgan):
    """
    Runs one ``ExperimentConfig`` and writes its artifacts.
    """

    def __init__(self, config):
        super(Experiment, self).__init__()
        self.config = config
        self.cache = GroundTruthCache(self.cache_dir)

    @property
    def out(self):
        return self.config.out or "."

    def run(self):
        """
        Execute the configured mode, returns a summary dict.
        """
        mode = self.config.run_mode
        log.info(f"Running {mode} on preset {self.config.preset}")

        if mode == "train":
            return self.train()

        if mode == "search":
            return self.search()

        if mode == "oracle":
            return self.oracle()

        if mode == "evaluate":
            return self.evaluate()

        raise DeqganConfigException(f"Unknown mode '{mode}'")

    def _truth(self, problem, points):
        if problem.has_analytic:
            return load_truth(problem, points)

        return self.cache.get_or_compute(problem, points)

    def _initial_nets(self):
        if not self.config.load_weights:
            return None, None

        nets = load_weights(self.config.load_weights)
        return nets.get("G"), nets.get("D")

    def _write_run(self, directory, record, trainer):
        write_json(os.path.join(directory, "run.json"), dict(record.to_dict(), mode="train"))
        write_csv(os.path.join(directory, "curves.csv"), CURVE_COLUMNS, record.curve_rows())
        self._write_solution(directory, trainer.problem, trainer.G, trainer.eval_mesh.points, trainer.truth)

    def _write_solution(self, directory, problem, G, points, truth, prediction=None, residual=None):
        if G is not None:
            prediction, residual = predict(G, problem, points)

        names = ["t"] if problem.input_dim == 1 else ["x", "y"]
        header = list(names)

        for j in range(problem.output_dim):
            header += [f"prediction_{j}", f"truth_{j}", f"abs_residual_{j}"]

        rows = []

        for i, point in enumerate(points):
            row = list(point)

            for j in range(problem.output_dim):
                row.append(prediction[i, j])
                row.append(None if truth is None else truth[i, j])
                row.append(None if residual is None else residual[i, j])

            rows.append(row)

        write_csv(os.path.join(directory, "solution.csv"), header, rows)

    def train(self):
        config = self.config.train_config()
        trials = self.config.trials or 1
        problem, _, eval_mesh = build_meshes(config)
        truth = self._truth(problem, eval_mesh.points)

        if trials > 1:
            def write_trial(trial, trainer, record):
                self._write_run(os.path.join(self.out, f"trial-{trial}"), record, trainer)

            records = run_trials(config, trials, truth=truth, callback=write_trial)
            bands = trial_bands(records)
            write_csv(
                os.path.join(self.out, "bands.csv"),
                ["iteration", "median", "p25", "p75"],
                zip(bands["iteration"], bands["median"], bands["p25"], bands["p75"]),
            )
            best = min(r.final_mse for r in records)
            log.info(f"Best final mse across {trials} trials: {best:.3e}")

            return {"mode": "train", "final_mse": best, "trials": trials, "out": self.out}

        generator, discriminator = self._initial_nets()
        trainer = Trainer(config, truth=truth, generator=generator, discriminator=discriminator)

        try:
            record = trainer.train()
        except DeqganTrainingException as e:
            if e.record is not None:
                write_json(os.path.join(self.out, "run.json"), dict(e.record.to_dict(), mode="train"))

            raise

        self._write_run(self.out, record, trainer)

        if self.config.save_weights:
            save_weights(self.config.save_weights, trainer.nets)

        return {"mode": "train", "final_mse": record.final_mse, "out": self.out}

    def search(self):
        space = self.config.search_space()
        workers = self.config.workers or self.workers
        trials = self.config.trials or STABILITY_TRIALS
        master_seed = self.config.master_seed or 0

        problem, _, eval_mesh = build_meshes(space.base)
        truth = None if problem.has_analytic else self._truth(problem, eval_mesh.points)

        result = random_search(space, trials, master_seed=master_seed, workers=workers, truth=truth)
        rows = export_parallel_coordinates(result, os.path.join(self.out, "search.csv"))
        write_json(os.path.join(self.out, "search.json"), dict(result.to_dict(), space=space.to_dict()))

        passed = sum(1 for row in rows if row[5])
        log.info(f"{passed} of {trials} trials passed the mse filter {space.mse_filter:g}")

        return {"mode": "search", "trials": trials, "passed": passed, "out": self.out}

    def oracle(self):
        config = self.config.train_config()
        problem, mesh, eval_mesh = build_meshes(config)

        if not problem.has_analytic:
            for points in [mesh.points, eval_mesh.points]:
                self.cache.get_or_compute(problem, points)

        baseline = traditional_baseline(problem, config.mesh_size, truth=self._truth)

        record = {
            "mode": "oracle",
            "problem": problem.key,
            "loss": "traditional",
            "method": baseline.method,
            "final_mse": baseline.mse,
            "config": config.to_dict(),
        }
        write_json(os.path.join(self.out, "run.json"), record)
        self._write_solution(self.out, problem, None, baseline.points, baseline.truth, baseline.prediction, None)

        return {"mode": "oracle", "final_mse": baseline.mse, "method": baseline.method, "out": self.out}

    def evaluate(self):
        if not self.config.load_weights:
            raise DeqganConfigException("Evaluate mode needs load_weights pointing at saved networks")

        config = self.config.train_config()
        generator, _ = self._initial_nets()

        if generator is None:
            raise DeqganConfigException(f"No generator network in {self.config.load_weights}")

        problem, _, eval_mesh = build_meshes(config)
        points = eval_mesh.points
        truth = load_truth(problem, points, self.cache)
        mse = evaluate_mse(generator, problem, points, truth)

        record = {
            "mode": "evaluate",
            "problem": problem.key,
            "loss": config.loss,
            "final_mse": mse,
            "weights": self.config.load_weights,
            "config": config.to_dict(),
        }
        write_json(os.path.join(self.out, "run.json"), record)
        self._write_solution(self.out, problem, generator, points, truth)

        return {"mode": "evaluate", "final_mse": mse, "out": self.out}


def find_runs(paths):
    """
    Every run.json below ``paths``, in sorted order.
    """
    found = []

    for path in paths:
        if os.path.isfile(path):
            found.append(path)
            continue

        for root, _, files in os.walk(path):
            if "run.json" in files:
                found.append(os.path.join(root, "run.json"))

    return sorted(found)


def compare(paths, out="table.csv"):
    """
    Summary table with one row per problem and the lowest final MSE of each
    loss as columns.
    """
    cells = {}

    for path in find_runs(paths):
        run = read_json(path)

        if run.get("mode") == "evaluate":
            continue

        key, loss, mse = run.get("problem"), run.get("loss"), run.get("final_mse")

        if key not in PROBLEM_KEYS or loss not in TABLE_COLUMNS or mse is None or np.isnan(mse):
            log.warning(f"Skipping {path}, it has no usable final mse")
            continue

        cell = cells.setdefault(key, {})
        cell[loss] = min(mse, cell.get(loss, np.inf))

    rows = []

    for key in [k for k in PROBLEM_KEYS if k in cells]:
        row = [key.upper()]

        for column in TABLE_COLUMNS:
            if column not in cells[key]:
                log.warning(f"No {TABLE_HEADERS[column]} run for {key.upper()}")

            row.append(cells[key].get(column))

        rows.append(row)

    write_csv(out, ["problem"] + [TABLE_HEADERS[c] for c in TABLE_COLUMNS], rows)

    return rows


__all__ = [
    "Experiment",
    "ExperimentConfig",
    "compare",
    "find_runs",
    "render_variables",
]
