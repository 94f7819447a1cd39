# -*- coding: utf-8 -*-

# python std lib
import sys

# deqgan imports
from deqgan.artifacts import read_json, write_json
from deqgan.cli import build_config, parse_cli, run
from deqgan.exceptions import DeqganConfigException

# 3rd party imports
import pytest


def _sub_args(**flags):
    return {f"--{name.replace('_', '-')}": value for name, value in flags.items()}


def test_parse_run_command(monkeypatch):
    monkeypatch.delenv("DEQGAN_LOG_LEVEL", raising=False)
    monkeypatch.setattr(sys, "argv", ["deqgan", "run", "--preset", "exp", "--iterations", "3"])

    cli_args, sub_args = parse_cli()

    assert cli_args["<command>"] == "run"
    assert sub_args["--preset"] == "exp"
    assert sub_args["--iterations"] == "3"
    assert sub_args["--loss"] is None


def test_parse_compare_default_out(monkeypatch):
    monkeypatch.setattr(sys, "argv", ["deqgan", "--log-level", "WARNING", "compare", "runs"])

    _, sub_args = parse_cli()

    assert sub_args["<paths>"] == ["runs"]
    assert sub_args["--out"] == "table.csv"


def test_build_config_from_flags():
    config = build_config(_sub_args(preset="EXP", loss="L2", iterations="4", master_seed="9", config=None))

    assert config.preset == "exp"
    assert config.loss == "l2"
    assert config.iterations == 4
    assert config.master_seed == 9


def test_flags_override_config_file(tmp_path):
    path = tmp_path / "experiment.json"
    write_json(path, {"preset": "sho", "loss": "huber", "iterations": 100})

    config = build_config(_sub_args(config=str(path), iterations="7"), mode="oracle")

    assert (config.preset, config.loss, config.iterations, config.mode) == ("sho", "huber", 7, "oracle")


def test_build_config_rejects_bad_numbers():
    with pytest.raises(DeqganConfigException):
        build_config(_sub_args(preset="exp", seed="one"))


def test_bad_config_exits_with_critical(capsys):
    retcode = run({"<command>": "run"}, _sub_args(preset="heat"))

    assert retcode == 1
    assert capsys.readouterr().err.startswith("CRITICAL :: ")


def test_run_prints_summary(tmp_path, cache_dir, capsys):
    out = tmp_path / "run"
    retcode = run({"<command>": "run"}, _sub_args(preset="exp", loss="l2", iterations="2", out=str(out)))
    printed = capsys.readouterr().out

    assert retcode == 0
    assert "mode: train" in printed
    assert "final_mse: " in printed
    assert read_json(out / "run.json")["iterations"] == 2


def test_compare_command(tmp_path, capsys):
    write_json(tmp_path / "runs" / "a" / "run.json", {"mode": "train", "problem": "exp", "loss": "gan", "final_mse": 1e-9})
    table = tmp_path / "table.csv"

    retcode = run({"<command>": "compare"}, {"<paths>": [str(tmp_path / "runs")], "--out": str(table)})

    assert retcode == 0
    assert table.exists()
    assert f"Wrote {table}" in capsys.readouterr().out
