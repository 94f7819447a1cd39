# -*- coding: utf-8 -*-

# python std lib
import logging
import sys

# 3rd party imports
from docopt import docopt, extras, Option, DocoptExit


base_args = """
Usage:
    deqgan [options] <command> [<args> ...]

Available deqgan commands are:
    run       Train, search, build ground truth or evaluate saved networks
    compare   Summarize finished runs into a comparison table
    oracle    Cache ground truth and score the traditional solver

Options:
    --log-level=<level>   Set loglevel, falls back to DEQGAN_LOG_LEVEL or INFO
    -h, --help            Show this help message and exit
    -V, --version         Display the version number and exit
"""

sub_run_args = """
Usage:
    deqgan run [options]

Options:
    --preset=<key>          Problem preset: exp, sho, nlo, nas, sir or pos
    --config=<path>         Experiment config file, yaml or json
    --mode=<mode>           train, search, oracle or evaluate
    --loss=<loss>           gan, l1, l2 or huber
    --seed=<int>            Network weight seed
    --iterations=<n>        Number of training iterations
    --out=<dir>             Output directory for artifacts
    --trials=<n>            Repeated trials (train) or sampled trials (search)
    --workers=<n>           Worker processes used by search
    --master-seed=<int>     Seed every search trial is derived from
    --save-weights=<path>   Store the trained networks as json
    --load-weights=<path>   Networks to start from, required by evaluate
    -h, --help              Show this help message and exit
"""

sub_oracle_args = """
Usage:
    deqgan oracle [options]

Options:
    --preset=<key>    Problem preset: exp, sho, nlo, nas, sir or pos
    --config=<path>   Experiment config file, yaml or json
    --out=<dir>       Output directory for artifacts
    -h, --help        Show this help message and exit
"""

sub_compare_args = """
Usage:
    deqgan compare <paths> ... [options]

Arguments:
    <paths> ...   Run directories or run.json files, searched recursively

Options:
    --out=<path>   Table to write [default: table.csv]
    -h, --help     Show this help message and exit
"""

# flag name -> (config key, converter)
RUN_FLAGS = {
    "--preset": ("preset", str.lower),
    "--mode": ("mode", str.lower),
    "--loss": ("loss", str.lower),
    "--seed": ("seed", int),
    "--iterations": ("iterations", int),
    "--out": ("out", str),
    "--trials": ("trials", int),
    "--workers": ("workers", int),
    "--master-seed": ("master_seed", int),
    "--save-weights": ("save_weights", str),
    "--load-weights": ("load_weights", str),
}


def parse_cli():
    """
    Parse the CLI arguments and options
    """
    import deqgan

    try:
        cli_args = docopt(
            base_args,
            options_first=True,
            version=deqgan.__version__,
            help=True,
        )
    except DocoptExit:
        extras(
            True,
            deqgan.__version__,
            [Option("-h", "--help", 0, True)],
            base_args,
        )

    deqgan.init_logging(cli_args["--log-level"])

    argv = [cli_args["<command>"]] + cli_args["<args>"]

    if cli_args["<command>"] == "run":
        sub_args = docopt(sub_run_args, argv=argv)
    elif cli_args["<command>"] == "oracle":
        sub_args = docopt(sub_oracle_args, argv=argv)
    elif cli_args["<command>"] == "compare":
        sub_args = docopt(sub_compare_args, argv=argv)
    else:
        extras(
            True,
            deqgan.__version__,
            [Option("-h", "--help", 0, True)],
            base_args,
        )
        sys.exit(1)

    return (cli_args, sub_args)


def build_config(sub_args, mode=None):
    """
    Experiment config from the --config file with command line flags on top.
    """
    from deqgan.exceptions import DeqganConfigException
    from deqgan.experiment import ExperimentConfig

    overrides = {}

    for flag, (key, convert) in RUN_FLAGS.items():
        value = sub_args.get(flag)

        if value is None:
            continue

        try:
            overrides[key] = convert(value)
        except ValueError:
            raise DeqganConfigException(f"Invalid value '{value}' for {flag}")

    if mode:
        overrides["mode"] = mode

    if sub_args.get("--config"):
        return ExperimentConfig.from_file(sub_args["--config"], overrides)

    return ExperimentConfig.from_dict(overrides)


def run(cli_args, sub_args):
    """
    Execute the CLI
    """
    # Local imports required due to logging limitation
    from deqgan import experiment
    from deqgan.exceptions import DeqganException

    log = logging.getLogger(__name__)
    retcode = 0

    try:
        if cli_args["<command>"] in ["run", "oracle"]:
            mode = "oracle" if cli_args["<command>"] == "oracle" else None
            config = build_config(sub_args, mode=mode)
            experiment_app = experiment.Experiment(config)
            summary = experiment_app.run()

            for key, value in summary.items():
                print(f"{key}: {value}")

        if cli_args["<command>"] == "compare":
            rows = experiment.compare(sub_args["<paths>"], out=sub_args["--out"])
            log.debug(f"Compared {len(rows)} problems")
            print(f"Wrote {sub_args['--out']}")
    except DeqganException as e:
        # Catch all deqgan exceptions
        print(f"CRITICAL :: {str(e)}", file=sys.stderr)
        retcode = 1

    return retcode


def cli_entrypoint():
    """Used by setup.py to create a cli entrypoint script."""
    cli_args, sub_args = parse_cli()

    try:
        sys.exit(run(cli_args, sub_args))
    except Exception:
        raise
