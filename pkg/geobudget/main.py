import argparse
import logging
import sys
from pathlib import Path

from geobudget.config import ConfigError, load_config, load_experiment_config
from geobudget.engines import GeneratorManager
from geobudget.pipeline import ExperimentPipeline
from geobudget.utils import setup_logging

SUBCOMMANDS = {
    "range-count": "range_count",
    "kde": "kde",
    "knn": "knn",
    "threshold": "threshold",
    "multi-query": "multi_query",
}

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG_ERROR = 2


def parse_arguments(argv=None):
    parser = argparse.ArgumentParser(description="Adaptive privacy budgeting experiments under GP / CGP")
    subparsers = parser.add_subparsers(dest="command", required=True)
    for name, query in SUBCOMMANDS.items():
        sub = subparsers.add_parser(name, help=f"Run a {query} experiment")
        sub.add_argument('--config', default='input.json', help='Path to the experiment config (default: input.json)')
        sub.add_argument('--seed', type=int, help='Override the config seed')
        sub.add_argument('--trials', type=int, help='Override the number of trials')
        sub.add_argument('--out', help='CSV output path (default: <output_dir>/<query>.csv)')
        sub.add_argument('--verbose', '-v', action='store_true', help='Enable verbose logging')
        sub.add_argument('--max_workers', type=int, help='Number of parallel trial workers')
    return parser.parse_args(argv)


def validate_arguments(args):
    if args.trials is not None and args.trials < 1:
        raise ConfigError(f"--trials must be positive, got {args.trials}")
    if args.seed is not None and args.seed < 0:
        raise ConfigError(f"--seed must be nonnegative, got {args.seed}")
    if args.max_workers is not None and args.max_workers < 1:
        raise ConfigError(f"--max_workers must be positive, got {args.max_workers}")


def run(args, logger) -> Path:
    config = load_config()
    experiment = load_experiment_config(Path(args.config), {"seed": args.seed, "trials": args.trials})
    expected = SUBCOMMANDS[args.command]
    if experiment.query != expected:
        raise ConfigError(f"Config {args.config} describes a {experiment.query} experiment, not {expected}")
    logger.info(f"Experiment config loaded: {args.config}")
    out_path = Path(args.out) if args.out else Path(config.runner.output_dir) / f"{experiment.query}.csv"
    pipeline = ExperimentPipeline(config, GeneratorManager(), args.max_workers or config.runner.max_workers)
    pipeline.run_experiment(experiment, out_path)
    return out_path


def main(argv=None):
    args = parse_arguments(argv)
    config = load_config()
    level = "DEBUG" if args.verbose else config.runner.log_level
    logger = setup_logging(level, config.runner.log_file)
    try:
        validate_arguments(args)
        out_path = run(args, logger)
        print(f"Results: {out_path}")
        return EXIT_OK
    except ConfigError as e:
        logger.error(f"Configuration error: {e}")
        return EXIT_CONFIG_ERROR
    except KeyboardInterrupt:
        logger.info("Experiment interrupted by user")
        return EXIT_FAILURE
    except Exception as e:
        logger.error(f"Experiment failed: {e}")
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
