#!/usr/bin/env python3
import argparse
import logging
import os
import sys

import pipeline
from run_ablation import run_ablation
from utils import helpers
from utils.errors import ConfigError, TractographyError
from utils.run_config import RunConfig

PATH_FLAGS = ("dwi", "bvals", "bvecs", "wm_mask", "fa", "reference", "checkpoint",
              "metrics_log", "tractogram", "ground_truth")


def build_parser() -> argparse.ArgumentParser:
    """
    main.py subcommands:
      phantom : generate the synthetic phantom and its ground truth
      train   : resample the DWI, build the dataset and train the model
      track   : track seeds from the white matter mask with a trained checkpoint
      eval    : score a tractogram against a ground truth directory
      ablate  : train/track/eval the full model and its three ablations
    """
    parser = argparse.ArgumentParser(description="Transformer-based streamline tractography.")
    parser.add_argument("command", choices=["phantom", "train", "track", "eval", "ablate"])
    parser.add_argument("--config", type=str, default=None,
                        help="YAML config file (default: config.yaml when present)")
    parser.add_argument("--output-dir", type=str, default=None,
                        help="Directory for all inputs/outputs of the run (must exist)")
    parser.add_argument("--seed", type=int, default=None,
                        help="Seed for initialisation, shuffling, seeding and phantom noise")
    parser.add_argument("--threads", type=int, default=None,
                        help="Number of tracking workers; outputs do not depend on it")
    parser.add_argument("--log-level", type=str, default=None,
                        help="DEBUG, INFO, WARNING or ERROR")
    parser.add_argument("--epochs", type=int, default=None)
    parser.add_argument("--n-seeds", type=int, default=None)
    parser.add_argument("--no-cnn3d", action="store_true",
                        help="Embed only the centre voxel with a linear layer")
    parser.add_argument("--no-reverse-aug", action="store_true",
                        help="Train without reversed copies of the reference streamlines")
    parser.add_argument("--no-smooth-labels", action="store_true",
                        help="Train on one-hot direction labels")
    parser.add_argument("--candidate", type=str, default=None,
                        help="Tractogram to score with eval (default: the tracking output)")
    for name in PATH_FLAGS:
        parser.add_argument(f"--{name.replace('_', '-')}", dest=name, type=str, default=None)
    return parser


def overrides_from_args(args) -> dict:
    training = {
        "epochs": args.epochs,
        "use_cnn3d": False if args.no_cnn3d else None,
        "use_reverse_aug": False if args.no_reverse_aug else None,
        "use_smooth_labels": False if args.no_smooth_labels else None,
    }
    paths = {name: getattr(args, name) for name in PATH_FLAGS}
    paths["output_dir"] = args.output_dir
    return {
        "seed": args.seed,
        "threads": args.threads,
        "logging": {"level": args.log_level},
        "training": training,
        "tracking": {"n_seeds": args.n_seeds},
        "paths": paths,
    }


def load_file_config(path: str):
    if path:
        if not os.path.exists(path):
            raise ConfigError(f"The specified config file does not exist: {path}")
        config = helpers.load_config(path)
    elif os.path.exists("config.yaml"):
        config = helpers.load_config("config.yaml")
    else:
        config = {}
    if config is None:
        raise ConfigError(f"Failed to load configuration from {path or 'config.yaml'}")
    if not isinstance(config, dict):
        raise ConfigError("the config file must hold a mapping of sections")
    return config


def run_command(args) -> int:
    run = RunConfig.from_sources(load_file_config(args.config), overrides_from_args(args))
    helpers.setup_logging(level=run.log_level, log_file=run.log_file)
    run.threads = helpers.configure_threads(run.threads)
    helpers.seed_everything(run.training.seed)
    logging.info(f"Running '{args.command}' in {run.paths['output_dir']} (seed {run.training.seed}, "
                 f"{run.threads} thread(s))")

    if args.command == "phantom":
        pipeline.cmd_phantom(run)
    elif args.command == "train":
        pipeline.cmd_train(run)
    elif args.command == "track":
        pipeline.cmd_track(run)
    elif args.command == "eval":
        pipeline.cmd_eval(run, candidate_path=args.candidate)
    elif args.command == "ablate":
        run_ablation(run, num_workers=run.threads)
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return run_command(args)
    except TractographyError as e:
        logging.error(f"{type(e).__name__}: {e}")
        return e.exit_code
    except OSError as e:
        logging.error(f"I/O error: {e}")
        return 2


if __name__ == "__main__":
    sys.exit(main())
