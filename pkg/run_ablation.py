#!/usr/bin/env python3
"""
run_ablation.py

Trains, tracks and scores the full model and each ablation on one phantom:

    full                 all components
    no_cnn3d             centre-voxel linear embedding instead of the 3D convolution
    no_reverse_aug       no reversed copies of the reference streamlines
    no_smooth_labels     one-hot direction labels

Usage:
    python3 run_ablation.py --output-dir runs/ablation [--config config.yaml] [--num-workers 4]

Every variant runs in its own subdirectory; the shared phantom is generated once in the
output directory when it is not there yet. Results go to ablation_results.csv with the
change of every metric against the full model.
"""

import argparse
import logging
import multiprocessing
import os
import sys
from dataclasses import replace

import pandas as pd

import pipeline
from phantom.tractometer import METRIC_KEYS
from utils import helpers
from utils.errors import TractographyError
from utils.run_config import RunConfig

VARIANTS = {
    "full": dict(),
    "no_cnn3d": dict(use_cnn3d=False),
    "no_reverse_aug": dict(use_reverse_aug=False),
    "no_smooth_labels": dict(use_smooth_labels=False),
}
SHARED_INPUTS = ("dwi", "bvals", "bvecs", "wm_mask", "fa", "reference", "ground_truth")


def variant_config(run: RunConfig, name: str) -> RunConfig:
    """Ablated copy of `run` working in <output_dir>/<name>, reading the shared phantom."""
    base_dir = os.path.abspath(run.paths["output_dir"])
    paths = dict(run.paths, output_dir=os.path.join(base_dir, name))
    for key in SHARED_INPUTS:
        paths[key] = os.path.join(base_dir, run.paths[key])
    ablated = run.with_ablation(**VARIANTS[name])
    return replace(ablated, paths=paths, threads=1)


def run_variant(task) -> dict:
    """
    Worker: train, track and score one variant. Returns its metrics plus bookkeeping.
    """
    run, name = task
    os.makedirs(run.paths["output_dir"], exist_ok=True)
    helpers.configure_threads(1)
    helpers.seed_everything(run.training.seed)
    result = {"variant": name}
    try:
        _, history = pipeline.cmd_train(run)
        tracking = pipeline.cmd_track(run)
        metrics = pipeline.cmd_eval(run)
        result.update(metrics)
        result["best_val_accuracy"] = max(row["val_accuracy"] for row in history)
        result["n_streamlines"] = len(tracking.tractogram)
        result["error"] = ""
    except TractographyError as e:
        logging.error(f"Variant {name} failed: {e}")
        result.update({key: float("nan") for key in METRIC_KEYS})
        result["error"] = str(e)
    return result


def run_ablation(run: RunConfig, num_workers: int = 1) -> pd.DataFrame:
    output_dir = run.paths["output_dir"]
    pipeline.require_output_dir(run)
    if not os.path.exists(pipeline.output_path(run, "dwi")):
        logging.info("No phantom in the output directory yet; generating it")
        pipeline.cmd_phantom(run)

    tasks = [(variant_config(run, name), name) for name in VARIANTS]
    if num_workers > 1:
        with multiprocessing.Pool(processes=min(num_workers, len(tasks))) as pool:
            results = pool.map(run_variant, tasks)
    else:
        results = [run_variant(task) for task in tasks]

    df = pd.DataFrame(results)
    full = df[df["variant"] == "full"].iloc[0]
    for key in METRIC_KEYS:
        df[f"delta_{key}"] = df[key] - full[key]
    csv_path = os.path.join(output_dir, "ablation_results.csv")
    df.to_csv(csv_path, index=False)
    print("----- ABLATION RESULTS -----")
    print(df[["variant"] + list(METRIC_KEYS) + [f"delta_{k}" for k in METRIC_KEYS]].to_string(index=False))
    logging.info(f"Ablation results written to {csv_path}")
    return df


def main():
    parser = argparse.ArgumentParser(description="Run the ablation study on the synthetic phantom.")
    parser.add_argument("--config", type=str, default="config.yaml")
    parser.add_argument("--output-dir", type=str, required=True)
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--num-workers", type=int, default=1,
                        help="Variants trained in parallel processes. Default=1.")
    args = parser.parse_args()

    config = helpers.load_config(args.config)
    if config is None:
        sys.exit(2)
    try:
        run = RunConfig.from_sources(config, {"seed": args.seed, "paths": {"output_dir": args.output_dir}})
        helpers.setup_logging(level=run.log_level, log_file=run.log_file)
        run_ablation(run, args.num_workers)
    except TractographyError as e:
        logging.error(f"{type(e).__name__}: {e}")
        sys.exit(e.exit_code)


if __name__ == "__main__":
    main()
