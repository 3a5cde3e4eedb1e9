#!/usr/bin/env python3
"""
The four pipeline steps behind the command line: phantom generation, training,
tracking and Tractometer-style evaluation. Each step reads and writes files inside
one output directory.
"""

import logging
import os

import yaml

from data.data_loader import load_dwi, load_scalar_map, write_gradient_table, write_nifti
from data.data_preprocessor import compute_fa_map, resample_volume
from execution.tracking_logic import track_all
from geometry.sphere import make_sphere
from managers.dataset_manager import build_dataset
from managers.training_manager import summarize_metrics_log, train_loop
from model.checkpoint import load_checkpoint
from model.tracto_transformer import build_model
from phantom.phantom_generator import generate_phantom, load_ground_truth, save_ground_truth
from phantom.tractometer import format_metrics, score_tractogram
from streamlines.streamline import resample_tractogram
from streamlines.tck_io import read_tck, write_tck
from utils.errors import UsageError
from utils.run_config import RunConfig


def output_path(run: RunConfig, key: str) -> str:
    """Configured path for `key`, relative to the output directory unless absolute."""
    return os.path.join(run.paths["output_dir"], run.paths[key])


def require_output_dir(run: RunConfig):
    if not os.path.isdir(run.paths["output_dir"]):
        raise UsageError(f"output directory {run.paths['output_dir']} does not exist")


def cmd_phantom(run: RunConfig) -> dict:
    """dwi.nii, bvals, bvecs, wm_mask.nii, fa.nii, reference.tck and the ground truth directory."""
    require_output_dir(run)
    dwi, wm_mask, fa_map, gt = generate_phantom(run.phantom)
    files = {key: output_path(run, key) for key in ("dwi", "bvals", "bvecs", "wm_mask", "fa", "reference")}
    write_nifti(dwi, files["dwi"])
    write_gradient_table(dwi.bvalues, dwi.gradients, files["bvals"], files["bvecs"])
    write_nifti(wm_mask, files["wm_mask"])
    write_nifti(fa_map, files["fa"])
    write_tck(gt.reference, files["reference"])
    gt_dir = output_path(run, "ground_truth")
    os.makedirs(gt_dir, exist_ok=True)
    save_ground_truth(gt, gt_dir)
    with open(os.path.join(gt_dir, "phantom_spec.yaml"), "w") as f:
        yaml.safe_dump(run.phantom.to_dict(), f, sort_keys=False)
    files["ground_truth"] = gt_dir
    logging.info(f"Phantom written to {run.paths['output_dir']}")
    return files


def _model_inputs(run: RunConfig, n_directions: int, sh_order):
    raw = load_dwi(output_path(run, "dwi"), output_path(run, "bvals"), output_path(run, "bvecs"))
    return raw, resample_volume(raw, make_sphere(n_directions), sh_order)


def cmd_train(run: RunConfig):
    """Resample the DWI, build the dataset from the reference tractogram and train."""
    require_output_dir(run)
    _, volume = _model_inputs(run, run.preprocessing.n_directions, run.preprocessing.sh_order)
    reference = resample_tractogram(read_tck(output_path(run, "reference")), run.step_size)
    dataset = build_dataset(reference, volume, make_sphere(run.model.k), run.training, run.smoothing)
    model = build_model(run.model)
    extras = {
        "n_directions": run.preprocessing.n_directions,
        "sh_order": run.preprocessing.sh_order,
        "step_size": run.step_size,
        "smoothing_sigma": run.smoothing.sigma,
        "use_reverse_aug": run.training.use_reverse_aug,
        "use_smooth_labels": run.training.use_smooth_labels,
    }
    metrics_log = output_path(run, "metrics_log")
    model, history = train_loop(dataset, model, run.training, output_path(run, "checkpoint"),
                                metrics_log, extras)
    summarize_metrics_log(metrics_log)
    return model, history


def cmd_track(run: RunConfig):
    """Track run.tracking.n_seeds seeds with the trained checkpoint; writes the TCK and a stop-reason summary."""
    require_output_dir(run)
    model, extras = load_checkpoint(output_path(run, "checkpoint"), expected_config=run.model)
    raw, volume = _model_inputs(run, extras.get("n_directions", run.preprocessing.n_directions),
                                extras.get("sh_order", run.preprocessing.sh_order))
    wm_mask = load_scalar_map(output_path(run, "wm_mask"), "white-matter-mask")
    fa_path = output_path(run, "fa")
    if os.path.exists(fa_path):
        fa_map = load_scalar_map(fa_path, "FA")
    else:
        logging.info(f"No FA map at {fa_path}; computing one from the DWI")
        fa_map = compute_fa_map(raw)

    result = track_all(model, volume, wm_mask, fa_map, run.tracking, n_workers=run.threads)
    tck_path = output_path(run, "tractogram")
    write_tck(result.tractogram, tck_path, extra_header={"step_size": run.tracking.step_size})
    summary_path = os.path.splitext(tck_path)[0] + "_stop_reasons.yaml"
    with open(summary_path, "w") as f:
        yaml.safe_dump(result.histogram, f, sort_keys=False)
    print("----- STOP REASONS -----")
    for reason, count in result.histogram.items():
        print(f"{reason:16s} {count}")
    return result


def cmd_eval(run: RunConfig, candidate_path: str = None, ground_truth_dir: str = None) -> dict:
    """Score a candidate TCK against a ground truth directory; prints and writes the metrics."""
    candidate_path = candidate_path or output_path(run, "tractogram")
    ground_truth_dir = ground_truth_dir or output_path(run, "ground_truth")
    candidate = read_tck(candidate_path)
    gt = load_ground_truth(ground_truth_dir)
    metrics, table = score_tractogram(candidate, gt)
    report = format_metrics(metrics)
    print(report, end="")
    if os.path.isdir(run.paths["output_dir"]):
        with open(os.path.join(run.paths["output_dir"], "scores.txt"), "w") as f:
            f.write(report)
        table.to_csv(os.path.join(run.paths["output_dir"], "bundle_scores.csv"), index=False)
    return metrics
