# File: phantom/tractometer.py

import logging
from typing import Optional, Tuple

import numpy as np
import pandas as pd

from data.volume import nearest_voxel, ras_to_voxel, voxel_in_grid
from phantom.phantom_generator import BundleGroundTruth, rasterize
from streamlines.streamline import Streamline, Tractogram
from utils.errors import EmptyTractogramError

METRIC_KEYS = ("VC", "OL", "OR", "F1")


def _endpoint_voxel(gt: BundleGroundTruth, point) -> Optional[tuple]:
    index = nearest_voxel(ras_to_voxel(gt.affine, point))
    if not voxel_in_grid(index, gt.shape):
        return None
    return tuple(int(i) for i in index)


def assign_bundle(streamline: Streamline, gt: BundleGroundTruth) -> Optional[int]:
    """
    Index of the bundle whose head and tail ROIs hold the two endpoints (either order),
    or None when the streamline is not a valid connection.
    """
    first = _endpoint_voxel(gt, streamline.points[0])
    last = _endpoint_voxel(gt, streamline.points[-1])
    if first is None or last is None:
        return None
    for i, bundle in enumerate(gt.bundles):
        if (bundle.head[first] and bundle.tail[last]) or (bundle.tail[first] and bundle.head[last]):
            return i
    return None


def _bundle_scores(covered: np.ndarray, truth: np.ndarray) -> dict:
    n_truth = int(truth.sum())
    hits = int(np.sum(covered & truth))
    misses = int(np.sum(covered & ~truth))
    n_covered = hits + misses
    recall = hits / n_truth if n_truth else 0.0
    precision = hits / n_covered if n_covered else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return {
        "OL": 100.0 * recall,
        "OR": 100.0 * misses / n_truth if n_truth else 0.0,
        "F1": 100.0 * f1,
        "gt_voxels": n_truth,
        "covered_voxels": n_covered,
    }


def score_tractogram(candidate: Tractogram, gt: BundleGroundTruth) -> Tuple[dict, pd.DataFrame]:
    """
    VC is the percentage of candidate streamlines that connect the two endpoint ROIs of one
    bundle. OL, OR and F1 are computed per bundle from the voxels rasterised by its valid
    connections and averaged over bundles. Returns (metrics, per-bundle table), percentages.
    """
    if len(candidate) == 0:
        raise EmptyTractogramError("cannot score an empty tractogram")
    covered = [np.zeros(gt.shape, dtype=bool) for _ in gt.bundles]
    counts = [0] * len(gt.bundles)
    n_valid = 0
    for streamline in candidate:
        bundle_index = assign_bundle(streamline, gt)
        if bundle_index is None:
            continue
        n_valid += 1
        counts[bundle_index] += 1
        covered[bundle_index] |= rasterize(streamline, gt.affine, gt.shape)

    rows = []
    for bundle, cov, count in zip(gt.bundles, covered, counts):
        row = {"bundle": bundle.name, "valid_connections": count}
        row.update(_bundle_scores(cov, bundle.mask))
        rows.append(row)
    table = pd.DataFrame(rows, columns=["bundle", "valid_connections", "OL", "OR", "F1",
                                        "gt_voxels", "covered_voxels"])
    metrics = {
        "VC": 100.0 * n_valid / len(candidate),
        "OL": float(table["OL"].mean()),
        "OR": float(table["OR"].mean()),
        "F1": float(table["F1"].mean()),
    }
    logging.info(f"Scored {len(candidate)} streamlines: {n_valid} valid connections; "
                 + " ".join(f"{k}={metrics[k]:.2f}" for k in METRIC_KEYS))
    return metrics, table


def format_metrics(metrics: dict) -> str:
    """Human-readable block followed by machine-readable key=value lines."""
    lines = ["----- TRACTOMETER SCORES -----"]
    lines += [f"{key:4s} {metrics[key]:8.2f} %" for key in METRIC_KEYS]
    lines += [f"{key}={metrics[key]:.6f}" for key in METRIC_KEYS]
    return "\n".join(lines) + "\n"
