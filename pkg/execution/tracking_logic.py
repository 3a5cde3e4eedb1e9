# File: execution/tracking_logic.py

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np
import torch

from data.volume import DwiVolume, ScalarMap, extract_cube, point_in_volume, voxel_to_ras
from execution.stopping_criteria import StopReason, TrackingConfig, check_stop
from geometry.sphere import Sphere, make_sphere
from model.tracto_transformer import TractoTransformer, cubes_to_tensor, predict_fodf
from streamlines.streamline import Streamline, Tractogram
from utils.errors import InvalidArgumentError, TractographyError

FAILED = "Failed"


@dataclass
class TrackingResult:
    """
    Streamlines in seed order (failed seeds left out), the stop reason of each kept
    streamline, and a histogram over every reason plus failures.
    """
    tractogram: Tractogram
    stop_reasons: List[StopReason] = field(default_factory=list)
    histogram: Dict[str, int] = field(default_factory=dict)

    @property
    def n_seeds(self) -> int:
        return sum(self.histogram.values())


def empty_histogram() -> Dict[str, int]:
    histogram = {str(reason): 0 for reason in StopReason}
    histogram[FAILED] = 0
    return histogram


def sample_seeds(mask: ScalarMap, n: int, rng_seed: int = 0) -> np.ndarray:
    """
    n RAS points drawn uniformly over the positive voxels of `mask`, each jittered
    uniformly inside its voxel.
    """
    if n < 0:
        raise InvalidArgumentError(f"number of seeds must be >= 0, got {n}")
    voxels = np.argwhere(mask.data > 0)
    if len(voxels) == 0:
        raise InvalidArgumentError("cannot sample seeds from an empty mask")
    rng = np.random.default_rng(rng_seed)
    chosen = voxels[rng.integers(0, len(voxels), size=n)]
    # [-0.5, 0.5) keeps every seed's nearest voxel equal to the chosen one
    jitter = rng.uniform(-0.5, 0.5, size=(n, 3))
    return voxel_to_ras(mask.affine, chosen + jitter)


def next_direction_class(model: TractoTransformer, cubes: List[np.ndarray]) -> int:
    """
    Argmax class of the fODF at the last position of the cube sequence (lowest index on ties).
    Sequences longer than the model's max_len are cut to their most recent max_len points.
    """
    window = cubes[-model.config.max_len:]
    with torch.no_grad():
        logits = model(cubes_to_tensor(np.stack(window, axis=0)))[0, -1]
        probs = predict_fodf(logits).numpy()
    return int(np.argmax(probs))


def track_one(model: TractoTransformer, volume: DwiVolume, wm_mask: ScalarMap,
              fa_map: Optional[ScalarMap], seed, cfg: TrackingConfig,
              sphere: Sphere = None) -> Tuple[Streamline, StopReason]:
    """
    Deterministic autoregressive propagation from `seed`: feed the current streamline to
    the model, follow the argmax direction for one step, stop on EoF, on a violated
    stopping criterion (the rejected candidate is not kept) or after cfg.max_steps steps.
    """
    sphere = sphere or make_sphere(model.config.k)
    if sphere.k != model.config.k:
        raise InvalidArgumentError(f"sphere has {sphere.k} directions, model expects K={model.config.k}")
    seed = np.asarray(seed, dtype=np.float64).reshape(3)
    if not point_in_volume(volume.affine, volume.shape3d, seed):
        raise InvalidArgumentError(f"seed {np.round(seed, 4)} lies outside the volume")

    points = [seed]
    cubes = [extract_cube(volume, seed).values]
    prev_dir = None
    for _ in range(cfg.max_steps):
        chosen = next_direction_class(model, cubes)
        if chosen == sphere.k:
            return Streamline(np.stack(points)), StopReason.EOF_PREDICTED
        new_dir = sphere.directions[chosen]
        candidate = points[-1] + cfg.step_size * new_dir
        reason = check_stop(prev_dir, new_dir, candidate, volume, wm_mask, fa_map, cfg)
        if reason is not None:
            return Streamline(np.stack(points)), reason
        points.append(candidate)
        cubes.append(extract_cube(volume, candidate).values)
        prev_dir = new_dir
    return Streamline(np.stack(points)), StopReason.MAX_STEPS_REACHED


def track_all(model: TractoTransformer, volume: DwiVolume, wm_mask: ScalarMap,
              fa_map: Optional[ScalarMap], cfg: TrackingConfig, seeds=None,
              n_workers: int = 1, sphere: Sphere = None) -> TrackingResult:
    """
    Track every seed (sampled from wm_mask when not given). Workers share the model in eval
    mode; results are collected in seed order so the output does not depend on n_workers.
    """
    if seeds is None:
        seeds = sample_seeds(wm_mask, cfg.n_seeds, cfg.rng_seed) if cfg.n_seeds else np.zeros((0, 3))
    seeds = np.asarray(seeds, dtype=np.float64).reshape(-1, 3)
    sphere = sphere or make_sphere(model.config.k)
    model.eval()

    def run(index: int):
        try:
            return track_one(model, volume, wm_mask, fa_map, seeds[index], cfg, sphere)
        except TractographyError as e:
            logging.warning(f"Seed {index} at {np.round(seeds[index], 3)} failed: {e}")
            return None

    if n_workers > 1 and len(seeds) > 1:
        with ThreadPoolExecutor(max_workers=n_workers) as pool:
            outcomes = list(pool.map(run, range(len(seeds))))
    else:
        outcomes = [run(i) for i in range(len(seeds))]

    histogram = empty_histogram()
    streamlines, reasons = [], []
    for outcome in outcomes:
        if outcome is None:
            histogram[FAILED] += 1
            continue
        streamline, reason = outcome
        streamlines.append(streamline)
        reasons.append(reason)
        histogram[str(reason)] += 1

    summary = ", ".join(f"{k}={v}" for k, v in histogram.items() if v)
    logging.info(f"Tracked {len(seeds)} seeds -> {len(streamlines)} streamlines; stop reasons: {summary or 'none'}")
    return TrackingResult(Tractogram(streamlines), reasons, histogram)
