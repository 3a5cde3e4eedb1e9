# File: managers/dataset_manager.py

import logging
from dataclasses import dataclass, field
from typing import List

import numpy as np
import torch

from data.volume import DwiVolume, extract_cube
from geometry.sphere import SmoothingConfig, Sphere
from streamlines.streamline import (Tractogram, direction_targets, reverse_streamline,
                                    split_windows)
from utils.errors import (DegenerateStreamlineError, EmptyDatasetError, InvalidArgumentError,
                          OutOfBoundsError)


@dataclass
class TrainExample:
    """
    One training sequence: a voxel cube and a target distribution per point.
    `source_index` is the reference streamline it came from (shared by reversed copies
    and windows).
    """
    cubes: np.ndarray = field(repr=False)    # n x 3 x 3 x 3 x G
    targets: np.ndarray = field(repr=False)  # n x (K+1)
    source_index: int = 0
    reversed: bool = False

    def __post_init__(self):
        if len(self.cubes) != len(self.targets):
            raise InvalidArgumentError(f"{len(self.cubes)} cubes for {len(self.targets)} targets")

    @property
    def length(self) -> int:
        return len(self.targets)


def build_dataset(tractogram: Tractogram, volume: DwiVolume, sphere: Sphere, cfg,
                  smoothing: SmoothingConfig = None) -> List[TrainExample]:
    """
    Cubes and direction targets for every (already resampled) reference streamline, plus
    a reversed copy when cfg.use_reverse_aug. Sequences longer than cfg.max_len are split
    into overlapping windows; streamlines that leave the volume are dropped.
    """
    smoothing = smoothing or SmoothingConfig()
    examples = []
    dropped_bounds = 0
    dropped_degenerate = 0
    for index, streamline in enumerate(tractogram):
        variants = [(streamline, False)]
        if cfg.use_reverse_aug:
            variants.append((reverse_streamline(streamline), True))
        try:
            built = []
            for points, is_reversed in variants:
                cubes = np.stack([extract_cube(volume, p).values for p in points.points], axis=0)
                targets = np.stack([label.probs for label in direction_targets(
                    points, sphere, smoothing, smooth=cfg.use_smooth_labels)], axis=0)
                for start, stop in split_windows(len(points), cfg.max_len, cfg.window_overlap):
                    built.append(TrainExample(cubes[start:stop], targets[start:stop], index, is_reversed))
        except OutOfBoundsError:
            dropped_bounds += 1
            continue
        except DegenerateStreamlineError:
            dropped_degenerate += 1
            continue
        examples.extend(built)

    if dropped_bounds:
        logging.warning(f"Dropped {dropped_bounds} streamline(s) leaving the volume bounds")
    if dropped_degenerate:
        logging.warning(f"Dropped {dropped_degenerate} degenerate streamline(s)")
    if not examples:
        raise EmptyDatasetError("no training examples could be built from the tractogram")
    logging.info(f"Built {len(examples)} training examples from {len(tractogram)} streamlines "
                 f"(reverse_aug={cfg.use_reverse_aug}, smooth_labels={cfg.use_smooth_labels})")
    return examples


def split_train_validation(examples: List[TrainExample], val_fraction: float = 0.2, seed: int = 0):
    """
    Split by source streamline so reversed copies and windows never straddle the split.
    With a single source streamline everything is used for both training and validation.
    """
    sources = sorted({e.source_index for e in examples})
    if len(sources) < 2 or val_fraction <= 0:
        logging.warning("Too few source streamlines for a validation split; validating on the training set")
        return list(examples), list(examples)
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(sources))
    n_val = min(len(sources) - 1, max(1, int(round(val_fraction * len(sources)))))
    val_sources = {sources[i] for i in order[:n_val]}
    train = [e for e in examples if e.source_index not in val_sources]
    val = [e for e in examples if e.source_index in val_sources]
    logging.info(f"Split {len(sources)} source streamlines: {len(sources) - n_val} train / {n_val} validation "
                 f"({len(train)} / {len(val)} examples)")
    return train, val


def collate(examples: List[TrainExample]):
    """
    Pad a batch to its longest member. Returns (cubes, targets, padding_mask) with
    padding_mask True at padded positions.
    """
    if not examples:
        raise InvalidArgumentError("cannot collate an empty batch")
    n = max(e.length for e in examples)
    b = len(examples)
    cube_shape = examples[0].cubes.shape[1:]
    n_classes = examples[0].targets.shape[1]
    cubes = np.zeros((b, n) + cube_shape, dtype=np.float64)
    targets = np.zeros((b, n, n_classes), dtype=np.float64)
    padding = np.ones((b, n), dtype=bool)
    for i, e in enumerate(examples):
        cubes[i, :e.length] = e.cubes
        targets[i, :e.length] = e.targets
        padding[i, :e.length] = False
    return (torch.as_tensor(cubes, dtype=torch.float64),
            torch.as_tensor(targets, dtype=torch.float64),
            torch.as_tensor(padding))


def iterate_batches(examples: List[TrainExample], batch_size: int, rng: np.random.Generator = None):
    order = np.arange(len(examples)) if rng is None else rng.permutation(len(examples))
    for start in range(0, len(order), batch_size):
        yield [examples[i] for i in order[start:start + batch_size]]
