# File: execution/stopping_criteria.py

import math
from dataclasses import asdict, dataclass, fields
from enum import Enum
from typing import Optional

import numpy as np

from data.volume import DwiVolume, ScalarMap, mask_value, point_in_volume, sample_scalar
from geometry.sphere import angular_distance
from utils.errors import InvalidArgumentError


class StopReason(str, Enum):
    EOF_PREDICTED = "EofPredicted"
    OUT_OF_BOUNDS = "OutOfBounds"
    OUT_OF_MASK = "OutOfMask"
    ANGLE_EXCEEDED = "AngleExceeded"
    LOW_FA = "LowFa"
    MAX_STEPS_REACHED = "MaxStepsReached"

    def __str__(self):
        return self.value


@dataclass(frozen=True)
class TrackingConfig:
    step_size: float = 0.5          # mm
    angle_threshold: float = 70.0   # degrees
    fa_threshold: float = 0.05
    max_steps: int = 200
    n_seeds: int = 500
    rng_seed: int = 0

    @classmethod
    def from_dict(cls, values: dict) -> "TrackingConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(values) - known
        if unknown:
            raise InvalidArgumentError(f"unknown tracking config keys: {sorted(unknown)}")
        return cls(**values).validate()

    def to_dict(self) -> dict:
        return asdict(self)

    def validate(self) -> "TrackingConfig":
        if not self.step_size > 0:
            raise InvalidArgumentError(f"tracking.step_size must be > 0, got {self.step_size}")
        if not 0 < self.angle_threshold < 180:
            raise InvalidArgumentError(f"tracking.angle_threshold must lie in (0, 180), got {self.angle_threshold}")
        if not 0 <= self.fa_threshold < 1:
            raise InvalidArgumentError(f"tracking.fa_threshold must lie in [0, 1), got {self.fa_threshold}")
        if self.max_steps < 1:
            raise InvalidArgumentError("tracking.max_steps must be >= 1")
        if self.n_seeds < 0:
            raise InvalidArgumentError("tracking.n_seeds must be >= 0")
        return self


def check_stop(prev_dir, new_dir, next_point, volume: DwiVolume, wm_mask: ScalarMap,
               fa_map: Optional[ScalarMap], cfg: TrackingConfig) -> Optional[StopReason]:
    """
    First violated criterion for the candidate step, checked in the order
    OutOfBounds, OutOfMask, AngleExceeded, LowFa. None when the step may be taken.
    The angle check is skipped without a previous direction and the FA check without an FA map.
    """
    next_point = np.asarray(next_point, dtype=np.float64)
    if not point_in_volume(volume.affine, volume.shape3d, next_point):
        return StopReason.OUT_OF_BOUNDS
    if mask_value(wm_mask, next_point) <= 0:
        return StopReason.OUT_OF_MASK
    if prev_dir is not None:
        angle = math.degrees(angular_distance(prev_dir, new_dir))
        if angle > cfg.angle_threshold:
            return StopReason.ANGLE_EXCEEDED
    if fa_map is not None and sample_scalar(fa_map, next_point) < cfg.fa_threshold:
        return StopReason.LOW_FA
    return None
