# File: streamlines/streamline.py

import logging
from dataclasses import dataclass, field
from typing import List

import numpy as np

from geometry.sphere import (Sphere, SmoothingConfig, SoftLabel, eof_label, hard_label,
                             smooth_label)
from utils.errors import DegenerateStreamlineError, InvalidArgumentError

RAS_MM = "RAS-mm"


@dataclass
class Streamline:
    """Ordered RAS points in millimetres."""
    points: np.ndarray = field(repr=False)

    def __post_init__(self):
        points = np.asarray(self.points, dtype=np.float64)
        if points.ndim != 2 or points.shape[1] != 3 or len(points) < 1:
            raise InvalidArgumentError(f"streamline points must be an (n>=1, 3) array, got {points.shape}")
        self.points = points

    def __len__(self):
        return len(self.points)

    @property
    def length_mm(self) -> float:
        return float(np.sum(np.linalg.norm(np.diff(self.points, axis=0), axis=1)))


@dataclass
class Tractogram:
    streamlines: List[Streamline] = field(default_factory=list)
    space: str = RAS_MM

    def __len__(self):
        return len(self.streamlines)

    def __iter__(self):
        return iter(self.streamlines)

    def __getitem__(self, index):
        return self.streamlines[index]

    @property
    def lengths(self) -> List[int]:
        return [len(s) for s in self.streamlines]

    @property
    def total_points(self) -> int:
        return int(sum(self.lengths))


def resample_streamline(s: Streamline, step_size: float) -> Streamline:
    """
    Arc-length resampling: points at arc lengths 0, h, 2h, ... plus the original endpoint.
    """
    if not step_size > 0:
        raise InvalidArgumentError(f"step_size must be > 0, got {step_size}")
    points = s.points
    if len(points) < 2:
        raise DegenerateStreamlineError("cannot resample a streamline with fewer than 2 points")
    seg = np.linalg.norm(np.diff(points, axis=0), axis=1)
    keep = np.concatenate([[True], seg > 0])
    points = points[keep]
    seg = seg[seg > 0]
    total = float(seg.sum())
    if total <= 0:
        raise DegenerateStreamlineError("cannot resample a zero-length streamline")
    arc = np.concatenate([[0.0], np.cumsum(seg)])

    n_steps = int(np.floor(total / step_size + 1e-9))
    samples = step_size * np.arange(n_steps + 1, dtype=np.float64)
    if samples[-1] > total - 1e-6 * step_size:
        samples[-1] = total
    else:
        samples = np.append(samples, total)
    resampled = np.stack([np.interp(samples, arc, points[:, axis]) for axis in range(3)], axis=1)
    resampled[-1] = points[-1]
    return Streamline(resampled)


def resample_tractogram(tractogram: Tractogram, step_size: float) -> Tractogram:
    """Resample every streamline; ones that cannot carry a direction (< 2 points) are dropped."""
    kept = []
    discarded = 0
    for s in tractogram:
        try:
            r = resample_streamline(s, step_size)
        except DegenerateStreamlineError:
            discarded += 1
            continue
        if len(r) < 2:
            discarded += 1
            continue
        kept.append(r)
    if discarded:
        logging.warning(f"Discarded {discarded} streamline(s) shorter than 2 points after resampling")
    return Tractogram(kept)


def reverse_streamline(s: Streamline) -> Streamline:
    return Streamline(s.points[::-1].copy())


def segment_directions(s: Streamline) -> np.ndarray:
    diffs = np.diff(s.points, axis=0)
    norms = np.linalg.norm(diffs, axis=1)
    if np.any(norms == 0):
        raise DegenerateStreamlineError("streamline has duplicated consecutive points")
    return diffs / norms[:, None]


def direction_targets(s: Streamline, sphere: Sphere, cfg: SmoothingConfig,
                      smooth: bool = True) -> List[SoftLabel]:
    """
    One label per point: the (soft or one-hot) label of the next segment direction, and
    the EoF label at the final point.
    """
    if len(s) < 2:
        raise DegenerateStreamlineError("direction targets need at least 2 points")
    labels = []
    for direction in segment_directions(s):
        if smooth:
            labels.append(smooth_label(direction, sphere, cfg))
        else:
            labels.append(hard_label(direction, sphere))
    labels.append(eof_label(sphere.k))
    return labels


def split_windows(n: int, max_len: int = 100, overlap: int = 10):
    """
    (start, stop) index pairs covering n points in windows of at most max_len that
    overlap by `overlap` points.
    """
    if max_len < 2 or not 0 <= overlap < max_len:
        raise InvalidArgumentError(f"invalid window parameters max_len={max_len}, overlap={overlap}")
    if n <= max_len:
        return [(0, n)]
    stride = max_len - overlap
    windows = []
    start = 0
    while True:
        stop = min(start + max_len, n)
        windows.append((start, stop))
        if stop == n:
            break
        start += stride
    return windows
