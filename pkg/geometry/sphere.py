# File: geometry/sphere.py

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from utils.errors import InvalidArgumentError

UNIT_TOLERANCE = 1e-6
GOLDEN_ANGLE = math.pi * (3.0 - math.sqrt(5.0))


@dataclass(frozen=True)
class Sphere:
    """
    K unit direction vectors {alpha_i} that define the discrete class space.
    Antipodal directions are distinct classes (tracking directions are signed).
    """
    directions: np.ndarray = field(repr=False)

    def __post_init__(self):
        dirs = np.array(self.directions, dtype=np.float64)
        if dirs.ndim != 2 or dirs.shape[1] != 3 or dirs.shape[0] < 2:
            raise InvalidArgumentError(f"Sphere needs a (k>=2, 3) direction array, got {dirs.shape}")
        dirs.setflags(write=False)
        object.__setattr__(self, "directions", dirs)

    @property
    def k(self) -> int:
        return self.directions.shape[0]

    @classmethod
    def from_directions(cls, directions) -> "Sphere":
        """
        Build a sphere from explicit directions. Each must already be unit length and all must be distinct.
        """
        dirs = np.asarray(directions, dtype=np.float64)
        norms = np.linalg.norm(dirs, axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-9):
            raise InvalidArgumentError("Sphere directions must have unit norm (tolerance 1e-9)")
        if len(np.unique(dirs, axis=0)) != len(dirs):
            raise InvalidArgumentError("Sphere directions must be distinct")
        return cls(dirs)


@dataclass(frozen=True)
class SoftLabel:
    """
    Probability vector over K direction classes plus the end-of-fiber class (last index).
    """
    probs: np.ndarray = field(repr=False)

    @property
    def eof_index(self) -> int:
        return len(self.probs) - 1

    @property
    def eof_mass(self) -> float:
        return float(self.probs[-1])

    def argmax(self) -> int:
        return int(np.argmax(self.probs))


@dataclass(frozen=True)
class SmoothingConfig:
    sigma: float = 0.1  # radians

    def validate(self):
        if not self.sigma > 0:
            raise InvalidArgumentError(f"smoothing sigma must be > 0, got {self.sigma}")
        return self


def make_sphere(k: int) -> Sphere:
    """
    Fibonacci spherical lattice: z_i = 1 - (2i+1)/k with golden-angle azimuth steps.
    Same k always gives the bit-identical direction list.
    """
    if int(k) != k or k < 2:
        raise InvalidArgumentError(f"make_sphere needs an integer k >= 2, got {k}")
    k = int(k)
    i = np.arange(k, dtype=np.float64)
    z = 1.0 - (2.0 * i + 1.0) / k
    r = np.sqrt(1.0 - z * z)
    phi = i * GOLDEN_ANGLE
    dirs = np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1)
    # unit by construction up to rounding; renormalise to unit norm within 1e-9
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    logging.debug(f"Built Fibonacci sphere with {k} directions")
    return Sphere(dirs)


def _as_unit(v, name: str) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64).reshape(3)
    norm = np.linalg.norm(v)
    if abs(norm - 1.0) > UNIT_TOLERANCE:
        raise InvalidArgumentError(f"{name} must be a unit vector (|{name}| = {norm:.9f})")
    return v


def angular_distance(u, v) -> float:
    u = _as_unit(u, "u")
    v = _as_unit(v, "v")
    return float(np.arccos(np.clip(np.dot(u, v), -1.0, 1.0)))


def angular_distances(theta, sphere: Sphere) -> np.ndarray:
    """Angular distance from theta to every sphere direction."""
    theta = _as_unit(theta, "theta")
    return np.arccos(np.clip(sphere.directions @ theta, -1.0, 1.0))


def smooth_label(theta, sphere: Sphere, cfg: SmoothingConfig) -> SoftLabel:
    """
    Gaussian soft label: w_i = exp(-d_i^2 / 2 sigma^2), normalised over the K directions.
    The EoF entry is always 0.
    """
    d = angular_distances(theta, sphere)
    d2 = d * d
    # shifting by the smallest exponent leaves the normalised result unchanged
    w = np.exp(-(d2 - d2.min()) / (2.0 * cfg.sigma ** 2))
    probs = np.zeros(sphere.k + 1, dtype=np.float64)
    probs[:-1] = w / w.sum()
    return SoftLabel(probs)


def hard_label(theta, sphere: Sphere) -> SoftLabel:
    """One-hot label at the nearest class (used when label smoothing is switched off)."""
    probs = np.zeros(sphere.k + 1, dtype=np.float64)
    probs[nearest_class(theta, sphere)] = 1.0
    return SoftLabel(probs)


def eof_label(k: int) -> SoftLabel:
    if k < 2:
        raise InvalidArgumentError(f"eof_label needs k >= 2, got {k}")
    probs = np.zeros(k + 1, dtype=np.float64)
    probs[k] = 1.0
    return SoftLabel(probs)


def nearest_class(theta, sphere: Sphere) -> int:
    # np.argmin keeps the lowest index on ties
    return int(np.argmin(angular_distances(theta, sphere)))
