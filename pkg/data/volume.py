# File: data/volume.py

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from utils.errors import InvalidArgumentError, OutOfBoundsError

B0_THRESHOLD = 50.0
SCALAR_KINDS = ("white-matter-mask", "FA")


def _check_affine(affine) -> np.ndarray:
    affine = np.asarray(affine, dtype=np.float64)
    if affine.shape != (4, 4):
        raise InvalidArgumentError(f"affine must be 4x4, got {affine.shape}")
    if abs(np.linalg.det(affine)) < 1e-12:
        raise InvalidArgumentError("affine is not invertible")
    return affine


@dataclass
class DwiVolume:
    """
    4D diffusion signal grid H x W x D x G with its voxel->RAS affine and gradient table.
    Gradients/bvalues may be None when a volume is read without its gradient files.
    """
    data: np.ndarray = field(repr=False)
    affine: np.ndarray
    gradients: Optional[np.ndarray] = None
    bvalues: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.data.ndim != 4:
            raise InvalidArgumentError(f"DWI data must be 4D, got shape {self.data.shape}")
        self.affine = _check_affine(self.affine)
        if self.gradients is not None or self.bvalues is not None:
            self.set_gradient_table(self.gradients, self.bvalues)

    def set_gradient_table(self, gradients, bvalues):
        gradients = np.asarray(gradients, dtype=np.float64).reshape(-1, 3)
        bvalues = np.asarray(bvalues, dtype=np.float64).reshape(-1)
        g = self.data.shape[3]
        if len(gradients) != g or len(bvalues) != g:
            raise InvalidArgumentError(
                f"gradient table has {len(gradients)} vectors / {len(bvalues)} b-values for G={g}")
        weighted = bvalues > B0_THRESHOLD
        norms = np.linalg.norm(gradients[weighted], axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-3):
            raise InvalidArgumentError("b-vectors of diffusion-weighted channels must be unit norm (1e-3)")
        self.gradients = gradients
        self.bvalues = bvalues

    @property
    def shape3d(self):
        return self.data.shape[:3]

    @property
    def n_channels(self) -> int:
        return self.data.shape[3]

    @property
    def b0_mask(self) -> np.ndarray:
        if self.bvalues is None:
            raise InvalidArgumentError("volume has no b-values")
        return self.bvalues <= B0_THRESHOLD


@dataclass
class ScalarMap:
    data: np.ndarray = field(repr=False)
    affine: np.ndarray
    kind: str = "FA"

    def __post_init__(self):
        if self.data.ndim != 3:
            raise InvalidArgumentError(f"scalar map must be 3D, got shape {self.data.shape}")
        if self.kind not in SCALAR_KINDS:
            raise InvalidArgumentError(f"unknown scalar map kind '{self.kind}'")
        self.affine = _check_affine(self.affine)
        if self.kind == "white-matter-mask":
            if not np.all(np.isin(self.data, (0, 1))):
                raise InvalidArgumentError("white matter mask entries must be 0 or 1")
        elif np.any(self.data < 0) or np.any(self.data > 1):
            raise InvalidArgumentError("FA entries must lie in [0, 1]")

    @property
    def shape3d(self):
        return self.data.shape


@dataclass
class VoxelCube:
    values: np.ndarray = field(repr=False)  # 3 x 3 x 3 x G
    center: tuple

    def __post_init__(self):
        if self.values.ndim != 4 or self.values.shape[:3] != (3, 3, 3):
            raise InvalidArgumentError(f"voxel cube must be 3x3x3xG, got {self.values.shape}")


def ras_to_voxel(affine, ras_point) -> np.ndarray:
    """Continuous voxel coordinate of a RAS point (inverse affine, no rounding)."""
    affine = np.asarray(affine, dtype=np.float64)
    point = np.append(np.asarray(ras_point, dtype=np.float64).reshape(3), 1.0)
    return np.linalg.solve(affine, point)[:3]


def voxel_to_ras(affine, voxel) -> np.ndarray:
    affine = np.asarray(affine, dtype=np.float64)
    voxel = np.asarray(voxel, dtype=np.float64)
    return voxel @ affine[:3, :3].T + affine[:3, 3]


def nearest_voxel(voxel_coord) -> np.ndarray:
    """Round half up, so (1.5 -> 2) and (0.5 -> 1) regardless of parity."""
    return np.floor(np.asarray(voxel_coord, dtype=np.float64) + 0.5).astype(np.int64)


def voxel_in_grid(index, shape) -> bool:
    index = np.asarray(index)
    return bool(np.all(index >= 0) and np.all(index < np.asarray(shape[:3])))


def point_in_volume(affine, shape, ras_point) -> bool:
    """True when the nearest voxel of ras_point lies inside the grid."""
    return voxel_in_grid(nearest_voxel(ras_to_voxel(affine, ras_point)), shape)


def _trilinear(data: np.ndarray, v: np.ndarray):
    base = np.floor(v).astype(np.int64)
    shape = np.asarray(data.shape[:3])
    base = np.minimum(base, shape - 2)
    base = np.maximum(base, 0)
    frac = v - base
    out = 0.0
    for dx in (0, 1):
        wx = frac[0] if dx else 1.0 - frac[0]
        for dy in (0, 1):
            wy = frac[1] if dy else 1.0 - frac[1]
            for dz in (0, 1):
                wz = frac[2] if dz else 1.0 - frac[2]
                out = out + wx * wy * wz * data[base[0] + dx, base[1] + dy, base[2] + dz]
    return out


def _inside_box(v: np.ndarray, shape) -> bool:
    upper = np.asarray(shape[:3], dtype=np.float64) - 1.0
    return bool(np.all(v >= 0.0) and np.all(v <= upper))


def trilinear_sample(volume: DwiVolume, ras_point) -> np.ndarray:
    """
    Channel-wise trilinear interpolation of the 8 voxels around ras_point.
    """
    v = ras_to_voxel(volume.affine, ras_point)
    if not _inside_box(v, volume.shape3d):
        raise OutOfBoundsError(f"point {np.round(ras_point, 4)} (voxel {np.round(v, 4)}) is outside the volume")
    return np.asarray(_trilinear(volume.data, v), dtype=np.float64)


def sample_scalar(scalar_map: ScalarMap, ras_point, clamp: bool = True) -> float:
    """
    Trilinear lookup in a scalar map. With clamp, coordinates in the half-voxel rim are
    clamped onto the interpolation box instead of raising.
    """
    v = ras_to_voxel(scalar_map.affine, ras_point)
    if clamp:
        v = np.clip(v, 0.0, np.asarray(scalar_map.shape3d, dtype=np.float64) - 1.0)
    elif not _inside_box(v, scalar_map.shape3d):
        raise OutOfBoundsError(f"point {np.round(ras_point, 4)} is outside the scalar map")
    return float(_trilinear(scalar_map.data.astype(np.float64), v))


def mask_value(scalar_map: ScalarMap, ras_point) -> float:
    """Nearest-voxel lookup; 0 outside the grid."""
    index = nearest_voxel(ras_to_voxel(scalar_map.affine, ras_point))
    if not voxel_in_grid(index, scalar_map.shape3d):
        return 0.0
    return float(scalar_map.data[tuple(index)])


def extract_cube(volume: DwiVolume, ras_point) -> VoxelCube:
    """
    3x3x3xG block centred on the voxel nearest to ras_point; neighbours outside the grid are zero.
    """
    center = nearest_voxel(ras_to_voxel(volume.affine, ras_point))
    shape = np.asarray(volume.shape3d)
    if not voxel_in_grid(center, shape):
        raise OutOfBoundsError(f"cube centre {tuple(center)} is outside the grid {tuple(shape)}")
    cube = np.zeros((3, 3, 3, volume.n_channels), dtype=np.float64)
    lo = center - 1
    hi = center + 2
    src_lo = np.maximum(lo, 0)
    src_hi = np.minimum(hi, shape)
    dst_lo = src_lo - lo
    dst_hi = dst_lo + (src_hi - src_lo)
    cube[dst_lo[0]:dst_hi[0], dst_lo[1]:dst_hi[1], dst_lo[2]:dst_hi[2]] = \
        volume.data[src_lo[0]:src_hi[0], src_lo[1]:src_hi[1], src_lo[2]:src_hi[2]]
    return VoxelCube(cube, tuple(int(c) for c in center))
