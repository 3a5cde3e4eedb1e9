# File: phantom/phantom_generator.py
"""
Synthetic diffusion phantom: tube-shaped bundles around parametric centrelines, a
single-tensor signal aligned with the local centreline tangent, and the ground truth
(bundle voxels, endpoint ROIs, reference streamlines) needed to score tractograms.
"""

import logging
import math
import os
from dataclasses import asdict, dataclass, field
from typing import List, Optional, Tuple

import numpy as np
import yaml

from data.data_loader import read_nifti, write_nifti
from data.volume import DwiVolume, ScalarMap, voxel_to_ras
from geometry.sphere import make_sphere
from indicators.indicator_logic_FA import fa_from_eigenvalues
from streamlines.streamline import Streamline, Tractogram, resample_streamline
from streamlines.tck_io import read_tck, write_tck
from utils.errors import ConfigError, InvalidArgumentError

CENTRELINE_SPACING = 0.1  # mm
HALF_VOXEL_DIAGONAL = math.sqrt(3.0) / 2.0


@dataclass
class BundleSpec:
    """
    A tube of `radius` mm around a centreline given either as waypoints (`points`, RAS mm)
    or as an arc in an axial plane (`arc`: center, radius, start_angle, end_angle in degrees).
    """
    name: str
    radius: float = 2.0
    points: Optional[list] = None
    arc: Optional[dict] = None

    def validate(self):
        if not self.radius > 0:
            raise InvalidArgumentError(f"bundle '{self.name}': radius must be > 0")
        if (self.points is None) == (self.arc is None):
            raise InvalidArgumentError(f"bundle '{self.name}': give exactly one of 'points' or 'arc'")
        if self.points is not None:
            pts = np.asarray(self.points, dtype=np.float64)
            if pts.ndim != 2 or pts.shape[1] != 3 or len(pts) < 2:
                raise InvalidArgumentError(f"bundle '{self.name}': points must be >= 2 RAS triplets")
        else:
            missing = {"center", "radius", "start_angle", "end_angle"} - set(self.arc)
            if missing:
                raise InvalidArgumentError(f"bundle '{self.name}': arc is missing {sorted(missing)}")
            if not self.arc["radius"] > 0:
                raise InvalidArgumentError(f"bundle '{self.name}': arc radius must be > 0")
        return self

    def centreline(self, spacing: float = CENTRELINE_SPACING) -> np.ndarray:
        """Dense centreline samples roughly `spacing` mm apart, both ends included."""
        if self.points is not None:
            waypoints = np.asarray(self.points, dtype=np.float64)
            pieces = []
            for a, b in zip(waypoints[:-1], waypoints[1:]):
                n = max(1, int(math.ceil(np.linalg.norm(b - a) / spacing)))
                t = np.arange(n)[:, None] / n
                pieces.append(a + t * (b - a))
            pieces.append(waypoints[-1:])
            return np.concatenate(pieces, axis=0)
        center = np.asarray(self.arc["center"], dtype=np.float64)
        r = float(self.arc["radius"])
        a0 = math.radians(self.arc["start_angle"])
        a1 = math.radians(self.arc["end_angle"])
        n = max(2, int(math.ceil(abs(a1 - a0) * r / spacing)) + 1)
        angles = np.linspace(a0, a1, n)
        return np.stack([center[0] + r * np.cos(angles),
                         center[1] + r * np.sin(angles),
                         np.full(n, center[2])], axis=1)


def default_bundles() -> List[BundleSpec]:
    """One straight bundle, one 90 degree arc and an orthogonal crossing pair."""
    return [
        BundleSpec("straight", 2.0, points=[[4.0, 6.0, 8.0], [27.0, 6.0, 8.0]]),
        BundleSpec("arc", 2.0, arc=dict(center=[4.0, 4.0, 24.0], radius=14.0, start_angle=0.0, end_angle=90.0)),
        BundleSpec("cross_x", 2.0, points=[[4.0, 20.0, 16.0], [27.0, 20.0, 16.0]]),
        BundleSpec("cross_y", 2.0, points=[[16.0, 8.0, 16.0], [16.0, 28.0, 16.0]]),
    ]


@dataclass
class PhantomSpec:
    shape: Tuple[int, int, int] = (32, 32, 32)
    voxel_size: float = 1.0            # mm
    bundles: List[BundleSpec] = field(default_factory=default_bundles)
    lambda_par: float = 1.7e-3         # mm^2/s
    lambda_perp: float = 0.3e-3        # mm^2/s
    bvalue: float = 1000.0             # s/mm^2
    n_gradients: int = 32
    s0: float = 100.0
    noise_sigma: float = 0.0           # Rician sigma, 0 = noiseless
    rng_seed: int = 0
    n_streamlines: int = 20            # reference streamlines per bundle
    step_size: float = 0.5             # mm
    roi_length: float = 3.0            # mm of centreline covered by each endpoint ROI

    @classmethod
    def from_dict(cls, values: dict) -> "PhantomSpec":
        values = dict(values or {})
        known = set(cls.__dataclass_fields__)
        unknown = set(values) - known
        if unknown:
            raise ConfigError(f"unknown phantom config keys: {sorted(unknown)}")
        if "bundles" in values and values["bundles"] is not None:
            values["bundles"] = [b if isinstance(b, BundleSpec) else BundleSpec(**b) for b in values["bundles"]]
        else:
            values.pop("bundles", None)
        if "shape" in values:
            values["shape"] = tuple(int(v) for v in values["shape"])
        return cls(**values).validate()

    def to_dict(self) -> dict:
        out = asdict(self)
        out["shape"] = list(self.shape)
        return out

    @property
    def affine(self) -> np.ndarray:
        return np.diag([self.voxel_size, self.voxel_size, self.voxel_size, 1.0])

    def validate(self) -> "PhantomSpec":
        if len(self.shape) != 3 or min(self.shape) < 3:
            raise InvalidArgumentError(f"phantom shape must be three dims >= 3, got {self.shape}")
        if not self.voxel_size > 0:
            raise InvalidArgumentError("phantom voxel_size must be > 0")
        if not self.lambda_par > self.lambda_perp > 0:
            raise InvalidArgumentError("phantom eigenvalues need lambda_par > lambda_perp > 0")
        if self.bvalue <= 0 or self.s0 <= 0 or self.noise_sigma < 0:
            raise InvalidArgumentError("phantom needs bvalue > 0, s0 > 0 and noise_sigma >= 0")
        if self.n_gradients < 6:
            raise InvalidArgumentError("phantom needs at least 6 gradient directions")
        if self.n_streamlines < 1 or self.step_size <= 0 or self.roi_length <= 0:
            raise InvalidArgumentError("phantom needs n_streamlines >= 1, step_size > 0 and roi_length > 0")
        if not self.bundles:
            raise InvalidArgumentError("phantom needs at least one bundle")
        names = [b.name for b in self.bundles]
        if len(set(names)) != len(names):
            raise InvalidArgumentError(f"bundle names must be unique: {names}")
        upper = (np.asarray(self.shape, dtype=np.float64) - 1.0) * self.voxel_size
        for bundle in self.bundles:
            bundle.validate()
            line = bundle.centreline()
            if np.any(line - bundle.radius < 0) or np.any(line + bundle.radius > upper):
                raise InvalidArgumentError(f"bundle '{bundle.name}' (radius {bundle.radius}) touches the grid boundary")
        return self


@dataclass
class BundleTruth:
    name: str
    mask: np.ndarray = field(repr=False)   # bool, voxels visited by the reference streamlines
    head: np.ndarray = field(repr=False)   # bool endpoint ROI at the centreline start
    tail: np.ndarray = field(repr=False)   # bool endpoint ROI at the centreline end
    streamlines: Tractogram = field(default_factory=Tractogram, repr=False)


@dataclass
class BundleGroundTruth:
    affine: np.ndarray
    shape: Tuple[int, int, int]
    bundles: List[BundleTruth] = field(default_factory=list)

    @property
    def reference(self) -> Tractogram:
        return Tractogram([s for b in self.bundles for s in b.streamlines])


def gradient_table(n_gradients: int, bvalue: float):
    """One b=0 channel followed by n upper-hemisphere Fibonacci directions."""
    directions = make_sphere(2 * n_gradients).directions[:n_gradients]
    bvecs = np.vstack([np.zeros((1, 3)), directions])
    bvals = np.concatenate([[0.0], np.full(n_gradients, float(bvalue))])
    return bvals, bvecs


def tensor_signal(tangents, bvecs, bvals, lambda_par: float, lambda_perp: float, s0: float) -> np.ndarray:
    """
    S = s0 exp(-b g^T D g) with D = lambda_perp I + (lambda_par - lambda_perp) t t^T,
    for (N, 3) tangents against a (G, 3) gradient table. Returns (N, G).
    """
    tangents = np.asarray(tangents, dtype=np.float64).reshape(-1, 3)
    bvecs = np.asarray(bvecs, dtype=np.float64).reshape(-1, 3)
    cos2 = (tangents @ bvecs.T) ** 2
    gdg = lambda_perp * np.sum(bvecs ** 2, axis=1)[None, :] + (lambda_par - lambda_perp) * cos2
    return s0 * np.exp(-np.asarray(bvals, dtype=np.float64)[None, :] * gdg)


def _nearest_on_centreline(points: np.ndarray, line: np.ndarray):
    """Distance to the polyline, unit tangent and arc position of the closest point, per point."""
    best_dist = np.full(len(points), np.inf)
    best_tangent = np.zeros((len(points), 3))
    best_arc = np.zeros(len(points))
    arc_start = 0.0
    for a, b in zip(line[:-1], line[1:]):
        seg = b - a
        seg_len = float(np.linalg.norm(seg))
        if seg_len == 0:
            continue
        t = np.clip((points - a) @ seg / (seg_len * seg_len), 0.0, 1.0)
        dist = np.linalg.norm(points - (a + t[:, None] * seg), axis=1)
        closer = dist < best_dist
        best_dist[closer] = dist[closer]
        best_tangent[closer] = seg / seg_len
        best_arc[closer] = arc_start + t[closer] * seg_len
        arc_start += seg_len
    return best_dist, best_tangent, best_arc, arc_start


def _local_frames(line: np.ndarray):
    """Tangent-orthogonal (normal, binormal) pairs along the centreline."""
    tangents = np.gradient(line, axis=0)
    tangents /= np.linalg.norm(tangents, axis=1, keepdims=True)
    # the axis least aligned with the tangents overall stays transverse everywhere
    reference = np.eye(3)[int(np.argmin(np.max(np.abs(tangents), axis=0)))]
    normals = reference - (tangents @ reference)[:, None] * tangents
    normals /= np.linalg.norm(normals, axis=1, keepdims=True)
    binormals = np.cross(tangents, normals)
    return normals, binormals


def reference_streamlines(bundle: BundleSpec, spec: PhantomSpec, rng: np.random.Generator) -> Tractogram:
    """
    The centreline plus parallel copies shifted within the tube, resampled to the step size.
    Offsets stay a half voxel diagonal inside the radius so every point's voxel is a bundle voxel.
    """
    line = bundle.centreline()
    normals, binormals = _local_frames(line)
    max_offset = max(0.0, bundle.radius - HALF_VOXEL_DIAGONAL * spec.voxel_size)
    streamlines = []
    for i in range(spec.n_streamlines):
        if i == 0:
            u = v = 0.0
        else:
            r = max_offset * math.sqrt(rng.uniform())
            phi = rng.uniform(0.0, 2.0 * math.pi)
            u, v = r * math.cos(phi), r * math.sin(phi)
        shifted = line + u * normals + v * binormals
        resampled = resample_streamline(Streamline(shifted), spec.step_size)
        # float32 rounding up front so the TCK copy rasterises to the same voxels
        streamlines.append(Streamline(resampled.points.astype(np.float32).astype(np.float64)))
    return Tractogram(streamlines)


def rasterize(streamline: Streamline, affine, shape, step: float = 0.25) -> np.ndarray:
    """
    Boolean grid of the voxels a streamline passes through, from points inserted every
    `step` voxel along each segment. Points outside the grid are ignored.
    """
    grid = np.zeros(tuple(shape[:3]), dtype=bool)
    points = np.asarray(streamline.points, dtype=np.float64)
    voxel = np.linalg.solve(np.asarray(affine, dtype=np.float64),
                            np.hstack([points, np.ones((len(points), 1))]).T).T[:, :3]
    dense = [voxel[:1]]
    for a, b in zip(voxel[:-1], voxel[1:]):
        n = max(1, int(math.ceil(np.linalg.norm(b - a) / step)))
        t = np.arange(1, n + 1)[:, None] / n
        dense.append(a + t * (b - a))
    idx = np.floor(np.concatenate(dense, axis=0) + 0.5).astype(np.int64)
    inside = np.all((idx >= 0) & (idx < np.asarray(shape[:3])), axis=1)
    idx = idx[inside]
    grid[idx[:, 0], idx[:, 1], idx[:, 2]] = True
    return grid


def generate_phantom(spec: PhantomSpec):
    """
    Returns (DwiVolume, wm_mask, fa_map, BundleGroundTruth). Crossing voxels average the
    signals of their bundles; background voxels get an isotropic signal with the mean
    diffusivity and FA 0.
    """
    spec.validate()
    rng = np.random.default_rng(spec.rng_seed)
    shape = tuple(spec.shape)
    affine = spec.affine
    bvals, bvecs = gradient_table(spec.n_gradients, spec.bvalue)

    grid = np.stack(np.meshgrid(*[np.arange(n) for n in shape], indexing="ij"), axis=-1).reshape(-1, 3)
    centres = voxel_to_ras(affine, grid.astype(np.float64))
    n_vox = len(centres)

    signal_sum = np.zeros((n_vox, len(bvals)))
    tensor_sum = np.zeros((n_vox, 3, 3))
    counts = np.zeros(n_vox, dtype=np.int64)
    truths = []
    for bundle in spec.bundles:
        line = bundle.centreline()
        dist, tangent, arc, length = _nearest_on_centreline(centres, line)
        inside = dist <= bundle.radius
        if length <= 2 * spec.roi_length:
            raise InvalidArgumentError(f"bundle '{bundle.name}' ({length:.1f} mm) is too short for its endpoint ROIs")
        signal_sum[inside] += tensor_signal(tangent[inside], bvecs, bvals,
                                            spec.lambda_par, spec.lambda_perp, spec.s0)
        t = tangent[inside]
        tensor_sum[inside] += (spec.lambda_perp * np.eye(3)[None]
                               + (spec.lambda_par - spec.lambda_perp) * t[:, :, None] * t[:, None, :])
        counts[inside] += 1

        streamlines = reference_streamlines(bundle, spec, rng)
        mask = np.zeros(shape, dtype=bool)
        for s in streamlines:
            mask |= rasterize(s, affine, shape)
        head = (inside & (arc <= spec.roi_length)).reshape(shape)
        tail = (inside & (arc >= length - spec.roi_length)).reshape(shape)
        truths.append(BundleTruth(bundle.name, mask, head, tail, streamlines))
        logging.info(f"Phantom bundle '{bundle.name}': {length:.1f} mm, {int(inside.sum())} voxels, "
                     f"{len(streamlines)} reference streamlines")

    wm = counts > 0
    signal = np.empty((n_vox, len(bvals)))
    signal[wm] = signal_sum[wm] / counts[wm, None]
    mean_diffusivity = (spec.lambda_par + 2.0 * spec.lambda_perp) / 3.0
    signal[~wm] = spec.s0 * np.exp(-bvals * mean_diffusivity)[None, :]
    if spec.noise_sigma > 0:
        real = signal + rng.normal(0.0, spec.noise_sigma, signal.shape)
        imag = rng.normal(0.0, spec.noise_sigma, signal.shape)
        signal = np.sqrt(real * real + imag * imag)

    fa = np.zeros(n_vox)
    single = counts == 1
    fa[single] = fa_from_eigenvalues((spec.lambda_par, spec.lambda_perp, spec.lambda_perp))
    crossing = counts > 1
    if crossing.any():
        mean_tensors = tensor_sum[crossing] / counts[crossing, None, None]
        fa[crossing] = [fa_from_eigenvalues(ev) for ev in np.linalg.eigvalsh(mean_tensors)]

    dwi = DwiVolume(data=signal.reshape(shape + (len(bvals),)).astype(np.float32),
                    affine=affine.copy(), gradients=bvecs, bvalues=bvals)
    wm_mask = ScalarMap(data=wm.reshape(shape).astype(np.uint8), affine=affine.copy(), kind="white-matter-mask")
    fa_map = ScalarMap(data=fa.reshape(shape).astype(np.float32), affine=affine.copy(), kind="FA")
    logging.info(f"Generated phantom {shape}: {int(wm.sum())} white matter voxels, "
                 f"{int(crossing.sum())} crossing voxels, noise sigma {spec.noise_sigma}")
    return dwi, wm_mask, fa_map, BundleGroundTruth(affine.copy(), shape, truths)


def save_ground_truth(gt: BundleGroundTruth, directory):
    """
    bundles.yaml index plus <name>_mask.nii, <name>_head.nii, <name>_tail.nii and
    <name>.tck for every bundle.
    """
    directory = os.fspath(directory)
    if not os.path.isdir(directory):
        raise InvalidArgumentError(f"ground truth directory {directory} does not exist")
    index = {"shape": [int(n) for n in gt.shape], "bundles": []}
    for bundle in gt.bundles:
        entry = {"name": bundle.name}
        for part in ("mask", "head", "tail"):
            filename = f"{bundle.name}_{part}.nii"
            write_nifti(ScalarMap(getattr(bundle, part).astype(np.uint8), gt.affine, "white-matter-mask"),
                        os.path.join(directory, filename))
            entry[part] = filename
        entry["streamlines"] = f"{bundle.name}.tck"
        write_tck(bundle.streamlines, os.path.join(directory, entry["streamlines"]))
        index["bundles"].append(entry)
    with open(os.path.join(directory, "bundles.yaml"), "w") as f:
        yaml.safe_dump(index, f, sort_keys=False)
    logging.info(f"Saved ground truth for {len(gt.bundles)} bundles to {directory}")


def load_ground_truth(directory) -> BundleGroundTruth:
    directory = os.fspath(directory)
    index_path = os.path.join(directory, "bundles.yaml")
    try:
        with open(index_path, "r") as f:
            index = yaml.safe_load(f)
    except (OSError, yaml.YAMLError) as e:
        raise InvalidArgumentError(f"cannot read ground truth index {index_path}: {e}") from e
    if not index or not index.get("bundles"):
        raise InvalidArgumentError(f"{index_path} lists no bundles")
    bundles = []
    affine = None
    for entry in index["bundles"]:
        parts = {}
        for part in ("mask", "head", "tail"):
            scalar_map = read_nifti(os.path.join(directory, entry[part]))
            if not isinstance(scalar_map, ScalarMap):
                raise InvalidArgumentError(f"{entry[part]} is not a 3D mask")
            parts[part] = scalar_map.data > 0
            affine = scalar_map.affine
        streamlines = read_tck(os.path.join(directory, entry["streamlines"]))
        bundles.append(BundleTruth(entry["name"], parts["mask"], parts["head"], parts["tail"], streamlines))
    return BundleGroundTruth(affine, tuple(bundles[0].mask.shape), bundles)
