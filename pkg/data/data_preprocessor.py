# File: data/data_preprocessor.py

import logging

import numpy as np

from data.volume import DwiVolume, ScalarMap
from geometry.sphere import Sphere
from indicators.indicator_logic_FA import fa_from_signal_stack
from indicators.indicator_logic_SH import default_sh_order, sh_basis, sh_fit
from utils.errors import InvalidArgumentError


def resample_volume(volume: DwiVolume, target_sphere: Sphere, order: int = None) -> DwiVolume:
    """
    Per voxel: divide the diffusion-weighted channels by the mean b=0 signal, fit an even
    SH expansion, and evaluate it at the target directions. Background voxels (zero b=0
    signal) come out as all zeros.
    """
    if volume.gradients is None or volume.bvalues is None:
        raise InvalidArgumentError("resample_volume needs a volume with a gradient table")
    b0 = volume.b0_mask
    weighted = ~b0
    n_weighted = int(weighted.sum())
    if n_weighted == 0:
        raise InvalidArgumentError("volume has no diffusion-weighted channels")
    if order is None:
        order = default_sh_order(n_weighted)

    data = volume.data.reshape(-1, volume.n_channels).astype(np.float64)
    if b0.any():
        s0 = data[:, b0].mean(axis=1)
    else:
        s0 = np.ones(len(data))
    foreground = s0 > 0
    out = np.zeros((len(data), target_sphere.k), dtype=np.float64)
    if foreground.any():
        attenuation = data[foreground][:, weighted] / s0[foreground, None]
        coeffs = sh_fit(attenuation, volume.gradients[weighted], order)
        out[foreground] = coeffs @ sh_basis(target_sphere.directions, order).T
    logging.info(f"SH order {order} resampling: {int(foreground.sum())} foreground voxels, "
                 f"{n_weighted} -> {target_sphere.k} directions")

    shell_b = float(np.max(volume.bvalues[weighted]))
    return DwiVolume(
        data=out.reshape(volume.shape3d + (target_sphere.k,)),
        affine=volume.affine.copy(),
        gradients=target_sphere.directions.copy(),
        bvalues=np.full(target_sphere.k, shell_b),
    )


def compute_fa_map(volume: DwiVolume) -> ScalarMap:
    """FA map from a log-linear tensor fit at every voxel; background voxels get 0."""
    if volume.gradients is None:
        raise InvalidArgumentError("compute_fa_map needs a gradient table")
    b0 = volume.b0_mask
    if not b0.any():
        raise InvalidArgumentError("compute_fa_map needs at least one b=0 channel")
    data = volume.data.reshape(-1, volume.n_channels).astype(np.float64)
    s0 = data[:, b0].mean(axis=1)
    fa = fa_from_signal_stack(data, s0, volume.gradients, volume.bvalues)
    return ScalarMap(data=fa.reshape(volume.shape3d).astype(np.float32),
                     affine=volume.affine.copy(), kind="FA")
