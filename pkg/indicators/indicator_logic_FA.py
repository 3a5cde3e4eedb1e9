# File: indicators/indicator_logic_FA.py

import logging

import numpy as np

from data.volume import B0_THRESHOLD
from utils.errors import InvalidArgumentError


def tensor_design_matrix(gradients) -> np.ndarray:
    """Rows [gx^2, gy^2, gz^2, 2gxgy, 2gxgz, 2gygz] so that row . d = g^T D g."""
    g = np.asarray(gradients, dtype=np.float64).reshape(-1, 3)
    return np.stack([
        g[:, 0] ** 2, g[:, 1] ** 2, g[:, 2] ** 2,
        2 * g[:, 0] * g[:, 1], 2 * g[:, 0] * g[:, 2], 2 * g[:, 1] * g[:, 2],
    ], axis=1)


def tensor_from_elements(d) -> np.ndarray:
    dxx, dyy, dzz, dxy, dxz, dyz = d
    return np.array([[dxx, dxy, dxz],
                     [dxy, dyy, dyz],
                     [dxz, dyz, dzz]])


def fa_from_eigenvalues(evals) -> float:
    """
    FA = sqrt(1/2) * sqrt((l1-l2)^2 + (l2-l3)^2 + (l3-l1)^2) / sqrt(l1^2 + l2^2 + l3^2)
    """
    l1, l2, l3 = np.asarray(evals, dtype=np.float64)
    denom = l1 * l1 + l2 * l2 + l3 * l3
    if denom <= 0:
        return 0.0
    fa = np.sqrt(0.5 * ((l1 - l2) ** 2 + (l2 - l3) ** 2 + (l3 - l1) ** 2) / denom)
    return float(np.clip(fa, 0.0, 1.0))


def fit_tensor(signal, gradients, bvalues, s0: float) -> np.ndarray:
    """
    Log-linear least-squares diffusion tensor from -ln(S/S0)/b = g^T D g (b>0 channels only).
    """
    signal = np.asarray(signal, dtype=np.float64).reshape(-1)
    gradients = np.asarray(gradients, dtype=np.float64).reshape(-1, 3)
    bvalues = np.asarray(bvalues, dtype=np.float64).reshape(-1)
    weighted = bvalues > B0_THRESHOLD
    if s0 <= 0 or np.any(signal[weighted] <= 0):
        raise InvalidArgumentError("tensor fit needs a positive signal and s0")
    design = tensor_design_matrix(gradients[weighted])
    if design.shape[0] < 6 or np.linalg.matrix_rank(design) < 6:
        raise InvalidArgumentError("tensor design matrix is singular: need >= 6 non-collinear gradients with b>0")
    y = -np.log(signal[weighted] / s0) / bvalues[weighted]
    d, *_ = np.linalg.lstsq(design, y, rcond=None)
    return tensor_from_elements(d)


def fa_from_signal(signal, gradients, bvalues, s0: float) -> float:
    tensor = fit_tensor(signal, gradients, bvalues, s0)
    return fa_from_eigenvalues(np.linalg.eigvalsh(tensor))


def fa_from_signal_stack(signals, s0, gradients, bvalues) -> np.ndarray:
    """
    Vectorised FA for an (N, G) signal stack with per-row s0. Rows with a non-positive
    s0 or weighted signal are background and get FA 0.
    """
    signals = np.asarray(signals, dtype=np.float64)
    s0 = np.asarray(s0, dtype=np.float64).reshape(-1)
    bvalues = np.asarray(bvalues, dtype=np.float64).reshape(-1)
    weighted = bvalues > B0_THRESHOLD
    design = tensor_design_matrix(np.asarray(gradients)[weighted])
    if np.linalg.matrix_rank(design) < 6:
        raise InvalidArgumentError("tensor design matrix is singular")
    sw = signals[:, weighted]
    valid = (s0 > 0) & np.all(sw > 0, axis=1)
    fa = np.zeros(len(signals), dtype=np.float64)
    if not np.any(valid):
        return fa
    y = -np.log(sw[valid] / s0[valid, None]) / bvalues[weighted]
    d = y @ np.linalg.pinv(design).T
    tensors = np.stack([
        np.stack([d[:, 0], d[:, 3], d[:, 4]], axis=1),
        np.stack([d[:, 3], d[:, 1], d[:, 5]], axis=1),
        np.stack([d[:, 4], d[:, 5], d[:, 2]], axis=1),
    ], axis=1)
    evals = np.linalg.eigvalsh(tensors)
    num = (evals[:, 0] - evals[:, 1]) ** 2 + (evals[:, 1] - evals[:, 2]) ** 2 + (evals[:, 2] - evals[:, 0]) ** 2
    den = np.sum(evals ** 2, axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        fa_valid = np.where(den > 0, np.sqrt(0.5 * num / np.where(den > 0, den, 1.0)), 0.0)
    fa[valid] = np.clip(fa_valid, 0.0, 1.0)
    logging.debug(f"FA computed for {int(valid.sum())} of {len(signals)} voxels")
    return fa
