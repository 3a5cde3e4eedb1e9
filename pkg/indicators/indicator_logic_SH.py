# File: indicators/indicator_logic_SH.py

import logging
import math

import numpy as np

try:
    from scipy.special import sph_harm_y

    def _complex_harmonic(l, m, polar, azimuth):
        return sph_harm_y(l, m, polar, azimuth)
except ImportError:  # scipy < 1.15
    from scipy.special import sph_harm

    def _complex_harmonic(l, m, polar, azimuth):
        return sph_harm(m, l, azimuth, polar)

from utils.errors import InvalidArgumentError


def n_coefficients(order: int) -> int:
    """Number of even-degree real SH basis functions up to `order`."""
    return (order + 1) * (order + 2) // 2


def order_from_n_coefficients(n: int) -> int:
    order = 0
    while n_coefficients(order) < n:
        order += 2
    if n_coefficients(order) != n:
        raise InvalidArgumentError(f"{n} is not a valid even-order SH coefficient count")
    return order


def default_sh_order(n_weighted: int) -> int:
    """
    Order 8 when at least 45 weighted directions exist, otherwise the largest even
    order that keeps the fit overdetermined.
    """
    if n_weighted >= n_coefficients(8):
        return 8
    order = 0
    while n_coefficients(order + 2) < n_weighted:
        order += 2
    return order


def _to_spherical(directions):
    directions = np.asarray(directions, dtype=np.float64).reshape(-1, 3)
    norms = np.linalg.norm(directions, axis=1)
    if np.any(norms == 0):
        raise InvalidArgumentError("zero-length direction in SH evaluation")
    unit = directions / norms[:, None]
    polar = np.arccos(np.clip(unit[:, 2], -1.0, 1.0))
    azimuth = np.arctan2(unit[:, 1], unit[:, 0])
    return polar, azimuth


def sh_basis(directions, order: int) -> np.ndarray:
    """
    Modified real symmetric basis, columns ordered l = 0, 2, ..., order and m = -l..l:
      m < 0 : sqrt(2) * Im(Y_l^|m|)
      m = 0 : Y_l^0
      m > 0 : sqrt(2) * Re(Y_l^m)
    """
    if order < 0 or order % 2:
        raise InvalidArgumentError(f"SH order must be even and non-negative, got {order}")
    polar, azimuth = _to_spherical(directions)
    columns = []
    for l in range(0, order + 1, 2):
        for m in range(-l, l + 1):
            y = _complex_harmonic(l, abs(m), polar, azimuth)
            if m < 0:
                columns.append(math.sqrt(2.0) * y.imag)
            elif m == 0:
                columns.append(y.real)
            else:
                columns.append(math.sqrt(2.0) * y.real)
    return np.stack(columns, axis=1)


def sh_fit(signal, gradients, order: int) -> np.ndarray:
    """
    Least-squares SH coefficients minimising ||B c - signal||. `signal` may be a
    G-vector or an (N, G) stack fitted column-wise.
    """
    if order % 2:
        raise InvalidArgumentError(f"SH order must be even, got {order}")
    gradients = np.asarray(gradients, dtype=np.float64).reshape(-1, 3)
    n_basis = n_coefficients(order)
    if len(gradients) < n_basis:
        raise InvalidArgumentError(
            f"underdetermined SH fit: {len(gradients)} directions for {n_basis} coefficients (order {order})")
    signal = np.asarray(signal, dtype=np.float64)
    basis = sh_basis(gradients, order)
    rhs = signal.T if signal.ndim == 2 else signal
    if rhs.shape[0] != len(gradients):
        raise InvalidArgumentError(f"signal has {rhs.shape[0]} samples for {len(gradients)} gradients")
    coeffs, _, rank, _ = np.linalg.lstsq(basis, rhs, rcond=None)
    if rank < n_basis:
        logging.warning(f"SH design matrix is rank deficient ({rank} < {n_basis})")
    return coeffs.T if signal.ndim == 2 else coeffs


def sh_sample(coeffs, directions) -> np.ndarray:
    """Evaluate an SH expansion (or an (N, R) stack of them) at the given directions."""
    coeffs = np.asarray(coeffs, dtype=np.float64)
    order = order_from_n_coefficients(coeffs.shape[-1])
    basis = sh_basis(directions, order)
    return coeffs @ basis.T
