# File: data/data_loader.py

import logging
import os

import nibabel as nib
import numpy as np

from data.volume import DwiVolume, ScalarMap, SCALAR_KINDS
from utils.errors import (InvalidArgumentError, NiftiFormatError, NiftiIOError,
                          UnsupportedDatatypeError)

NIFTI1_HEADER_SIZE = 348
NIFTI1_MAGIC = b"n+1\x00"
SUPPORTED_DATATYPES = {2: "uint8", 4: "int16", 16: "float32", 64: "float64"}
_DTYPE_CODES = {np.dtype(np.uint8): 2, np.dtype(np.int16): 4,
                np.dtype(np.float32): 16, np.dtype(np.float64): 64}


def _check_raw_header(path: str):
    """
    Validate the parts of the NIfTI-1 header the rest of the pipeline relies on before
    nibabel parses it: single-file magic, little-endian 348-byte header, datatype, dim[0].
    """
    try:
        with open(path, "rb") as f:
            raw = f.read(NIFTI1_HEADER_SIZE)
    except OSError as e:
        raise NiftiIOError(f"Cannot read NIfTI file {path}: {e}") from e
    if len(raw) < NIFTI1_HEADER_SIZE:
        raise NiftiFormatError(f"{path}: file shorter than the 348-byte NIfTI-1 header")
    if int.from_bytes(raw[0:4], "little") != NIFTI1_HEADER_SIZE:
        raise NiftiFormatError(f"{path}: sizeof_hdr is not 348 (little-endian NIfTI-1 expected)")
    if raw[344:348] != NIFTI1_MAGIC:
        raise NiftiFormatError(f"{path}: bad magic {raw[344:348]!r}, expected 'n+1\\0'")
    ndim = int.from_bytes(raw[40:42], "little", signed=True)
    if ndim not in (3, 4):
        raise NiftiFormatError(f"{path}: dim[0] = {ndim}, only 3D and 4D images are supported")
    datatype = int.from_bytes(raw[70:72], "little", signed=True)
    if datatype not in SUPPORTED_DATATYPES:
        raise UnsupportedDatatypeError(f"{path}: NIfTI datatype code {datatype} is not supported")


def _header_affine(header) -> np.ndarray:
    """sform when sform_code > 0, else qform when qform_code > 0, else pixdim scaling."""
    sform, scode = header.get_sform(coded=True)
    if scode > 0 and sform is not None:
        return np.asarray(sform, dtype=np.float64)
    qform, qcode = header.get_qform(coded=True)
    if qcode > 0 and qform is not None:
        return np.asarray(qform, dtype=np.float64)
    pixdim = np.asarray(header["pixdim"][1:4], dtype=np.float64)
    pixdim = np.where(pixdim > 0, pixdim, 1.0)
    return np.diag(np.append(pixdim, 1.0))


def read_nifti(path, bvals_path=None, bvecs_path=None):
    """
    Read a NIfTI-1 file. 4D images become a DwiVolume (with the FSL gradient table when
    given), 3D images a ScalarMap whose kind comes from the header description.
    """
    path = os.fspath(path)
    if not path:
        raise NiftiIOError("empty NIfTI path")
    _check_raw_header(path)
    try:
        img = nib.Nifti1Image.from_filename(path)
        data = np.array(img.dataobj)
    except Exception as e:
        raise NiftiFormatError(f"{path}: failed to parse NIfTI-1 image: {e}") from e
    header = img.header
    affine = _header_affine(header)
    logging.info(f"Loaded {path}: shape={data.shape}, dtype={data.dtype}")

    if data.ndim == 4:
        volume = DwiVolume(data=data, affine=affine)
        if bvals_path and bvecs_path:
            bvals, bvecs = read_gradient_table(bvals_path, bvecs_path)
            volume.set_gradient_table(bvecs, bvals)
        return volume

    descrip = bytes(header["descrip"]).split(b"\x00")[0].decode("ascii", errors="ignore").strip()
    if descrip in SCALAR_KINDS:
        kind = descrip
    else:
        kind = "white-matter-mask" if np.all(np.isin(data, (0, 1))) else "FA"
    return ScalarMap(data=data, affine=affine, kind=kind)


def write_nifti(volume_or_map, path):
    """
    Write a DwiVolume or ScalarMap as an uncompressed single-file NIfTI-1 image.
    Payload dtype is kept, so float32 data round-trips bit-exactly.
    """
    path = os.fspath(path) if path is not None else ""
    if not path:
        raise NiftiIOError("empty NIfTI output path")
    if path.endswith(".gz"):
        raise InvalidArgumentError("compressed NIfTI output is not supported; use .nii")
    data = np.asarray(volume_or_map.data)
    if data.dtype not in _DTYPE_CODES:
        raise UnsupportedDatatypeError(f"cannot write dtype {data.dtype}; use one of {list(SUPPORTED_DATATYPES.values())}")
    img = nib.Nifti1Image(data, volume_or_map.affine)
    img.set_sform(volume_or_map.affine, code=1)
    img.set_qform(volume_or_map.affine, code=1)
    img.header.set_data_dtype(data.dtype)
    img.header.set_xyzt_units("mm", "sec")
    if isinstance(volume_or_map, ScalarMap):
        img.header["descrip"] = volume_or_map.kind.encode("ascii")
    else:
        img.header["descrip"] = b"dwi"
    try:
        nib.save(img, path)
    except OSError as e:
        raise NiftiIOError(f"Failed to write {path}: {e}") from e
    logging.info(f"Wrote {path} ({data.shape}, {data.dtype})")


def read_gradient_table(bvals_path, bvecs_path):
    """
    FSL-style text files: bvals is one row of G values, bvecs three rows of G columns.
    Diffusion-weighted b-vectors are renormalised to unit length.
    """
    try:
        bvals = np.loadtxt(bvals_path, dtype=np.float64, ndmin=1).reshape(-1)
        bvecs = np.loadtxt(bvecs_path, dtype=np.float64, ndmin=2)
    except (OSError, ValueError) as e:
        raise NiftiIOError(f"Failed to read gradient table {bvals_path} / {bvecs_path}: {e}") from e
    if bvecs.shape[0] != 3 and bvecs.shape[1] == 3:
        bvecs = bvecs.T
    if bvecs.shape != (3, len(bvals)):
        raise InvalidArgumentError(f"bvecs shape {bvecs.shape} does not match {len(bvals)} b-values")
    bvecs = bvecs.T.copy()
    norms = np.linalg.norm(bvecs, axis=1)
    weighted = norms > 0
    bvecs[weighted] /= norms[weighted, None]
    return bvals, bvecs


def write_gradient_table(bvals, bvecs, bvals_path, bvecs_path):
    np.savetxt(bvals_path, np.asarray(bvals, dtype=np.float64)[None, :], fmt="%.6g")
    np.savetxt(bvecs_path, np.asarray(bvecs, dtype=np.float64).T, fmt="%.17g")
    logging.info(f"Wrote gradient table {bvals_path}, {bvecs_path}")


def load_dwi(dwi_path, bvals_path, bvecs_path) -> DwiVolume:
    volume = read_nifti(dwi_path, bvals_path, bvecs_path)
    if not isinstance(volume, DwiVolume):
        raise NiftiFormatError(f"{dwi_path} is not a 4D diffusion volume")
    if volume.gradients is None:
        raise InvalidArgumentError(f"{dwi_path} needs a gradient table")
    return volume


def load_scalar_map(path, kind: str) -> ScalarMap:
    scalar_map = read_nifti(path)
    if not isinstance(scalar_map, ScalarMap):
        raise NiftiFormatError(f"{path} is not a 3D scalar map")
    if scalar_map.kind != kind:
        scalar_map = ScalarMap(data=scalar_map.data, affine=scalar_map.affine, kind=kind)
    return scalar_map
