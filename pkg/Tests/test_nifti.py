import struct

import nibabel as nib
import numpy as np
import pytest

from data.data_loader import (load_dwi, read_gradient_table, read_nifti, write_gradient_table,
                              write_nifti)
from data.volume import DwiVolume, ScalarMap
from utils.errors import NiftiFormatError, NiftiIOError, UnsupportedDatatypeError


def _affine():
    return np.array([[1.5, 0.0, 0.0, -12.0],
                     [0.0, 1.5, 0.0, 4.0],
                     [0.0, 0.0, 2.0, 7.5],
                     [0.0, 0.0, 0.0, 1.0]])


def test_float32_round_trip_is_bit_exact(tmp_path):
    rng = np.random.default_rng(5)
    for i in range(20):
        shape = tuple(rng.integers(2, 7, size=3)) + (int(rng.integers(1, 5)),)
        data = rng.normal(size=shape).astype(np.float32)
        path = tmp_path / f"vol{i}.nii"
        write_nifti(DwiVolume(data=data, affine=_affine()), path)
        loaded = read_nifti(path)
        assert isinstance(loaded, DwiVolume)
        assert loaded.data.dtype == np.float32
        assert loaded.data.tobytes() == data.tobytes()
        np.testing.assert_allclose(loaded.affine, _affine(), atol=1e-6)


def test_scalar_map_kind_survives(tmp_path):
    mask = ScalarMap(data=np.ones((3, 4, 5), dtype=np.uint8), affine=np.eye(4), kind="white-matter-mask")
    fa = ScalarMap(data=np.full((3, 4, 5), 1.0, dtype=np.float32), affine=np.eye(4), kind="FA")
    write_nifti(mask, tmp_path / "mask.nii")
    write_nifti(fa, tmp_path / "fa.nii")
    assert read_nifti(tmp_path / "mask.nii").kind == "white-matter-mask"
    # all-ones data would look like a mask without the stored description
    assert read_nifti(tmp_path / "fa.nii").kind == "FA"


def test_int16_scaling_is_applied(tmp_path):
    path = tmp_path / "scaled.nii"
    raw = np.arange(24, dtype=np.int16).reshape(2, 3, 4)
    img = nib.Nifti1Image(raw, np.eye(4))
    img.header.set_data_dtype(np.int16)
    nib.save(img, str(path))
    blob = bytearray(path.read_bytes())
    blob[112:120] = struct.pack("<ff", 2.0, 1.0)
    path.write_bytes(bytes(blob))
    loaded = read_nifti(path)
    np.testing.assert_allclose(loaded.data, raw * 2.0 + 1.0)


def test_bad_magic_is_a_format_error(tmp_path):
    path = tmp_path / "bad.nii"
    write_nifti(DwiVolume(data=np.zeros((2, 2, 2, 2), dtype=np.float32), affine=np.eye(4)), path)
    blob = bytearray(path.read_bytes())
    blob[344:348] = b"ni1\x00"
    path.write_bytes(bytes(blob))
    with pytest.raises(NiftiFormatError):
        read_nifti(path)


def test_unsupported_datatype(tmp_path):
    path = tmp_path / "c64.nii"
    img = nib.Nifti1Image(np.zeros((2, 2, 2), dtype=np.complex64), np.eye(4))
    nib.save(img, str(path))
    with pytest.raises(UnsupportedDatatypeError):
        read_nifti(path)


def test_short_file_and_missing_file(tmp_path):
    path = tmp_path / "short.nii"
    path.write_bytes(b"\x00" * 100)
    with pytest.raises(NiftiFormatError):
        read_nifti(path)
    with pytest.raises(NiftiIOError):
        read_nifti(tmp_path / "missing.nii")


def test_write_to_missing_directory(tmp_path):
    volume = DwiVolume(data=np.zeros((2, 2, 2, 1), dtype=np.float32), affine=np.eye(4))
    with pytest.raises(NiftiIOError):
        write_nifti(volume, tmp_path / "nope" / "out.nii")
    with pytest.raises(NiftiIOError):
        write_nifti(volume, "")


def test_gradient_table_round_trip(tmp_path):
    bvals = np.array([0.0, 1000.0, 1000.0, 1000.0])
    bvecs = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.6, 0.8], [0.0, 0.0, -1.0]])
    write_gradient_table(bvals, bvecs, tmp_path / "bvals", tmp_path / "bvecs")
    read_bvals, read_bvecs = read_gradient_table(tmp_path / "bvals", tmp_path / "bvecs")
    np.testing.assert_array_equal(read_bvals, bvals)
    np.testing.assert_allclose(read_bvecs, bvecs, atol=1e-15)

    data = np.ones((2, 2, 2, 4), dtype=np.float32)
    write_nifti(DwiVolume(data=data, affine=np.eye(4)), tmp_path / "dwi.nii")
    volume = load_dwi(tmp_path / "dwi.nii", tmp_path / "bvals", tmp_path / "bvecs")
    np.testing.assert_array_equal(volume.b0_mask, [True, False, False, False])
