import numpy as np
import pytest

from data.volume import (DwiVolume, ScalarMap, extract_cube, mask_value, nearest_voxel,
                         point_in_volume, ras_to_voxel, sample_scalar, trilinear_sample,
                         voxel_to_ras)
from utils.errors import InvalidArgumentError, OutOfBoundsError


def test_ras_voxel_round_trip():
    affine = np.array([[2.0, 0.0, 0.0, -10.0],
                       [0.0, 2.0, 0.0, 5.0],
                       [0.0, 0.0, 2.5, 1.0],
                       [0.0, 0.0, 0.0, 1.0]])
    voxel = np.array([3.25, 1.5, 7.0])
    ras = voxel_to_ras(affine, voxel)
    np.testing.assert_allclose(ras, [-3.5, 8.0, 18.5])
    np.testing.assert_allclose(ras_to_voxel(affine, ras), voxel, atol=1e-12)


def test_nearest_voxel_rounds_half_up():
    np.testing.assert_array_equal(nearest_voxel([0.5, 1.5, 2.49]), [1, 2, 2])
    np.testing.assert_array_equal(nearest_voxel([-0.5, -0.51, 0.0]), [0, -1, 0])


def test_dwi_volume_rejects_bad_inputs(identity_affine):
    with pytest.raises(InvalidArgumentError):
        DwiVolume(data=np.zeros((3, 3, 3)), affine=identity_affine)
    with pytest.raises(InvalidArgumentError):
        DwiVolume(data=np.zeros((3, 3, 3, 2)), affine=np.zeros((4, 4)))
    with pytest.raises(InvalidArgumentError):
        DwiVolume(data=np.zeros((3, 3, 3, 2)), affine=identity_affine,
                  gradients=[[0, 0, 0], [0, 2, 0]], bvalues=[0, 1000])


def test_scalar_map_validation(identity_affine):
    with pytest.raises(InvalidArgumentError):
        ScalarMap(data=np.full((2, 2, 2), 2.0), affine=identity_affine, kind="white-matter-mask")
    with pytest.raises(InvalidArgumentError):
        ScalarMap(data=np.full((2, 2, 2), 1.5), affine=identity_affine, kind="FA")
    with pytest.raises(InvalidArgumentError):
        ScalarMap(data=np.zeros((2, 2, 2)), affine=identity_affine, kind="T1")


def test_trilinear_sample_of_linear_field_is_exact(identity_affine):
    x, y, z = np.meshgrid(np.arange(6), np.arange(6), np.arange(6), indexing="ij")
    field = np.stack([x + 2 * y - z, 3.0 * z], axis=-1).astype(np.float64)
    volume = DwiVolume(data=field, affine=identity_affine)
    p = np.array([1.25, 3.5, 2.75])
    np.testing.assert_allclose(trilinear_sample(volume, p), [1.25 + 7.0 - 2.75, 8.25], atol=1e-12)
    # the upper grid face is inside the interpolation box
    np.testing.assert_allclose(trilinear_sample(volume, [5.0, 5.0, 5.0]), [10.0, 15.0], atol=1e-12)


def test_trilinear_sample_out_of_bounds(small_volume):
    with pytest.raises(OutOfBoundsError):
        trilinear_sample(small_volume, [-0.1, 2.0, 2.0])
    with pytest.raises(OutOfBoundsError):
        trilinear_sample(small_volume, [9.2, 2.0, 2.0])


def test_sample_scalar_clamps_rim(constant_fa):
    assert sample_scalar(constant_fa, [9.4, 0.0, -0.3]) == pytest.approx(0.5)
    with pytest.raises(OutOfBoundsError):
        sample_scalar(constant_fa, [9.4, 0.0, 0.0], clamp=False)


def test_mask_value_and_point_in_volume(identity_affine):
    data = np.zeros((4, 4, 4), dtype=np.uint8)
    data[2, 1, 3] = 1
    mask = ScalarMap(data=data, affine=identity_affine, kind="white-matter-mask")
    assert mask_value(mask, [2.4, 0.6, 2.5]) == 1.0
    assert mask_value(mask, [1.4, 0.6, 2.5]) == 0.0
    assert mask_value(mask, [10.0, 0.0, 0.0]) == 0.0
    assert point_in_volume(identity_affine, (4, 4, 4), [3.49, 0.0, -0.5])
    assert not point_in_volume(identity_affine, (4, 4, 4), [3.5, 0.0, 0.0])


def test_extract_cube_centre_and_zero_border(small_volume):
    cube = extract_cube(small_volume, [4.2, 5.0, 5.4])
    assert cube.center == (4, 5, 5)
    np.testing.assert_array_equal(cube.values, small_volume.data[3:6, 4:7, 4:7])

    corner = extract_cube(small_volume, [0.0, 0.0, 9.0])
    assert corner.values.shape == (3, 3, 3, 4)
    assert np.all(corner.values[0] == 0.0)
    assert np.all(corner.values[:, 0] == 0.0)
    assert np.all(corner.values[:, :, 2] == 0.0)
    np.testing.assert_array_equal(corner.values[1:, 1:, :2], small_volume.data[0:2, 0:2, 8:10])


def test_extract_cube_outside_grid(small_volume):
    with pytest.raises(OutOfBoundsError):
        extract_cube(small_volume, [-0.6, 0.0, 0.0])


def test_corner_cube_has_eight_filled_voxels(small_volume):
    cube = extract_cube(small_volume, [0.0, 0.0, 0.0])
    filled = np.any(cube.values != 0.0, axis=-1)
    assert filled.sum() == 8
    assert (~filled).sum() == 19
    np.testing.assert_array_equal(cube.values[1:, 1:, 1:], small_volume.data[:2, :2, :2])
