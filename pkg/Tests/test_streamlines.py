import numpy as np
import pytest

from geometry.sphere import SmoothingConfig
from streamlines.streamline import (Streamline, Tractogram, direction_targets, resample_streamline,
                                    resample_tractogram, reverse_streamline, split_windows)
from streamlines.tck_io import read_tck, write_tck
from utils.errors import DegenerateStreamlineError, TckFormatError, UnsupportedDatatypeError


def test_resample_straight_line():
    s = Streamline([[0.0, 0.0, 0.0], [2.0, 0.0, 0.0]])
    r = resample_streamline(s, 0.5)
    np.testing.assert_allclose(r.points[:, 0], [0.0, 0.5, 1.0, 1.5, 2.0])
    assert r.length_mm == pytest.approx(2.0)


def test_resample_keeps_endpoint_and_spacing():
    s = Streamline([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [1.0, 1.3, 0.0]])
    r = resample_streamline(s, 0.5)
    np.testing.assert_array_equal(r.points[-1], [1.0, 1.3, 0.0])
    np.testing.assert_array_equal(r.points[0], [0.0, 0.0, 0.0])
    # arc-length positions 0, 0.5, ..., 2.0 then the 2.3 endpoint
    assert len(r) == 6


def test_resample_degenerate():
    with pytest.raises(DegenerateStreamlineError):
        resample_streamline(Streamline([[1.0, 1.0, 1.0]]), 0.5)
    with pytest.raises(DegenerateStreamlineError):
        resample_streamline(Streamline([[1.0, 1.0, 1.0], [1.0, 1.0, 1.0]]), 0.5)
    kept = resample_tractogram(Tractogram([Streamline([[0, 0, 0]]),
                                           Streamline([[0, 0, 0], [1, 0, 0]])]), 0.5)
    assert len(kept) == 1


def test_direction_targets_end_with_eof(axis_sphere):
    s = Streamline([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [1.0, 1.0, 0.0]])
    labels = direction_targets(s, axis_sphere, SmoothingConfig(), smooth=False)
    assert [label.argmax() for label in labels] == [0, 2, 6]
    reversed_labels = direction_targets(reverse_streamline(s), axis_sphere, SmoothingConfig(), smooth=False)
    assert [label.argmax() for label in reversed_labels] == [3, 1, 6]


def test_split_windows():
    assert split_windows(50, 100, 10) == [(0, 50)]
    assert split_windows(250, 100, 10) == [(0, 100), (90, 190), (180, 250)]
    windows = split_windows(101, 100, 10)
    assert windows == [(0, 100), (90, 101)]


def _random_tractogram(rng):
    return Tractogram([Streamline(rng.normal(scale=20.0, size=(int(rng.integers(1, 30)), 3)))
                       for _ in range(int(rng.integers(0, 12)))])


def test_tck_round_trip_preserves_float32_bits(tmp_path):
    rng = np.random.default_rng(3)
    for i in range(20):
        tractogram = _random_tractogram(rng)
        path = tmp_path / f"t{i}.tck"
        write_tck(tractogram, path)
        loaded = read_tck(path)
        assert loaded.lengths == tractogram.lengths
        for a, b in zip(tractogram, loaded):
            assert a.points.astype("<f4").tobytes() == b.points.astype("<f4").tobytes()


def test_tck_layout(tmp_path):
    tractogram = Tractogram([Streamline(np.zeros((3, 3)) + 1.0), Streamline(np.zeros((2, 3)) + 2.0)])
    path = tmp_path / "layout.tck"
    write_tck(tractogram, path)
    raw = path.read_bytes()
    assert raw.startswith(b"mrtrix tracks\n")
    header_end = raw.index(b"\nEND\n") + 5
    header = raw[:header_end].decode("ascii")
    assert "datatype: Float32LE" in header
    assert f"file: . {header_end}" in header
    body = np.frombuffer(raw[header_end:], dtype="<f4").reshape(-1, 3)
    assert tractogram.total_points == 5
    assert len(body) == tractogram.total_points + 2
    assert np.all(np.isnan(body[3]))
    assert np.all(np.isinf(body[6]))


def test_tck_errors(tmp_path):
    good = tmp_path / "good.tck"
    write_tck(Tractogram([Streamline(np.ones((4, 3)))]), good)
    raw = good.read_bytes()

    truncated = tmp_path / "truncated.tck"
    truncated.write_bytes(raw[:-12])
    with pytest.raises(TckFormatError):
        read_tck(truncated)

    odd = tmp_path / "odd.tck"
    odd.write_bytes(raw[:-5])
    with pytest.raises(TckFormatError):
        read_tck(odd)

    magic = tmp_path / "magic.tck"
    magic.write_bytes(b"mrtrix image" + raw[len(b"mrtrix tracks"):])
    with pytest.raises(TckFormatError):
        read_tck(magic)

    big_endian = tmp_path / "be.tck"
    big_endian.write_bytes(raw.replace(b"Float32LE", b"Float32BE"))
    with pytest.raises(UnsupportedDatatypeError):
        read_tck(big_endian)


def test_empty_tractogram_round_trip(tmp_path):
    path = tmp_path / "empty.tck"
    write_tck(Tractogram(), path)
    assert len(read_tck(path)) == 0


def test_resample_is_idempotent_on_spaced_polylines():
    rng = np.random.default_rng(13)
    steps = rng.normal(size=(12, 3))
    steps /= np.linalg.norm(steps, axis=1, keepdims=True)
    s = Streamline(np.vstack([np.zeros((1, 3)), np.cumsum(steps, axis=0)]))
    again = resample_streamline(s, 1.0)
    assert len(again) == len(s)
    np.testing.assert_allclose(again.points, s.points, atol=1e-6)


def test_resample_quarter_circle_follows_arc_length():
    angles = np.linspace(0.0, np.pi / 2, 4001)
    arc = Streamline(np.stack([10 * np.cos(angles), 10 * np.sin(angles), np.zeros_like(angles)], axis=1))
    r = resample_streamline(arc, 1.0)
    assert len(r) == 17
    chords = np.linalg.norm(np.diff(r.points, axis=0), axis=1)
    np.testing.assert_allclose(chords[:-1], 1.0, atol=1e-3)
    # interior samples sit at arc length i on the circle
    i = np.arange(16)
    expected = np.stack([10 * np.cos(i / 10), 10 * np.sin(i / 10), np.zeros(16)], axis=1)
    np.testing.assert_allclose(r.points[:16], expected, atol=1e-3)
