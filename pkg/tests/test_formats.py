import numpy as np
import pytest

from satvox import DensityVolume, FormatError, WorldFrame
from satvox.formats import (read_histogram, read_map, read_png, read_volume, write_histogram,
                            write_map, write_png, write_volume)


class TestVolumeFormat:
    def test_round_trip_is_bitwise(self, tmp_path, rng):
        grid = rng.uniform(0, 9, (4, 4, 3)).astype(np.float32).astype(np.float64)
        vol = DensityVolume(grid, WorldFrame(10.0, 12.0, 5.0), ground_density=123.0)
        path = tmp_path / "v.s2dv"
        write_volume(path, vol)
        again = read_volume(path)
        assert np.array_equal(again.grid, vol.grid)
        assert again.ground_density == 123.0
        assert (again.frame.extent_e, again.frame.extent_n) == (10.0, 12.0)
        write_volume(tmp_path / "v2.s2dv", again)
        assert (tmp_path / "v2.s2dv").read_bytes() == path.read_bytes()

    def test_file_size_from_layout(self, tmp_path):
        vol = DensityVolume.zeros(WorldFrame(), (8, 6, 4))
        path = tmp_path / "v.s2dv"
        write_volume(path, vol)
        # 4-byte magic + 32-byte header fields + 4 bytes per node
        assert path.stat().st_size == 36 + 4 * 8 * 6 * 4

    def test_truncation_names_missing_bytes(self, tmp_path):
        vol = DensityVolume.zeros(WorldFrame(), (4, 4, 3))
        path = tmp_path / "v.s2dv"
        write_volume(path, vol)
        data = path.read_bytes()
        path.write_bytes(data[:-10])
        with pytest.raises(FormatError, match="missing 10"):
            read_volume(path)

    def test_bad_magic_and_version(self, tmp_path):
        vol = DensityVolume.zeros(WorldFrame(), (4, 4, 3))
        path = tmp_path / "v.s2dv"
        write_volume(path, vol)
        data = bytearray(path.read_bytes())
        data[:4] = b"XXXX"
        path.write_bytes(bytes(data))
        with pytest.raises(FormatError, match="magic"):
            read_volume(path)
        data[:4] = b"S2DV"
        data[4] = 9
        path.write_bytes(bytes(data))
        with pytest.raises(FormatError, match="version"):
            read_volume(path)


class TestMapFormat:
    def test_round_trip(self, tmp_path, rng):
        arr = rng.uniform(-3, 3, (7, 5, 3)).astype(np.float32).astype(np.float64)
        path = tmp_path / "m.s2dm"
        write_map(path, arr)
        again = read_map(path)
        assert np.array_equal(arr, again)

    def test_single_channel_shape_and_size(self, tmp_path):
        arr = np.zeros((128, 512))
        path = tmp_path / "depth.s2dm"
        write_map(path, arr)
        # 4-byte magic + 16-byte header + payload
        assert path.stat().st_size == 20 + 4 * 128 * 512
        assert read_map(path).shape == (128, 512)

    def test_png_matches_quantized_map(self, tmp_path, rng):
        arr = rng.uniform(0, 1, (16, 16, 3))
        write_map(tmp_path / "c.s2dm", arr)
        write_png(tmp_path / "c.png", arr)
        from_png = read_png(tmp_path / "c.png")
        from_map = read_map(tmp_path / "c.s2dm")
        assert np.abs(from_png - from_map).max() <= 1.0 / 255.0 + 1e-7

    def test_truncation(self, tmp_path):
        path = tmp_path / "m.s2dm"
        write_map(path, np.zeros((4, 4)))
        path.write_bytes(path.read_bytes()[:30])
        with pytest.raises(FormatError, match="missing"):
            read_map(path)


class TestHistogramFormat:
    def test_round_trip_and_size(self, tmp_path, rng):
        hist = rng.uniform(0, 1, (3, 90))
        hist /= hist.sum(axis=1, keepdims=True)
        path = tmp_path / "h.s2dh"
        write_histogram(path, hist)
        assert path.stat().st_size == 8 + 4 * 270
        again = read_histogram(path)
        assert np.array_equal(again, hist.astype(np.float32).astype(np.float64))

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "h.s2dh"
        path.write_bytes(b"NOPE" * 2 + b"\0" * (4 * 270))
        with pytest.raises(FormatError, match="magic"):
            read_histogram(path)

    def test_wrong_shape_rejected(self, tmp_path):
        with pytest.raises(FormatError):
            write_histogram(tmp_path / "h.s2dh", np.zeros((3, 10)))
