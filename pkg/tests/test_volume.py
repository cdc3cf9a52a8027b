import numpy as np
import pytest

from satvox import DensityVolume, DomainError, WorldFrame, sample_density, sample_density_gradient

FRAME = WorldFrame(extent_e=8.0, extent_n=8.0, max_height=4.0)


def _volume(rng=None, resolution=(8, 8, 5)):
    grid = np.zeros(resolution) if rng is None else rng.uniform(0, 5, resolution)
    return DensityVolume(grid, FRAME)


def _node_point(vol, i, j, k):
    n_ax, e_ax, u_ax = vol.node_coordinates()
    return np.array([e_ax[j], n_ax[i], u_ax[k]])


class TestSampling:
    def test_exact_at_interior_node(self):
        vol = _volume()
        vol.grid[3, 4, 2] = 7.5
        p = _node_point(vol, 3, 4, 2)
        assert abs(sample_density(vol, p) - 7.5) < 1e-12

    def test_outside_cube_is_exactly_zero(self):
        vol = _volume()
        vol.grid[:] = 9.0
        assert sample_density(vol, np.array([0.0, 0.0, FRAME.max_height + 1.0])) == 0.0
        assert sample_density(vol, np.array([FRAME.extent_e / 2, 0.0, 1.0])) == 0.0
        # half-open: the low faces are inside
        assert sample_density(vol, np.array([-FRAME.extent_e / 2, 0.0, 1.0])) > 0.0

    def test_edge_midpoint_blends_linearly(self):
        vol = _volume()
        vol.grid[3, 4, 2] = 2.0
        vol.grid[3, 4, 3] = 6.0
        p = _node_point(vol, 3, 4, 2)
        q = _node_point(vol, 3, 4, 3)
        assert abs(sample_density(vol, (p + q) / 2) - 4.0) < 1e-12

    def test_ground_layer_reads_pinned_value(self):
        vol = _volume()
        vol.grid[:, :, 0] = 5.0  # stored value must be ignored
        p = _node_point(vol, 4, 4, 0)
        assert sample_density(vol, p) == vol.ground_density

    def test_continuity_across_cell_faces(self, rng):
        vol = _volume(rng)
        n_ax, e_ax, u_ax = vol.node_coordinates()
        span = vol.grid.max() - vol.grid.min()
        for _ in range(50):
            j = rng.integers(1, 7)
            e_face = e_ax[j]
            n = rng.uniform(-3, 3)
            u = rng.uniform(0.2, 3.5)
            lo = sample_density(vol, np.array([e_face - 1e-7, n, u]))
            hi = sample_density(vol, np.array([e_face + 1e-7, n, u]))
            assert abs(hi - lo) < 1e-4 * span

    def test_monotone_in_node_values(self, rng):
        vol = _volume(rng)
        pts = np.column_stack([rng.uniform(-3.9, 3.9, 200), rng.uniform(-3.9, 3.9, 200),
                               rng.uniform(0.0, 3.9, 200)])
        before = sample_density(vol, pts)
        vol.grid[4, 4, 2] += 3.0
        after = sample_density(vol, pts)
        assert np.all(after >= before - 1e-12)

    def test_nonfinite_point_rejected(self):
        vol = _volume()
        with pytest.raises(DomainError):
            sample_density(vol, np.array([0.0, np.nan, 1.0]))

    def test_batch_matches_scalar(self, rng):
        vol = _volume(rng)
        pts = np.column_stack([rng.uniform(-5, 5, 64), rng.uniform(-5, 5, 64),
                               rng.uniform(-1, 5, 64)])
        batch = sample_density(vol, pts)
        for idx in range(0, 64, 7):
            assert batch[idx] == sample_density(vol, pts[idx])

    def test_validation(self):
        with pytest.raises(DomainError):
            DensityVolume(np.full((4, 4, 3), -1.0), FRAME)
        with pytest.raises(DomainError):
            DensityVolume(np.full((4, 4, 3), np.inf), FRAME)

    def test_nodes_sit_on_the_satellite_pixel_lattice(self):
        # when the grid resolution equals the satellite image size, node
        # (i, j) projects to the center of satellite pixel (i, j)
        from satvox import SatelliteCamera, world_to_satellite_pixel
        frame = FRAME
        vol = DensityVolume.zeros(frame, (8, 8, 5))
        cam = SatelliteCamera(image_size=(8, 8),
                              scale=(frame.extent_n / 8, frame.extent_e / 8))
        n_ax, e_ax, u_ax = vol.node_coordinates()
        for i, j in [(0, 0), (3, 5), (7, 7)]:
            row, col = world_to_satellite_pixel(cam, np.array([e_ax[j], n_ax[i], 0.0]))
            assert abs(row - (i + 0.5)) < 1e-12
            assert abs(col - (j + 0.5)) < 1e-12
        # vertical nodes span [0, max_height] with spacing max_height/(Nz-1)
        np.testing.assert_allclose(u_ax, np.arange(5) * FRAME.max_height / 4, atol=1e-15)


class TestGradient:
    def test_weight_one_at_node(self):
        vol = _volume()
        p = _node_point(vol, 3, 4, 2)
        idx, w = sample_density_gradient(vol, p)
        assert idx.shape == (8, 3) and abs(w.sum() - 1.0) < 1e-12
        hot = np.flatnonzero(w > 0.5)
        assert len(hot) == 1
        assert tuple(idx[hot[0]]) == (3, 4, 2)

    def test_cell_center_has_eight_equal_weights(self):
        vol = _volume()
        p = (_node_point(vol, 3, 4, 2) + _node_point(vol, 4, 5, 3)) / 2
        _, w = sample_density_gradient(vol, p)
        np.testing.assert_allclose(w, 0.125, atol=1e-12)

    def test_outside_cube_returns_empty(self):
        vol = _volume()
        idx, w = sample_density_gradient(vol, np.array([0.0, 0.0, 10.0]))
        assert idx.shape == (0, 3) and w.shape == (0,)

    def test_ground_layer_nodes_report_zero_weight(self):
        vol = _volume()
        p = np.array([0.3, 0.2, 0.1])  # in the bottom cell layer
        idx, w = sample_density_gradient(vol, p)
        assert np.all(w[idx[:, 2] == 0] == 0.0)
        assert np.any(w[idx[:, 2] == 1] > 0.0)

    def test_partition_of_unity_above_ground_cells(self, rng):
        vol = _volume(rng)
        for _ in range(20):
            p = np.array([rng.uniform(-3.5, 3.5), rng.uniform(-3.5, 3.5), rng.uniform(1.1, 3.9)])
            _, w = sample_density_gradient(vol, p)
            assert np.all(w >= 0)
            assert abs(w.sum() - 1.0) < 1e-12

    def test_matches_finite_differences(self, rng):
        vol = _volume(rng)
        h = 1e-4
        for _ in range(10):
            p = np.array([rng.uniform(-3.5, 3.5), rng.uniform(-3.5, 3.5), rng.uniform(0.1, 3.9)])
            idx, w = sample_density_gradient(vol, p)
            for (i, j, k), weight in zip(idx, w):
                saved = vol.grid[i, j, k]
                vol.grid[i, j, k] = saved + h
                up = sample_density(vol, p)
                vol.grid[i, j, k] = saved - h
                down = sample_density(vol, p)
                vol.grid[i, j, k] = saved
                fd = (up - down) / (2 * h)
                assert abs(fd - weight) < 1e-8
