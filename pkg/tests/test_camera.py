import math

import numpy as np
import pytest

from satvox import DomainError, PanoramaCamera, Ray, SatelliteCamera, WorldFrame
from satvox.camera import (clip_to_frame, panorama_pixel_to_ray, panorama_ray_arrays,
                           panorama_ray_grid, world_to_satellite_pixel)

FRAME = WorldFrame()


def _clockwise_rotate(v, psi):
    # independent compass rotation: north toward east by psi, about up
    e, n, u = v
    return np.array([e * math.cos(psi) + n * math.sin(psi),
                     -e * math.sin(psi) + n * math.cos(psi), u])


class TestPanoramaDirections:
    def test_central_column_faces_north(self):
        cam = PanoramaCamera(position=(0, 0, 2), image_size=(128, 512), heading=0.0)
        ray = panorama_pixel_to_ray(cam, FRAME, 255.5, 63.5)
        np.testing.assert_allclose(ray.direction, [0.0, 1.0, 0.0], atol=1e-12)

    def test_top_center_points_up(self):
        cam = PanoramaCamera(image_size=(1024, 4096))
        ray = panorama_pixel_to_ray(cam, FRAME, 2047.5, 0.0)
        np.testing.assert_allclose(ray.direction, [0.0, 0.0, 1.0], atol=2e-3)

    def test_heading_rotates_central_column_east(self):
        cam = PanoramaCamera(position=(0, 0, 2), image_size=(128, 512), heading=math.pi / 2)
        ray = panorama_pixel_to_ray(cam, FRAME, 255.5, 63.5)
        np.testing.assert_allclose(ray.direction, [1.0, 0.0, 0.0], atol=1e-12)

    @pytest.mark.parametrize("psi", [0.3, 1.2, math.pi, 5.0])
    def test_heading_is_a_compass_rotation(self, psi):
        base = PanoramaCamera(image_size=(64, 256), heading=0.0)
        turned = PanoramaCamera(image_size=(64, 256), heading=psi)
        for x, y in [(10.0, 5.0), (100.3, 40.7), (255.0, 63.0)]:
            d0 = panorama_pixel_to_ray(base, FRAME, x, y).direction
            d1 = panorama_pixel_to_ray(turned, FRAME, x, y).direction
            np.testing.assert_allclose(d1, _clockwise_rotate(d0, psi), atol=1e-12)

    def test_unit_norm_over_grid(self):
        cam = PanoramaCamera(image_size=(32, 128))
        _, d, _, _ = panorama_ray_arrays(cam, FRAME)
        np.testing.assert_allclose(np.linalg.norm(d, axis=1), 1.0, atol=1e-9)

    def test_azimuth_periodicity(self):
        cam = PanoramaCamera(image_size=(64, 512))
        a = panorama_pixel_to_ray(cam, FRAME, 3.25, 10.0)
        b = panorama_pixel_to_ray(cam, FRAME, 3.25 + 512.0, 10.0)
        # x + w is exactly representable here, so the wrap is bitwise exact
        assert np.array_equal(a.direction, b.direction)
        c = panorama_pixel_to_ray(cam, FRAME, 17.3 + 512.0, 10.0)
        np.testing.assert_allclose(c.direction,
                                   panorama_pixel_to_ray(cam, FRAME, 17.3, 10.0).direction,
                                   atol=1e-12)

    def test_horizon_row_has_zero_up_component(self):
        cam = PanoramaCamera(image_size=(128, 512))
        y = 64.0 - 0.5  # phi = pi/2 exactly
        for x in (0.0, 100.0, 333.0):
            assert abs(panorama_pixel_to_ray(cam, FRAME, x, y).direction[2]) < 1e-12

    def test_opposite_columns_mirror_horizontally(self):
        cam = PanoramaCamera(image_size=(128, 512))
        for x in (10.0, 200.0):
            d1 = panorama_pixel_to_ray(cam, FRAME, x, 63.5).direction
            d2 = panorama_pixel_to_ray(cam, FRAME, x + 256.0, 63.5).direction
            np.testing.assert_allclose(d2[:2], -d1[:2], atol=1e-12)
            np.testing.assert_allclose(d2[2], d1[2], atol=1e-15)

    def test_row_out_of_bounds_raises(self):
        cam = PanoramaCamera(image_size=(64, 256))
        with pytest.raises(DomainError):
            panorama_pixel_to_ray(cam, FRAME, 0.0, -0.5)
        with pytest.raises(DomainError):
            panorama_pixel_to_ray(cam, FRAME, 0.0, 64.0)
        with pytest.raises(DomainError):
            panorama_pixel_to_ray(cam, FRAME, math.nan, 1.0)


class TestSatelliteProjection:
    def test_origin_maps_to_image_center(self):
        cam = SatelliteCamera()
        assert world_to_satellite_pixel(cam, np.array([0.0, 0.0, 5.0])) == (128.0, 128.0)

    def test_north_edge(self):
        cam = SatelliteCamera()
        row, col = world_to_satellite_pixel(cam, np.array([0.0, 0.2 * 128, 0.0]))
        assert (row, col) == (0.0, 128.0)

    def test_worked_example(self):
        cam = SatelliteCamera(image_size=(256, 256), scale=(0.2, 0.2))
        row, col = world_to_satellite_pixel(cam, np.array([0.2 * 10, -0.2 * 20, 0.0]))
        assert (row, col) == (148.0, 138.0)

    def test_height_is_ignored(self):
        cam = SatelliteCamera()
        p = np.array([3.0, -4.0, 0.0])
        q = p + np.array([0.0, 0.0, 7.5])
        assert world_to_satellite_pixel(cam, p) == world_to_satellite_pixel(cam, q)

    def test_affine_in_horizontal_components(self, rng):
        cam = SatelliteCamera(scale=(0.31, 0.17))
        p = rng.uniform(-30, 30, 3)
        q = rng.uniform(-30, 30, 3)
        for lam in (0.0, 0.25, 0.5, 1.0):
            mid = lam * p + (1 - lam) * q
            r1 = np.array(world_to_satellite_pixel(cam, mid))
            ra = np.array(world_to_satellite_pixel(cam, p))
            rb = np.array(world_to_satellite_pixel(cam, q))
            np.testing.assert_allclose(r1, lam * ra + (1 - lam) * rb, atol=1e-9)

    def test_down_ray_round_trip(self):
        cam = SatelliteCamera()
        pano = PanoramaCamera(position=(3.7, -5.1, 2.0), image_size=(128, 512))
        ray = panorama_pixel_to_ray(pano, FRAME, 255.5, 127.5)  # phi = pi, straight down
        assert ray.direction[2] < -0.999999
        hit = ray.origin + ray.t_far * ray.direction
        np.testing.assert_allclose(hit[2], 0.0, atol=1e-12)
        np.testing.assert_allclose(world_to_satellite_pixel(cam, hit),
                                   world_to_satellite_pixel(cam, np.array([3.7, -5.1, 0.0])),
                                   atol=1e-9)


class TestRayClipping:
    def test_down_ray_exits_at_ground(self):
        cam = PanoramaCamera(position=(0, 0, 2), image_size=(4, 8))
        tn, tf = clip_to_frame(FRAME, np.array([[0.0, 0.0, 2.0]]), np.array([[0.0, 0.0, -1.0]]))
        assert tn[0] == 0.0 and abs(tf[0] - 2.0) < 1e-12

    def test_ray_missing_cube_is_degenerate(self):
        o = np.array([[0.0, 0.0, 20.0]])
        d = np.array([[0.0, 0.0, 1.0]])
        tn, tf = clip_to_frame(FRAME, o, d)
        assert tn[0] == 0.0 and tf[0] == 0.0

    def test_origin_outside_enters_later(self):
        o = np.array([[0.0, 0.0, 20.0]])
        d = np.array([[0.0, 0.0, -1.0]])
        tn, tf = clip_to_frame(FRAME, o, d)
        assert abs(tn[0] - 12.0) < 1e-12 and abs(tf[0] - 20.0) < 1e-12


class TestRayGrid:
    def test_small_grid_norms_and_count(self):
        cam = PanoramaCamera(image_size=(2, 4))
        rays = panorama_ray_grid(cam, FRAME)
        assert len(rays) == 8
        for r in rays:
            assert abs(np.linalg.norm(r.direction) - 1.0) < 1e-9

    def test_grid_matches_single_pixel_call_bitwise(self):
        cam = PanoramaCamera(position=(1.0, -2.0, 2.0), image_size=(8, 16), heading=0.7)
        rays = panorama_ray_grid(cam, FRAME)
        for y, x in [(0, 0), (3, 7), (7, 15)]:
            single = panorama_pixel_to_ray(cam, FRAME, float(x), float(y))
            grid_ray = rays[y * 16 + x]
            assert np.array_equal(single.direction, grid_ray.direction)
            assert single.t_near == grid_ray.t_near and single.t_far == grid_ray.t_far

    def test_zero_sized_image_rejected(self):
        with pytest.raises(DomainError):
            PanoramaCamera(image_size=(0, 8))


class TestTypes:
    def test_heading_normalized(self):
        cam = PanoramaCamera(heading=2 * math.pi + 0.3)
        assert abs(cam.heading - 0.3) < 1e-12

    def test_ray_validation(self):
        with pytest.raises(DomainError):
            Ray(origin=np.zeros(3), direction=np.array([0.0, 2.0, 0.0]), t_near=0.0, t_far=1.0)
        with pytest.raises(DomainError):
            Ray(origin=np.zeros(3), direction=np.array([0.0, 1.0, 0.0]), t_near=2.0, t_far=1.0)

    def test_frame_validation(self):
        with pytest.raises(DomainError):
            WorldFrame(extent_e=-1.0)
        with pytest.raises(DomainError):
            WorldFrame(max_height=0.0)
