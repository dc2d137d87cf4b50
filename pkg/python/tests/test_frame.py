"""
Tests for pxs.frame (camera model, pre-filter, normals, noise model).
"""
import math

import numpy as np
import pytest

from pxs.frame import (
    CameraIntrinsics,
    CameraPose,
    NoiseModel,
    OrientedPointCloud,
    RgbdFrame,
    bilateral_prefilter,
    estimate_normals,
    noise_threshold,
    pixel_area,
    pixel_rays,
    project,
    unproject,
    unproject_depth,
)
from pxs.types import PxsDomainError, PxsValidationError

from tests.conftest import flat_frame


class TestCameraIntrinsics:
    """Tests for CameraIntrinsics."""

    def test_from_degrees(self):
        """Fields of view are stored in radians."""
        intr = CameraIntrinsics.from_degrees(60.0, 45.0, 320, 240)
        assert intr.fov_h == pytest.approx(math.radians(60.0))
        assert intr.shape == (240, 320)
        assert intr.raw_frame_bytes == 320 * 240 * 2

    def test_principal_point_centered(self):
        """The principal point is the image center."""
        intr = CameraIntrinsics.from_degrees(60.0, 45.0, 80, 60)
        assert intr.cx == 39.5
        assert intr.cy == 29.5

    def test_outer_pixels_on_fov(self, small_intrinsics):
        """Outermost pixel centers lie on the +/- fov/2 rays."""
        rays = pixel_rays(small_intrinsics)
        assert rays[0, 0, 0] == pytest.approx(-math.tan(math.radians(30.0)))
        assert rays[0, -1, 0] == pytest.approx(math.tan(math.radians(30.0)))
        assert rays[-1, 0, 1] == pytest.approx(math.tan(math.radians(22.5)))
        assert np.all(rays[..., 2] == 1.0)

    @pytest.mark.parametrize("fov", [0.0, -1.0, 180.0])
    def test_bad_fov(self, fov):
        """Fields of view outside (0, 180) degrees are rejected."""
        with pytest.raises(PxsValidationError):
            CameraIntrinsics.from_degrees(fov, 45.0, 10, 10)

    def test_bad_resolution(self):
        """Resolution must be positive."""
        with pytest.raises(PxsValidationError):
            CameraIntrinsics.from_degrees(60.0, 45.0, 0, 10)

    def test_pixel_area(self, small_intrinsics):
        """Pixel area grows with z squared."""
        a1 = pixel_area(small_intrinsics, 1.0)
        assert pixel_area(small_intrinsics, 2.0) == pytest.approx(4.0 * a1)
        expected = math.tan(small_intrinsics.fov_h / 80) * math.tan(small_intrinsics.fov_v / 60)
        assert a1 == pytest.approx(expected)


class TestProjection:
    """Tests for project / unproject."""

    def test_unproject_project_inverse(self, small_intrinsics):
        """Projecting an unprojected pixel returns the pixel."""
        depth = np.full(small_intrinsics.shape, 1.7)
        frame = RgbdFrame(depth, np.zeros(small_intrinsics.shape + (3,), np.uint8), small_intrinsics)
        p = unproject(frame, (12, 55))
        rows, cols = project(small_intrinsics, p)
        assert float(rows) == pytest.approx(12.0)
        assert float(cols) == pytest.approx(55.0)
        assert p[2] == pytest.approx(1.7)

    def test_unproject_invalid(self, small_intrinsics):
        """Invalid depth gives None."""
        frame = RgbdFrame(
            np.zeros(small_intrinsics.shape), np.zeros(small_intrinsics.shape + (3,), np.uint8), small_intrinsics
        )
        assert unproject(frame, (3, 3)) is None

    def test_unproject_outside(self, wall_frame):
        """Pixels outside the image raise."""
        with pytest.raises(PxsValidationError):
            unproject(wall_frame, (60, 0))

    def test_project_behind_camera(self, small_intrinsics):
        """Points with z <= 0 project to NaN."""
        rows, cols = project(small_intrinsics, np.array([[0.0, 0.0, -1.0]]))
        assert np.isnan(rows[0]) and np.isnan(cols[0])

    def test_unproject_depth_map(self, small_intrinsics):
        """Vectorized unprojection agrees with unproject."""
        frame = flat_frame(small_intrinsics, 2.5)
        points = unproject_depth(frame.depth, small_intrinsics)
        np.testing.assert_allclose(points[7, 21], unproject(frame, (7, 21)))


class TestCameraPose:
    """Tests for CameraPose."""

    def test_identity(self):
        """Identity pose leaves points unchanged."""
        p = np.array([[1.0, 2.0, 3.0]])
        np.testing.assert_allclose(CameraPose.identity().apply(p), p)

    def test_matrix_round_trip(self):
        """from_matrix(matrix()) reproduces the pose."""
        pose = CameraPose.look_at((1.0, 2.0, 1.5), (3.0, 0.0, 0.5))
        again = CameraPose.from_matrix(pose.matrix().ravel())
        np.testing.assert_allclose(again.rotation, pose.rotation)
        np.testing.assert_allclose(again.translation, pose.translation)

    def test_inverse(self):
        """compose(inverse) is the identity."""
        pose = CameraPose.look_at((1.0, -2.0, 0.5), (0.0, 0.0, 0.0))
        both = pose.compose(pose.inverse())
        np.testing.assert_allclose(both.rotation, np.eye(3), atol=1e-12)
        np.testing.assert_allclose(both.translation, np.zeros(3), atol=1e-12)

    def test_look_at(self):
        """The camera z axis points at the target and image y points down."""
        pose = CameraPose.look_at((0.0, 0.0, 1.0), (0.0, 5.0, 1.0))
        np.testing.assert_allclose(pose.rotate(np.array([0.0, 0.0, 1.0])), [0.0, 1.0, 0.0], atol=1e-12)
        np.testing.assert_allclose(pose.rotate(np.array([0.0, 1.0, 0.0])), [0.0, 0.0, -1.0], atol=1e-12)
        np.testing.assert_allclose(pose.origin, [0.0, 0.0, 1.0])

    def test_look_at_straight_down(self):
        """Looking along the up vector still yields a valid pose."""
        pose = CameraPose.look_at((0.0, 0.0, 3.0), (0.0, 0.0, 0.0))
        np.testing.assert_allclose(pose.rotate(np.array([0.0, 0.0, 1.0])), [0.0, 0.0, -1.0], atol=1e-12)

    def test_look_at_degenerate(self):
        """Eye equal to target raises."""
        with pytest.raises(PxsValidationError):
            CameraPose.look_at((1.0, 1.0, 1.0), (1.0, 1.0, 1.0))

    def test_reflection_rejected(self):
        """Rotations with determinant -1 are rejected."""
        with pytest.raises(PxsValidationError):
            CameraPose(np.diag([1.0, 1.0, -1.0]), np.zeros(3))

    def test_bad_matrix_size(self):
        """Matrices need 12 or 16 entries."""
        with pytest.raises(PxsValidationError):
            CameraPose.from_matrix(np.eye(3))


class TestNoiseModel:
    """Tests for the sensor noise model."""

    def test_minimum_at_vertex(self):
        """The threshold equals a at and below z0."""
        model = NoiseModel()
        assert model.threshold(0.4) == pytest.approx(0.0012)
        assert model.threshold(0.1) == pytest.approx(0.0012)

    def test_quadratic_growth(self):
        """The threshold grows quadratically beyond z0."""
        model = NoiseModel()
        assert model.threshold(1.4) == pytest.approx(0.0012 + 0.0019)
        assert model.threshold(2.4) == pytest.approx(0.0012 + 0.0019 * 4.0)

    def test_monotone(self):
        """The threshold never decreases with depth."""
        z = np.linspace(0.01, 8.0, 500)
        alpha = NoiseModel().threshold(z)
        assert np.all(np.diff(alpha) >= 0.0)

    @pytest.mark.parametrize("z", [0.0, -1.0])
    def test_domain(self, z):
        """Non-positive depths raise PxsDomainError."""
        with pytest.raises(PxsDomainError):
            noise_threshold(z)

    def test_negative_coefficients(self):
        """Negative coefficients are rejected."""
        with pytest.raises(PxsValidationError):
            NoiseModel(a=-1.0)


class TestRgbdFrame:
    """Tests for RgbdFrame validation."""

    def test_shape_mismatch(self, small_intrinsics):
        """Depth must match the intrinsics."""
        with pytest.raises(PxsValidationError):
            RgbdFrame(np.ones((10, 10)), np.zeros((60, 80, 3), np.uint8), small_intrinsics)

    def test_negative_depth(self, small_intrinsics):
        """Negative depth is rejected."""
        depth = np.ones(small_intrinsics.shape)
        depth[0, 0] = -1.0
        with pytest.raises(PxsValidationError):
            RgbdFrame(depth, np.zeros(small_intrinsics.shape + (3,), np.uint8), small_intrinsics)

    def test_default_pose(self, small_intrinsics):
        """A frame without pose gets the identity."""
        frame = RgbdFrame(np.ones(small_intrinsics.shape), np.zeros(small_intrinsics.shape + (3,), np.uint8), small_intrinsics)
        np.testing.assert_allclose(frame.pose.matrix(), np.eye(4))


class TestBilateralPrefilter:
    """Tests for the depth pre-filter."""

    def test_constant_unchanged(self, wall_frame):
        """A constant depth map is a fixed point."""
        out = bilateral_prefilter(wall_frame)
        np.testing.assert_allclose(out.depth, wall_frame.depth)

    def test_invalid_stays_invalid(self, small_intrinsics):
        """Invalid pixels stay 0 and do not pull their neighbors down."""
        depth = np.full(small_intrinsics.shape, 2.0)
        depth[20:25, 30:35] = 0.0
        frame = RgbdFrame(depth, np.zeros(small_intrinsics.shape + (3,), np.uint8), small_intrinsics)
        out = bilateral_prefilter(frame)
        assert np.all(out.depth[20:25, 30:35] == 0.0)
        np.testing.assert_allclose(out.depth[depth > 0], 2.0)

    def test_edge_preserved(self, small_intrinsics):
        """A depth step larger than the range limit is not blurred."""
        depth = np.full(small_intrinsics.shape, 1.0)
        depth[:, 40:] = 2.0
        frame = RgbdFrame(depth, np.zeros(small_intrinsics.shape + (3,), np.uint8), small_intrinsics)
        out = bilateral_prefilter(frame, spatial_sigma=2.0, range_limit=0.2)
        np.testing.assert_allclose(out.depth, depth)

    def test_noise_reduced(self, small_intrinsics, rng):
        """Gaussian noise on a flat wall is reduced."""
        depth = 2.0 + rng.normal(0.0, 0.01, small_intrinsics.shape)
        frame = RgbdFrame(depth, np.zeros(small_intrinsics.shape + (3,), np.uint8), small_intrinsics)
        out = bilateral_prefilter(frame)
        inner = (slice(8, -8), slice(8, -8))
        assert np.std(out.depth[inner]) < 0.5 * np.std(depth[inner])

    def test_bad_sigma(self, wall_frame):
        """Non-positive sigma raises."""
        with pytest.raises(PxsValidationError):
            bilateral_prefilter(wall_frame, spatial_sigma=0.0)


class TestEstimateNormals:
    """Tests for normal estimation."""

    def test_wall_normals_face_camera(self, wall_frame, small_intrinsics):
        """A fronto-parallel wall yields normals (0, 0, -1) on all interior pixels."""
        cloud = estimate_normals(wall_frame)
        rows, cols = small_intrinsics.shape
        assert len(cloud) == (rows - 2) * (cols - 2)
        np.testing.assert_allclose(cloud.normals, np.tile([0.0, 0.0, -1.0], (len(cloud), 1)), atol=1e-9)

    def test_pixel_of(self, wall_frame, small_intrinsics):
        """pixel_of indexes the full image row-major."""
        cloud = estimate_normals(wall_frame)
        k = 123
        row, col = divmod(int(cloud.pixel_of[k]), small_intrinsics.res_h)
        np.testing.assert_allclose(cloud.positions[k], unproject(wall_frame, (row, col)))

    def test_depth_jump_omitted(self, small_intrinsics):
        """Pixels next to a depth discontinuity get no normal."""
        depth = np.full(small_intrinsics.shape, 1.0)
        depth[:, 40:] = 2.0
        frame = RgbdFrame(depth, np.zeros(small_intrinsics.shape + (3,), np.uint8), small_intrinsics)
        cloud = estimate_normals(frame, range_limit=0.2)
        cols = cloud.pixel_of % small_intrinsics.res_h
        assert not np.any((cols == 39) | (cols == 40))
        rows, ncols = small_intrinsics.shape
        assert len(cloud) == (rows - 2) * (ncols - 4)

    def test_tiny_image(self):
        """Images smaller than 3x3 give an empty cloud."""
        intr = CameraIntrinsics.from_degrees(60.0, 45.0, 2, 2)
        frame = flat_frame(intr)
        assert len(estimate_normals(frame)) == 0


class TestOrientedPointCloud:
    """Tests for OrientedPointCloud validation."""

    def test_non_unit_normals(self):
        """Normals must be unit length."""
        with pytest.raises(PxsValidationError):
            OrientedPointCloud(np.zeros((1, 3)), np.array([[0.0, 0.0, 2.0]]), np.zeros((1, 3)), np.zeros(1))

    def test_length_mismatch(self):
        """All arrays must have the same length."""
        with pytest.raises(PxsValidationError):
            OrientedPointCloud(np.zeros((2, 3)), np.array([[0.0, 0.0, 1.0]]), np.zeros((2, 3)), np.zeros(2))

    def test_transformed(self):
        """transformed moves positions and rotates normals."""
        cloud = OrientedPointCloud(
            np.array([[0.0, 0.0, 1.0]]), np.array([[0.0, 0.0, -1.0]]), np.zeros((1, 3)), np.zeros(1)
        )
        pose = CameraPose.look_at((0.0, 0.0, 1.0), (0.0, 5.0, 1.0))
        world = cloud.transformed(pose)
        np.testing.assert_allclose(world.positions[0], [0.0, 1.0, 1.0], atol=1e-12)
        np.testing.assert_allclose(world.normals[0], [0.0, -1.0, 0.0], atol=1e-12)
