"""
Tests for pxs.shape (shape models, parameterization, grids).
"""
import math

import numpy as np
import pytest

from pxs.frame import CameraPose
from pxs.shape import (
    GridSpec,
    ShapeModel,
    bounding_spec,
    intersect_rays,
    orthonormal_frame,
    parameterize,
    project_along_ray,
    signed_distance,
    surface_normal,
    unparameterize,
)
from pxs.types import PxsDomainError, PxsValidationError, ShapeKind


@pytest.fixture
def plane():
    return ShapeModel.plane((0.0, 0.0, 2.0), (0.0, 0.0, 1.0), (1.0, 0.0, 0.0))


@pytest.fixture
def cylinder():
    return ShapeModel.cylinder((0.0, 0.0, 0.0), (0.0, 0.0, 1.0), 1.0, (1.0, 0.0, 0.0))


@pytest.fixture
def sphere():
    return ShapeModel.sphere((5.0, 0.0, 0.0), 1.0, (0.0, 0.0, 1.0), (1.0, 0.0, 0.0))


class TestShapeModel:
    """Tests for construction and parameter vectors."""

    def test_frame_orthonormal(self):
        """orthonormal_frame gives X x Y = z with X near the hint."""
        x, y = orthonormal_frame((0.0, 0.0, 2.0), (1.0, 0.2, 0.0))
        assert np.dot(x, y) == pytest.approx(0.0, abs=1e-12)
        np.testing.assert_allclose(np.cross(x, y), [0.0, 0.0, 1.0], atol=1e-12)
        assert x[0] > 0.9

    def test_frame_hint_parallel(self):
        """A hint parallel to z falls back to another axis."""
        x, y = orthonormal_frame((0.0, 0.0, 1.0), (0.0, 0.0, 1.0))
        np.testing.assert_allclose(np.cross(x, y), [0.0, 0.0, 1.0], atol=1e-12)

    def test_bad_radius(self):
        """Cylinders and spheres need a positive radius."""
        with pytest.raises(PxsValidationError):
            ShapeModel.sphere((0.0, 0.0, 0.0), 0.0)
        with pytest.raises(PxsValidationError):
            ShapeModel.cylinder((0.0, 0.0, 0.0), (0.0, 0.0, 1.0), -1.0)

    def test_non_orthogonal_axes(self):
        """Axes must be orthogonal unit vectors."""
        with pytest.raises(PxsValidationError):
            ShapeModel(ShapeKind.PLANE, np.zeros(3), np.array([1.0, 0.0, 0.0]), np.array([1.0, 0.0, 0.0]))

    def test_plane_params(self, plane):
        """Plane parameters are the normal and N.C."""
        np.testing.assert_allclose(plane.params(), [0.0, 0.0, 1.0, 2.0])

    def test_with_params_plane(self, plane):
        """with_params moves the plane and keeps X close."""
        moved = plane.with_params([0.0, 0.0, 1.0, 3.0])
        assert signed_distance(moved, np.array([4.0, -1.0, 3.0])) == pytest.approx(0.0)
        np.testing.assert_allclose(moved.axis_x, plane.axis_x)

    def test_with_params_cylinder(self, cylinder):
        """Cylinder parameters round-trip through with_params."""
        again = cylinder.with_params(cylinder.params())
        np.testing.assert_allclose(again.params(), cylinder.params())

    def test_offset(self, plane, sphere):
        """offset displaces along the outward normal."""
        assert plane.offset(0.5).origin[2] == pytest.approx(2.5)
        assert sphere.offset(0.5).radius == pytest.approx(1.5)
        with pytest.raises(PxsDomainError):
            sphere.offset(-1.0)

    def test_with_frame_flip(self, plane):
        """flip reverses the normal."""
        flipped = plane.with_frame((0.0, 1.0, 0.0), flip=True)
        np.testing.assert_allclose(flipped.normal, [0.0, 0.0, -1.0], atol=1e-12)
        np.testing.assert_allclose(flipped.axis_x, [0.0, 1.0, 0.0], atol=1e-12)

    def test_transformed(self, sphere):
        """A rigid transform moves the center and keeps the radius."""
        pose = CameraPose(np.eye(3), np.array([0.0, 1.0, 0.0]))
        moved = sphere.transformed(pose)
        np.testing.assert_allclose(moved.origin, [5.0, 1.0, 0.0])
        assert moved.radius == sphere.radius


class TestParameterize:
    """Tests for shape-local coordinates."""

    def test_plane(self, plane):
        """Plane (u, v) are the in-plane coordinates."""
        u, v = parameterize(plane, np.array([0.3, -0.7, 2.0]))
        assert (u, v) == pytest.approx((0.3, -0.7))

    def test_cylinder_u_range(self, cylinder):
        """Cylinder u runs over [0, 2 pi r] with +X at pi r."""
        u, v = parameterize(cylinder, np.array([1.0, 0.0, 0.4]))
        assert u == pytest.approx(math.pi)
        assert v == pytest.approx(0.4)
        u, _ = parameterize(cylinder, np.array([0.0, -1.0, 0.0]))
        assert u == pytest.approx(math.pi / 2)

    def test_sphere_octahedral(self, sphere):
        """Zenith maps to the center and the nadir to a corner."""
        half = math.pi / 2
        assert parameterize(sphere, np.array([5.0, 0.0, 1.0])) == pytest.approx((0.0, 0.0))
        assert parameterize(sphere, np.array([6.0, 0.0, 0.0])) == pytest.approx((half, 0.0))
        u, v = parameterize(sphere, np.array([5.0, 0.0, -1.0]))
        assert abs(u) == pytest.approx(half)
        assert abs(v) == pytest.approx(half)

    def test_sphere_center_undefined(self, sphere):
        """The sphere center has no coordinates."""
        with pytest.raises(PxsDomainError):
            parameterize(sphere, np.array([5.0, 0.0, 0.0]))

    @pytest.mark.parametrize("kind", ["plane", "cylinder", "sphere"])
    def test_surface_points_invert(self, kind, request, rng):
        """unparameterize lands on the surface and parameterize recovers (u, v)."""
        shape = request.getfixturevalue(kind)
        if kind == "sphere":
            u = rng.uniform(-1.4, 1.4, 20)
            v = rng.uniform(-1.4, 1.4, 20)
        elif kind == "cylinder":
            u = rng.uniform(0.1, 6.1, 20)
            v = rng.uniform(-1.0, 1.0, 20)
        else:
            u = rng.uniform(-2.0, 2.0, 20)
            v = rng.uniform(-2.0, 2.0, 20)
        points, normals = unparameterize(shape, u, v)
        np.testing.assert_allclose(signed_distance(shape, points), 0.0, atol=1e-9)
        np.testing.assert_allclose(np.linalg.norm(normals, axis=1), 1.0)
        u2, v2 = parameterize(shape, points)
        np.testing.assert_allclose(u2, u, atol=1e-9)
        np.testing.assert_allclose(v2, v, atol=1e-9)

    def test_sphere_outside_domain(self, sphere):
        """Sphere coordinates beyond pi r / 2 raise."""
        with pytest.raises(PxsDomainError):
            unparameterize(sphere, 2.0, 0.0)

    def test_non_finite(self, plane):
        """NaN coordinates raise."""
        with pytest.raises(PxsDomainError):
            unparameterize(plane, float("nan"), 0.0)


class TestDistancesAndRays:
    """Tests for distances, normals and ray intersection."""

    def test_signed_distance(self, plane, cylinder, sphere):
        """Distances are positive outside along the normal."""
        assert signed_distance(plane, np.array([0.0, 0.0, 2.5])) == pytest.approx(0.5)
        assert signed_distance(cylinder, np.array([2.0, 0.0, 5.0])) == pytest.approx(1.0)
        assert signed_distance(sphere, np.array([5.0, 0.5, 0.0])) == pytest.approx(-0.5)

    def test_surface_normal(self, cylinder):
        """Cylinder normals are radial."""
        n = surface_normal(cylinder, np.array([[0.0, 3.0, 7.0]]))
        np.testing.assert_allclose(n, [[0.0, 1.0, 0.0]])

    def test_intersect_sphere(self, sphere):
        """A ray through the center hits twice, ascending."""
        t = intersect_rays(sphere, np.zeros(3), np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]))
        np.testing.assert_allclose(t[0], [4.0, 6.0])
        assert np.all(np.isnan(t[1]))

    def test_intersect_plane(self, plane):
        """Planes give one root in the first column."""
        t = intersect_rays(plane, np.zeros(3), np.array([[0.0, 0.0, 2.0], [1.0, 0.0, 0.0]]))
        assert t[0, 0] == pytest.approx(1.0)
        assert np.isnan(t[0, 1])
        assert np.isnan(t[1, 0])

    def test_intersect_cylinder(self, cylinder):
        """Cylinder roots ignore the axial direction component."""
        t = intersect_rays(cylinder, np.array([-3.0, 0.0, 0.0]), np.array([[1.0, 0.0, 1.0]]))
        np.testing.assert_allclose(t[0], [2.0, 4.0])

    def test_project_along_ray(self, sphere):
        """Points move along the camera ray to the nearest intersection."""
        out = project_along_ray(sphere, np.zeros(3), np.array([7.0, 0.0, 0.0]))
        np.testing.assert_allclose(out, [6.0, 0.0, 0.0])
        on_surface = np.array([4.0, 0.0, 0.0])
        np.testing.assert_allclose(project_along_ray(sphere, np.zeros(3), on_surface), on_surface)

    def test_project_along_ray_miss(self, sphere):
        """Misses give None for one point and NaN rows for arrays."""
        assert project_along_ray(sphere, np.zeros(3), np.array([0.0, 3.0, 0.0])) is None
        out = project_along_ray(sphere, np.zeros(3), np.array([[0.0, 3.0, 0.0], [3.0, 0.0, 0.0]]))
        assert np.all(np.isnan(out[0]))
        np.testing.assert_allclose(out[1], [4.0, 0.0, 0.0])


class TestGridSpec:
    """Tests for shape grids."""

    def test_cell_of_floor(self):
        """Cells are floor(u / w), floor(v / w), also for negatives."""
        grid = GridSpec(0.05, (-1.0, 1.0), (-1.0, 1.0))
        assert grid.cell_of(-0.01, 0.12) == (-1, 2)

    def test_cylinder_wraps(self, cylinder):
        """Cylinder u wraps modulo the circumference."""
        grid = GridSpec.for_shape(cylinder, 0.05, v_range=(0.0, 1.0))
        assert grid.periodic
        i, _ = grid.cell_of(-0.01, 0.5)
        assert i == grid.index_bounds()[1] - 1
        assert grid.cell_of(2 * math.pi + 0.01, 0.5)[0] == 0

    def test_sphere_clamps(self, sphere):
        """Sphere indices clamp to the closed square."""
        grid = GridSpec.for_shape(sphere, 0.05)
        half = math.pi / 2
        i, j = grid.cell_of(half, -half)
        i_lo, i_hi, j_lo, j_hi = grid.index_bounds()
        assert i == i_hi - 1
        assert j == j_lo

    def test_cell_uv_center(self):
        """cell_uv defaults to the cell center."""
        grid = GridSpec(0.1, (0.0, 1.0), (0.0, 1.0))
        u, v = grid.cell_uv(3, 4)
        assert float(u) == pytest.approx(0.35)
        assert float(v) == pytest.approx(0.45)

    def test_color_res(self):
        """color_res is 2^r."""
        assert GridSpec(color_res_log2=3).color_res == 8

    def test_bad_range(self):
        """Ranges must be ordered."""
        with pytest.raises(PxsValidationError):
            GridSpec(0.05, (1.0, 0.0), (0.0, 1.0))

    def test_expanded(self):
        """expanded grows plane ranges to cover new coordinates."""
        grid = GridSpec(0.05, (0.0, 1.0), (0.0, 1.0)).expanded(np.array([-0.5, 2.0]), np.array([0.5]))
        assert grid.u_range == (-0.5, 2.0)
        assert grid.v_range == (0.0, 1.0)

    def test_bounding_spec(self, plane):
        """bounding_spec covers the points' (u, v)."""
        pts = np.array([[0.0, 0.0, 2.0], [1.0, 0.5, 2.0]])
        grid = bounding_spec(plane, pts, 0.1)
        assert grid.u_range[0] == pytest.approx(0.0)
        assert grid.u_range[1] == pytest.approx(1.0)
        assert grid.shape == (11, 6)
