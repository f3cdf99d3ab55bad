"""Unit and property tests for shape/footprint/pixel math."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from benchtop.errors import InvalidInputError, OutOfWorkspaceError
from benchtop.geometry import (
    Container,
    ConvexPrism,
    Cuboid,
    Cylinder,
    GridSpec,
    Pose,
    TriangularPrism,
    footprint_clearance,
    footprint_contains,
    footprints_overlap,
    height_at,
    normalize_yaw,
    polygon_centroid,
    raster_top,
    support_extent,
    validate_shape,
)

CUBE = Cuboid(0.03, 0.03, 0.03)


def settled(shape, x, y, yaw=0.0):
    """Pose of a shape resting on the ground."""
    if isinstance(shape, Cylinder):
        h = shape.height
    elif isinstance(shape, ConvexPrism):
        h = shape.height
    else:
        h = shape.lz
    return Pose(x, y, h / 2.0, yaw)


class TestHeightAt:
    def test_cube_center_column(self):
        pose = Pose(0.2, 0.2, 0.015, 0.0)
        assert height_at(CUBE, pose, 0.2, 0.2) == pytest.approx(0.03)

    def test_cube_miss(self):
        pose = Pose(0.2, 0.2, 0.015, 0.0)
        assert height_at(CUBE, pose, 0.25, 0.2) is None

    def test_triangular_prism_linear_profile(self):
        # Oracle: top falls linearly from lz at the ridge (y=0) to 0 at the
        # y = +-ly/2 edges.
        prism = TriangularPrism(0.03, 0.03, 0.03)
        pose = settled(prism, 0.0, 0.0)

        def oracle(y):
            return 0.03 * (1.0 - abs(y) / 0.015)

        assert height_at(prism, pose, 0.0, 0.0) == pytest.approx(0.03)
        assert height_at(prism, pose, 0.01, 0.0) == pytest.approx(0.03)  # along ridge
        for y in (-0.015, 0.015):
            assert height_at(prism, pose, 0.0, y) == pytest.approx(0.0, abs=1e-12)
        for y in (-0.012, -0.005, 0.0075, 0.014):
            assert height_at(prism, pose, 0.0, y) == pytest.approx(oracle(y))

    def test_container_walls_and_cavity(self):
        bin_ = Container(0.176, 0.144, 0.08, wall=0.008, cavity_depth=0.072)
        pose = settled(bin_, 0.0, 0.0)
        # Over a wall: full outer height. Over the cavity: floor height.
        assert height_at(bin_, pose, 0.085, 0.0) == pytest.approx(0.08)
        assert height_at(bin_, pose, 0.0, 0.0) == pytest.approx(0.008)
        assert height_at(bin_, pose, 0.2, 0.0) is None

    def test_cylinder(self):
        cyl = Cylinder(0.025, 0.14)
        pose = settled(cyl, 0.2, 0.2)
        assert height_at(cyl, pose, 0.2, 0.224) == pytest.approx(0.14)
        assert height_at(cyl, pose, 0.2, 0.226) is None

    def test_raised_shape_reports_world_height(self):
        pose = Pose(0.0, 0.0, 0.045, 0.0)  # cube stacked on another cube
        assert height_at(CUBE, pose, 0.0, 0.0) == pytest.approx(0.06)


class TestFootprintContains:
    def test_cube_center(self):
        pose = Pose(0.2, 0.2, 0.015, 0.0)
        assert footprint_contains(CUBE, pose, 0.2, 0.2)

    def test_rotated_cube_axis_corner_outside(self):
        # Oracle: rotate the query into the cube's local frame and compare to
        # half-extents. At yaw=pi/4 the axis-aligned corner is sqrt(2)*0.015
        # from center along a local diagonal, outside the footprint.
        pose = Pose(0.2, 0.2, 0.015, math.pi / 4)
        qx, qy = 0.2 + 0.015, 0.2 + 0.015
        c, s = math.cos(-math.pi / 4), math.sin(-math.pi / 4)
        dx, dy = qx - 0.2, qy - 0.2
        local = (c * dx - s * dy, s * dx + c * dy)
        assert max(abs(local[0]), abs(local[1])) > 0.015
        assert not footprint_contains(CUBE, pose, qx, qy)

    def test_container_outer_footprint(self):
        bin_ = Container(0.176, 0.144, 0.08, wall=0.008, cavity_depth=0.072)
        pose = settled(bin_, 0.0, 0.0)
        assert footprint_contains(bin_, pose, 0.0, 0.0)  # cavity still counts
        assert footprint_contains(bin_, pose, 0.087, 0.071)
        assert not footprint_contains(bin_, pose, 0.089, 0.0)

    @given(
        x=st.floats(-0.1, 0.1),
        y=st.floats(-0.1, 0.1),
        yaw=st.floats(0, 2 * math.pi),
        qx=st.floats(-0.2, 0.2),
        qy=st.floats(-0.2, 0.2),
        tx=st.floats(-0.3, 0.3),
        ty=st.floats(-0.3, 0.3),
        phi=st.floats(0, 2 * math.pi),
    )
    @settings(max_examples=200, deadline=None)
    def test_invariant_under_rigid_transform(self, x, y, yaw, qx, qy, tx, ty, phi):
        # Containment is preserved when pose and query move rigidly together,
        # up to boundary-epsilon cases which the transform may flip.
        shape = Cuboid(0.04, 0.02, 0.03)
        pose = Pose(x, y, 0.015, yaw)
        c, s = math.cos(phi), math.sin(phi)
        pose2 = Pose(c * x - s * y + tx, s * x + c * y + ty, 0.015, yaw + phi)
        q2 = (c * qx - s * qy + tx, s * qx + c * qy + ty)
        # Skip queries within float slack of the footprint boundary.
        lx = math.cos(-yaw) * (qx - x) - math.sin(-yaw) * (qy - y)
        ly = math.sin(-yaw) * (qx - x) + math.cos(-yaw) * (qy - y)
        if abs(abs(lx) - 0.02) < 1e-9 or abs(abs(ly) - 0.01) < 1e-9:
            return
        assert footprint_contains(shape, pose, qx, qy) == footprint_contains(
            shape, pose2, q2[0], q2[1]
        )


class TestNormalizeYaw:
    def test_examples(self):
        assert normalize_yaw(3 * math.pi / 2, half_rotation=True) == pytest.approx(
            math.pi / 2
        )
        assert normalize_yaw(-math.pi / 4, half_rotation=False) == pytest.approx(
            7 * math.pi / 4
        )
        assert normalize_yaw(math.pi, half_rotation=True) == pytest.approx(0.0)

    def test_non_finite_rejected(self):
        with pytest.raises(InvalidInputError):
            normalize_yaw(float("nan"))
        with pytest.raises(InvalidInputError):
            normalize_yaw(float("inf"), half_rotation=True)

    def test_idempotent_and_periodic(self):
        rng = np.random.default_rng(0)
        for theta in rng.uniform(-50, 50, size=1000):
            for half in (False, True):
                out = normalize_yaw(theta, half)
                period = math.pi if half else 2 * math.pi
                assert 0.0 <= out < period
                assert normalize_yaw(out, half) == out
                # pi- (resp. 2pi-) periodicity as literal function equality
                assert normalize_yaw(theta + period, half) == pytest.approx(
                    out, abs=1e-9
                )


class TestGrid:
    def test_pitch(self):
        grid = GridSpec(0.25, 0.65, -0.2, 0.2, 128)
        assert grid.pitch == pytest.approx(0.4 / 128)
        assert grid.pitch == pytest.approx(0.003125)

    def test_corner_and_center(self):
        grid = GridSpec(0.25, 0.65, -0.2, 0.2, 128)
        assert grid.world_to_pixel(0.25, -0.2) == (0, 0)
        # The exact workspace center sits on a cell boundary; ties go to the
        # larger index.
        assert grid.world_to_pixel(0.45, 0.0) == (64, 64)

    def test_out_of_bounds(self):
        grid = GridSpec(0.25, 0.65, -0.2, 0.2, 128)
        with pytest.raises(OutOfWorkspaceError):
            grid.world_to_pixel(0.24, 0.0)

    def test_round_trip_lands_on_center(self):
        grid = GridSpec(0.25, 0.65, -0.2, 0.2, 128)
        rng = np.random.default_rng(3)
        for _ in range(200):
            x = rng.uniform(0.25, 0.65)
            y = rng.uniform(-0.2, 0.2)
            r, c = grid.world_to_pixel(x, y)
            cx, cy = grid.pixel_to_world(r, c)
            assert abs(cx - x) <= grid.pitch / 2 + 1e-9
            assert abs(cy - y) <= grid.pitch / 2 + 1e-9

    def test_pixel_center_bijection(self):
        grid = GridSpec(0.25, 0.65, -0.2, 0.2, 32)
        seen = set()
        for r in range(32):
            for c in range(32):
                x, y = grid.pixel_to_world(r, c)
                assert grid.world_to_pixel(x, y) == (r, c)
                seen.add((x, y))
        assert len(seen) == 32 * 32


class TestOverlapAndClearance:
    def test_touching_cubes_do_not_overlap(self):
        a = settled(CUBE, 0.0, 0.0)
        b = settled(CUBE, 0.03, 0.0)
        assert not footprints_overlap(CUBE, a, CUBE, b)
        assert footprint_clearance(CUBE, a, CUBE, b) == pytest.approx(0.0, abs=1e-9)

    def test_overlapping_cubes(self):
        a = settled(CUBE, 0.0, 0.0)
        b = settled(CUBE, 0.02, 0.0)
        assert footprints_overlap(CUBE, a, CUBE, b)

    def test_separated_clearance(self):
        a = settled(CUBE, 0.0, 0.0)
        b = settled(CUBE, 0.05, 0.0)
        assert footprint_clearance(CUBE, a, CUBE, b) == pytest.approx(0.02)

    def test_circle_vs_poly(self):
        cyl = Cylinder(0.025, 0.14)
        a = settled(cyl, 0.0, 0.0)
        b = settled(CUBE, 0.05, 0.0)
        assert footprint_clearance(cyl, a, CUBE, b) == pytest.approx(0.01)
        assert not footprints_overlap(cyl, a, CUBE, b)
        c = settled(CUBE, 0.03, 0.0)
        assert footprints_overlap(cyl, a, CUBE, c)

    def test_rotated_rects(self):
        roof = TriangularPrism(0.12, 0.03, 0.03)
        a = settled(roof, 0.0, 0.0, yaw=0.0)
        b = settled(roof, 0.0, 0.05, yaw=math.pi / 2)
        # b occupies y in [-0.01, 0.11] at x in [-0.015, 0.015]: overlaps a.
        assert footprints_overlap(roof, a, roof, b)
        c = settled(roof, 0.1, 0.1, yaw=math.pi / 4)
        assert not footprints_overlap(roof, a, roof, c)


class TestConvexPrism:
    def test_validation(self):
        bad = ConvexPrism(((0, 0), (0.01, 0), (0.02, 0)), 0.02)  # collinear
        with pytest.raises(InvalidInputError):
            validate_shape(bad)
        good = ConvexPrism(
            ((-0.01, -0.01), (0.01, -0.01), (0.012, 0.008), (-0.008, 0.012)), 0.02
        )
        validate_shape(good)

    def test_centroid_and_support(self):
        verts = ((-0.01, -0.01), (0.01, -0.01), (0.01, 0.01), (-0.01, 0.01))
        prism = ConvexPrism(verts, 0.02)
        cx, cy = polygon_centroid(np.asarray(verts, dtype=float))
        assert (cx, cy) == pytest.approx((0.0, 0.0))
        pose = settled(prism, 0.1, 0.1)
        assert support_extent(prism, pose, 1.0, 0.0) == pytest.approx(0.01)
        assert support_extent(prism, pose, math.sqrt(0.5), math.sqrt(0.5)) == (
            pytest.approx(0.01 * math.sqrt(2))
        )

    def test_height_inside_outside(self):
        verts = ((-0.01, -0.01), (0.01, -0.01), (0.01, 0.01), (-0.01, 0.01))
        prism = ConvexPrism(verts, 0.02)
        pose = settled(prism, 0.0, 0.0)
        assert height_at(prism, pose, 0.005, -0.005) == pytest.approx(0.02)
        assert height_at(prism, pose, 0.02, 0.0) is None


class TestRaster:
    def test_matches_scalar_height_at(self):
        shapes = [
            (CUBE, Pose(0.02, -0.01, 0.015, 0.3)),
            (TriangularPrism(0.12, 0.03, 0.03), Pose(0.0, 0.0, 0.015, 1.1)),
            (Cylinder(0.025, 0.14), Pose(-0.05, 0.04, 0.07, 0.0)),
            (
                Container(0.176, 0.144, 0.08, 0.008, 0.072),
                Pose(0.05, 0.05, 0.04, 2.2),
            ),
        ]
        xs = np.linspace(-0.2, 0.2, 41)
        ys = np.linspace(-0.2, 0.2, 41)
        gx, gy = np.meshgrid(xs, ys)
        for shape, pose in shapes:
            grid_vals = raster_top(shape, pose, gx, gy)
            for i in range(0, 41, 5):
                for j in range(0, 41, 5):
                    want = height_at(shape, pose, gx[i, j], gy[i, j])
                    got = grid_vals[i, j]
                    if want is None:
                        assert math.isnan(got)
                    else:
                        assert got == pytest.approx(want, abs=1e-12)

    def test_nonnegative_when_settled(self):
        pose = settled(TriangularPrism(0.03, 0.03, 0.03), 0.0, 0.0)
        xs = np.linspace(-0.02, 0.02, 21)
        vals = raster_top(TriangularPrism(0.03, 0.03, 0.03), pose, xs, np.zeros(21))
        assert np.nanmin(vals) >= -1e-12
