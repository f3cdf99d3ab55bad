"""Tests for heightmap rasterization, in-hand crops, and PNG export."""

import math

import numpy as np
import pytest

from benchtop.geometry import Cuboid, Cylinder, GridSpec, Pose, TriangularPrism, height_at
from benchtop.render import (
    Heightmap,
    export_image,
    import_image,
    render_heightmap,
    render_in_hand,
    zero_in_hand,
)
from benchtop.world import Category, WorldState, Workspace, resolve_pick

WS = Workspace(0.25, 0.65, -0.2, 0.2, 1.0)
GRID = GridSpec(0.25, 0.65, -0.2, 0.2, 128)
CUBE = Cuboid(0.03, 0.03, 0.03)


def make_world():
    return WorldState(bounds=WS, rng=np.random.default_rng(0))


def oracle_map(world, grid):
    """Point-sampling oracle: scalar height_at at every pixel center."""
    out = np.zeros((grid.size, grid.size), dtype=np.float64)
    for r in range(grid.size):
        for c in range(grid.size):
            x, y = grid.pixel_to_world(r, c)
            best = 0.0
            for obj in world.active_objects():
                h = height_at(obj.shape, obj.pose, x, y)
                if h is not None and h > best:
                    best = h
            out[r, c] = best
    return out


class TestHeightmap:
    def test_empty_world_all_zero(self):
        hm = render_heightmap(make_world(), GRID)
        assert hm.data.shape == (128, 128)
        assert hm.data.dtype == np.float32
        assert not hm.data.any()

    def test_centered_cube_square(self):
        world = make_world()
        world.add_object(CUBE, Pose(0.45, 0.0, 0.015, 0.0), Category.BLOCK)
        hm = render_heightmap(world, GRID)
        oracle = oracle_map(world, GRID)
        assert np.allclose(hm.data, oracle, atol=1e-6)
        # 3 cm cube over a 0.003125 m pitch covers 9-10 pixels per side.
        cols = np.flatnonzero(hm.data.max(axis=0) > 0)
        rows = np.flatnonzero(hm.data.max(axis=1) > 0)
        assert len(cols) in (9, 10)
        assert len(rows) in (9, 10)
        assert 63 <= cols.mean() <= 65
        assert np.all(hm.data[hm.data > 0] == np.float32(0.03))

    def test_held_object_excluded(self):
        world = make_world()
        world.add_object(CUBE, Pose(0.45, 0.0, 0.015, 0.0), Category.BLOCK)
        out = resolve_pick(world, 0.45, 0.0, 0.015, 0.0)
        assert out.kind == "GRASPED"
        hm = render_heightmap(world, GRID)
        assert not hm.data.any()

    def test_oracle_equivalence_random_worlds(self):
        rng = np.random.default_rng(42)
        small = GridSpec(0.25, 0.65, -0.2, 0.2, 48)
        for _ in range(10):
            world = make_world()
            for _ in range(rng.integers(1, 6)):
                shape = [
                    CUBE,
                    TriangularPrism(0.12, 0.03, 0.03),
                    Cylinder(0.025, 0.14),
                ][rng.integers(0, 3)]
                world.add_object(
                    shape,
                    Pose(
                        rng.uniform(0.3, 0.6),
                        rng.uniform(-0.15, 0.15),
                        0.07 if isinstance(shape, Cylinder) else 0.015,
                        rng.uniform(0, 2 * math.pi),
                    ),
                    Category.BLOCK,
                )
            hm = render_heightmap(world, small)
            assert np.allclose(hm.data, oracle_map(world, small), atol=1e-6)

    def test_quarter_turn_rotation_consistency(self):
        # Rotating every object by pi/2 about the workspace center must
        # permute the heightmap exactly (pixel centers map onto pixel
        # centers), so the rotated render equals np.rot90 of the original.
        rng = np.random.default_rng(7)
        cx = (WS.x_min + WS.x_max) / 2.0
        cy = (WS.y_min + WS.y_max) / 2.0
        world = make_world()
        rotated = make_world()
        for _ in range(5):
            x = rng.uniform(0.3, 0.6)
            y = rng.uniform(-0.15, 0.15)
            yaw = rng.uniform(0, 2 * math.pi)
            world.add_object(CUBE, Pose(x, y, 0.015, yaw), Category.BLOCK)
            # Exact +90 degree rotation about the center: (dx,dy) -> (-dy,dx).
            rotated.add_object(
                CUBE,
                Pose(cx - (y - cy), cy + (x - cx), 0.015, yaw + math.pi / 2),
                Category.BLOCK,
            )
        a = render_heightmap(world, GRID).data
        b = render_heightmap(rotated, GRID).data
        # Pixel (r, c) of the rotated render reads world point (x, y) whose
        # preimage under the rotation is (cx + (y - cy), cy - (x - cx));
        # the permutation must hold exactly (error bound 0).
        xs = GRID.x_centers()
        ys = GRID.y_centers()
        pre_x = cx + (ys[:, None] - cy) + 0.0 * xs[None, :]
        pre_y = cy - (xs[None, :] - cx) + 0.0 * ys[:, None]
        pc = np.rint((pre_x - GRID.x_min) / GRID.pitch - 0.5).astype(int)
        pr = np.rint((pre_y - GRID.y_min) / GRID.pitch - 0.5).astype(int)
        assert np.array_equal(b, a[pr, pc])


class TestInHand:
    def test_crop_on_empty_map(self):
        hm = render_heightmap(make_world(), GRID)
        crop = render_in_hand(hm, 0.45, 0.0, 0.0, 24)
        assert crop.shape == (24, 24)
        assert not crop.any()

    def test_crop_centered_on_cube(self):
        world = make_world()
        world.add_object(CUBE, Pose(0.45, 0.0, 0.015, 0.0), Category.BLOCK)
        hm = render_heightmap(world, GRID)
        crop = render_in_hand(hm, 0.45, 0.0, 0.0, 24)
        filled = crop > 0.02
        per_row = filled.sum(axis=1).max()
        per_col = filled.sum(axis=0).max()
        assert 8 <= per_row <= 11
        assert 8 <= per_col <= 11
        # The cube is centered in the crop.
        rows = np.flatnonzero(filled.any(axis=1))
        assert abs(rows.mean() - 11.5) < 1.5
        assert crop.max() == pytest.approx(0.03, abs=1e-4)

    def test_rotated_crop_cancels_object_yaw(self):
        world = make_world()
        yaw = 0.7
        world.add_object(Cuboid(0.09, 0.03, 0.03), Pose(0.45, 0.0, 0.015, yaw), Category.BRICK)
        hm = render_heightmap(world, GRID)
        crop = render_in_hand(hm, 0.45, 0.0, yaw, 24)
        filled = crop > 0.02
        # Canonical orientation: the long axis lies along the crop columns.
        cols = filled.any(axis=0).sum()
        rows = filled.any(axis=1).sum()
        assert cols > rows

    def test_zero_after_place(self):
        z = zero_in_hand(24)
        assert z.shape == (24, 24) and not z.any()


class TestExport:
    def test_zero_map(self, tmp_path):
        path = tmp_path / "zero.png"
        export_image(np.zeros((16, 16), dtype=np.float32), path)
        assert not import_image(path).any()

    def test_quantization_value(self, tmp_path):
        # round(0.03 * 65535) = 1966 for z_max = 1.0.
        data = np.full((4, 4), 0.03, dtype=np.float32)
        path = tmp_path / "cube.png"
        export_image(data, path, z_max=1.0)
        from PIL import Image

        raw = np.asarray(Image.open(path))
        assert int(raw[0, 0]) == round(0.03 * 65535) == 1966

    def test_round_trip_error_bound(self, tmp_path):
        rng = np.random.default_rng(1)
        data = rng.uniform(0, 0.3, size=(32, 32)).astype(np.float32)
        path = tmp_path / "rt.png"
        export_image(data, path, z_max=1.0)
        back = import_image(path, z_max=1.0)
        assert np.max(np.abs(back - data)) <= 1.0 / 65535 + 1e-9
