"""Tests for the quasi-static kernel: z heuristic, pick, place, settle, step."""

import math

import numpy as np
import pytest

from benchtop.errors import GripperStateError
from benchtop.geometry import Cuboid, Pose, TriangularPrism
from benchtop.world import (
    Category,
    Primitive,
    WorldState,
    Workspace,
    compute_z,
    grasp_width,
    is_settled,
    resolve_pick,
    resolve_place,
    settle,
    step,
)

WS = Workspace(0.25, 0.65, -0.2, 0.2, 1.0)
CUBE = Cuboid(0.03, 0.03, 0.03)
ROOF_BOX = Cuboid(0.12, 0.03, 0.03)


def make_world(seed=0):
    return WorldState(bounds=WS, rng=np.random.default_rng(seed))


def add_cube(world, x, y, z=0.015, yaw=0.0):
    return world.add_object(CUBE, Pose(x, y, z, yaw), Category.BLOCK)


class TestComputeZ:
    def test_empty_region_pick(self):
        world = make_world()
        assert compute_z(world, 0.45, 0.0, Primitive.PICK) == pytest.approx(0.0)

    def test_pick_over_cube(self):
        world = make_world()
        add_cube(world, 0.45, 0.0)
        assert compute_z(world, 0.45, 0.0, Primitive.PICK) == pytest.approx(0.015)

    def test_place_onto_cube(self):
        world = make_world()
        add_cube(world, 0.45, 0.0)
        z = compute_z(world, 0.45, 0.0, Primitive.PLACE, held_height=0.03)
        assert z == pytest.approx(0.03 + 0.015 + 0.002)

    def test_place_requires_held(self):
        world = make_world()
        with pytest.raises(GripperStateError):
            compute_z(world, 0.45, 0.0, Primitive.PLACE)


class TestPick:
    def test_grasp_at_center(self):
        world = make_world()
        obj = add_cube(world, 0.45, 0.0)
        out = resolve_pick(world, 0.45, 0.0, 0.015, 0.0)
        assert out.kind == "GRASPED" and out.object_id == obj.id
        assert world.gripper.holding

    def test_miss_far_away(self):
        world = make_world()
        add_cube(world, 0.45, 0.0)
        out = resolve_pick(world, 0.50, 0.0, 0.015, 0.0)
        assert out.kind == "MISS"
        assert not world.gripper.holding

    def test_roof_block_opening_constraint(self):
        # Oracle: the footprint extent perpendicular to the gripper yaw is the
        # width of the rotated bounding box along that axis.
        world = make_world()
        roof = world.add_object(ROOF_BOX, Pose(0.45, 0.0, 0.015, 0.0), Category.BRICK)

        def extent_perp(theta):
            ux, uy = -math.sin(theta), math.cos(theta)
            half = 0.06 * abs(ux) + 0.015 * abs(uy)
            return 2 * half

        assert extent_perp(0.0) == pytest.approx(0.03)
        assert extent_perp(math.pi / 2) == pytest.approx(0.12)
        assert grasp_width(roof, 0.0) == pytest.approx(0.03)
        assert grasp_width(roof, math.pi / 2) == pytest.approx(0.12)

        out = resolve_pick(world, 0.45, 0.0, 0.015, 0.0)
        assert out.kind == "GRASPED"  # 0.03 <= 0.08 opening
        # Put it back and try across the long axis: 0.12 > 0.08.
        resolve_place(world, 0.45, 0.0, 0.047, 0.0)
        out = resolve_pick(world, 0.45, 0.0, 0.015, math.pi / 2)
        assert out.kind == "MISS"

    def test_elongated_grasp_line(self):
        world = make_world()
        world.add_object(ROOF_BOX, Pose(0.45, 0.0, 0.015, 0.0), Category.BRICK)
        # Anywhere along the centerline is a valid grasp point.
        out = resolve_pick(world, 0.48, 0.0, 0.015, 0.0)
        assert out.kind == "GRASPED"

    def test_occluded_object_unpickable(self):
        world = make_world()
        add_cube(world, 0.45, 0.0, z=0.015)
        add_cube(world, 0.45, 0.0, z=0.045)  # stacked on top
        out = resolve_pick(world, 0.45, 0.0, 0.015, 0.0)
        # The top cube is the candidate at this z; commanded height is inside
        # the lower cube but the grasp resolves to the top (z within tol).
        assert out.kind in ("GRASPED", "MISS")
        world2 = make_world()
        low = add_cube(world2, 0.45, 0.0, z=0.015)
        add_cube(world2, 0.45, 0.0, z=0.045)
        out2 = resolve_pick(world2, 0.45, 0.0, 0.045, 0.0)
        assert out2.kind == "GRASPED"
        assert out2.object_id != low.id

    def test_pick_while_holding_raises(self):
        world = make_world()
        add_cube(world, 0.45, 0.0)
        resolve_pick(world, 0.45, 0.0, 0.015, 0.0)
        with pytest.raises(GripperStateError):
            resolve_pick(world, 0.45, 0.0, 0.015, 0.0)

    def test_supported_objects_fall_after_pick(self):
        world = make_world()
        add_cube(world, 0.45, 0.0, z=0.015)
        upper = add_cube(world, 0.45, 0.0, z=0.045)
        out = resolve_pick(world, 0.45, 0.0, 0.045, 0.0)
        assert out.object_id == upper.id
        # Lower cube unaffected; nothing was above it.
        assert world.objects[0].pose.z == pytest.approx(0.015)


class TestPlace:
    def grab(self, world, obj, theta=0.0):
        out = resolve_pick(
            world, obj.pose.x, obj.pose.y, obj.pose.z, theta
        )
        assert out.kind == "GRASPED"

    def test_concentric_stack_stable(self):
        world = make_world()
        add_cube(world, 0.45, 0.0)
        mover = add_cube(world, 0.55, 0.1)
        self.grab(world, mover)
        out = resolve_place(world, 0.45, 0.0, 0.047, 0.0)
        assert out.kind == "PLACED_STABLE"
        assert mover.base == pytest.approx(0.03)
        assert mover.pose.x == pytest.approx(0.45)

    def test_ground_place_stable(self):
        world = make_world()
        mover = add_cube(world, 0.55, 0.1)
        self.grab(world, mover)
        out = resolve_place(world, 0.35, -0.1, 0.017, 0.0)
        assert out.kind == "PLACED_STABLE"
        assert mover.base == pytest.approx(0.0)

    def test_offset_within_support_still_stable(self):
        world = make_world()
        add_cube(world, 0.45, 0.0)
        mover = add_cube(world, 0.55, 0.1)
        self.grab(world, mover)
        out = resolve_place(world, 0.46, 0.0, 0.047, 0.0)  # 1 cm offset
        assert out.kind == "PLACED_STABLE"
        assert mover.base == pytest.approx(0.03)

    def test_edge_overhang_topples(self):
        # Center 2 cm off the support center: the center column is over bare
        # ground while the footprint clips the lower cube. Applying the
        # displacement rule: one 1 cm increment along the contact-to-center
        # ray clears the overlap (footprints just touch at 3 cm separation),
        # then the object settles on the ground at the displaced column.
        world = make_world()
        add_cube(world, 0.45, 0.0)
        mover = add_cube(world, 0.55, 0.1)
        self.grab(world, mover)
        out = resolve_place(world, 0.47, 0.0, 0.047, 0.0)
        assert out.kind == "PLACED_TOPPLED"
        assert mover.base == pytest.approx(0.0)
        assert mover.pose.x >= 0.48 - 1e-9
        assert mover.pose.y == pytest.approx(0.0)

    def test_place_while_empty_raises(self):
        world = make_world()
        with pytest.raises(GripperStateError):
            resolve_place(world, 0.45, 0.0, 0.02, 0.0)

    def test_touching_neighbor_gives_no_support(self):
        # A cube placed exactly touching another lands on the ground, stable.
        world = make_world()
        add_cube(world, 0.45, 0.0)
        mover = add_cube(world, 0.55, 0.1)
        self.grab(world, mover)
        out = resolve_place(world, 0.48, 0.0, 0.017, 0.0)
        assert out.kind == "PLACED_STABLE"
        assert mover.base == pytest.approx(0.0)

    def test_roof_spans_touching_pair(self):
        world = make_world()
        add_cube(world, 0.435, 0.0)
        add_cube(world, 0.465, 0.0)  # touching at x = 0.45
        roof = world.add_object(
            TriangularPrism(0.12, 0.03, 0.03), Pose(0.55, 0.1, 0.015, 0.0), Category.ROOF
        )
        out = resolve_pick(world, 0.55, 0.1, 0.015, 0.0)
        assert out.kind == "GRASPED"
        out = resolve_place(world, 0.45, 0.0, 0.047, 0.0)
        assert out.kind == "PLACED_STABLE"
        assert roof.base == pytest.approx(0.03)

    def test_gap_between_pair_topples_roof(self):
        world = make_world()
        add_cube(world, 0.43, 0.0)
        add_cube(world, 0.47, 0.0)  # 1 cm gap
        world.add_object(
            TriangularPrism(0.12, 0.03, 0.03), Pose(0.55, 0.1, 0.015, 0.0), Category.ROOF
        )
        resolve_pick(world, 0.55, 0.1, 0.015, 0.0)
        out = resolve_place(world, 0.45, 0.0, 0.047, 0.0)
        assert out.kind == "PLACED_TOPPLED"


class TestSettle:
    def test_removing_middle_drops_upper(self):
        world = make_world()
        add_cube(world, 0.45, 0.0, z=0.015)
        mid = add_cube(world, 0.45, 0.0, z=0.045)
        top = add_cube(world, 0.45, 0.0, z=0.075)
        world.remove_object(mid.id)
        settle(world)
        assert top.base == pytest.approx(0.03)

    def test_settled_world_unchanged(self):
        world = make_world()
        add_cube(world, 0.45, 0.0)
        add_cube(world, 0.45, 0.0, z=0.045)
        poses = [o.pose for o in world.objects]
        settle(world)
        assert [o.pose for o in world.objects] == poses

    def test_chained_drop(self):
        # Apply the drop rule twice by hand: with the lower support gone the
        # middle cube falls to the ground, then the upper lands on it.
        world = make_world()
        mid = add_cube(world, 0.45, 0.0, z=0.045)
        top = add_cube(world, 0.45, 0.0, z=0.075)
        settle(world)
        assert mid.base == pytest.approx(0.0)
        assert top.base == pytest.approx(0.03)

    def test_no_levitation_after_steps(self):
        world = make_world(seed=5)
        for i in range(4):
            add_cube(world, 0.35 + 0.07 * i, -0.1)
        rng = np.random.default_rng(11)
        for _ in range(60):
            x = rng.uniform(0.25, 0.65)
            y = rng.uniform(-0.2, 0.2)
            step(world, x, y, rng.uniform(0, math.pi))
            for obj in world.active_objects():
                assert is_settled(world, obj)


class TestStep:
    def test_heuristic_picks_when_empty(self):
        world = make_world()
        add_cube(world, 0.45, 0.0)
        action, out = step(world, 0.45, 0.0, 0.0)
        assert action.primitive is Primitive.PICK
        assert out.kind == "GRASPED"

    def test_heuristic_places_when_holding(self):
        world = make_world()
        add_cube(world, 0.45, 0.0)
        step(world, 0.45, 0.0, 0.0)
        action, out = step(world, 0.35, 0.0, 0.0)
        assert action.primitive is Primitive.PLACE
        assert out.kind == "PLACED_STABLE"

    def test_inconsistent_primitive_overridden(self):
        world = make_world()
        add_cube(world, 0.45, 0.0)
        action, out = step(world, 0.45, 0.0, 0.0, primitive=Primitive.PLACE)
        assert action.primitive is Primitive.PICK
        assert out.primitive_overridden

    def test_out_of_bounds_clipped(self):
        world = make_world()
        action, _ = step(world, 0.75, 0.0, 0.0)
        assert action.x == pytest.approx(0.65)

    def test_object_conservation(self):
        world = make_world(seed=2)
        for i in range(4):
            add_cube(world, 0.30 + 0.08 * i, 0.05)
        rng = np.random.default_rng(7)
        for _ in range(50):
            step(world, rng.uniform(0.25, 0.65), rng.uniform(-0.2, 0.2), 0.0)
            assert sum(o.movable for o in world.objects) == 4

    def test_determinism_from_clone(self):
        world = make_world(seed=3)
        for i in range(4):
            add_cube(world, 0.30 + 0.08 * i, 0.05)
        twin = world.clone()
        rng = np.random.default_rng(9)
        actions = [
            (rng.uniform(0.25, 0.65), rng.uniform(-0.2, 0.2), rng.uniform(0, math.pi))
            for _ in range(40)
        ]
        for x, y, t in actions:
            step(world, x, y, t)
        for x, y, t in actions:
            step(twin, x, y, t)
        for a, b in zip(world.objects, twin.objects):
            assert a.pose == b.pose
        assert world.step_count == twin.step_count

    def test_pick_place_inverse(self):
        # Picking a top (unsupporting) object and placing it back at the same
        # pose restores the world.
        world = make_world()
        add_cube(world, 0.45, 0.0)
        mover = add_cube(world, 0.45, 0.0, z=0.045)
        others = {o.id: o.pose for o in world.objects}
        step(world, 0.45, 0.0, 0.0)
        step(world, 0.45, 0.0, 0.0)
        for o in world.objects:
            assert o.pose.x == pytest.approx(others[o.id].x, abs=1e-6)
            assert o.pose.y == pytest.approx(others[o.id].y, abs=1e-6)
            assert o.pose.z == pytest.approx(others[o.id].z, abs=1e-6)
        assert mover.base == pytest.approx(0.03, abs=1e-9)
