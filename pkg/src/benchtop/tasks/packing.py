"""Bin packing and bottle arrangement: pack movables into a fixed container."""

from __future__ import annotations

import math

import numpy as np

from ..config import EnvConfig
from ..geometry import Container, Cylinder, Pose, world_footprint
from ..world import Category, SimObject, WorldState
from .base import (
    TaskSpec,
    draw_scale,
    register_task,
    sample_free_pose,
    yaw_sampler_for,
)

BIN = Container(0.176, 0.144, 0.08, wall=0.008, cavity_depth=0.072)
TRAY = Container(0.24, 0.16, 0.05, wall=0.008, cavity_depth=0.042)
BOTTLE = Cylinder(0.025, 0.14)

# Bin-packing object dimensions: lx 4-8 cm, ly 4 cm, lz 2-4 cm.
PACK_LX = (0.04, 0.08)
PACK_LY = 0.04
PACK_LZ = (0.02, 0.04)

REST_TOL = 1e-3


def cavity_half_extents(container: Container) -> tuple[float, float]:
    return (
        container.lx / 2.0 - container.wall,
        container.ly / 2.0 - container.wall,
    )


def cavity_floor_top(fixture: SimObject) -> float:
    shape = fixture.shape
    return fixture.top - shape.cavity_depth


def to_local(fixture: SimObject, x: float, y: float) -> tuple[float, float]:
    c = math.cos(fixture.pose.yaw)
    s = math.sin(fixture.pose.yaw)
    dx = x - fixture.pose.x
    dy = y - fixture.pose.y
    return (c * dx + s * dy, -s * dx + c * dy)


def from_local(fixture: SimObject, lx: float, ly: float) -> tuple[float, float]:
    c = math.cos(fixture.pose.yaw)
    s = math.sin(fixture.pose.yaw)
    return (fixture.pose.x + c * lx - s * ly, fixture.pose.y + s * lx + c * ly)


def footprint_inside_cavity(obj: SimObject, fixture: SimObject, margin: float = 0.0) -> bool:
    """Whole footprint within the cavity rectangle (polygon corners or the
    full circle for cylinders)."""
    hx, hy = cavity_half_extents(fixture.shape)
    kind, *rest = world_footprint(obj.shape, obj.pose)
    if kind == "circle":
        (cx, cy), r = rest
        lx, ly = to_local(fixture, cx, cy)
        return abs(lx) <= hx - r - margin + 1e-9 and abs(ly) <= hy - r - margin + 1e-9
    for vx, vy in rest[0]:
        lx, ly = to_local(fixture, vx, vy)
        if abs(lx) > hx - margin + 1e-9 or abs(ly) > hy - margin + 1e-9:
            return False
    return True


def object_in_bin(obj: SimObject, fixture: SimObject) -> bool:
    return (
        footprint_inside_cavity(obj, fixture)
        and obj.base >= cavity_floor_top(fixture) - REST_TOL
        and obj.top <= fixture.top + 1e-6
    )


def _the_container(world: WorldState) -> SimObject:
    for o in world.objects:
        if o.category is Category.CONTAINER:
            return o
    raise LookupError("no container fixture in world")


def sample_pack_shape(rng: np.random.Generator, scale: float):
    from ..geometry import Cuboid

    lx = float(rng.uniform(*PACK_LX)) * scale
    lz = float(rng.uniform(*PACK_LZ)) * scale
    return Cuboid(lx, PACK_LY * scale, lz)


def _init_with_container(world: WorldState, config: EnvConfig, container, shapes):
    rng = world.rng
    yaw = yaw_sampler_for(config, rng)
    fixture_pose = sample_free_pose(
        world, container, rng, yaw_sampler=yaw, inset_extra=0.01
    )
    fixture = world.add_object(container, fixture_pose, Category.CONTAINER, movable=False)
    for shape, category in shapes:
        pose = sample_free_pose(world, shape, rng, yaw_sampler=yaw)
        world.add_object(shape, pose, category)
    return None


def init_bin_packing(world: WorldState, config: EnvConfig):
    s = draw_scale(config, world.rng)
    shapes = [
        (sample_pack_shape(world.rng, s), Category.RANDOM)
        for _ in range(config.num_objects)
    ]
    return _init_with_container(world, config, BIN, shapes)


def goal_bin_packing(world: WorldState, state) -> bool:
    fixture = _the_container(world)
    held = world.gripper.holding_id
    objs = [o for o in world.objects if o.category is Category.RANDOM]
    return bool(objs) and all(
        o.in_play and o.id != held and object_in_bin(o, fixture) for o in objs
    )


def init_bottle_arrangement(world: WorldState, config: EnvConfig):
    s = draw_scale(config, world.rng)
    bottle = Cylinder(BOTTLE.radius * s, BOTTLE.height * s)
    shapes = [(bottle, Category.BOTTLE) for _ in range(config.num_objects)]
    return _init_with_container(world, config, TRAY, shapes)


def goal_bottle_arrangement(world: WorldState, state) -> bool:
    fixture = _the_container(world)
    held = world.gripper.holding_id
    floor = cavity_floor_top(fixture)
    bottles = [o for o in world.objects if o.category is Category.BOTTLE]
    return bool(bottles) and all(
        o.in_play
        and o.id != held
        and footprint_inside_cavity(o, fixture)
        and abs(o.base - floor) <= REST_TOL
        for o in bottles
    )


register_task(
    TaskSpec(
        name="bin_packing",
        num_objects=8,
        optimal_steps=16,
        max_steps=20,
        initializer=init_bin_packing,
        goal=goal_bin_packing,
        allowed_object_counts=tuple(range(1, 11)),
    )
)
register_task(
    TaskSpec(
        name="bottle_arrangement",
        num_objects=6,
        optimal_steps=12,
        max_steps=20,
        initializer=init_bottle_arrangement,
        goal=goal_bottle_arrangement,
    )
)
