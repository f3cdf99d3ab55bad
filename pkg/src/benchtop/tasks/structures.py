"""Block-structure tasks: stacking, the four house variants, and the two
improvised variants with randomly generated prisms.

Goal tolerances: stacked blocks may be laterally off by up to half a cube
(0.015 m); "next to each other" means cube centers 0.03-0.05 m apart (for
random prisms: footprints within 0.02 m of touching); every "rests on"
relation requires exact base-on-top contact plus footprint overlap.
"""

from __future__ import annotations

import math

import numpy as np

from ..config import EnvConfig
from ..geometry import (
    ConvexPrism,
    Cuboid,
    Pose,
    TriangularPrism,
    footprint_clearance,
    footprints_overlap,
    polygon_area,
    polygon_centroid,
)
from ..world import Category, SimObject, WorldState
from .base import (
    LayoutRetry,
    TaskSpec,
    draw_scale,
    register_task,
    sample_free_pose,
    scaled,
    yaw_sampler_for,
)

CUBE = Cuboid(0.03, 0.03, 0.03)
TRIANGLE = TriangularPrism(0.03, 0.03, 0.03)
ROOF = TriangularPrism(0.12, 0.03, 0.03)
BRICK = Cuboid(0.12, 0.03, 0.03)

STACK_XY_TOL = 0.015
PAIR_DISTANCE = (0.03, 0.05)
PRISM_PAIR_GAP = 0.02
REST_TOL = 1e-5


def random_prism(rng: np.random.Generator, height: float) -> ConvexPrism:
    """Random convex footprint (4-6 vertices inside a 3 cm bounding box),
    recentered on its centroid."""
    while True:
        k = int(rng.integers(4, 7))
        angles = np.sort(rng.uniform(0.0, 2.0 * math.pi, size=k))
        if np.min(np.diff(np.concatenate([angles, [angles[0] + 2 * math.pi]]))) < 0.35:
            continue
        radii = rng.uniform(0.009, 0.0145, size=k)
        verts = np.stack([radii * np.cos(angles), radii * np.sin(angles)], axis=1)
        hull = _convex_hull(verts)
        if len(hull) < 4:
            continue
        cx, cy = polygon_centroid(hull)
        hull = hull - np.array([cx, cy])
        if polygon_area(hull) < 2e-4 * 2e-4:
            continue
        return ConvexPrism(tuple((float(x), float(y)) for x, y in hull), height)


def _convex_hull(points: np.ndarray) -> np.ndarray:
    pts = sorted(map(tuple, points))
    if len(pts) <= 2:
        return np.asarray(pts)

    def half(iterable):
        out = []
        for p in iterable:
            while len(out) >= 2:
                ox, oy = out[-2]
                ax, ay = out[-1]
                if (ax - ox) * (p[1] - oy) - (ay - oy) * (p[0] - ox) <= 0:
                    out.pop()
                else:
                    break
            out.append(p)
        return out

    lower = half(pts)
    upper = half(reversed(pts))
    return np.asarray(lower[:-1] + upper[:-1])


def _scatter(world, config, shapes_categories):
    rng = world.rng
    yaw = yaw_sampler_for(config, rng)
    for shape, category in shapes_categories:
        pose = sample_free_pose(world, shape, rng, yaw_sampler=yaw)
        world.add_object(shape, pose, category)
    return None


def _cubes(config, rng, count):
    s = draw_scale(config, rng)
    return [(scaled(CUBE, s), Category.BLOCK) for _ in range(count)], s


# --- goal predicate helpers -------------------------------------------------


def by_category(world: WorldState, category: Category) -> list[SimObject]:
    return [o for o in world.objects if o.in_play and o.category is category]


def _held_id(world: WorldState) -> int | None:
    return world.gripper.holding_id


def rests_on(a: SimObject, b: SimObject) -> bool:
    return abs(a.base - b.top) <= REST_TOL and footprints_overlap(
        a.shape, a.pose, b.shape, b.pose
    )


def stacked(blocks: list[SimObject]) -> bool:
    """True iff the blocks form one aligned vertical stack."""
    if len(blocks) < 2:
        return True
    chain = sorted(blocks, key=lambda o: o.base)
    for lower, upper in zip(chain, chain[1:]):
        dx = upper.pose.x - lower.pose.x
        dy = upper.pose.y - lower.pose.y
        if math.hypot(dx, dy) > STACK_XY_TOL:
            return False
        if abs(upper.base - lower.top) > REST_TOL:
            return False
    return True


def adjacent_pair(a: SimObject, b: SimObject) -> bool:
    """'Next to each other' at equal height: cube centers 0.03-0.05 m apart;
    irregular prisms within 0.02 m of touching."""
    if abs(a.top - b.top) > REST_TOL:
        return False
    if a.category is Category.BLOCK and b.category is Category.BLOCK:
        d = math.hypot(a.pose.x - b.pose.x, a.pose.y - b.pose.y)
        return PAIR_DISTANCE[0] - 1e-6 <= d <= PAIR_DISTANCE[1] + 1e-6
    gap = footprint_clearance(a.shape, a.pose, b.shape, b.pose)
    return gap <= PRISM_PAIR_GAP + 1e-6


def bridges_pair(top: SimObject, a: SimObject, b: SimObject) -> bool:
    return (
        abs(top.base - a.top) <= REST_TOL
        and abs(top.base - b.top) <= REST_TOL
        and footprints_overlap(top.shape, top.pose, a.shape, a.pose)
        and footprints_overlap(top.shape, top.pose, b.shape, b.pose)
    )


def no_held(world: WorldState, *objs: SimObject) -> bool:
    held = _held_id(world)
    return all(o.id != held for o in objs)


# --- goals -------------------------------------------------------------------


def goal_block_stacking(world: WorldState, state) -> bool:
    cubes = by_category(world, Category.BLOCK)
    return (
        len(cubes) >= 2
        and no_held(world, *cubes)
        and stacked(cubes)
    )


def goal_house_1(world: WorldState, state) -> bool:
    cubes = by_category(world, Category.BLOCK)
    tris = by_category(world, Category.TRIANGLE)
    if len(tris) != 1 or not no_held(world, *cubes, *tris):
        return False
    if not stacked(cubes):
        return False
    top_cube = max(cubes, key=lambda o: o.top)
    tri = tris[0]
    dx = tri.pose.x - top_cube.pose.x
    dy = tri.pose.y - top_cube.pose.y
    return rests_on(tri, top_cube) and math.hypot(dx, dy) <= STACK_XY_TOL


def _goal_roof_on_pair(world: WorldState, pair_category: Category) -> bool:
    pair = by_category(world, pair_category)
    roofs = by_category(world, Category.ROOF)
    if len(pair) != 2 or len(roofs) != 1:
        return False
    a, b = pair
    roof = roofs[0]
    return (
        no_held(world, a, b, roof)
        and adjacent_pair(a, b)
        and bridges_pair(roof, a, b)
    )


def goal_house_2(world: WorldState, state) -> bool:
    return _goal_roof_on_pair(world, Category.BLOCK)


def _goal_brick_roof_on_pair(world: WorldState, pair_category: Category) -> bool:
    pair = by_category(world, pair_category)
    bricks = by_category(world, Category.BRICK)
    roofs = by_category(world, Category.ROOF)
    if len(pair) != 2 or len(bricks) != 1 or len(roofs) != 1:
        return False
    a, b = pair
    brick = bricks[0]
    roof = roofs[0]
    return (
        no_held(world, a, b, brick, roof)
        and adjacent_pair(a, b)
        and bridges_pair(brick, a, b)
        and rests_on(roof, brick)
    )


def goal_house_3(world: WorldState, state) -> bool:
    return _goal_brick_roof_on_pair(world, Category.BLOCK)


def goal_house_4(world: WorldState, state) -> bool:
    cubes = by_category(world, Category.BLOCK)
    bricks = by_category(world, Category.BRICK)
    roofs = by_category(world, Category.ROOF)
    if len(cubes) != 4 or len(bricks) != 1 or len(roofs) != 1:
        return False
    brick = bricks[0]
    roof = roofs[0]
    if not no_held(world, *cubes, brick, roof):
        return False
    lower = [c for c in cubes if c.base <= REST_TOL]
    upper = [c for c in cubes if abs(c.base - brick.top) <= REST_TOL]
    if len(lower) != 2 or len(upper) != 2:
        return False
    return (
        adjacent_pair(*lower)
        and bridges_pair(brick, *lower)
        and all(footprints_overlap(c.shape, c.pose, brick.shape, brick.pose) for c in upper)
        and adjacent_pair(*upper)
        and bridges_pair(roof, *upper)
    )


def goal_improvise_2(world: WorldState, state) -> bool:
    return _goal_roof_on_pair(world, Category.RANDOM)


def goal_improvise_3(world: WorldState, state) -> bool:
    return _goal_brick_roof_on_pair(world, Category.RANDOM)


# --- initializers ------------------------------------------------------------


def init_block_stacking(world: WorldState, config: EnvConfig):
    pieces, _ = _cubes(config, world.rng, config.num_objects)
    return _scatter(world, config, pieces)


def init_house_1(world: WorldState, config: EnvConfig):
    s = draw_scale(config, world.rng)
    pieces = [(scaled(CUBE, s), Category.BLOCK)] * (config.num_objects - 1)
    pieces.append((scaled(TRIANGLE, s), Category.TRIANGLE))
    return _scatter(world, config, pieces)


def init_house_2(world: WorldState, config: EnvConfig):
    s = draw_scale(config, world.rng)
    pieces = [(scaled(CUBE, s), Category.BLOCK)] * 2
    pieces.append((scaled(ROOF, s), Category.ROOF))
    return _scatter(world, config, pieces)


def init_house_3(world: WorldState, config: EnvConfig):
    s = draw_scale(config, world.rng)
    pieces = [(scaled(CUBE, s), Category.BLOCK)] * 2
    pieces.append((scaled(BRICK, s), Category.BRICK))
    pieces.append((scaled(ROOF, s), Category.ROOF))
    return _scatter(world, config, pieces)


def init_house_4(world: WorldState, config: EnvConfig):
    s = draw_scale(config, world.rng)
    pieces = [(scaled(CUBE, s), Category.BLOCK)] * 4
    pieces.append((scaled(BRICK, s), Category.BRICK))
    pieces.append((scaled(ROOF, s), Category.ROOF))
    return _scatter(world, config, pieces)


def init_improvise_2(world: WorldState, config: EnvConfig):
    rng = world.rng
    s = draw_scale(config, rng)
    # The two prisms share one episode height so a roof can bridge them.
    h = float(rng.uniform(0.015, 0.035)) * s
    pieces = [(random_prism(rng, h), Category.RANDOM) for _ in range(2)]
    pieces.append((scaled(ROOF, s), Category.ROOF))
    return _scatter(world, config, pieces)


def init_improvise_3(world: WorldState, config: EnvConfig):
    rng = world.rng
    s = draw_scale(config, rng)
    h = float(rng.uniform(0.015, 0.035)) * s
    pieces = [(random_prism(rng, h), Category.RANDOM) for _ in range(2)]
    pieces.append((scaled(BRICK, s), Category.BRICK))
    pieces.append((scaled(ROOF, s), Category.ROOF))
    return _scatter(world, config, pieces)


register_task(
    TaskSpec(
        name="block_stacking",
        num_objects=4,
        optimal_steps=6,
        max_steps=10,
        initializer=init_block_stacking,
        goal=goal_block_stacking,
        supports_deconstruction=True,
        allowed_object_counts=tuple(range(2, 9)),
    )
)
register_task(
    TaskSpec(
        name="house_building_1",
        num_objects=4,
        optimal_steps=6,
        max_steps=10,
        initializer=init_house_1,
        goal=goal_house_1,
        supports_deconstruction=True,
        allowed_object_counts=tuple(range(2, 7)),
    )
)
register_task(
    TaskSpec(
        name="house_building_2",
        num_objects=3,
        optimal_steps=4,
        max_steps=10,
        initializer=init_house_2,
        goal=goal_house_2,
        supports_deconstruction=True,
    )
)
register_task(
    TaskSpec(
        name="house_building_3",
        num_objects=4,
        optimal_steps=6,
        max_steps=10,
        initializer=init_house_3,
        goal=goal_house_3,
        supports_deconstruction=True,
    )
)
register_task(
    TaskSpec(
        name="house_building_4",
        num_objects=6,
        optimal_steps=10,
        max_steps=20,
        initializer=init_house_4,
        goal=goal_house_4,
        supports_deconstruction=True,
    )
)
register_task(
    TaskSpec(
        name="improvise_house_building_2",
        num_objects=3,
        optimal_steps=4,
        max_steps=10,
        initializer=init_improvise_2,
        goal=goal_improvise_2,
        supports_deconstruction=True,
    )
)
register_task(
    TaskSpec(
        name="improvise_house_building_3",
        num_objects=4,
        optimal_steps=6,
        max_steps=10,
        initializer=init_improvise_3,
        goal=goal_improvise_3,
        supports_deconstruction=True,
    )
)
