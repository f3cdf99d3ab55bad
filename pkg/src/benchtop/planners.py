"""Scripted experts: waypoint policies per task, and the deconstruction
planner that builds a goal structure, takes it apart, and reverses the
episode into a construction demonstration.

Waypoint planners are stateless functions of the current world, so they can
re-plan after a failed grasp or a toppled placement. The deconstruction
planner produces demonstrations whose length is exactly the task's optimal
step count; the reversed action list is replayed through a real environment
while recording, which both recomputes observations and verifies that the
replay reaches the goal.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .config import EnvConfig
from .env import Environment, SeedLike
from .errors import DemoGenerationError
from .geometry import (
    Cuboid,
    Pose,
    footprint_aabb,
    footprint_clearance,
    normalize_yaw,
    ray_exit_distance,
    shape_height,
    support_extent,
    world_footprint,
)
from .tasks import TaskSpec, get_task
from .tasks.base import LayoutRetry, draw_scale, sample_free_pose, scaled, yaw_sampler_for
from .tasks.covid import PHASE_COLLECT, PHASE_PRESENT_TUBE, CovidState, resting_on_pad
from .tasks.packing import (
    cavity_half_extents,
    footprint_inside_cavity,
    from_local,
    object_in_bin,
)
from .tasks.palletizing import PalletState, slot_world_pose
from .tasks.structures import (
    BRICK,
    CUBE,
    ROOF,
    STACK_XY_TOL,
    TRIANGLE,
    adjacent_pair,
    bridges_pair,
    random_prism,
    rests_on,
    stacked,
)
from .world import (
    MIN_SEPARATION,
    SUPPORT_TOL,
    Category,
    GripperState,
    SimObject,
    WorldState,
    column_support,
    landing_height,
)
from .world import step as world_step


@dataclass
class Transition:
    """One (o_t, a_t, r_t, done_t) entry of an episode trajectory."""

    heightmap: np.ndarray
    in_hand: np.ndarray
    holding: bool
    action: np.ndarray  # canonical f32[5], NaN in unused slots
    reward: float
    done: bool


@dataclass
class ExpertTrajectory:
    task: str
    seed: int | None
    success: bool
    transitions: list[Transition]
    # Retained only when requested (never serialized): the construction
    # start world and the per-step pose trace, for replay validation.
    initial_world: WorldState | None = None
    pose_trace: list[tuple[tuple[int, float, float, float, float], ...]] = field(
        default_factory=list
    )

    def __len__(self) -> int:
        return len(self.transitions)


# ---------------------------------------------------------------------------
# Waypoint planners
# ---------------------------------------------------------------------------

_WAYPOINT: dict[str, object] = {}
_GOAL_BUILDERS: dict[str, object] = {}


def register_waypoint_planner(name: str, fn) -> None:
    _WAYPOINT[name] = fn


def register_goal_builder(name: str, fn) -> None:
    _GOAL_BUILDERS[name] = fn


def next_expert_action(
    task: TaskSpec, world: WorldState, task_state, config: EnvConfig, rng
):
    """Next (x, y, theta) from the task's scripted policy, or None when no
    action applies (goal reached or the planner is stuck)."""
    fn = _WAYPOINT.get(task.name)
    if fn is None:
        return None
    return fn(world, task_state, config, rng)


def _movable(world: WorldState, category: Category) -> list[SimObject]:
    return [
        o
        for o in world.objects
        if o.in_play and o.movable and o.category is category
    ]


def _pick_pose(obj: SimObject, half: bool) -> tuple[float, float, float]:
    """Grasp at the object's center, jaws across the narrow side."""
    theta = obj.pose.yaw
    if getattr(obj.shape, "ly", 0.0) > getattr(obj.shape, "lx", 0.0):
        theta = obj.pose.yaw + math.pi / 2.0
    return (obj.pose.x, obj.pose.y, normalize_yaw(theta, half))


def _place_for(
    world: WorldState, target_xy: tuple[float, float], target_yaw: float | None, half: bool
) -> tuple[float, float, float]:
    """Gripper action that drops the held object's center at ``target_xy``
    with yaw ``target_yaw`` (None: keep the yaw it was picked with)."""
    held = world.held_object()
    grasp = world.gripper.grasp
    assert held is not None and grasp is not None
    if target_yaw is None:
        target_yaw = held.pose.yaw
    theta = normalize_yaw(target_yaw - grasp.dyaw, half)
    c = math.cos(theta)
    s = math.sin(theta)
    x = target_xy[0] - (c * grasp.dx - s * grasp.dy)
    y = target_xy[1] - (s * grasp.dx + c * grasp.dy)
    return (x, y, theta)


def _scatter_held(world: WorldState, rng, half: bool):
    """Recovery: drop the held object at any free flat spot."""
    held = world.held_object()
    assert held is not None
    try:
        pose = sample_free_pose(
            world,
            held.shape,
            rng,
            yaw_sampler=lambda: held.pose.yaw,
            clearance=MIN_SEPARATION,
        )
    except LayoutRetry:
        return None
    return _place_for(world, (pose.x, pose.y), held.pose.yaw, half)


def _pair_axis(a: SimObject, b: SimObject) -> tuple[float, float]:
    dx = b.pose.x - a.pose.x
    dy = b.pose.y - a.pose.y
    n = math.hypot(dx, dy)
    if n < 1e-12:
        return (1.0, 0.0)
    return (dx / n, dy / n)


PAIR_GAP = 0.004  # clear gap between "next to each other" pieces
BRIDGE_INSET = 0.003  # bridge center sits this far inside its support


def _bridge_point(a: SimObject, b: SimObject) -> tuple[float, float]:
    """Center for a piece bridging ``a`` and ``b``: on the line of centers,
    strictly inside ``a``'s footprint, so the support directly beneath the
    bridge's center is ``a`` itself."""
    ux, uy = _pair_axis(a, b)
    reach = ray_exit_distance(a.shape, a.pose, ux, uy)
    t = reach - min(BRIDGE_INSET, reach / 2.0)
    return (a.pose.x + t * ux, a.pose.y + t * uy)


def _pair_separation(shape_a, yaw_a, shape_b, yaw_b, ux, uy, gap: float) -> float:
    """Center distance along (ux, uy) at which the two footprints clear each
    other by exactly ``gap`` (bisection on the clearance)."""
    pose_a = Pose(0.0, 0.0, 0.0, yaw_a)
    hi = (
        support_extent(shape_a, pose_a, ux, uy)
        + support_extent(shape_b, Pose(0.0, 0.0, 0.0, yaw_b), -ux, -uy)
        + gap
    )
    lo = 0.0
    for _ in range(40):
        mid = (lo + hi) / 2.0
        probe = Pose(mid * ux, mid * uy, 0.0, yaw_b)
        if footprint_clearance(shape_a, pose_a, shape_b, probe) < gap:
            lo = mid
        else:
            hi = mid
    return hi


def _anchor_directions(anchor: SimObject) -> list[float]:
    """Contact directions to scan: the anchor's face normals first (flush
    contact), then a compass sweep."""
    out = []
    shape = anchor.shape
    if hasattr(shape, "lx"):
        out.extend(anchor.pose.yaw + k * math.pi / 2.0 for k in range(4))
    else:
        kind, *rest = world_footprint(shape, anchor.pose)
        if kind == "poly":
            verts = rest[0]
            n = len(verts)
            for i in range(n):
                ex = verts[(i + 1) % n][0] - verts[i][0]
                ey = verts[(i + 1) % n][1] - verts[i][1]
                out.append(math.atan2(-ex, ey))  # outward edge normal (CCW)
    out.extend(k * math.pi / 8.0 for k in range(16))
    return out


def _aabb_inside(world: WorldState, shape, pose: Pose, margin: float) -> bool:
    x0, y0, x1, y1 = footprint_aabb(shape, pose)
    b = world.bounds
    return (
        x0 >= b.x_min + margin
        and y0 >= b.y_min + margin
        and x1 <= b.x_max - margin
        and y1 <= b.y_max - margin
    )


def _touch_spot(
    world: WorldState,
    anchor: SimObject,
    held: SimObject,
    cap_shape,
    exclude_ids: set[int],
):
    """Spot for ``held`` exactly touching ``anchor`` with the contact point
    on the line of centers, keeping the bridge footprint (``cap_shape``)
    clear of everything else. Returns (target_xy, phi, target_yaw) or None.

    The anchor's face normals are tried first: there the contact is flush
    and cannot interpenetrate; the compass fallback cases are checked for
    footprint overlap explicitly.
    """
    rect_held = hasattr(held.shape, "lx")
    for phi in _anchor_directions(anchor):
        ux, uy = math.cos(phi), math.sin(phi)
        # Rectangular pieces are aligned with the contact direction for a
        # clean face-to-face gap; irregular prisms keep their yaw.
        target_yaw = phi if rect_held else held.pose.yaw
        d = _pair_separation(
            anchor.shape, anchor.pose.yaw, held.shape, target_yaw, ux, uy, PAIR_GAP
        )
        tx = anchor.pose.x + d * ux
        ty = anchor.pose.y + d * uy
        held_probe = Pose(tx, ty, held.pose.z, target_yaw)
        reach_a = ray_exit_distance(anchor.shape, anchor.pose, ux, uy)
        cx = anchor.pose.x + (reach_a - BRIDGE_INSET) * ux
        cy = anchor.pose.y + (reach_a - BRIDGE_INSET) * uy
        cap_probe = Pose(cx, cy, 0.0, phi)
        if not _aabb_inside(world, held.shape, held_probe, 0.01):
            continue
        if not _aabb_inside(world, cap_shape, cap_probe, 0.005):
            continue
        skip = exclude_ids | {anchor.id, held.id}
        clear = True
        for o in world.active_objects():
            if o.id in skip or not o.movable:
                continue
            if footprint_clearance(held.shape, held_probe, o.shape, o.pose) < 0.01:
                clear = False
                break
            if footprint_clearance(cap_shape, cap_probe, o.shape, o.pose) < 0.005:
                clear = False
                break
        if clear:
            return ((tx, ty), phi, target_yaw)
    return None


def _plan_block_stacking(world, state, config, rng):
    half = config.half_rotation
    cubes = _movable(world, Category.BLOCK)
    held = world.held_object()
    if held is not None:
        others = [c for c in cubes if c.id != held.id]
        if not others:
            return _scatter_held(world, rng, half)
        target = sorted(others, key=lambda o: (-o.top, o.id))[0]
        return _place_for(world, (target.pose.x, target.pose.y), None, half)
    if not cubes:
        return None
    tallest = sorted(cubes, key=lambda o: (-o.top, o.id))[0]
    tower = [
        c
        for c in cubes
        if math.hypot(c.pose.x - tallest.pose.x, c.pose.y - tallest.pose.y)
        <= STACK_XY_TOL + 1e-9
    ]
    loose = [c for c in cubes if c not in tower]
    if not loose:
        return None  # already stacked
    pick = min(loose, key=lambda o: o.id)
    return _pick_pose(pick, half)


def _plan_house_1(world, state, config, rng):
    half = config.half_rotation
    cubes = _movable(world, Category.BLOCK)
    tris = _movable(world, Category.TRIANGLE)
    held = world.held_object()
    if held is not None and held.category is Category.TRIANGLE:
        target = sorted(cubes, key=lambda o: (-o.top, o.id))[0]
        return _place_for(world, (target.pose.x, target.pose.y), None, half)
    if held is not None:
        others = [c for c in cubes if c.id != held.id]
        target = sorted(others, key=lambda o: (-o.top, o.id))[0]
        return _place_for(world, (target.pose.x, target.pose.y), None, half)
    if not stacked(cubes):
        return _plan_block_stacking(world, state, config, rng)
    if tris:
        tri = tris[0]
        top_cube = max(cubes, key=lambda o: o.top)
        if rests_on(tri, top_cube):
            return None  # goal
        return _pick_pose(tri, half)
    return None


def _plan_pair_and_cap(world, state, config, rng, pair_category, with_brick):
    half = config.half_rotation
    pair = sorted(_movable(world, pair_category), key=lambda o: o.id)
    roofs = _movable(world, Category.ROOF)
    bricks = _movable(world, Category.BRICK) if with_brick else []
    if len(pair) != 2 or not roofs or (with_brick and not bricks):
        return None
    a, b = pair
    roof = roofs[0]
    brick = bricks[0] if with_brick else None
    cap = brick if with_brick else roof
    held = world.held_object()
    adj = adjacent_pair(a, b)

    if held is not None:
        if held.category is pair_category:
            anchor = a if held.id == b.id else b
            spot = _touch_spot(world, anchor, held, cap.shape, exclude_ids=set())
            if spot is None:
                return _scatter_held(world, rng, half)
            return _place_for(world, spot[0], spot[2], half)
        if with_brick and held.category is Category.BRICK:
            if adj:
                c = _bridge_point(a, b)
                phi = math.atan2(b.pose.y - a.pose.y, b.pose.x - a.pose.x)
                return _place_for(world, c, phi, half)
            return _scatter_held(world, rng, half)
        if held.category is Category.ROOF:
            if with_brick and bridges_pair(brick, a, b):
                return _place_for(world, (brick.pose.x, brick.pose.y), brick.pose.yaw, half)
            if not with_brick and adj:
                c = _bridge_point(a, b)
                phi = math.atan2(b.pose.y - a.pose.y, b.pose.x - a.pose.x)
                return _place_for(world, c, phi, half)
            return _scatter_held(world, rng, half)
        return _scatter_held(world, rng, half)

    if not adj:
        # Move the member with the least workspace margin toward the other,
        # so a corner-trapped piece never serves as the anchor.
        mover = min(pair, key=lambda o: (_edge_margin(world, o), -o.id))
        return _pick_pose(mover, half)
    if with_brick and not bridges_pair(brick, a, b):
        return _pick_pose(brick, half)
    roof_done = (
        bridges_pair(roof, a, b) if not with_brick else rests_on(roof, brick)
    )
    if not roof_done:
        return _pick_pose(roof, half)
    return None


def _plan_house_2(world, state, config, rng):
    return _plan_pair_and_cap(world, state, config, rng, Category.BLOCK, False)


def _plan_house_3(world, state, config, rng):
    return _plan_pair_and_cap(world, state, config, rng, Category.BLOCK, True)


def _plan_improvise_2(world, state, config, rng):
    return _plan_pair_and_cap(world, state, config, rng, Category.RANDOM, False)


def _plan_improvise_3(world, state, config, rng):
    return _plan_pair_and_cap(world, state, config, rng, Category.RANDOM, True)


def _plan_house_4(world, state, config, rng):
    half = config.half_rotation
    cubes = _movable(world, Category.BLOCK)
    bricks = _movable(world, Category.BRICK)
    roofs = _movable(world, Category.ROOF)
    if len(cubes) != 4 or not bricks or not roofs:
        return None
    brick = bricks[0]
    roof = roofs[0]
    held = world.held_object()
    ground = sorted((c for c in cubes if c.base <= 1e-4), key=lambda o: o.id)
    base_pair = [
        c
        for c in ground
        if abs(brick.base - c.top) <= 1e-5
        and footprint_clearance(brick.shape, brick.pose, c.shape, c.pose) == 0.0
    ]
    brick_placed = len(base_pair) == 2 and bridges_pair(brick, *base_pair)
    upper = [c for c in cubes if rests_on(c, brick)] if brick_placed else []
    cube_half = cubes[0].shape.lx / 2.0

    if held is not None:
        if held.category is Category.BLOCK:
            if brick_placed and len(upper) < 2:
                ux = math.cos(brick.pose.yaw)
                uy = math.sin(brick.pose.yaw)
                offset = cube_half + PAIR_GAP / 2.0
                for sign in (1.0, -1.0):
                    sx = brick.pose.x + sign * offset * ux
                    sy = brick.pose.y + sign * offset * uy
                    if all(
                        math.hypot(u.pose.x - sx, u.pose.y - sy) > 0.01 for u in upper
                    ):
                        return _place_for(world, (sx, sy), brick.pose.yaw, half)
            if not brick_placed and len(ground) >= 1:
                others = [c for c in ground if c.id != held.id]
                if others:
                    anchor = max(others, key=lambda o: (_edge_margin(world, o), o.id))
                    spot = _touch_spot(world, anchor, held, brick.shape, exclude_ids=set())
                    if spot is not None:
                        return _place_for(world, spot[0], spot[2], half)
            return _scatter_held(world, rng, half)
        if held.category is Category.BRICK:
            pair = _adjacent_ground_pair(ground)
            if pair is not None:
                a, b = pair
                c = _bridge_point(a, b)
                phi = math.atan2(b.pose.y - a.pose.y, b.pose.x - a.pose.x)
                return _place_for(world, c, phi, half)
            return _scatter_held(world, rng, half)
        if held.category is Category.ROOF:
            if len(upper) == 2 and adjacent_pair(*upper):
                uppers = sorted(upper, key=lambda o: o.id)
                c = _bridge_point(uppers[0], uppers[1])
                phi = math.atan2(
                    uppers[1].pose.y - uppers[0].pose.y,
                    uppers[1].pose.x - uppers[0].pose.x,
                )
                return _place_for(world, c, phi, half)
            return _scatter_held(world, rng, half)
        return _scatter_held(world, rng, half)

    if not brick_placed:
        pair = _adjacent_ground_pair(ground)
        if pair is None:
            if len(ground) < 2:
                return None
            mover = min(ground, key=lambda o: (_edge_margin(world, o), -o.id))
            return _pick_pose(mover, half)
        return _pick_pose(brick, half)
    if len(upper) < 2:
        loose = [c for c in ground if c not in base_pair]
        if not loose:
            return None
        return _pick_pose(min(loose, key=lambda o: o.id), half)
    if not bridges_pair(roof, *upper):
        return _pick_pose(roof, half)
    return None


def _adjacent_ground_pair(ground: list[SimObject]):
    for i, a in enumerate(ground):
        for b in ground[i + 1 :]:
            if adjacent_pair(a, b):
                return (a, b)
    return None


def _edge_margin(world: WorldState, obj: SimObject) -> float:
    b = world.bounds
    return min(
        obj.pose.x - b.x_min,
        b.x_max - obj.pose.x,
        obj.pose.y - b.y_min,
        b.y_max - obj.pose.y,
    )


def _plan_bin_packing(world, state, config, rng):
    half = config.half_rotation
    fixture = next(o for o in world.objects if o.category is Category.CONTAINER)
    objs = _movable(world, Category.RANDOM)
    held = world.held_object()
    if held is not None:
        spot = _bin_spot(world, fixture, held)
        if spot is None:
            return _scatter_held(world, rng, half)
        return _place_for(world, spot[0], spot[1], half)
    unpacked = [o for o in objs if not object_in_bin(o, fixture)]
    if not unpacked:
        return None
    # Tallest first so the floor fills with the tall pieces and only short
    # ones ever stack (the cavity rim caps stacked columns); footprint area
    # breaks ties.
    target = sorted(
        unpacked, key=lambda o: (-o.shape.lz, -(o.shape.lx * o.shape.ly), o.id)
    )[0]
    return _pick_pose(target, half)


def _bin_spot(world: WorldState, fixture: SimObject, held: SimObject):
    """Lowest free spot in the cavity: floor cells first (corner-inward
    scan), then the packed column with the lowest actual landing height."""
    shape = held.shape
    hx, hy = cavity_half_extents(fixture.shape)
    others = [
        o for o in world.active_objects() if o.movable and o.id != held.id
    ]
    margin = 0.0015
    for local_yaw in (0.0, math.pi / 2.0):
        half_x = (shape.lx if local_yaw == 0.0 else shape.ly) / 2.0
        half_y = (shape.ly if local_yaw == 0.0 else shape.lx) / 2.0
        x_lo, x_hi = -hx + half_x + margin, hx - half_x - margin
        y_lo, y_hi = -hy + half_y + margin, hy - half_y - margin
        if x_lo > x_hi or y_lo > y_hi:
            continue
        yaw = fixture.pose.yaw + local_yaw
        xs = np.asarray(_scan(x_lo, x_hi, step=0.0025))
        ys = np.asarray(_scan(y_lo, y_hi, step=0.0025))
        gx, gy = np.meshgrid(xs, ys)  # row-major: y outer, x inner
        wx = fixture.pose.x + np.cos(fixture.pose.yaw) * gx - np.sin(fixture.pose.yaw) * gy
        wy = fixture.pose.y + np.sin(fixture.pose.yaw) * gx + np.cos(fixture.pose.yaw) * gy
        clear = _rect_gaps_ok(wx.ravel(), wy.ravel(), yaw, shape, others, margin)
        if clear.any():
            k = int(np.argmax(clear))
            return ((float(wx.ravel()[k]), float(wy.ravel()[k])), yaw)
    # No free floor cell: stack where the actual landing is the lowest,
    # stays level under the center, and keeps the top below the rim.
    packed = sorted(
        (o for o in others if o.category is Category.RANDOM and object_in_bin(o, fixture)),
        key=lambda o: (o.top, o.id),
    )
    best = None
    columns: list[tuple[float, float]] = []
    for base_obj in packed:
        cx, cy = base_obj.pose.x, base_obj.pose.y
        if any(math.hypot(cx - px, cy - py) < 0.005 for px, py in columns):
            continue
        columns.append((cx, cy))
        probe = Pose(cx, cy, 0.0, base_obj.pose.yaw)
        if not footprint_inside_cavity(
            SimObject(-1, shape, probe, Category.RANDOM), fixture
        ):
            continue
        landing = landing_height(world, shape, probe, exclude={held.id})
        if landing + shape_height(shape) > fixture.top + 1e-6:
            continue
        support = column_support(world, cx, cy, {held.id})
        if landing - support > SUPPORT_TOL:
            continue
        if best is None or landing < best[0]:
            best = (landing, (cx, cy), probe.yaw)
    if best is not None:
        return (best[1], best[2])
    return None


def _scan(lo: float, hi: float, step: float = 0.005):
    """Inclusive lattice from lo to hi; hi itself is always a candidate."""
    n = max(1, int(math.floor((hi - lo) / step + 1e-9)) + 1)
    out = [lo + i * step for i in range(n) if lo + i * step <= hi + 1e-9]
    if out and hi - out[-1] > 1e-9:
        out.append(hi)
    return out


def _rect_gaps_ok(
    wx: np.ndarray,
    wy: np.ndarray,
    probe_yaw: float,
    shape,
    others: list[SimObject],
    margin: float,
) -> np.ndarray:
    """Vectorized free-spot test for a rectangular probe among rectangular
    objects: a candidate passes when every neighbor has a separating axis
    with at least ``margin`` of gap (conservative: true clearance is never
    smaller than the reported axis gap)."""
    ok = np.ones(wx.shape, dtype=bool)
    phx, phy = shape.lx / 2.0, shape.ly / 2.0
    pc, ps = math.cos(probe_yaw), math.sin(probe_yaw)
    probe_axes = ((pc, ps), (-ps, pc))
    for o in others:
        ohx = getattr(o.shape, "lx", 2.0 * getattr(o.shape, "radius", 0.0)) / 2.0
        ohy = getattr(o.shape, "ly", 2.0 * getattr(o.shape, "radius", 0.0)) / 2.0
        oc, os_ = math.cos(o.pose.yaw), math.sin(o.pose.yaw)
        other_axes = ((oc, os_), (-os_, oc))
        dx = wx - o.pose.x
        dy = wy - o.pose.y
        sep = np.zeros(wx.shape, dtype=bool)
        for ax, ay in probe_axes + other_axes:
            half_probe = abs(ax * pc + ay * ps) * phx + abs(-ax * ps + ay * pc) * phy
            half_other = abs(ax * oc + ay * os_) * ohx + abs(-ax * os_ + ay * oc) * ohy
            gap = np.abs(dx * ax + dy * ay) - half_probe - half_other
            sep |= gap >= margin
        ok &= sep
        if not ok.any():
            break
    return ok


def _plan_bottle_arrangement(world, state, config, rng):
    half = config.half_rotation
    fixture = next(o for o in world.objects if o.category is Category.CONTAINER)
    bottles = _movable(world, Category.BOTTLE)
    held = world.held_object()
    if not bottles:
        return None
    r = bottles[0].shape.radius
    s = r / 0.025
    slot_x = (-0.069 * s, 0.0, 0.069 * s)
    slot_y = (-0.036 * s, 0.036 * s)
    slots = [(x, y) for x in slot_x for y in slot_y]
    placed = [o for o in bottles if held is None or o.id != held.id]

    def slot_free(lx, ly):
        wx, wy = from_local(fixture, lx, ly)
        return all(
            math.hypot(o.pose.x - wx, o.pose.y - wy) > 2.0 * r - 1e-9 for o in placed
        )

    if held is not None:
        for lx, ly in slots:
            if slot_free(lx, ly):
                return _place_for(world, from_local(fixture, lx, ly), None, half)
        return _scatter_held(world, rng, half)
    loose = [o for o in bottles if not footprint_inside_cavity(o, fixture)]
    if not loose:
        return None
    return _pick_pose(min(loose, key=lambda o: o.id), half)


def _plan_box_palletizing(world, state: PalletState, config, rng):
    half = config.half_rotation
    held = world.held_object()
    unfilled = [i for i, f in enumerate(state.filled) if not f]
    if not unfilled:
        return None
    target = slot_world_pose(state, world, unfilled[0])
    if held is not None:
        return _place_for(world, (target.x, target.y), target.yaw, half)
    loose = sorted(
        (
            o
            for o in _movable(world, Category.BOX)
            if o.id not in state.assigned.values()
        ),
        key=lambda o: o.id,
    )
    if not loose:
        return None
    return _pick_pose(loose[0], half)


def _plan_covid(world, state: CovidState, config, rng):
    half = config.half_rotation
    area = world.object_by_id(state.area_id)
    new_pad = world.object_by_id(state.new_pad_id)
    used_pad = world.object_by_id(state.used_pad_id)
    held = world.held_object()

    def pad_point(pad, lx, ly):
        c = math.cos(pad.pose.yaw)
        s = math.sin(pad.pose.yaw)
        return (pad.pose.x + c * lx - s * ly, pad.pose.y + s * lx + c * ly)

    if held is not None:
        if held.category is Category.USED_TUBE:
            count = sum(
                1
                for o in world.objects
                if o.category is Category.USED_TUBE
                and o.id != held.id
                and resting_on_pad(o, used_pad)
            )
            lane = (-0.035, 0.0, 0.035)[min(count, 2)]
            return _place_for(world, pad_point(used_pad, 0.0, lane), used_pad.pose.yaw, half)
        if held.category is Category.SWAB:
            return _place_for(world, pad_point(area, 0.0, -0.03), area.pose.yaw, half)
        if held.category is Category.TUBE:
            return _place_for(world, pad_point(area, 0.0, 0.03), area.pose.yaw, half)
        return _scatter_held(world, rng, half)

    if state.phase == PHASE_COLLECT:
        loose = [
            o
            for o in world.objects
            if o.category is Category.USED_TUBE
            and o.in_play
            and not resting_on_pad(o, used_pad)
        ]
        if loose:
            return _pick_pose(min(loose, key=lambda o: o.id), half)
        return None
    wanted = Category.TUBE if state.phase == PHASE_PRESENT_TUBE else Category.SWAB
    candidates = [
        o
        for o in _movable(world, wanted)
        if resting_on_pad(o, new_pad)
    ]
    if not candidates:
        return None
    return _pick_pose(min(candidates, key=lambda o: o.id), half)


for _name, _fn in [
    ("block_stacking", _plan_block_stacking),
    ("house_building_1", _plan_house_1),
    ("house_building_2", _plan_house_2),
    ("house_building_3", _plan_house_3),
    ("house_building_4", _plan_house_4),
    ("improvise_house_building_2", _plan_improvise_2),
    ("improvise_house_building_3", _plan_improvise_3),
    ("bin_packing", _plan_bin_packing),
    ("bottle_arrangement", _plan_bottle_arrangement),
    ("box_palletizing", _plan_box_palletizing),
    ("covid_test", _plan_covid),
]:
    register_waypoint_planner(_name, _fn)


# ---------------------------------------------------------------------------
# Goal-configuration builders (deconstruction start states)
# ---------------------------------------------------------------------------


def _center_spot(world: WorldState, rng, margin: float) -> tuple[float, float]:
    b = world.bounds
    return (
        float(rng.uniform(b.x_min + margin, b.x_max - margin)),
        float(rng.uniform(b.y_min + margin, b.y_max - margin)),
    )


def _jitter(rng, scale: float) -> float:
    return float(rng.uniform(-0.004, 0.004)) * scale


def _build_stack(world: WorldState, config: EnvConfig, pieces) -> int:
    """Vertical pile with small lateral jitter; returns the anchor id."""
    rng = world.rng
    s = draw_scale(config, rng)
    yaw = yaw_sampler_for(config, rng)
    x, y = _center_spot(world, rng, 0.06)
    z = 0.0
    anchor = None
    for kind, category in pieces:
        shape = scaled(kind, s)
        obj = world.add_object(
            shape, Pose(x, y, z + shape_height(shape) / 2.0, yaw()), category
        )
        if anchor is None:
            anchor = obj.id
        z += shape_height(shape)
        x += _jitter(rng, s)
        y += _jitter(rng, s)
    return anchor


def _build_block_stacking(world, config):
    return _build_stack(
        world, config, [(CUBE, Category.BLOCK)] * config.num_objects
    )


def _build_house_1(world, config):
    pieces = [(CUBE, Category.BLOCK)] * (config.num_objects - 1)
    pieces.append((TRIANGLE, Category.TRIANGLE))
    return _build_stack(world, config, pieces)


def _build_pair(world: WorldState, config: EnvConfig, shape_a, shape_b, span: float):
    """Two shapes exactly touching with the contact on the line of centers;
    returns (a, b, contact_xy, phi).

    Rectangular pieces are both aligned with the pair direction (flush
    seam); irregular prisms keep random yaws and the configuration is
    resampled until their footprints do not interpenetrate.
    """
    rng = world.rng
    rect = isinstance(shape_a, Cuboid)
    phi = float(rng.uniform(0.0, 2.0 * math.pi)) if config.random_orientation else 0.0
    ux, uy = math.cos(phi), math.sin(phi)
    if rect:
        yaw_a = yaw_b = phi
    else:
        sampler = yaw_sampler_for(config, rng)
        yaw_a = sampler()
        yaw_b = sampler()
    d = _pair_separation(shape_a, yaw_a, shape_b, yaw_b, ux, uy, PAIR_GAP)
    cx, cy = _center_spot(world, rng, span / 2.0 + 0.02)
    ax, ay = cx - d / 2.0 * ux, cy - d / 2.0 * uy
    bx, by = cx + d / 2.0 * ux, cy + d / 2.0 * uy
    cat = Category.BLOCK if rect else Category.RANDOM
    a = world.add_object(shape_a, Pose(ax, ay, shape_height(shape_a) / 2.0, yaw_a), cat)
    b = world.add_object(shape_b, Pose(bx, by, shape_height(shape_b) / 2.0, yaw_b), cat)
    return a, b, _bridge_point(a, b), phi


def _build_house_2(world, config):
    s = draw_scale(config, world.rng)
    cube = scaled(CUBE, s)
    roof = scaled(ROOF, s)
    a, b, contact, phi = _build_pair(world, config, cube, cube, roof.lx * 1.2)
    world.add_object(
        roof, Pose(contact[0], contact[1], a.top + roof.lz / 2.0, phi), Category.ROOF
    )
    return a.id


def _build_house_3(world, config):
    s = draw_scale(config, world.rng)
    cube = scaled(CUBE, s)
    brick = scaled(BRICK, s)
    roof = scaled(ROOF, s)
    a, b, contact, phi = _build_pair(world, config, cube, cube, brick.lx * 1.2)
    br = world.add_object(
        brick, Pose(contact[0], contact[1], a.top + brick.lz / 2.0, phi), Category.BRICK
    )
    world.add_object(
        roof, Pose(contact[0], contact[1], br.top + roof.lz / 2.0, phi), Category.ROOF
    )
    return a.id


def _build_house_4(world, config):
    s = draw_scale(config, world.rng)
    cube = scaled(CUBE, s)
    brick = scaled(BRICK, s)
    roof = scaled(ROOF, s)
    a, b, contact, phi = _build_pair(world, config, cube, cube, brick.lx * 1.2)
    ux, uy = math.cos(phi), math.sin(phi)
    br = world.add_object(
        brick, Pose(contact[0], contact[1], a.top + brick.lz / 2.0, phi), Category.BRICK
    )
    offset = cube.lx / 2.0 + PAIR_GAP / 2.0
    uppers = []
    for sign in (1.0, -1.0):
        uppers.append(
            world.add_object(
                cube,
                Pose(
                    contact[0] + sign * offset * ux,
                    contact[1] + sign * offset * uy,
                    br.top + cube.lz / 2.0,
                    phi,
                ),
                Category.BLOCK,
            )
        )
    roof_c = _bridge_point(uppers[0], uppers[1])
    world.add_object(
        roof,
        Pose(roof_c[0], roof_c[1], uppers[0].top + roof.lz / 2.0, phi),
        Category.ROOF,
    )
    return a.id


def _build_improvise_2(world, config):
    rng = world.rng
    s = draw_scale(config, rng)
    h = float(rng.uniform(0.015, 0.035)) * s
    pa = random_prism(rng, h)
    pb = random_prism(rng, h)
    roof = scaled(ROOF, s)
    a, b, contact, phi = _build_pair(world, config, pa, pb, roof.lx * 1.2)
    world.add_object(
        roof, Pose(contact[0], contact[1], a.top + roof.lz / 2.0, phi), Category.ROOF
    )
    return a.id


def _build_improvise_3(world, config):
    rng = world.rng
    s = draw_scale(config, rng)
    h = float(rng.uniform(0.015, 0.035)) * s
    pa = random_prism(rng, h)
    pb = random_prism(rng, h)
    brick = scaled(BRICK, s)
    roof = scaled(ROOF, s)
    a, b, contact, phi = _build_pair(world, config, pa, pb, brick.lx * 1.2)
    br = world.add_object(
        brick, Pose(contact[0], contact[1], a.top + brick.lz / 2.0, phi), Category.BRICK
    )
    world.add_object(
        roof, Pose(contact[0], contact[1], br.top + roof.lz / 2.0, phi), Category.ROOF
    )
    return a.id


for _name, _fn in [
    ("block_stacking", _build_block_stacking),
    ("house_building_1", _build_house_1),
    ("house_building_2", _build_house_2),
    ("house_building_3", _build_house_3),
    ("house_building_4", _build_house_4),
    ("improvise_house_building_2", _build_improvise_2),
    ("improvise_house_building_3", _build_improvise_3),
]:
    register_goal_builder(_name, _fn)


# ---------------------------------------------------------------------------
# Deconstruction planner
# ---------------------------------------------------------------------------


def decon_generate(
    task: TaskSpec | str,
    config: EnvConfig,
    rng: np.random.Generator,
    *,
    seed: int | None = None,
    keep_world: bool = False,
    max_attempts: int = 20,
) -> ExpertTrajectory:
    """Build a goal configuration, disassemble it, and reverse the episode
    into a construction demonstration.

    The reversal swaps each (pick@p, place@q) into (pick@q, place@p) and
    emits the pairs in reverse order; the result is replayed through a real
    environment to record observations and verify it reaches the goal. A
    topple during deconstruction or replay discards the attempt.
    """
    if isinstance(task, str):
        task = get_task(task)
    if task.name not in _GOAL_BUILDERS or not task.supports_deconstruction:
        raise DemoGenerationError(
            f"task {task.name!r} does not support deconstruction"
        )
    config = task.resolve_config(config.validate())
    builder = _GOAL_BUILDERS[task.name]
    half = config.half_rotation

    for _ in range(max_attempts):
        world = WorldState(
            bounds=config.bounds(),
            gripper=GripperState(max_open_width=config.gripper_width()),
            rng=rng,
        )
        try:
            anchor_id = builder(world, config)
        except LayoutRetry:
            continue
        if not task.goal(world, None):
            continue
        remaining = [o.id for o in world.movable_objects() if o.id != anchor_id]
        pairs = []
        ok = True
        while remaining and ok:
            objs = [world.object_by_id(i) for i in remaining]
            target = sorted(objs, key=lambda o: (-o.top, o.id))[0]
            px, py, ptheta = _pick_pose(target, half)
            pick_act, out = world_step(world, px, py, ptheta, half_rotation=half)
            if out.kind != "GRASPED" or out.object_id != target.id:
                ok = False
                break
            theta_hi = math.pi if half else 2.0 * math.pi
            place_theta = (
                float(rng.uniform(0.0, theta_hi)) if config.random_orientation else 0.0
            )
            grasp = world.gripper.grasp
            final_yaw = normalize_yaw(place_theta + grasp.dyaw)
            try:
                scatter = sample_free_pose(
                    world,
                    target.shape,
                    rng,
                    yaw_sampler=lambda: final_yaw,
                    clearance=MIN_SEPARATION,
                )
            except LayoutRetry:
                ok = False
                break
            gx, gy, gtheta = _place_for(world, (scatter.x, scatter.y), final_yaw, half)
            place_act, out = world_step(world, gx, gy, gtheta, half_rotation=half)
            if out.kind != "PLACED_STABLE":
                ok = False
                break
            pairs.append(
                (
                    (pick_act.x, pick_act.y, pick_act.theta),
                    (place_act.x, place_act.y, place_act.theta),
                )
            )
            remaining.remove(target.id)
        if not ok:
            continue

        # Reverse: deconstruction (pick@p, place@q) -> construction (pick@q,
        # place@p), pairs in reverse order.
        construction = []
        for pick_wp, place_wp in reversed(pairs):
            construction.append(place_wp)
            construction.append(pick_wp)

        start_world = world
        traj = _record_construction(
            task, config, start_world, construction, seed=seed, keep_world=keep_world
        )
        if traj is not None:
            return traj
    raise DemoGenerationError(
        f"deconstruction for task {task.name!r} failed after {max_attempts} attempts"
    )


def _record_construction(
    task: TaskSpec,
    config: EnvConfig,
    start_world: WorldState,
    waypoints: list[tuple[float, float, float]],
    *,
    seed: int | None,
    keep_world: bool,
) -> ExpertTrajectory | None:
    env = Environment(task, config, seed=0)
    initial = start_world.clone() if keep_world else None
    env.reset_from_world(start_world.clone())
    transitions: list[Transition] = []
    trace = []
    for x, y, theta in waypoints:
        obs = env.observation()
        action = env.compose_action(x, y, theta)
        _, reward, done = env.step(action)
        out = env.last_outcome
        assert out is not None
        if out.kind not in ("GRASPED", "PLACED_STABLE"):
            return None
        transitions.append(
            Transition(
                heightmap=obs.heightmap,
                in_hand=obs.in_hand,
                holding=obs.holding,
                action=action,
                reward=reward,
                done=done,
            )
        )
        if keep_world:
            trace.append(
                tuple(
                    (o.id, o.pose.x, o.pose.y, o.pose.z, o.pose.yaw)
                    for o in sorted(env.world.objects, key=lambda o: o.id)
                )
            )
    if not transitions or transitions[-1].reward != 1.0 or not transitions[-1].done:
        return None
    if len(transitions) != task.optimal_steps:
        return None
    return ExpertTrajectory(
        task=task.name,
        seed=seed,
        success=True,
        transitions=transitions,
        initial_world=initial,
        pose_trace=trace,
    )


# ---------------------------------------------------------------------------
# Demo generation
# ---------------------------------------------------------------------------


def waypoint_rollout(
    task: TaskSpec | str, config: EnvConfig, seed: SeedLike
) -> ExpertTrajectory:
    """One expert episode through the environment with the waypoint policy."""
    if isinstance(task, str):
        task = get_task(task)
    env = Environment(task, config, seed=seed)
    env.reset()
    transitions: list[Transition] = []
    success = False
    while not env.done:
        obs = env.observation()
        plan = next_expert_action(task, env.world, env.task_state, env.config, env.planner_rng)
        if plan is None:
            break
        action = env.compose_action(*plan)
        _, reward, done = env.step(action)
        transitions.append(
            Transition(
                heightmap=obs.heightmap,
                in_hand=obs.in_hand,
                holding=obs.holding,
                action=action,
                reward=reward,
                done=done,
            )
        )
        if done:
            success = reward == 1.0
    return ExpertTrajectory(
        task=task.name,
        seed=None,
        success=success,
        transitions=transitions,
    )


def _demo_attempt(args) -> ExpertTrajectory | None:
    task_name, config, seed, index = args
    task = get_task(task_name)
    if task.supports_deconstruction:
        rng = np.random.default_rng(
            np.random.SeedSequence(entropy=seed, spawn_key=(index,))
        )
        try:
            traj = decon_generate(task, config, rng, seed=index, keep_world=False)
        except DemoGenerationError:
            return None
        return traj
    traj = waypoint_rollout(task, config, seed=(seed, index))
    traj.seed = index
    return traj if traj.success else None


def generate_demos(
    task: TaskSpec | str,
    n_episodes: int,
    config: EnvConfig,
    seed: int,
    *,
    workers: int = 0,
) -> list[ExpertTrajectory]:
    """Generate ``n_episodes`` successful expert trajectories.

    Attempt indices are processed in deterministic blocks, so the output is
    bit-identical for any worker count. Structure tasks use deconstruction;
    the rest roll out the waypoint policy and keep successful episodes.
    """
    if n_episodes < 1:
        raise DemoGenerationError("n_episodes must be >= 1")
    if isinstance(task, str):
        task = get_task(task)
    config = task.resolve_config(config.validate())
    budget = 2 * n_episodes
    successes: list[ExpertTrajectory] = []
    next_index = 0
    pool = None
    try:
        if workers and workers > 1:
            import multiprocessing as mp

            pool = mp.get_context("fork").Pool(processes=workers)
        while len(successes) < n_episodes and next_index < budget:
            block = min(
                max(n_episodes - len(successes), 4 * max(1, workers or 1)),
                budget - next_index,
            )
            args = [
                (task.name, config, seed, i)
                for i in range(next_index, next_index + block)
            ]
            results = pool.map(_demo_attempt, args) if pool else map(_demo_attempt, args)
            for traj in results:
                if traj is not None and len(successes) < n_episodes:
                    successes.append(traj)
            next_index += block
    finally:
        if pool is not None:
            pool.close()
            pool.join()
    if len(successes) < n_episodes:
        raise DemoGenerationError(
            f"expert success rate too low for task {task.name!r}: "
            f"{len(successes)}/{next_index} attempts succeeded "
            f"(needed {n_episodes})"
        )
    return successes
