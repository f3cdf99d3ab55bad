"""Quasi-static world state and the pick/place transition function.

The kernel replaces rigid-body dynamics with four deterministic rules:

* ``compute_z`` resolves gripper height from the tallest column near the
  target, minus a fixed offset for picks or plus a clearance for places.
* a pick succeeds when the gripper is on the target's grasp line, nothing
  occludes the column, the commanded height intersects the object, and the
  footprint fits the gripper opening;
* a place lands the held object on the tallest surface under its footprint
  and is stable exactly when the support height directly beneath the object's
  center matches that landing height;
* ``settle`` drops any unsupported object straight down onto whatever is
  below it, iterated to a fixpoint.

Toppling is a deterministic horizontal displacement, not dynamics, so every
trajectory is exactly reproducible from its seed and action list.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np

from .errors import GripperStateError
from .geometry import (
    Container,
    ConvexPrism,
    Cylinder,
    Pose,
    Shape,
    Slab,
    TriangularPrism,
    footprint_aabb,
    footprint_contains,
    footprints_overlap,
    height_at,
    normalize_yaw,
    raster_top,
    shape_height,
    support_extent,
)

logger = logging.getLogger(__name__)

# Kernel constants (meters unless noted). The z offsets are sized to the 3 cm
# default block; see compute_z.
Z_PICK_OFFSET = -0.015
Z_PLACE_CLEAR = 0.002
REGION_HALF_WIDTH = 0.012  # half-width of the compute_z lookup square
GRASP_TOL = 0.01  # gripper center to grasp line
SUPPORT_TOL = 0.003  # |COM-column support - landing| bound for stability
SETTLE_TOL = 1e-6  # slack for the settled-on-support invariant
Z_EXTENT_TOL = 0.006  # pick height containment slack
TOPPLE_STEP = 0.01  # topple displacement increment
MIN_SEPARATION = 0.015  # default free-pose clearance used by tasks/planners
ELONGATED_ASPECT = 1.5  # footprint aspect ratio above which the grasp
#                         line is the long-axis centerline

DEFAULT_OPEN_WIDTH = 0.08
ROBOT_OPEN_WIDTHS = {
    "kuka": 0.08,
    "panda": 0.08,
    "ur5_parallel": 0.08,
    "ur5_robotiq": 0.085,
}


class Category(enum.Enum):
    BLOCK = "block"
    ROOF = "roof"
    TRIANGLE = "triangle"
    BRICK = "brick"
    RANDOM = "random"
    BOX = "box"
    BOTTLE = "bottle"
    SWAB = "swab"
    TUBE = "tube"
    USED_TUBE = "used_tube"
    CONTAINER = "container"
    PALLET = "pallet"


class Primitive(enum.Enum):
    PICK = 0
    PLACE = 1


@dataclass
class SimObject:
    """One manipulable or fixture body: shape + pose + bookkeeping."""

    id: int
    shape: Shape
    pose: Pose
    category: Category
    movable: bool = True
    in_play: bool = True  # cleared when the workspace check drops the object
    # Geometry derived from (shape, pose), rebuilt whenever the pose object
    # changes identity. Safe to share between copies: entries are pure.
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def height(self) -> float:
        return shape_height(self.shape)

    @property
    def base(self) -> float:
        return self.pose.z - self.height / 2.0

    @property
    def top(self) -> float:
        return self.pose.z + self.height / 2.0

    def top_at(self, x: float, y: float) -> float | None:
        return height_at(self.shape, self.pose, x, y)

    def _pose_cache(self) -> dict:
        cache = self._cache
        if cache.get("pose") is not self.pose:
            cache.clear()
            cache["pose"] = self.pose
        return cache

    def world_aabb(self) -> tuple[float, float, float, float]:
        cache = self._pose_cache()
        if "aabb" not in cache:
            cache["aabb"] = footprint_aabb(self.shape, self.pose)
        return cache["aabb"]

    def world_sample_points(self) -> np.ndarray:
        cache = self._pose_cache()
        if "samples" not in cache:
            cache["samples"] = footprint_sample_points(self.shape, self.pose)
        return cache["samples"]

    def copy(self) -> "SimObject":
        return replace(self)


@dataclass(frozen=True)
class GraspTransform:
    """Held-object pose relative to the gripper: offset in the gripper frame
    plus relative yaw."""

    dx: float
    dy: float
    dyaw: float


@dataclass
class GripperState:
    max_open_width: float = DEFAULT_OPEN_WIDTH
    holding_id: int | None = None
    grasp: GraspTransform | None = None

    @property
    def holding(self) -> bool:
        return self.holding_id is not None

    def copy(self) -> "GripperState":
        return GripperState(self.max_open_width, self.holding_id, self.grasp)


@dataclass(frozen=True)
class Workspace:
    x_min: float
    x_max: float
    y_min: float
    y_max: float
    z_max: float = 1.0

    def clip(self, x: float, y: float) -> tuple[float, float]:
        return (
            min(max(x, self.x_min), self.x_max),
            min(max(y, self.y_min), self.y_max),
        )

    def contains(self, x: float, y: float) -> bool:
        return self.x_min <= x <= self.x_max and self.y_min <= y <= self.y_max

    @property
    def extent(self) -> float:
        return self.x_max - self.x_min


@dataclass(frozen=True)
class Action:
    """A fully resolved primitive action."""

    primitive: Primitive
    x: float
    y: float
    theta: float
    z: float

    def as_vector(self) -> np.ndarray:
        return np.array(
            [float(self.primitive.value), self.x, self.y, self.z, self.theta],
            dtype=np.float32,
        )


@dataclass(frozen=True)
class StepOutcome:
    primitive: Primitive
    success: bool
    kind: str  # GRASPED | MISS | PLACED_STABLE | PLACED_TOPPLED
    object_id: int | None = None
    primitive_overridden: bool = False


@dataclass
class WorldState:
    """Objects + gripper + rng + step counter; one episode's mutable state."""

    bounds: Workspace
    objects: list[SimObject] = field(default_factory=list)
    gripper: GripperState = field(default_factory=GripperState)
    rng: np.random.Generator = field(
        default_factory=lambda: np.random.default_rng(0)
    )
    step_count: int = 0
    _next_id: int = 0

    def new_id(self) -> int:
        out = self._next_id
        self._next_id = out + 1
        return out

    def add_object(
        self,
        shape: Shape,
        pose: Pose,
        category: Category,
        movable: bool = True,
    ) -> SimObject:
        obj = SimObject(self.new_id(), shape, pose, category, movable)
        self.objects.append(obj)
        return obj

    def remove_object(self, object_id: int) -> None:
        self.objects = [o for o in self.objects if o.id != object_id]

    def object_by_id(self, object_id: int) -> SimObject:
        for o in self.objects:
            if o.id == object_id:
                return o
        raise KeyError(f"no object with id {object_id}")

    def held_object(self) -> SimObject | None:
        if self.gripper.holding_id is None:
            return None
        return self.object_by_id(self.gripper.holding_id)

    def active_objects(self) -> list[SimObject]:
        """Objects that participate in world geometry (in play, not held)."""
        held = self.gripper.holding_id
        return [o for o in self.objects if o.in_play and o.id != held]

    def movable_objects(self) -> list[SimObject]:
        return [o for o in self.objects if o.movable]

    def clone(self) -> "WorldState":
        out = WorldState(
            bounds=self.bounds,
            objects=[o.copy() for o in self.objects],
            gripper=self.gripper.copy(),
            rng=clone_rng(self.rng),
            step_count=self.step_count,
        )
        out._next_id = self._next_id
        return out


def clone_rng(rng: np.random.Generator) -> np.random.Generator:
    out = np.random.Generator(type(rng.bit_generator)())
    out.bit_generator.state = rng.bit_generator.state
    return out


# ---------------------------------------------------------------------------
# Support queries
# ---------------------------------------------------------------------------

# Footprint sampling: lattice pitch and the margin by which sample columns
# stay inside the footprint, so that merely-touching neighbors contribute no
# support. Overlaps shallower than the margin go undetected by design.
_SAMPLE_STEP = 0.0025
_SAMPLE_MARGIN = 0.001
_SAMPLE_MAX = 49


def _axis_samples(extent: float) -> np.ndarray:
    inner = extent - 2.0 * _SAMPLE_MARGIN
    if inner <= 0:
        return np.array([0.0])
    n = min(_SAMPLE_MAX, max(2, int(math.ceil(inner / _SAMPLE_STEP)) + 1))
    return np.linspace(-inner / 2.0, inner / 2.0, n)


@lru_cache(maxsize=256)
def _local_sample_points(shape: Shape) -> np.ndarray:
    """Deterministic lattice of columns strictly inside the footprint, in the
    shape's local frame. Shared across poses; cached per shape."""
    if isinstance(shape, Cylinder):
        xs = _axis_samples(2.0 * shape.radius)
        gx, gy = np.meshgrid(xs, xs)
        r = shape.radius - _SAMPLE_MARGIN / 2.0
        mask = gx * gx + gy * gy <= r * r
        pts = np.stack([gx[mask], gy[mask]], axis=1)
    elif isinstance(shape, ConvexPrism):
        verts = np.asarray(shape.footprint, dtype=float)
        xs = _axis_samples(float(verts[:, 0].max() - verts[:, 0].min()))
        ys = _axis_samples(float(verts[:, 1].max() - verts[:, 1].min()))
        cx = (verts[:, 0].max() + verts[:, 0].min()) / 2.0
        cy = (verts[:, 1].max() + verts[:, 1].min()) / 2.0
        gx, gy = np.meshgrid(xs + cx, ys + cy)
        mask = np.ones(gx.shape, dtype=bool)
        n = len(verts)
        for i in range(n):
            ax, ay = verts[i]
            bx, by = verts[(i + 1) % n]
            elen = math.hypot(bx - ax, by - ay)
            side = (bx - ax) * (gy - ay) - (by - ay) * (gx - ax)
            mask &= side >= _SAMPLE_MARGIN / 2.0 * elen
        pts = np.stack([gx[mask], gy[mask]], axis=1)
    else:
        xs = _axis_samples(shape.lx)
        ys = _axis_samples(shape.ly)
        gx, gy = np.meshgrid(xs, ys)
        pts = np.stack([gx.ravel(), gy.ravel()], axis=1)
    if len(pts) == 0:
        pts = np.zeros((1, 2))
    return pts


def footprint_sample_points(shape: Shape, pose: Pose) -> np.ndarray:
    """World-frame sample columns strictly inside the footprint, (N, 2)."""
    local = _local_sample_points(shape)
    c = math.cos(pose.yaw)
    s = math.sin(pose.yaw)
    x = pose.x + c * local[:, 0] - s * local[:, 1]
    y = pose.y + s * local[:, 0] + c * local[:, 1]
    return np.stack([x, y], axis=1)


def _tops_at_points(
    world: WorldState,
    pts: np.ndarray,
    exclude: frozenset[int] | set[int] = frozenset(),
    below: float | None = None,
) -> np.ndarray:
    """Per-column max top height over active objects (ground contributes 0).

    With ``below`` set, only surfaces at or below that height count (used by
    settle: a falling object lands on surfaces under its base, not on things
    beside or above it).
    """
    tops = np.zeros(len(pts))
    px = pts[:, 0]
    py = pts[:, 1]
    x0 = px.min()
    x1 = px.max()
    y0 = py.min()
    y1 = py.max()
    for obj in world.active_objects():
        if obj.id in exclude:
            continue
        ax0, ay0, ax1, ay1 = obj.world_aabb()
        if ax1 < x0 or ax0 > x1 or ay1 < y0 or ay0 > y1:
            continue
        vals = raster_top(obj.shape, obj.pose, px, py)
        if below is not None:
            vals = np.where(vals <= below + SETTLE_TOL, vals, np.nan)
        tops = np.fmax(tops, vals)
    return tops


def landing_height(
    world: WorldState, shape: Shape, pose: Pose, exclude: frozenset[int] | set[int]
) -> float:
    """Base height the shape would land on when released over its footprint."""
    pts = footprint_sample_points(shape, pose)
    return float(np.max(_tops_at_points(world, pts, exclude)))


def resting_height(world: WorldState, obj: SimObject) -> float:
    """Support height under ``obj``: the tallest surface below its base over
    its footprint (ground otherwise)."""
    pts = obj.world_sample_points()
    return float(
        np.max(_tops_at_points(world, pts, exclude={obj.id}, below=obj.base))
    )


# The support column under an object's center is probed over a small
# neighborhood rather than one exact point: actions travel as 32-bit floats,
# so a placement aimed at a seam between two supports (the palletizing
# interlock pattern does this on purpose) would otherwise be decided by
# quantization noise. The radius stays below the observation pixel pitch.
COM_SUPPORT_RADIUS = 0.002
_COM_AXIS = np.linspace(-COM_SUPPORT_RADIUS, COM_SUPPORT_RADIUS, 5)
_COM_GX, _COM_GY = (g.ravel() for g in np.meshgrid(_COM_AXIS, _COM_AXIS))


def column_support(world: WorldState, x: float, y: float, exclude: frozenset[int] | set[int]) -> float:
    """Top height of the tallest surface directly beneath (x, y), probed
    within COM_SUPPORT_RADIUS of the column; 0 for bare ground."""
    pts = np.stack([_COM_GX + x, _COM_GY + y], axis=1)
    return float(np.max(_tops_at_points(world, pts, exclude)))


def is_settled(world: WorldState, obj: SimObject, tol: float = SETTLE_TOL) -> bool:
    """Settled invariant: the object's base sits exactly on its support."""
    return abs(obj.base - resting_height(world, obj)) <= tol


# ---------------------------------------------------------------------------
# The z heuristic
# ---------------------------------------------------------------------------

_REGION_AXIS = np.linspace(-REGION_HALF_WIDTH, REGION_HALF_WIDTH, 9)
_REGION_GX, _REGION_GY = (g.ravel() for g in np.meshgrid(_REGION_AXIS, _REGION_AXIS))


def region_max_height(world: WorldState, x: float, y: float) -> float:
    """Max world height over the square lookup region centered at (x, y)."""
    pts = np.stack([_REGION_GX + x, _REGION_GY + y], axis=1)
    return float(np.max(_tops_at_points(world, pts)))


def compute_z(
    world: WorldState,
    x: float,
    y: float,
    primitive: Primitive,
    held_height: float | None = None,
) -> float:
    """Resolve gripper height from the tallest column near (x, y).

    PICK: descend below the top by the pick offset (floor at 0). PLACE:
    target the held object's center just above the region top.
    """
    h_max = region_max_height(world, x, y)
    if primitive is Primitive.PICK:
        return max(0.0, h_max + Z_PICK_OFFSET)
    if held_height is None:
        held = world.held_object()
        if held is None:
            raise GripperStateError("PLACE z requested with nothing held")
        held_height = held.height
    return h_max + held_height / 2.0 + Z_PLACE_CLEAR


# ---------------------------------------------------------------------------
# Pick
# ---------------------------------------------------------------------------


def grasp_line_distance(obj: SimObject, x: float, y: float) -> float:
    """Distance from (x, y) to the object's grasp line: the center for
    square/cylindrical footprints, the long-axis centerline for elongated
    ones."""
    shape = obj.shape
    if isinstance(shape, (Cylinder, ConvexPrism)):
        return math.hypot(x - obj.pose.x, y - obj.pose.y)
    long_side, short_side = max(shape.lx, shape.ly), min(shape.lx, shape.ly)
    if long_side / short_side <= ELONGATED_ASPECT:
        return math.hypot(x - obj.pose.x, y - obj.pose.y)
    # Centerline spans the region where the full short side is under the jaw.
    half_span = (long_side - short_side) / 2.0
    axis_yaw = obj.pose.yaw if shape.lx >= shape.ly else obj.pose.yaw + math.pi / 2.0
    c = math.cos(axis_yaw)
    s = math.sin(axis_yaw)
    dx = x - obj.pose.x
    dy = y - obj.pose.y
    along = c * dx + s * dy
    across = -s * dx + c * dy
    along_excess = max(0.0, abs(along) - half_span)
    return math.hypot(along_excess, across)


def grasp_width(obj: SimObject, theta: float) -> float:
    """Footprint extent perpendicular to a gripper at yaw ``theta``."""
    ux = -math.sin(theta)
    uy = math.cos(theta)
    return support_extent(obj.shape, obj.pose, ux, uy) + support_extent(
        obj.shape, obj.pose, -ux, -uy
    )


def resolve_pick(
    world: WorldState, x: float, y: float, z: float, theta: float
) -> StepOutcome:
    """Attempt a grasp at (x, y, z) with gripper yaw theta."""
    if world.gripper.holding:
        raise GripperStateError("pick attempted while holding")
    miss = StepOutcome(Primitive.PICK, False, "MISS")

    candidates = [
        o
        for o in world.active_objects()
        if o.movable and footprint_contains(o.shape, o.pose, x, y)
    ]
    if not candidates:
        return miss
    tops = {o.id: o.top_at(x, y) for o in candidates}
    target = min(candidates, key=lambda o: (-tops[o.id], o.id))
    top = tops[target.id]

    for other in world.active_objects():
        if other.id == target.id:
            continue
        other_top = other.top_at(x, y)
        if other_top is not None and other_top > top + SETTLE_TOL:
            return miss  # occluded: something sits above the grasp column

    if not (target.base - Z_EXTENT_TOL <= z <= top + Z_EXTENT_TOL):
        return miss
    if grasp_line_distance(target, x, y) > GRASP_TOL:
        return miss
    if grasp_width(target, theta) > world.gripper.max_open_width + 1e-9:
        return miss

    c = math.cos(-theta)
    s = math.sin(-theta)
    dx = target.pose.x - x
    dy = target.pose.y - y
    world.gripper.holding_id = target.id
    world.gripper.grasp = GraspTransform(
        dx=c * dx - s * dy,
        dy=s * dx + c * dy,
        dyaw=target.pose.yaw - theta,
    )
    settle(world)  # whatever the object supported falls straight down
    return StepOutcome(Primitive.PICK, True, "GRASPED", object_id=target.id)


# ---------------------------------------------------------------------------
# Place
# ---------------------------------------------------------------------------


def _destabilizers(
    world: WorldState, obj: SimObject, pts: np.ndarray, landing: float
) -> tuple[list[SimObject], np.ndarray]:
    """Objects providing the landing height under ``pts``, plus the contact
    columns where they do."""
    contact = np.zeros(len(pts), dtype=bool)
    supports = []
    for other in world.active_objects():
        if other.id == obj.id:
            continue
        vals = raster_top(other.shape, other.pose, pts[:, 0], pts[:, 1])
        hits = vals >= landing - SETTLE_TOL
        if hits.any():
            supports.append(other)
            contact |= np.asarray(hits)
    return supports, contact


def resolve_place(
    world: WorldState, x: float, y: float, z: float, theta: float
) -> StepOutcome:
    """Release the held object over (x, y) at yaw theta."""
    obj = world.held_object()
    if obj is None:
        raise GripperStateError("place attempted while empty")
    grasp = world.gripper.grasp
    assert grasp is not None

    c = math.cos(theta)
    s = math.sin(theta)
    wx = x + c * grasp.dx - s * grasp.dy
    wy = y + s * grasp.dx + c * grasp.dy
    yaw = normalize_yaw(theta + grasp.dyaw)
    pose = Pose(wx, wy, 0.0, yaw)

    exclude = {obj.id}
    landing = landing_height(world, obj.shape, pose, exclude)
    com_support = column_support(world, wx, wy, exclude)
    toppled = landing - com_support > SUPPORT_TOL

    if toppled:
        pose = _topple(world, obj, pose, landing)
        landing = landing_height(world, obj.shape, pose, exclude)

    obj.pose = Pose(pose.x, pose.y, landing + obj.height / 2.0, pose.yaw)
    world.gripper.holding_id = None
    world.gripper.grasp = None
    settle(world)
    kind = "PLACED_TOPPLED" if toppled else "PLACED_STABLE"
    return StepOutcome(Primitive.PLACE, not toppled, kind, object_id=obj.id)


def _topple(world: WorldState, obj: SimObject, pose: Pose, landing: float) -> Pose:
    """Deterministic topple displacement: slide the object outward along the
    ray from the destabilizing contact centroid through its center, in fixed
    increments, until its footprint clears the destabilizing support."""
    pts = footprint_sample_points(obj.shape, pose)
    supports, contact = _destabilizers(world, obj, pts, landing)
    if contact.any():
        cx = float(pts[contact, 0].mean())
        cy = float(pts[contact, 1].mean())
    else:
        cx, cy = pose.x, pose.y
    ux = pose.x - cx
    uy = pose.y - cy
    norm = math.hypot(ux, uy)
    if norm < 1e-12:
        ux, uy = 1.0, 0.0  # concentric contact: displace along +x
    else:
        ux /= norm
        uy /= norm

    x, y = pose.x, pose.y
    for _ in range(60):
        nx = x + TOPPLE_STEP * ux
        ny = y + TOPPLE_STEP * uy
        nx, ny = world.bounds.clip(nx, ny)
        if nx == x and ny == y:
            break  # pinned against the workspace edge
        x, y = nx, ny
        probe = Pose(x, y, pose.z, pose.yaw)
        if not any(
            footprints_overlap(obj.shape, probe, o.shape, o.pose) for o in supports
        ):
            break
    return Pose(x, y, pose.z, pose.yaw)


# ---------------------------------------------------------------------------
# Settle
# ---------------------------------------------------------------------------


def settle(world: WorldState) -> WorldState:
    """Drop unsupported objects straight down onto their supports, repeated
    to a fixpoint (ascending base height, then id, within each pass)."""
    max_passes = len(world.objects) + 1
    for _ in range(max_passes):
        changed = False
        order = sorted(
            (o for o in world.active_objects() if o.movable),
            key=lambda o: (o.base, o.id),
        )
        for obj in order:
            rest = resting_height(world, obj)
            if obj.base > rest + SETTLE_TOL:
                obj.pose = obj.pose.with_z(rest + obj.height / 2.0)
                changed = True
        if not changed:
            break
    return world


# ---------------------------------------------------------------------------
# Step
# ---------------------------------------------------------------------------


def apply_workspace_check(world: WorldState, mode: str = "point") -> list[int]:
    """Drop movable objects that left the workspace; returns dropped ids."""
    dropped = []
    held = world.gripper.holding_id
    for obj in world.objects:
        if not (obj.movable and obj.in_play) or obj.id == held:
            continue
        if mode == "point":
            out = not world.bounds.contains(obj.pose.x, obj.pose.y)
        else:  # bounding_box
            x0, y0, x1, y1 = footprint_aabb(obj.shape, obj.pose)
            out = not (
                world.bounds.contains(x0, y0) and world.bounds.contains(x1, y1)
            )
        if out:
            obj.in_play = False
            dropped.append(obj.id)
    return dropped


def step(
    world: WorldState,
    x: float,
    y: float,
    theta: float = 0.0,
    z: float | None = None,
    primitive: Primitive | None = None,
    half_rotation: bool = True,
    workspace_check: str = "point",
) -> tuple[Action, StepOutcome]:
    """Execute one primitive action: clip, normalize, resolve z, dispatch.

    The gripper-motion heuristic picks when empty and places when holding; a
    supplied primitive that disagrees is overridden (never an error).
    """
    x, y = world.bounds.clip(x, y)
    theta = normalize_yaw(theta, half_rotation)
    effective = Primitive.PLACE if world.gripper.holding else Primitive.PICK
    overridden = primitive is not None and primitive is not effective
    if overridden:
        logger.debug(
            "primitive %s overridden to %s by gripper heuristic at step %d",
            primitive.name,
            effective.name,
            world.step_count,
        )
    if z is None:
        z = compute_z(world, x, y, effective)

    if effective is Primitive.PICK:
        outcome = resolve_pick(world, x, y, z, theta)
    else:
        outcome = resolve_place(world, x, y, z, theta)
    if overridden:
        outcome = replace(outcome, primitive_overridden=True)

    settle(world)
    apply_workspace_check(world, workspace_check)
    world.step_count += 1
    return Action(effective, x, y, theta, z), outcome
