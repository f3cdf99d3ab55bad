"""Shape primitives, poses, and the footprint/height math the simulator queries.

Everything here is a pure function over immutable values. All lengths are in
meters, all angles in radians. Heights returned by :func:`height_at` and
:func:`raster_top` are world-frame top-surface heights ("how tall is the world
at this column"), which is exactly what the heightmap renderer samples.

Conventions:
    * ``Pose.z`` is the center of the shape's vertical extent, so a settled
      shape of height ``h`` has ``pose.z == base + h / 2``.
    * Footprint containment is boundary-inclusive (within ``GEOM_EPS``);
      footprint *overlap* requires interiors to intersect, so two footprints
      that merely touch do not overlap.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Union

import numpy as np

from .errors import InvalidInputError, OutOfWorkspaceError

TWO_PI = 2.0 * math.pi

# Boundary slack for exact geometric comparisons, in meters.
GEOM_EPS = 1e-9


def normalize_yaw(theta: float, half_rotation: bool = False) -> float:
    """Normalize an angle to [0, 2*pi), or [0, pi) under half rotation.

    Under half rotation the angle is reduced modulo pi, exploiting the
    two-fold symmetry of a parallel-jaw gripper.
    """
    if not math.isfinite(theta):
        raise InvalidInputError(f"yaw must be finite, got {theta!r}")
    period = math.pi if half_rotation else TWO_PI
    out = math.fmod(theta, period)
    if out < 0.0:
        out += period
    if out >= period:  # fmod rounding at the period boundary
        out -= period
    return out


@dataclass(frozen=True)
class Pose:
    """Position of a shape's bounding-box center plus yaw about +z."""

    x: float
    y: float
    z: float
    yaw: float = 0.0

    def with_xy(self, x: float, y: float) -> "Pose":
        return replace(self, x=x, y=y)

    def with_z(self, z: float) -> "Pose":
        return replace(self, z=z)

    def with_yaw(self, yaw: float) -> "Pose":
        return replace(self, yaw=normalize_yaw(yaw))


# ---------------------------------------------------------------------------
# Shapes
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Cuboid:
    """Axis-aligned box of dimensions lx * ly * lz in its local frame."""

    lx: float
    ly: float
    lz: float


@dataclass(frozen=True)
class TriangularPrism:
    """Prism over an lx * ly rectangle with its ridge along local x at y = 0.

    The top surface falls linearly from ``lz`` at the ridge to 0 at the
    y = +-ly/2 footprint edges.
    """

    lx: float
    ly: float
    lz: float


@dataclass(frozen=True)
class Cylinder:
    radius: float
    height: float


@dataclass(frozen=True)
class ConvexPrism:
    """Prism over a convex polygon footprint given counterclockwise in the
    local frame, centered on its centroid."""

    footprint: tuple[tuple[float, float], ...]
    height: float


@dataclass(frozen=True)
class Container:
    """Open box: outer lx * ly * lz walls of uniform thickness around a
    rectangular cavity whose floor sits ``cavity_depth`` below the rim."""

    lx: float
    ly: float
    lz: float
    wall: float
    cavity_depth: float


@dataclass(frozen=True)
class Slab:
    """Plain lx * ly * lz plate (pallets, pads)."""

    lx: float
    ly: float
    lz: float


Shape = Union[Cuboid, TriangularPrism, Cylinder, ConvexPrism, Container, Slab]

_RECT_SHAPES = (Cuboid, TriangularPrism, Container, Slab)


def polygon_area(verts: np.ndarray) -> float:
    """Signed area of a polygon (positive for counterclockwise order)."""
    x = verts[:, 0]
    y = verts[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def polygon_centroid(verts: np.ndarray) -> tuple[float, float]:
    """Area centroid of a simple polygon."""
    x = verts[:, 0]
    y = verts[:, 1]
    cross = x * np.roll(y, -1) - np.roll(x, -1) * y
    a = 0.5 * float(np.sum(cross))
    cx = float(np.sum((x + np.roll(x, -1)) * cross)) / (6.0 * a)
    cy = float(np.sum((y + np.roll(y, -1)) * cross)) / (6.0 * a)
    return cx, cy


def validate_shape(shape: Shape) -> None:
    """Raise :class:`InvalidInputError` unless all dimensions are positive
    (and, for convex prisms, the footprint is convex, CCW, non-degenerate)."""
    if isinstance(shape, Cylinder):
        if shape.radius <= 0 or shape.height <= 0:
            raise InvalidInputError(f"non-positive cylinder dimensions: {shape}")
        return
    if isinstance(shape, ConvexPrism):
        verts = np.asarray(shape.footprint, dtype=float)
        if shape.height <= 0:
            raise InvalidInputError(f"non-positive prism height: {shape}")
        if not 3 <= len(verts) <= 6:
            raise InvalidInputError(
                f"convex prism footprint must have 3-6 vertices, got {len(verts)}"
            )
        if polygon_area(verts) <= 1e-8:
            raise InvalidInputError("convex prism footprint is degenerate or clockwise")
        n = len(verts)
        for i in range(n):
            a = verts[i]
            b = verts[(i + 1) % n]
            c = verts[(i + 2) % n]
            turn = (b[0] - a[0]) * (c[1] - b[1]) - (b[1] - a[1]) * (c[0] - b[0])
            if turn < -GEOM_EPS:
                raise InvalidInputError("convex prism footprint is not convex")
        return
    if shape.lx <= 0 or shape.ly <= 0 or shape.lz <= 0:
        raise InvalidInputError(f"non-positive dimensions: {shape}")
    if isinstance(shape, Container):
        if shape.wall <= 0 or shape.cavity_depth <= 0:
            raise InvalidInputError(f"non-positive container walls: {shape}")
        if 2 * shape.wall >= min(shape.lx, shape.ly) or shape.cavity_depth >= shape.lz:
            raise InvalidInputError(f"container walls do not fit: {shape}")


def shape_height(shape: Shape) -> float:
    """Vertical extent of the shape."""
    if isinstance(shape, Cylinder):
        return shape.height
    if isinstance(shape, ConvexPrism):
        return shape.height
    return shape.lz


def _local_frame(pose: Pose, x, y):
    """World offsets -> local (rotate by -yaw). Works on scalars and arrays."""
    c = math.cos(pose.yaw)
    s = math.sin(pose.yaw)
    dx = x - pose.x
    dy = y - pose.y
    return c * dx + s * dy, -s * dx + c * dy


def _local_top(shape: Shape, lx, ly):
    """Top height above the shape's base at local column (lx, ly).

    Vectorized: accepts arrays and returns an array with NaN where the column
    misses the footprint. Scalars in, scalar/NaN out.
    """
    if isinstance(shape, Cylinder):
        inside = lx * lx + ly * ly <= (shape.radius + GEOM_EPS) ** 2
        return np.where(inside, shape.height, np.nan)
    if isinstance(shape, ConvexPrism):
        verts = np.asarray(shape.footprint, dtype=float)
        n = len(verts)
        inside = np.ones(np.broadcast(lx, ly).shape, dtype=bool)
        for i in range(n):
            ax, ay = verts[i]
            bx, by = verts[(i + 1) % n]
            # CCW polygon: interior is to the left of each edge.
            side = (bx - ax) * (ly - ay) - (by - ay) * (lx - ax)
            inside &= side >= -GEOM_EPS * max(1.0, math.hypot(bx - ax, by - ay))
        return np.where(inside, shape.height, np.nan)

    hx = shape.lx / 2.0
    hy = shape.ly / 2.0
    inside = (np.abs(lx) <= hx + GEOM_EPS) & (np.abs(ly) <= hy + GEOM_EPS)
    if isinstance(shape, TriangularPrism):
        profile = shape.lz * np.maximum(0.0, 1.0 - np.abs(ly) / hy)
        return np.where(inside, profile, np.nan)
    if isinstance(shape, Container):
        floor = shape.lz - shape.cavity_depth
        in_cavity = (np.abs(lx) <= hx - shape.wall + GEOM_EPS) & (
            np.abs(ly) <= hy - shape.wall + GEOM_EPS
        )
        return np.where(inside, np.where(in_cavity, floor, shape.lz), np.nan)
    # Cuboid / Slab: flat top.
    return np.where(inside, shape_height(shape), np.nan)


def height_at(shape: Shape, pose: Pose, x: float, y: float) -> float | None:
    """World-frame top height of the shape at column (x, y), or None on miss.

    For containers this is the wall-top height over walls and the
    cavity-floor height over the cavity.
    """
    lx, ly = _local_frame(pose, x, y)
    top = float(_local_top(shape, lx, ly))
    if math.isnan(top):
        return None
    return pose.z - shape_height(shape) / 2.0 + top


def footprint_contains(shape: Shape, pose: Pose, x: float, y: float) -> bool:
    """True iff column (x, y) intersects the footprint (outer, for containers)."""
    lx, ly = _local_frame(pose, x, y)
    if isinstance(shape, Container):
        hx = shape.lx / 2.0
        hy = shape.ly / 2.0
        return bool(abs(lx) <= hx + GEOM_EPS and abs(ly) <= hy + GEOM_EPS)
    return not math.isnan(float(_local_top(shape, lx, ly)))


def raster_top(shape: Shape, pose: Pose, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """World top heights at columns (xs, ys); NaN where the column misses.

    ``xs`` and ``ys`` must broadcast together; the result has the broadcast
    shape. This is the same arithmetic as :func:`height_at`, vectorized.
    """
    lx, ly = _local_frame(pose, xs, ys)
    top = _local_top(shape, lx, ly)
    return pose.z - shape_height(shape) / 2.0 + top


# ---------------------------------------------------------------------------
# World-frame footprints, overlap, and clearance
# ---------------------------------------------------------------------------


def footprint_radius(shape: Shape) -> float:
    """Radius of the smallest centered circle enclosing the footprint."""
    if isinstance(shape, Cylinder):
        return shape.radius
    if isinstance(shape, ConvexPrism):
        verts = np.asarray(shape.footprint, dtype=float)
        return float(np.max(np.hypot(verts[:, 0], verts[:, 1])))
    return math.hypot(shape.lx, shape.ly) / 2.0


def world_footprint(shape: Shape, pose: Pose):
    """Footprint in world coordinates.

    Returns ``("circle", (cx, cy), r)`` for cylinders and
    ``("poly", verts)`` (an (n, 2) CCW array) for everything else.
    """
    if isinstance(shape, Cylinder):
        return ("circle", (pose.x, pose.y), shape.radius)
    if isinstance(shape, ConvexPrism):
        local = np.asarray(shape.footprint, dtype=float)
    else:
        hx = shape.lx / 2.0
        hy = shape.ly / 2.0
        local = np.array([(-hx, -hy), (hx, -hy), (hx, hy), (-hx, hy)])
    c = math.cos(pose.yaw)
    s = math.sin(pose.yaw)
    rot = np.array([[c, -s], [s, c]])
    return ("poly", local @ rot.T + np.array([pose.x, pose.y]))


def footprint_aabb(shape: Shape, pose: Pose) -> tuple[float, float, float, float]:
    """(x0, y0, x1, y1) axis-aligned bounds of the world footprint."""
    kind, *rest = world_footprint(shape, pose)
    if kind == "circle":
        (cx, cy), r = rest
        return (cx - r, cy - r, cx + r, cy + r)
    verts = rest[0]
    return (
        float(verts[:, 0].min()),
        float(verts[:, 1].min()),
        float(verts[:, 0].max()),
        float(verts[:, 1].max()),
    )


def support_extent(shape: Shape, pose: Pose, ux: float, uy: float) -> float:
    """Farthest reach of the footprint from the pose center along unit (ux, uy)."""
    kind, *rest = world_footprint(shape, pose)
    if kind == "circle":
        return rest[1]
    verts = rest[0]
    proj = (verts[:, 0] - pose.x) * ux + (verts[:, 1] - pose.y) * uy
    return float(proj.max())


def ray_exit_distance(shape: Shape, pose: Pose, ux: float, uy: float) -> float:
    """Distance from the pose center to the footprint boundary along unit
    (ux, uy); the point ``center + t * u`` lies exactly on the boundary.

    Unlike :func:`support_extent` this follows the ray itself, so the
    returned point is on the footprint even when the farthest reach along
    the direction is attained at an off-axis corner.
    """
    kind, *rest = world_footprint(shape, pose)
    if kind == "circle":
        return rest[1]
    verts = rest[0]
    origin = np.array([pose.x, pose.y])
    d = np.array([ux, uy])
    best = math.inf
    n = len(verts)
    for i in range(n):
        a = verts[i] - origin
        e = verts[(i + 1) % n] - verts[i]
        denom = d[0] * e[1] - d[1] * e[0]
        if abs(denom) < 1e-15:
            continue
        t = (a[0] * e[1] - a[1] * e[0]) / denom
        s = (a[0] * d[1] - a[1] * d[0]) / denom
        if t > 0 and -1e-9 <= s <= 1 + 1e-9:
            best = min(best, t)
    if not math.isfinite(best):
        raise InvalidInputError("ray does not exit the footprint (center outside?)")
    return float(best)


def _poly_axes(verts: np.ndarray) -> np.ndarray:
    edges = np.roll(verts, -1, axis=0) - verts
    axes = np.stack([-edges[:, 1], edges[:, 0]], axis=1)
    norms = np.linalg.norm(axes, axis=1)
    return axes[norms > 0] / norms[norms > 0, None]

def _project(verts: np.ndarray, axis: np.ndarray) -> tuple[float, float]:
    proj = verts @ axis
    return float(proj.min()), float(proj.max())


def _poly_poly_overlap(a: np.ndarray, b: np.ndarray) -> bool:
    # Separating axis test; touching boundaries do not count as overlap.
    for axis in np.concatenate([_poly_axes(a), _poly_axes(b)]):
        a0, a1 = _project(a, axis)
        b0, b1 = _project(b, axis)
        if min(a1, b1) - max(a0, b0) <= GEOM_EPS:
            return False
    return True


def _point_segment_distance(p: np.ndarray, a: np.ndarray, b: np.ndarray) -> float:
    ab = b - a
    denom = float(ab @ ab)
    t = 0.0 if denom == 0.0 else float(np.clip((p - a) @ ab / denom, 0.0, 1.0))
    return float(np.linalg.norm(p - (a + t * ab)))


def _point_in_poly(p: np.ndarray, verts: np.ndarray) -> bool:
    n = len(verts)
    for i in range(n):
        a = verts[i]
        b = verts[(i + 1) % n]
        if (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]) < -GEOM_EPS:
            return False
    return True


def _points_segments_distance(points: np.ndarray, starts: np.ndarray, ends: np.ndarray) -> float:
    """Min distance between any point and any segment (vectorized)."""
    d = ends - starts  # (m, 2)
    pd = points[:, None, :] - starts[None, :, :]  # (n, m, 2)
    denom = np.einsum("md,md->m", d, d)
    denom = np.where(denom == 0.0, 1.0, denom)
    t = np.clip(np.einsum("nmd,md->nm", pd, d) / denom, 0.0, 1.0)
    closest = starts[None, :, :] + t[..., None] * d[None, :, :]
    return float(np.sqrt(((points[:, None, :] - closest) ** 2).sum(axis=2).min()))


def _poly_poly_distance(a: np.ndarray, b: np.ndarray) -> float:
    if _poly_poly_overlap(a, b):
        return 0.0
    ea = np.roll(a, -1, axis=0)
    eb = np.roll(b, -1, axis=0)
    return min(
        _points_segments_distance(a, b, eb),
        _points_segments_distance(b, a, ea),
    )


def _circle_poly_distance(center: np.ndarray, r: float, verts: np.ndarray) -> float:
    if _point_in_poly(center, verts):
        return 0.0
    n = len(verts)
    d = min(
        _point_segment_distance(center, verts[i], verts[(i + 1) % n]) for i in range(n)
    )
    return max(0.0, d - r)


def clearance_at_least(
    shape_a: Shape, pose_a: Pose, shape_b: Shape, pose_b: Pose, required: float
) -> bool:
    """True iff the footprints are at least ``required`` apart. Uses a cheap
    center-distance bound before the exact computation."""
    lower = (
        math.hypot(pose_a.x - pose_b.x, pose_a.y - pose_b.y)
        - footprint_radius(shape_a)
        - footprint_radius(shape_b)
    )
    if lower >= required:
        return True
    return footprint_clearance(shape_a, pose_a, shape_b, pose_b) >= required


def footprint_clearance(shape_a: Shape, pose_a: Pose, shape_b: Shape, pose_b: Pose) -> float:
    """Minimum horizontal distance between two footprints (0 when they overlap
    or touch)."""
    fa = world_footprint(shape_a, pose_a)
    fb = world_footprint(shape_b, pose_b)
    if fa[0] == "circle" and fb[0] == "circle":
        d = math.hypot(fa[1][0] - fb[1][0], fa[1][1] - fb[1][1])
        return max(0.0, d - fa[2] - fb[2])
    if fa[0] == "circle":
        return _circle_poly_distance(np.asarray(fa[1]), fa[2], fb[1])
    if fb[0] == "circle":
        return _circle_poly_distance(np.asarray(fb[1]), fb[2], fa[1])
    return _poly_poly_distance(fa[1], fb[1])


def footprints_overlap(shape_a: Shape, pose_a: Pose, shape_b: Shape, pose_b: Pose) -> bool:
    """True iff the footprint interiors intersect (touching is not overlap)."""
    fa = world_footprint(shape_a, pose_a)
    fb = world_footprint(shape_b, pose_b)
    if fa[0] == "circle" and fb[0] == "circle":
        d = math.hypot(fa[1][0] - fb[1][0], fa[1][1] - fb[1][1])
        return d < fa[2] + fb[2] - GEOM_EPS
    if fa[0] == "circle" or fb[0] == "circle":
        if fa[0] == "circle":
            center, r, verts = np.asarray(fa[1]), fa[2], fb[1]
        else:
            center, r, verts = np.asarray(fb[1]), fb[2], fa[1]
        if _point_in_poly(center, verts):
            return True
        n = len(verts)
        d = min(
            _point_segment_distance(center, verts[i], verts[(i + 1) % n])
            for i in range(n)
        )
        return d < r - GEOM_EPS
    return _poly_poly_overlap(fa[1], fb[1])


# ---------------------------------------------------------------------------
# Pixel grid
# ---------------------------------------------------------------------------

# Tie-breaking slack for the world -> pixel mapping, in pixel units: points
# within this distance of a cell boundary land in the larger-index cell.
_PIXEL_TIE_EPS = 1e-9


@dataclass(frozen=True)
class GridSpec:
    """Square pixel grid over the workspace: column <-> x, row <-> y."""

    x_min: float
    x_max: float
    y_min: float
    y_max: float
    size: int

    def __post_init__(self):
        if self.size <= 0:
            raise InvalidInputError(f"grid size must be positive, got {self.size}")
        w = self.x_max - self.x_min
        h = self.y_max - self.y_min
        if w <= 0 or h <= 0:
            raise InvalidInputError("workspace bounds are empty")
        if abs(w - h) > GEOM_EPS:
            raise InvalidInputError(f"workspace must be square, got {w} x {h}")

    @property
    def pitch(self) -> float:
        return (self.x_max - self.x_min) / self.size

    def world_to_pixel(self, x: float, y: float) -> tuple[int, int]:
        """Containing (row, col) of a workspace point; boundary ties go to the
        larger index. Raises :class:`OutOfWorkspaceError` outside the bounds."""
        if not (
            self.x_min - GEOM_EPS <= x <= self.x_max + GEOM_EPS
            and self.y_min - GEOM_EPS <= y <= self.y_max + GEOM_EPS
        ):
            raise OutOfWorkspaceError(f"({x}, {y}) outside workspace")
        col = int(math.floor((x - self.x_min) / self.pitch + _PIXEL_TIE_EPS))
        row = int(math.floor((y - self.y_min) / self.pitch + _PIXEL_TIE_EPS))
        return (min(row, self.size - 1), min(col, self.size - 1))

    def pixel_to_world(self, row: int, col: int) -> tuple[float, float]:
        """Center point of pixel (row, col)."""
        x = self.x_min + (col + 0.5) * self.pitch
        y = self.y_min + (row + 0.5) * self.pitch
        return (x, y)

    def x_centers(self) -> np.ndarray:
        return self.x_min + (np.arange(self.size) + 0.5) * self.pitch

    def y_centers(self) -> np.ndarray:
        return self.y_min + (np.arange(self.size) + 0.5) * self.pitch

    def world_to_pixel_f(self, x: float, y: float) -> tuple[float, float]:
        """Continuous (row, col) coordinates; integers fall on pixel centers."""
        return (
            (y - self.y_min) / self.pitch - 0.5,
            (x - self.x_min) / self.pitch - 0.5,
        )
