"""Observation pipeline: workspace heightmap, in-hand crop, PNG export.

The heightmap point-samples the analytic world height at every pixel center
(no supersampling), so each cell agrees exactly with ``geometry.height_at``
and rendering stays deterministic. The in-hand image is a crop of the
*previous* heightmap centered at the pick position, rotated so the grasp axis
is canonical, and zeroed after any place.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from PIL import Image

from .errors import BenchtopError
from .geometry import GridSpec, raster_top
from .world import WorldState


@dataclass(frozen=True)
class Heightmap:
    data: np.ndarray  # (size, size) float32, row <-> y, col <-> x
    grid: GridSpec


@dataclass(frozen=True)
class Observation:
    """The agent-facing state tuple: heightmap, in-hand image, gripper flag."""

    heightmap: np.ndarray  # (obs, obs) float32
    in_hand: np.ndarray  # (in, in) float32
    holding: bool


def render_heightmap(world: WorldState, grid: GridSpec) -> Heightmap:
    """Rasterize max top heights at pixel centers; held object excluded."""
    canvas = np.zeros((grid.size, grid.size), dtype=np.float64)
    xs = grid.x_centers()
    ys = grid.y_centers()
    pitch = grid.pitch
    for obj in world.active_objects():
        x0, y0, x1, y1 = obj.world_aabb()
        c0 = max(0, int(math.floor((x0 - grid.x_min) / pitch)) - 1)
        c1 = min(grid.size, int(math.ceil((x1 - grid.x_min) / pitch)) + 1)
        r0 = max(0, int(math.floor((y0 - grid.y_min) / pitch)) - 1)
        r1 = min(grid.size, int(math.ceil((y1 - grid.y_min) / pitch)) + 1)
        if c0 >= c1 or r0 >= r1:
            continue
        tops = raster_top(obj.shape, obj.pose, xs[None, c0:c1], ys[r0:r1][:, None])
        window = canvas[r0:r1, c0:c1]
        np.fmax(window, tops, out=window)
    return Heightmap(canvas.astype(np.float32), grid)


def render_in_hand(
    prev: Heightmap, x: float, y: float, theta: float, in_hand_size: int
) -> np.ndarray:
    """Crop of the previous heightmap centered at the pick position, rotated
    by -theta, bilinear-sampled; columns outside the workspace read 0."""
    row_c, col_c = prev.grid.world_to_pixel_f(x, y)
    n = in_hand_size
    offs = np.arange(n) - (n - 1) / 2.0
    du, dv = np.meshgrid(offs, offs)  # du along columns (x), dv along rows (y)
    c = math.cos(theta)
    s = math.sin(theta)
    src_col = col_c + c * du - s * dv
    src_row = row_c + s * du + c * dv
    return _bilinear(prev.data, src_row, src_col)


def _bilinear(img: np.ndarray, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
    h, w = img.shape
    r0 = np.floor(rows).astype(int)
    c0 = np.floor(cols).astype(int)
    fr = (rows - r0).astype(np.float32)
    fc = (cols - c0).astype(np.float32)

    def at(r, c):
        valid = (r >= 0) & (r < h) & (c >= 0) & (c < w)
        out = np.zeros(r.shape, dtype=np.float32)
        out[valid] = img[r[valid], c[valid]]
        return out

    top = at(r0, c0) * (1 - fc) + at(r0, c0 + 1) * fc
    bot = at(r0 + 1, c0) * (1 - fc) + at(r0 + 1, c0 + 1) * fc
    return (top * (1 - fr) + bot * fr).astype(np.float32)


def zero_in_hand(in_hand_size: int) -> np.ndarray:
    return np.zeros((in_hand_size, in_hand_size), dtype=np.float32)


def export_image(data: np.ndarray, path, z_max: float = 1.0) -> None:
    """Write a height grid as a 16-bit grayscale PNG.

    Values map linearly: pixel = round(height / z_max * 65535). The round
    trip through :func:`import_image` is lossless up to one quantization step
    (z_max / 65535).
    """
    scaled = np.round(np.asarray(data, dtype=np.float64) / z_max * 65535.0)
    pixels = np.clip(scaled, 0, 65535).astype(np.uint16)
    try:
        Image.fromarray(pixels).save(path, format="PNG")
    except OSError as exc:
        raise BenchtopError(f"failed to write image {path}: {exc}") from exc


def import_image(path, z_max: float = 1.0) -> np.ndarray:
    """Inverse of :func:`export_image` (up to quantization)."""
    try:
        with Image.open(path) as img:
            pixels = np.asarray(img, dtype=np.float64)
    except OSError as exc:
        raise BenchtopError(f"failed to read image {path}: {exc}") from exc
    return (pixels / 65535.0 * z_max).astype(np.float32)
