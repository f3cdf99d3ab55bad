"""Box palletizing: stack boxes onto a pallet in an interlocking 2x3 pattern.

Each layer holds six boxes in a 2x3 grid; consecutive layers are rotated 90
degrees so the pattern interlocks. A box placed within tolerance of an
unfilled slot of the current (lowest incomplete) layer fills it, and a new
box spawns at a random free pose until all N boxes have appeared.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from ..config import EnvConfig
from ..geometry import Cuboid, Pose, Slab, normalize_yaw
from ..world import MIN_SEPARATION, Category, SimObject, StepOutcome, WorldState
from .base import (
    LayoutRetry,
    TaskSpec,
    draw_scale,
    register_task,
    sample_free_pose,
    scaled,
    yaw_sampler_for,
)

PALLET = Slab(0.232, 0.192, 0.03)
BOX = Cuboid(0.072, 0.045, 0.045)

SLOT_POS_TOL = 0.01
SLOT_YAW_TOL = math.radians(10.0)
SLOT_Z_TOL = 0.005
BOXES_PER_LAYER = 6


@dataclass(frozen=True)
class Slot:
    """Box target in the pallet's local frame."""

    x: float
    y: float
    yaw: float
    layer: int


@dataclass
class PalletState:
    pallet_id: int
    box_shape: Cuboid
    slots: tuple[Slot, ...]
    filled: list[bool]
    random_orientation: bool = True
    assigned: dict[int, int] = field(default_factory=dict)  # slot index -> box id
    spawned: int = 1

    @property
    def next_slot(self) -> int:
        return sum(self.filled)


def build_slots(box: Cuboid, n_boxes: int) -> tuple[Slot, ...]:
    """Interlocking slot table: even layers run the boxes along local y,
    odd layers along local x."""
    slots = []
    for layer in range(n_boxes // BOXES_PER_LAYER):
        if layer % 2 == 0:
            xs = (-box.ly, 0.0, box.ly)
            ys = (-box.lx / 2.0, box.lx / 2.0)
            yaw = math.pi / 2.0
            grid = [(x, y) for x in xs for y in ys]
        else:
            xs = (-box.lx / 2.0, box.lx / 2.0)
            ys = (-box.ly, 0.0, box.ly)
            yaw = 0.0
            grid = [(x, y) for x in xs for y in ys]
        for x, y in grid:
            slots.append(Slot(x, y, yaw, layer))
    return tuple(slots)


def slot_world_pose(state: PalletState, world: WorldState, index: int) -> Pose:
    pallet = world.object_by_id(state.pallet_id)
    slot = state.slots[index]
    c = math.cos(pallet.pose.yaw)
    s = math.sin(pallet.pose.yaw)
    x = pallet.pose.x + c * slot.x - s * slot.y
    y = pallet.pose.y + s * slot.x + c * slot.y
    base = pallet.top + slot.layer * state.box_shape.lz
    return Pose(x, y, base + state.box_shape.lz / 2.0, normalize_yaw(pallet.pose.yaw + slot.yaw))


def spawn_box(world: WorldState, state: PalletState) -> SimObject:
    rng = world.rng
    if state.random_orientation:
        yaw = lambda: float(rng.uniform(0.0, 2.0 * math.pi))  # noqa: E731
    else:
        yaw = lambda: 0.0  # noqa: E731
    pose = sample_free_pose(
        world, state.box_shape, rng, yaw_sampler=yaw, clearance=MIN_SEPARATION
    )
    state.spawned += 1
    return world.add_object(state.box_shape, pose, Category.BOX)


def init_box_palletizing(world: WorldState, config: EnvConfig) -> PalletState:
    if config.num_objects % BOXES_PER_LAYER != 0:
        raise LayoutRetry  # unreachable: resolve_config restricts counts
    rng = world.rng
    s = draw_scale(config, rng)
    box = scaled(BOX, s)
    pallet_shape = PALLET
    yaw = yaw_sampler_for(config, rng)
    pallet_pose = sample_free_pose(
        world, pallet_shape, rng, yaw_sampler=yaw, inset_extra=0.005
    )
    pallet = world.add_object(pallet_shape, pallet_pose, Category.PALLET, movable=False)
    state = PalletState(
        pallet_id=pallet.id,
        box_shape=box,
        slots=build_slots(box, config.num_objects),
        filled=[False] * config.num_objects,
        random_orientation=config.random_orientation,
        spawned=0,
    )
    spawn_box(world, state)
    return state


def _yaw_close(a: float, b: float, tol: float) -> bool:
    d = math.fmod(a - b, math.pi)
    if d < 0:
        d += math.pi
    return min(d, math.pi - d) <= tol


def on_step_palletizing(
    world: WorldState, state: PalletState, outcome: StepOutcome
) -> PalletState:
    layers_remaining = [s.layer for i, s in enumerate(state.slots) if not state.filled[i]]
    if not layers_remaining:
        return state
    current_layer = min(layers_remaining)
    held = world.gripper.holding_id
    loose = [
        o
        for o in world.objects
        if o.category is Category.BOX
        and o.in_play
        and o.id != held
        and o.id not in state.assigned.values()
    ]
    filled_now = False
    for i, slot in enumerate(state.slots):
        if state.filled[i] or slot.layer != current_layer:
            continue
        target = slot_world_pose(state, world, i)
        for box in sorted(loose, key=lambda o: o.id):
            if (
                math.hypot(box.pose.x - target.x, box.pose.y - target.y) <= SLOT_POS_TOL
                and _yaw_close(box.pose.yaw, target.yaw, SLOT_YAW_TOL)
                and abs(box.base - (target.z - state.box_shape.lz / 2.0)) <= SLOT_Z_TOL
            ):
                state.filled[i] = True
                state.assigned[i] = box.id
                loose.remove(box)
                filled_now = True
                break
    if filled_now and state.spawned < len(state.slots):
        spawn_box(world, state)
    return state


def goal_box_palletizing(world: WorldState, state: PalletState) -> bool:
    return state.next_slot == len(state.slots)


register_task(
    TaskSpec(
        name="box_palletizing",
        num_objects=18,
        optimal_steps=36,
        max_steps=40,
        initializer=init_box_palletizing,
        goal=goal_box_palletizing,
        on_step=on_step_palletizing,
        allowed_object_counts=(6, 12, 18),
    )
)
