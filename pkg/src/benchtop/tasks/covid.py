"""Covid test supervision: present swab/tube pairs to the test area, the
simulated user performs the test, then collect the used tube.

Three flat pads sit adjacent in a row (new-tube pad, test area, used-tube
pad); three swabs and three tubes start on the new-tube pad. When one swab
and one tube both rest in the test area, the simulated user consumes the
swab, converts the tube to a used tube, and drops it at a random pose in the
area. A round completes when the used tube rests on the used-tube pad; an
episode runs three rounds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from ..config import EnvConfig
from ..geometry import Cuboid, Pose, Slab, footprint_contains, normalize_yaw
from ..world import Category, SimObject, StepOutcome, WorldState
from .base import LayoutRetry, TaskSpec, draw_scale, register_task, scaled

PAD = Slab(0.12, 0.12, 0.005)
SWAB = Cuboid(0.07, 0.01, 0.01)
TUBE = Cuboid(0.08, 0.017, 0.017)

PAD_GAP = 0.005  # clear gap between adjacent pads
ROUNDS = 3
REST_TOL = 1e-3

PHASE_PRESENT_SWAB = "PRESENT_SWAB"
PHASE_PRESENT_TUBE = "PRESENT_TUBE"
PHASE_WAIT_USER = "WAIT_USER"  # transient: the user acts within the same step
PHASE_COLLECT = "COLLECT"


@dataclass
class CovidState:
    new_pad_id: int
    area_id: int
    used_pad_id: int
    round: int = 1
    phase: str = PHASE_PRESENT_SWAB
    random_orientation: bool = True


def resting_on_pad(obj: SimObject, pad: SimObject) -> bool:
    return (
        footprint_contains(pad.shape, pad.pose, obj.pose.x, obj.pose.y)
        and abs(obj.base - pad.top) <= REST_TOL
    )


def _items_on(world: WorldState, category: Category, pad: SimObject) -> list[SimObject]:
    held = world.gripper.holding_id
    return sorted(
        (
            o
            for o in world.objects
            if o.category is category
            and o.in_play
            and o.id != held
            and resting_on_pad(o, pad)
        ),
        key=lambda o: o.id,
    )


def init_covid_test(world: WorldState, config: EnvConfig) -> CovidState:
    rng = world.rng
    s = draw_scale(config, rng)
    swab = scaled(SWAB, s)
    tube = scaled(TUBE, s)

    # Three pads in a row; the row direction and the pad order are random.
    pitch = PAD.lx + PAD_GAP
    phi = float(rng.uniform(0.0, 2.0 * math.pi)) if config.random_orientation else 0.0
    order = list(rng.permutation(3))
    c, si = math.cos(phi), math.sin(phi)
    half_len = pitch + PAD.lx / 2.0
    hx = half_len * abs(c) + (PAD.ly / 2.0) * abs(si)
    hy = half_len * abs(si) + (PAD.ly / 2.0) * abs(c)
    bounds = world.bounds
    x0, x1 = bounds.x_min + hx + 0.005, bounds.x_max - hx - 0.005
    y0, y1 = bounds.y_min + hy + 0.005, bounds.y_max - hy - 0.005
    if x0 >= x1 or y0 >= y1:
        raise LayoutRetry
    cx = float(rng.uniform(x0, x1))
    cy = float(rng.uniform(y0, y1))

    pads = []
    for k in range(3):
        offset = (k - 1) * pitch
        pose = Pose(cx + offset * c, cy + offset * si, PAD.lz / 2.0, phi)
        pads.append(world.add_object(PAD, pose, Category.CONTAINER, movable=False))
    new_pad = pads[order.index(0)]
    area = pads[order.index(1)]
    used_pad = pads[order.index(2)]

    # Six parallel lanes on the new-tube pad: three swabs, then three tubes.
    lanes = (-0.05, -0.03, -0.01, 0.01, 0.03, 0.05)
    for i, lane in enumerate(lanes):
        shape = swab if i < 3 else tube
        category = Category.SWAB if i < 3 else Category.TUBE
        jitter = float(rng.uniform(-0.01, 0.01))
        lx, ly = jitter, lane
        px = new_pad.pose.x + c * lx - si * ly
        py = new_pad.pose.y + si * lx + c * ly
        z = new_pad.top + shape.lz / 2.0
        world.add_object(shape, Pose(px, py, z, phi), category)

    return CovidState(
        new_pad_id=new_pad.id,
        area_id=area.id,
        used_pad_id=used_pad.id,
        random_orientation=config.random_orientation,
    )


def on_step_covid(world: WorldState, state: CovidState, outcome: StepOutcome) -> CovidState:
    area = world.object_by_id(state.area_id)
    used_pad = world.object_by_id(state.used_pad_id)

    swabs_in_area = _items_on(world, Category.SWAB, area)
    tubes_in_area = _items_on(world, Category.TUBE, area)
    if swabs_in_area and tubes_in_area:
        # The user takes the swab, performs the test, and leaves the used
        # tube at a random pose in the test area.
        swab = swabs_in_area[0]
        tube = tubes_in_area[0]
        world.remove_object(swab.id)
        rng = world.rng
        lx = float(rng.uniform(-0.015, 0.015))
        ly = float(rng.uniform(-0.015, 0.015))
        yaw = (
            float(rng.uniform(0.0, 2.0 * math.pi))
            if state.random_orientation
            else area.pose.yaw
        )
        c = math.cos(area.pose.yaw)
        s = math.sin(area.pose.yaw)
        tube.category = Category.USED_TUBE
        tube.pose = Pose(
            area.pose.x + c * lx - s * ly,
            area.pose.y + s * lx + c * ly,
            area.top + tube.height / 2.0,
            normalize_yaw(yaw),
        )

    collected = _items_on(world, Category.USED_TUBE, used_pad)
    held = world.gripper.holding_id
    loose_used = [
        o
        for o in world.objects
        if o.category is Category.USED_TUBE
        and o.in_play
        and (o.id == held or not resting_on_pad(o, used_pad))
    ]
    if loose_used:
        state.phase = PHASE_COLLECT
    elif _items_on(world, Category.SWAB, area):
        state.phase = PHASE_PRESENT_TUBE
    else:
        state.phase = PHASE_PRESENT_SWAB
    state.round = min(len(collected) + 1, ROUNDS)
    return state


def goal_covid_test(world: WorldState, state: CovidState) -> bool:
    used_pad = world.object_by_id(state.used_pad_id)
    return len(_items_on(world, Category.USED_TUBE, used_pad)) == ROUNDS


register_task(
    TaskSpec(
        name="covid_test",
        num_objects=6,
        optimal_steps=18,
        max_steps=30,
        initializer=init_covid_test,
        goal=goal_covid_test,
        on_step=on_step_covid,
    )
)
