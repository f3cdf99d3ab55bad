"""Task registry, episode initialization, and shared layout helpers."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Any, Callable

import numpy as np

from ..config import EnvConfig
from ..errors import InitializationError, TaskRegistrationError, UnknownTaskError
from ..geometry import Pose, Shape, clearance_at_least, footprint_radius, shape_height
from ..world import (
    MIN_SEPARATION,
    Category,
    GripperState,
    SimObject,
    StepOutcome,
    WorldState,
    settle,
)

TaskState = Any  # task-specific phase data; None for structure tasks

Initializer = Callable[[WorldState, EnvConfig], TaskState]
GoalPredicate = Callable[[WorldState, TaskState], bool]
StepHook = Callable[[WorldState, TaskState, StepOutcome], TaskState]


@dataclass(frozen=True)
class TaskSpec:
    """A registered task: defaults, initializer, goal predicate, step hook."""

    name: str
    num_objects: int
    optimal_steps: int
    max_steps: int
    initializer: Initializer
    goal: GoalPredicate
    on_step: StepHook | None = None
    supports_deconstruction: bool = False
    # Object counts the task accepts via config overrides (None: fixed).
    allowed_object_counts: tuple[int, ...] | None = None

    def resolve_config(self, config: EnvConfig) -> EnvConfig:
        resolved = config.with_task_defaults(self.num_objects, self.max_steps)
        n = resolved.num_objects
        if n != self.num_objects:
            allowed = self.allowed_object_counts
            if allowed is None or n not in allowed:
                raise InitializationError(
                    f"task {self.name!r} does not support num_objects={n}"
                )
        return resolved


_REGISTRY: dict[str, TaskSpec] = {}


def register_task(spec: TaskSpec) -> TaskSpec:
    """Add a task to the registry; it becomes creatable by name everywhere."""
    if not spec.name or any(c.isspace() for c in spec.name):
        raise TaskRegistrationError(f"invalid task name {spec.name!r}")
    if spec.name in _REGISTRY:
        raise TaskRegistrationError(f"task {spec.name!r} is already registered")
    _REGISTRY[spec.name] = spec
    return spec


def unregister_task(name: str) -> None:
    _REGISTRY.pop(name, None)


def get_task(name: str) -> TaskSpec:
    try:
        return _REGISTRY[name]
    except KeyError:
        raise UnknownTaskError(
            f"unknown task {name!r}; registered: {', '.join(sorted(_REGISTRY))}"
        ) from None


def task_names() -> list[str]:
    return sorted(_REGISTRY)


class LayoutRetry(Exception):
    """Internal signal: the current rejection-sampling round failed."""


def sample_free_pose(
    world: WorldState,
    shape: Shape,
    rng: np.random.Generator,
    *,
    yaw_sampler: Callable[[], float],
    clearance: float = MIN_SEPARATION,
    others: list[SimObject] | None = None,
    inset_extra: float = 0.0,
    base_height: float = 0.0,
    tries: int = 150,
) -> Pose:
    """Rejection-sample a settled pose with the footprint clear of ``others``.

    The center is drawn uniformly from the workspace inset by the footprint
    radius (plus ``inset_extra``). Raises :class:`LayoutRetry` when the try
    budget runs out so the caller can reshuffle the whole layout.
    """
    bounds = world.bounds
    inset = footprint_radius(shape) + inset_extra
    x0, x1 = bounds.x_min + inset, bounds.x_max - inset
    y0, y1 = bounds.y_min + inset, bounds.y_max - inset
    if x0 >= x1 or y0 >= y1:
        raise LayoutRetry
    if others is None:
        others = world.active_objects()
    z = base_height + shape_height(shape) / 2.0
    for _ in range(tries):
        yaw = yaw_sampler()
        pose = Pose(rng.uniform(x0, x1), rng.uniform(y0, y1), z, yaw)
        if all(
            clearance_at_least(shape, pose, o.shape, o.pose, clearance)
            for o in others
        ):
            return pose
    raise LayoutRetry


def yaw_sampler_for(config: EnvConfig, rng: np.random.Generator) -> Callable[[], float]:
    if config.random_orientation:
        return lambda: float(rng.uniform(0.0, 2.0 * np.pi))
    return lambda: 0.0


def draw_scale(config: EnvConfig, rng: np.random.Generator) -> float:
    lo, hi = config.object_scale_range
    return float(rng.uniform(lo, hi))


def init_episode(
    task: TaskSpec, config: EnvConfig, rng: np.random.Generator
) -> tuple[WorldState, TaskState]:
    """Create an episode start state for ``task``.

    Fixtures go in first, then movable objects by rejection sampling; failed
    rounds clear the world and redraw from the same stream. After 1000 failed
    rounds the configuration is reported as infeasible.
    """
    config = task.resolve_config(config.validate())
    world = WorldState(
        bounds=config.bounds(),
        gripper=GripperState(max_open_width=config.gripper_width()),
        rng=rng,
    )
    for round_no in range(1000):
        world.objects.clear()
        world._next_id = 0
        world.gripper.holding_id = None
        world.gripper.grasp = None
        try:
            state = task.initializer(world, config)
        except LayoutRetry:
            continue
        settle(world)
        return world, state
    raise InitializationError(
        f"initialization infeasible for task {task.name!r} after 1000 rounds "
        f"(num_objects={config.num_objects}, workspace={config.workspace})"
    )


def scaled(shape: Shape, s: float) -> Shape:
    """Uniformly scale a shape's dimensions."""
    if s == 1.0:
        return shape
    kwargs = {}
    for name in ("lx", "ly", "lz", "radius", "height", "wall", "cavity_depth"):
        if hasattr(shape, name):
            kwargs[name] = getattr(shape, name) * s
    if hasattr(shape, "footprint"):
        kwargs["footprint"] = tuple(
            (vx * s, vy * s) for vx, vy in shape.footprint
        )
    return replace(shape, **kwargs)
