"""Single-environment episode engine: seeding, stepping, observations.

An :class:`Environment` owns one world at a time. ``reset`` draws the episode
world from a per-episode random stream derived from (env seed, episode
index), so episode k of env seed s is the same world no matter how many
episodes ran before or on which worker. Vectorized batching and auto-reset
live in :mod:`benchtop.runner`.
"""

from __future__ import annotations

import math

import numpy as np

from .config import EnvConfig
from .errors import ActionFormatError, PlannerStuckError, RunnerUsageError
from .geometry import GridSpec
from .render import Heightmap, Observation, render_heightmap, render_in_hand, zero_in_hand
from .tasks import TaskSpec, get_task, init_episode
from .world import Action, Primitive, StepOutcome, WorldState, compute_z
from .world import step as world_step

SeedLike = int | tuple[int, ...]


def parse_action(action, sequence: str) -> tuple[Primitive | None, float, float, float | None, float]:
    """Decode an action as (primitive, x, y, z, theta).

    Accepts either the canonical 5-vector (p, x, y, z, r) with NaN in unused
    slots, or a compact vector with one entry per ``sequence`` character.
    Canonical fields outside the action sequence are ignored.
    """
    arr = np.asarray(action, dtype=np.float64).ravel()
    if arr.shape[0] == 5:
        values = dict(zip("pxyzr", arr))
    elif arr.shape[0] == len(sequence):
        values = dict(zip(sequence, arr))
    else:
        raise ActionFormatError(
            f"action has {arr.shape[0]} entries; expected 5 (canonical) or "
            f"{len(sequence)} for action_sequence {sequence!r}"
        )
    values = {k: v for k, v in values.items() if k in sequence}
    x = values.get("x", math.nan)
    y = values.get("y", math.nan)
    if not (math.isfinite(x) and math.isfinite(y)):
        raise ActionFormatError(f"action x/y must be finite, got ({x}, {y})")
    p = values.get("p", math.nan)
    primitive = None
    if not math.isnan(p):
        code = int(round(p))
        if code not in (0, 1):
            raise ActionFormatError(f"primitive code must be 0 (pick) or 1 (place), got {p}")
        primitive = Primitive(code)
    z = values.get("z", math.nan)
    r = values.get("r", math.nan)
    return (
        primitive,
        float(x),
        float(y),
        None if math.isnan(z) else float(z),
        0.0 if math.isnan(r) else float(r),
    )


class Environment:
    """One seeded task environment with the s = (I, H, g) observation."""

    def __init__(self, task: str | TaskSpec, config: EnvConfig | None = None, seed: SeedLike = 0):
        self.task = get_task(task) if isinstance(task, str) else task
        base = (config if config is not None else EnvConfig()).validate()
        self.config = self.task.resolve_config(base)
        self.seed = seed
        bounds = self.config.bounds()
        self.grid = GridSpec(
            bounds.x_min, bounds.x_max, bounds.y_min, bounds.y_max, self.config.obs_size
        )
        self.episode_index = -1
        self.world: WorldState | None = None
        self.task_state = None
        self.planner_rng = np.random.default_rng(0)
        self.last_action: Action | None = None
        self.last_outcome: StepOutcome | None = None
        self._prev_heightmap: Heightmap | None = None
        self._in_hand = zero_in_hand(self.config.in_hand_size)
        self._done = True

    # -- episode lifecycle --------------------------------------------------

    def reset(self) -> Observation:
        """Start the next episode of this environment's seed stream."""
        self.episode_index += 1
        rng = np.random.default_rng(
            np.random.SeedSequence(entropy=self.seed, spawn_key=(self.episode_index,))
        )
        world, task_state = init_episode(self.task, self.config, rng)
        self.planner_rng = np.random.default_rng(
            np.random.SeedSequence(entropy=self.seed, spawn_key=(self.episode_index, 1))
        )
        return self._begin(world, task_state)

    def reset_from_world(self, world: WorldState, task_state=None) -> Observation:
        """Adopt a prepared world as a fresh episode (used by planners and
        trajectory replay)."""
        world.step_count = 0
        return self._begin(world, task_state)

    def _begin(self, world: WorldState, task_state) -> Observation:
        self.world = world
        self.task_state = task_state
        self.last_action = None
        self.last_outcome = None
        self._prev_heightmap = render_heightmap(world, self.grid)
        self._in_hand = zero_in_hand(self.config.in_hand_size)
        self._done = False
        return self.observation()

    @property
    def done(self) -> bool:
        return self._done

    def observation(self) -> Observation:
        if self.world is None or self._prev_heightmap is None:
            raise RunnerUsageError("reset the environment before observing")
        return Observation(
            heightmap=self._prev_heightmap.data,
            in_hand=self._in_hand,
            holding=self.world.gripper.holding,
        )

    # -- stepping -----------------------------------------------------------

    def step(self, action) -> tuple[Observation, float, bool]:
        if self.world is None:
            raise RunnerUsageError("step before reset")
        if self._done:
            raise RunnerUsageError("episode finished; reset before stepping")
        primitive, x, y, z, theta = parse_action(action, self.config.action_sequence)
        prev = self._prev_heightmap
        act, outcome = world_step(
            self.world,
            x,
            y,
            theta,
            z=z,
            primitive=primitive,
            half_rotation=self.config.half_rotation,
            workspace_check=self.config.workspace_check,
        )
        if self.task.on_step is not None:
            self.task_state = self.task.on_step(self.world, self.task_state, outcome)
        goal = self.task.goal(self.world, self.task_state)
        reward = 1.0 if goal else 0.0
        done = goal or self.world.step_count >= self.config.max_steps

        self._prev_heightmap = render_heightmap(self.world, self.grid)
        if act.primitive is Primitive.PICK and self.world.gripper.holding:
            self._in_hand = render_in_hand(
                prev, act.x, act.y, act.theta, self.config.in_hand_size
            )
        else:
            self._in_hand = zero_in_hand(self.config.in_hand_size)
        self.last_action = act
        self.last_outcome = outcome
        self._done = done
        return self.observation(), reward, done

    # -- expert interface ---------------------------------------------------

    def get_next_action(self) -> np.ndarray:
        """Canonical 5-vector for the task's scripted expert."""
        from . import planners  # runtime import; planners drives Environment

        if self.world is None or self._done:
            raise RunnerUsageError("expert queried without an active episode")
        plan = planners.next_expert_action(
            self.task, self.world, self.task_state, self.config, self.planner_rng
        )
        if plan is None:
            raise PlannerStuckError(
                f"expert planner has no applicable action for {self.task.name!r}"
            )
        x, y, theta = plan
        return self.compose_action(x, y, theta)

    def compose_action(self, x: float, y: float, theta: float) -> np.ndarray:
        """Encode a waypoint as the canonical action vector, with NaN in the
        slots the configured action sequence does not use."""
        assert self.world is not None
        seq = self.config.action_sequence
        vec = np.full(5, np.nan, dtype=np.float32)
        effective = Primitive.PLACE if self.world.gripper.holding else Primitive.PICK
        if "p" in seq:
            vec[0] = float(effective.value)
        vec[1] = x
        vec[2] = y
        if "z" in seq:
            held = self.world.held_object()
            vec[3] = compute_z(
                self.world,
                *self.world.bounds.clip(x, y),
                effective,
                held_height=held.height if held is not None else None,
            )
        if "r" in seq:
            vec[4] = theta
        return vec
