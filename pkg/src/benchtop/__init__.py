"""benchtop: a deterministic desk-scale pick-and-place manipulation benchmark.

Typical use mirrors the usual agent-environment loop::

    from benchtop import create_envs

    envs = create_envs(1, "block_stacking")
    obs = envs.reset()
    while True:
        action = envs.get_next_action()        # scripted expert
        result = envs.step(action)
        if result.dones[0]:
            break
    envs.close()
"""

from .config import EnvConfig
from .env import Environment
from .planners import decon_generate, generate_demos, waypoint_rollout
from .render import Observation
from .runner import VectorEnv, create_envs
from .tasks import TaskSpec, get_task, register_task, task_names

__all__ = [
    "EnvConfig",
    "Environment",
    "Observation",
    "TaskSpec",
    "VectorEnv",
    "create_envs",
    "decon_generate",
    "generate_demos",
    "get_task",
    "register_task",
    "task_names",
    "waypoint_rollout",
]

__version__ = "0.1.0"
