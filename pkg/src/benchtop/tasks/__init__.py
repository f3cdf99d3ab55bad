"""Task registry and the built-in task suite.

Importing this package registers all eleven built-in tasks; new tasks are
added with :func:`register_task` and then become creatable by name through
the environment factory exactly like the built-ins.
"""

from .base import (
    TaskSpec,
    TaskState,
    get_task,
    init_episode,
    register_task,
    task_names,
    unregister_task,
)
from . import structures, packing, palletizing, covid  # noqa: F401  (registers built-ins)

__all__ = [
    "TaskSpec",
    "TaskState",
    "get_task",
    "init_episode",
    "register_task",
    "task_names",
    "unregister_task",
]
