"""Vectorized environment runner: the factory entry point, batched stepping
with auto-reset, and optional process-based parallelism.

Each environment owns an independent seed stream (base seed + its index), so
results for a given seed are identical whether the batch runs in-process or
on worker processes; workers only change the wall-clock time. Workers ship
observations through a shared-memory block instead of pickling them, and
``step_expert`` fuses the expert query with the step into one round trip.
"""

from __future__ import annotations

import multiprocessing as mp
from dataclasses import dataclass
from multiprocessing import shared_memory

import numpy as np

from .config import EnvConfig
from .env import Environment
from .errors import ActionFormatError, RunnerUsageError
from .render import Observation

DEFAULT_PARALLEL_ENVS = 5


def create_envs(
    n: int = DEFAULT_PARALLEL_ENVS,
    task_name: str = "block_stacking",
    config: EnvConfig | None = None,
    workers: int = 0,
) -> "VectorEnv":
    """Create ``n`` independent environments of a registered task.

    Env i seeds its episode stream with ``config.seed + i``. ``workers`` > 0
    fans the environments out over that many worker processes.
    """
    return VectorEnv(n, task_name, config, workers=workers)


@dataclass
class BatchResult:
    observations: list[Observation]
    rewards: np.ndarray
    dones: np.ndarray


class VectorEnv:
    """A batch of independent environments behind one synchronous API.

    Finished episodes auto-reset on the step that ends them: the returned
    observation is the new episode's first observation, and the terminal one
    stays available in ``last_terminal_observations[i]``.
    """

    def __init__(
        self,
        n: int,
        task_name: str,
        config: EnvConfig | None = None,
        workers: int = 0,
    ):
        if n < 1:
            raise RunnerUsageError(f"need at least one environment, got {n}")
        from .tasks import get_task

        get_task(task_name)  # creation-time validation
        self.n = n
        self.config = (config if config is not None else EnvConfig()).validate()
        self.task_name = task_name
        self._started = False
        self.last_terminal_observations: list[Observation | None] = [None] * n
        self._workers: list[_WorkerHandle] = []
        self._envs: list[Environment] = []
        self._shm: shared_memory.SharedMemory | None = None
        if workers and workers > 1 and n > 1:
            count = min(workers, n)
            obs_floats = self.config.obs_size**2 + self.config.in_hand_size**2
            self._slot_floats = 2 * obs_floats  # live obs + terminal obs
            self._shm = shared_memory.SharedMemory(
                create=True, size=4 * n * self._slot_floats
            )
            ctx = mp.get_context("fork")
            slices = [list(range(w, n, count)) for w in range(count)]
            for idx in slices:
                self._workers.append(
                    _WorkerHandle(ctx, task_name, self.config, idx, self._shm.name)
                )
        else:
            self._envs = [
                Environment(task_name, self.config, seed=self.config.seed + i)
                for i in range(n)
            ]

    # -- batch API ----------------------------------------------------------

    def reset(self) -> list[Observation]:
        self._started = True
        if self._workers:
            metas = self._scatter("reset", None)
            return [self._read_obs(i, holding) for i, (holding,) in enumerate(metas)]
        return [env.reset() for env in self._envs]

    def step(self, actions) -> BatchResult:
        if not self._started:
            raise RunnerUsageError("step called before reset")
        batch = self._coerce_actions(actions)
        if self._workers:
            metas = self._scatter("step", batch)
            return self._assemble(metas)
        results = [self._step_one(env, batch[i]) for i, env in enumerate(self._envs)]
        return self._assemble_local(results)

    def get_next_action(self) -> np.ndarray:
        if not self._started:
            raise RunnerUsageError("get_next_action called before reset")
        if self._workers:
            rows = self._scatter("expert", None)
        else:
            rows = [env.get_next_action() for env in self._envs]
        return np.stack(rows).astype(np.float32)

    def step_expert(self) -> tuple[np.ndarray, BatchResult]:
        """Query the expert and step on it in one round trip per worker."""
        if not self._started:
            raise RunnerUsageError("step_expert called before reset")
        if self._workers:
            metas = self._scatter("expert_step", None)
            actions = np.stack([m[0] for m in metas]).astype(np.float32)
            return actions, self._assemble([m[1:] for m in metas])
        actions = np.stack([env.get_next_action() for env in self._envs])
        results = [
            self._step_one(env, actions[i]) for i, env in enumerate(self._envs)
        ]
        return actions.astype(np.float32), self._assemble_local(results)

    def close(self) -> None:
        for handle in self._workers:
            handle.close()
        self._workers = []
        self._envs = []
        self._started = False
        if self._shm is not None:
            self._shm.close()
            try:
                self._shm.unlink()
            except FileNotFoundError:
                pass
            self._shm = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def __del__(self):
        try:
            if getattr(self, "_shm", None) is not None or getattr(self, "_workers", None):
                self.close()
        except Exception:
            pass

    # -- helpers --------------------------------------------------------------

    def _coerce_actions(self, actions) -> np.ndarray:
        arr = np.asarray(actions, dtype=np.float64)
        if arr.ndim == 1 and self.n == 1:
            arr = arr[None, :]
        if arr.ndim != 2 or arr.shape[0] != self.n:
            raise ActionFormatError(f"expected {self.n} actions, got shape {arr.shape}")
        width = len(self.config.action_sequence)
        if arr.shape[1] not in (5, width):
            raise ActionFormatError(
                f"action rows must have 5 or {width} entries for "
                f"action_sequence {self.config.action_sequence!r}, got {arr.shape[1]}"
            )
        return arr

    @staticmethod
    def _step_one(env: Environment, action):
        obs, reward, done = env.step(action)
        terminal = None
        if done:
            terminal = obs
            obs = env.reset()
        return obs, reward, done, terminal

    def _assemble_local(self, results) -> BatchResult:
        observations = []
        rewards = np.zeros(self.n, dtype=np.float32)
        dones = np.zeros(self.n, dtype=bool)
        for i, (obs, reward, done, terminal) in enumerate(results):
            observations.append(obs)
            rewards[i] = reward
            dones[i] = done
            if terminal is not None:
                self.last_terminal_observations[i] = terminal
        return BatchResult(observations, rewards, dones)

    def _assemble(self, metas) -> BatchResult:
        observations = []
        rewards = np.zeros(self.n, dtype=np.float32)
        dones = np.zeros(self.n, dtype=bool)
        for i, (holding, reward, done, terminal_holding) in enumerate(metas):
            observations.append(self._read_obs(i, holding))
            rewards[i] = reward
            dones[i] = done
            if terminal_holding is not None:
                self.last_terminal_observations[i] = self._read_obs(
                    i, terminal_holding, terminal=True
                )
        return BatchResult(observations, rewards, dones)

    def _read_obs(self, index: int, holding: bool, terminal: bool = False) -> Observation:
        obs_n = self.config.obs_size**2
        in_n = self.config.in_hand_size**2
        base = index * self._slot_floats + (obs_n + in_n if terminal else 0)
        flat = np.frombuffer(self._shm.buf, dtype=np.float32)
        hm = flat[base : base + obs_n].reshape(
            self.config.obs_size, self.config.obs_size
        ).copy()
        ih = flat[base + obs_n : base + obs_n + in_n].reshape(
            self.config.in_hand_size, self.config.in_hand_size
        ).copy()
        del flat
        return Observation(heightmap=hm, in_hand=ih, holding=holding)

    def _scatter(self, cmd: str, batch):
        for handle in self._workers:
            payload = None if batch is None else batch[handle.indices]
            handle.send(cmd, payload)
        merged: list = [None] * self.n
        for handle in self._workers:
            for local, result in zip(handle.indices, handle.recv()):
                merged[local] = result
        return merged


def _worker_main(conn, task_name, config: EnvConfig, indices, shm_name):
    shm = shared_memory.SharedMemory(name=shm_name)
    obs_n = config.obs_size**2
    in_n = config.in_hand_size**2
    slot = 2 * (obs_n + in_n)
    envs = [Environment(task_name, config, seed=config.seed + i) for i in indices]

    def write_obs(index: int, obs: Observation, terminal: bool = False) -> None:
        # A short-lived view per write keeps no exported pointers alive, so
        # the segment can close cleanly on shutdown.
        flat = np.frombuffer(shm.buf, dtype=np.float32)
        base = index * slot + (obs_n + in_n if terminal else 0)
        flat[base : base + obs_n] = obs.heightmap.ravel()
        flat[base + obs_n : base + obs_n + in_n] = obs.in_hand.ravel()
        del flat

    def step_env(k: int, action):
        env = envs[k]
        obs, reward, done = env.step(action)
        terminal_holding = None
        if done:
            write_obs(indices[k], obs, terminal=True)
            terminal_holding = obs.holding
            obs = env.reset()
        write_obs(indices[k], obs)
        return (obs.holding, float(reward), bool(done), terminal_holding)

    try:
        while True:
            msg = conn.recv()
            if msg is None:
                break
            cmd, payload = msg
            try:
                if cmd == "reset":
                    out = []
                    for k, env in enumerate(envs):
                        obs = env.reset()
                        write_obs(indices[k], obs)
                        out.append((obs.holding,))
                elif cmd == "step":
                    out = [step_env(k, payload[k]) for k in range(len(envs))]
                elif cmd == "expert":
                    out = [env.get_next_action() for env in envs]
                elif cmd == "expert_step":
                    out = []
                    for k, env in enumerate(envs):
                        action = env.get_next_action()
                        out.append((action,) + step_env(k, action))
                else:
                    raise RuntimeError(f"unknown worker command {cmd!r}")
                conn.send(("ok", out))
            except Exception as exc:  # propagate to the caller
                conn.send(("error", exc))
    finally:
        shm.close()
        conn.close()


class _WorkerHandle:
    def __init__(self, ctx, task_name, config, indices, shm_name):
        self.indices = indices
        self._conn, child = ctx.Pipe()
        self._proc = ctx.Process(
            target=_worker_main,
            args=(child, task_name, config, indices, shm_name),
            daemon=True,
        )
        self._proc.start()
        child.close()

    def send(self, cmd: str, payload) -> None:
        self._conn.send((cmd, payload))

    def recv(self):
        status, out = self._conn.recv()
        if status == "error":
            raise out
        return out

    def close(self) -> None:
        try:
            self._conn.send(None)
            self._proc.join(timeout=2.0)
        except (BrokenPipeError, OSError):
            pass
        finally:
            if self._proc.is_alive():
                self._proc.terminate()
            self._conn.close()
