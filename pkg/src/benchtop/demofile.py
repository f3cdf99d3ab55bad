"""Binary demonstration files.

Little-endian layout:

* magic ``BARM`` (4 bytes), version u16 = 1
* config-text length u32, then the UTF-8 key=value config document
* episode count u32
* per episode: transition count u32
* per transition: heightmap f32[obs^2] row-major, in-hand f32[in^2],
  gripper u8 (0 empty / 1 holding), action f32[5] ordered (p, x, y, z, r)
  with NaN in slots the action sequence does not use, reward f32, done u8.

Writes stream episode by episode; loads verify magic/version and report the
byte offset of any truncation or corruption.
"""

from __future__ import annotations

import struct
from typing import BinaryIO, Iterable

import numpy as np

from .config import EnvConfig, config_from_text, config_to_text
from .errors import DemoFormatError
from .planners import ExpertTrajectory, Transition

MAGIC = b"BARM"
VERSION = 1


def transition_nbytes(obs_size: int, in_hand_size: int) -> int:
    return 4 * (obs_size * obs_size + in_hand_size * in_hand_size) + 1 + 20 + 4 + 1


def save_demos(trajs: Iterable[ExpertTrajectory], path, config: EnvConfig) -> int:
    """Write trajectories to ``path``; returns the episode count."""
    trajs = list(trajs)
    config_text = config_to_text(config).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<H", VERSION))
        fh.write(struct.pack("<I", len(config_text)))
        fh.write(config_text)
        fh.write(struct.pack("<I", len(trajs)))
        for traj in trajs:
            fh.write(struct.pack("<I", len(traj.transitions)))
            for t in traj.transitions:
                _write_transition(fh, t)
    return len(trajs)


def _write_transition(fh: BinaryIO, t: Transition) -> None:
    hm = np.ascontiguousarray(t.heightmap, dtype="<f4")
    ih = np.ascontiguousarray(t.in_hand, dtype="<f4")
    fh.write(hm.tobytes())
    fh.write(ih.tobytes())
    fh.write(struct.pack("<B", 1 if t.holding else 0))
    fh.write(np.ascontiguousarray(t.action, dtype="<f4").tobytes())
    fh.write(struct.pack("<f", t.reward))
    fh.write(struct.pack("<B", 1 if t.done else 0))


class _Reader:
    def __init__(self, fh: BinaryIO):
        self.fh = fh
        self.offset = 0

    def read(self, n: int, what: str) -> bytes:
        data = self.fh.read(n)
        if len(data) != n:
            raise DemoFormatError(
                f"truncated demo file while reading {what}", self.offset + len(data)
            )
        self.offset += n
        return data

    def u8(self, what: str) -> int:
        return self.read(1, what)[0]

    def u16(self, what: str) -> int:
        return struct.unpack("<H", self.read(2, what))[0]

    def u32(self, what: str) -> int:
        return struct.unpack("<I", self.read(4, what))[0]

    def f32(self, what: str) -> float:
        return struct.unpack("<f", self.read(4, what))[0]


def load_demos(path) -> tuple[EnvConfig, list[list[Transition]]]:
    """Read a demo file back; inverse of :func:`save_demos`."""
    with open(path, "rb") as fh:
        r = _Reader(fh)
        magic = r.read(4, "magic")
        if magic != MAGIC:
            raise DemoFormatError(f"bad magic {magic!r}, expected {MAGIC!r}", 0)
        version = r.u16("version")
        if version != VERSION:
            raise DemoFormatError(f"unsupported version {version}", 4)
        config_len = r.u32("config length")
        config_text = r.read(config_len, "config text").decode("utf-8")
        config = config_from_text(config_text)
        obs, inh = config.obs_size, config.in_hand_size
        episodes = []
        n_episodes = r.u32("episode count")
        for _ in range(n_episodes):
            n_transitions = r.u32("transition count")
            transitions = []
            for _ in range(n_transitions):
                hm = np.frombuffer(
                    r.read(4 * obs * obs, "heightmap"), dtype="<f4"
                ).reshape(obs, obs)
                ih = np.frombuffer(
                    r.read(4 * inh * inh, "in-hand image"), dtype="<f4"
                ).reshape(inh, inh)
                holding = r.u8("gripper flag")
                action = np.frombuffer(r.read(20, "action"), dtype="<f4").copy()
                reward = r.f32("reward")
                done = r.u8("done flag")
                transitions.append(
                    Transition(
                        heightmap=hm.copy(),
                        in_hand=ih.copy(),
                        holding=bool(holding),
                        action=action,
                        reward=reward,
                        done=bool(done),
                    )
                )
            episodes.append(transitions)
        trailing = fh.read(1)
        if trailing:
            raise DemoFormatError("trailing bytes after final episode", r.offset)
    return config, episodes
