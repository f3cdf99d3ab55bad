"""Framed binary protocol for driving environments from other processes.

Every frame is ``length:u32 | msg_type:u8 | payload`` with all integers and
floats little-endian; ``length`` counts payload bytes only and is capped at
64 MiB.

Requests:
    0x01 CONFIG   n:u16, task_len:u16, task:UTF-8, config text:UTF-8
    0x02 RESET
    0x03 STEP     n * f32[5] actions, ordered (p, x, y, z, r), NaN unused
    0x04 EXPERT
    0x05 CLOSE

Replies:
    0x80 ACK      UTF-8 payload (CONFIG: the resolved config text)
    0x81 OBS      n * [heightmap f32[obs^2] row-major, in-hand f32[in^2],
                  gripper u8, reward f32, done u8]
    0x82 ACTIONS  n * f32[5]
    0xFF ERROR    code:u16, UTF-8 message

Error codes: 0x0001 request out of session order, 0x0002 malformed frame
(the connection closes), 0x0003 action arity mismatch, 0x0004 unknown
message type, 0x0005 configuration or task failure.
"""

from __future__ import annotations

import struct

import numpy as np

from .errors import ProtocolError
from .render import Observation

MAX_PAYLOAD = 64 * 1024 * 1024

MSG_CONFIG = 0x01
MSG_RESET = 0x02
MSG_STEP = 0x03
MSG_EXPERT = 0x04
MSG_CLOSE = 0x05
MSG_ACK = 0x80
MSG_OBS = 0x81
MSG_ACTIONS = 0x82
MSG_ERROR = 0xFF

ERR_ORDER = 0x0001
ERR_MALFORMED = 0x0002
ERR_ARITY = 0x0003
ERR_UNKNOWN_TYPE = 0x0004
ERR_CONFIG = 0x0005


def pack_frame(msg_type: int, payload: bytes = b"") -> bytes:
    if len(payload) > MAX_PAYLOAD:
        raise ProtocolError(ERR_MALFORMED, f"payload of {len(payload)} bytes exceeds cap")
    return struct.pack("<IB", len(payload), msg_type) + payload


def read_frame(read_exact) -> tuple[int, bytes] | None:
    """Read one frame via ``read_exact(n) -> bytes`` (may return short/empty
    at EOF). Returns (msg_type, payload) or None at a clean end of stream."""
    header = read_exact(5)
    if not header:
        return None
    if len(header) != 5:
        raise ProtocolError(ERR_MALFORMED, "truncated frame header")
    length, msg_type = struct.unpack("<IB", header)
    if length > MAX_PAYLOAD:
        raise ProtocolError(ERR_MALFORMED, f"frame length {length} exceeds 64 MiB cap")
    payload = read_exact(length) if length else b""
    if len(payload) != length:
        raise ProtocolError(ERR_MALFORMED, "truncated frame payload")
    return msg_type, payload


def encode_config(n: int, task: str, config_text: str) -> bytes:
    task_b = task.encode("utf-8")
    return (
        struct.pack("<HH", n, len(task_b)) + task_b + config_text.encode("utf-8")
    )


def decode_config(payload: bytes) -> tuple[int, str, str]:
    if len(payload) < 4:
        raise ProtocolError(ERR_MALFORMED, "CONFIG payload too short")
    n, task_len = struct.unpack("<HH", payload[:4])
    if len(payload) < 4 + task_len:
        raise ProtocolError(ERR_MALFORMED, "CONFIG task name truncated")
    task = payload[4 : 4 + task_len].decode("utf-8")
    config_text = payload[4 + task_len :].decode("utf-8")
    return n, task, config_text


def encode_actions(actions: np.ndarray) -> bytes:
    arr = np.ascontiguousarray(actions, dtype="<f4")
    if arr.ndim != 2 or arr.shape[1] != 5:
        raise ProtocolError(ERR_MALFORMED, f"actions must be (n, 5), got {arr.shape}")
    return arr.tobytes()

def decode_actions(payload: bytes, n: int) -> np.ndarray:
    expected = n * 5 * 4
    if len(payload) != expected:
        raise ProtocolError(
            ERR_ARITY,
            f"STEP payload carries {len(payload) // 20} actions, session has {n} envs",
        )
    return np.frombuffer(payload, dtype="<f4").reshape(n, 5).copy()


def encode_observations(
    observations: list[Observation], rewards: np.ndarray, dones: np.ndarray
) -> bytes:
    parts = []
    for obs, reward, done in zip(observations, rewards, dones):
        parts.append(np.ascontiguousarray(obs.heightmap, dtype="<f4").tobytes())
        parts.append(np.ascontiguousarray(obs.in_hand, dtype="<f4").tobytes())
        parts.append(struct.pack("<B", 1 if obs.holding else 0))
        parts.append(struct.pack("<f", float(reward)))
        parts.append(struct.pack("<B", 1 if done else 0))
    return b"".join(parts)


def decode_observations(
    payload: bytes, n: int, obs_size: int, in_hand_size: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Returns (heightmaps, in_hands, grippers, rewards, dones) arrays."""
    per = 4 * (obs_size * obs_size + in_hand_size * in_hand_size) + 1 + 4 + 1
    if len(payload) != n * per:
        raise ProtocolError(
            ERR_MALFORMED,
            f"OBS payload is {len(payload)} bytes, expected {n * per}",
        )
    heightmaps = np.empty((n, obs_size, obs_size), dtype=np.float32)
    in_hands = np.empty((n, in_hand_size, in_hand_size), dtype=np.float32)
    grippers = np.empty(n, dtype=np.uint8)
    rewards = np.empty(n, dtype=np.float32)
    dones = np.empty(n, dtype=np.uint8)
    pos = 0
    hm_bytes = 4 * obs_size * obs_size
    ih_bytes = 4 * in_hand_size * in_hand_size
    for i in range(n):
        heightmaps[i] = np.frombuffer(
            payload[pos : pos + hm_bytes], dtype="<f4"
        ).reshape(obs_size, obs_size)
        pos += hm_bytes
        in_hands[i] = np.frombuffer(
            payload[pos : pos + ih_bytes], dtype="<f4"
        ).reshape(in_hand_size, in_hand_size)
        pos += ih_bytes
        grippers[i] = payload[pos]
        pos += 1
        rewards[i] = struct.unpack("<f", payload[pos : pos + 4])[0]
        pos += 4
        dones[i] = payload[pos]
        pos += 1
    return heightmaps, in_hands, grippers, rewards, dones


def encode_error(code: int, message: str) -> bytes:
    return struct.pack("<H", code) + message.encode("utf-8")


def decode_error(payload: bytes) -> tuple[int, str]:
    if len(payload) < 2:
        raise ProtocolError(ERR_MALFORMED, "ERROR payload too short")
    (code,) = struct.unpack("<H", payload[:2])
    return code, payload[2:].decode("utf-8", errors="replace")
