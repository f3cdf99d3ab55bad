"""Environment configuration: defaults, validation, and the key=value codec
shared by the CLI, the demo-file header, and the wire protocol."""

from __future__ import annotations

from dataclasses import dataclass, fields, replace

from .errors import ConfigError
from .world import ROBOT_OPEN_WIDTHS, Workspace

_SEQUENCE_ORDER = "pxyzr"
WORKSPACE_CHECKS = ("point", "bounding_box")

DEFAULT_WORKSPACE = ((0.25, 0.65), (-0.2, 0.2), (0.0, 1.0))


@dataclass(frozen=True)
class EnvConfig:
    """Configurable environment parameters.

    ``num_objects`` and ``max_steps`` default to the task's own values when
    left unset. ``fast_mode`` and ``render`` are accepted for compatibility:
    this kernel has no arm motion to skip and no GUI; image export lives in
    the CLI ``render`` command.
    """

    robot: str = "kuka"
    action_sequence: str = "pxyr"
    workspace: tuple[tuple[float, float], ...] = DEFAULT_WORKSPACE
    object_scale_range: tuple[float, float] = (1.0, 1.0)
    max_steps: int | None = None
    num_objects: int | None = None
    obs_size: int = 128
    in_hand_size: int = 24
    fast_mode: bool = True
    render: bool = False
    random_orientation: bool = True
    half_rotation: bool = True
    workspace_check: str = "point"
    seed: int = 0

    def validate(self) -> "EnvConfig":
        if self.robot not in ROBOT_OPEN_WIDTHS:
            raise ConfigError(
                f"unknown robot {self.robot!r}; expected one of "
                f"{sorted(ROBOT_OPEN_WIDTHS)}",
                key="robot",
            )
        seq = self.action_sequence
        if (
            not seq
            or len(set(seq)) != len(seq)
            or any(ch not in _SEQUENCE_ORDER for ch in seq)
            or sorted(seq, key=_SEQUENCE_ORDER.index) != list(seq)
            or "x" not in seq
            or "y" not in seq
        ):
            raise ConfigError(
                f"invalid action_sequence {seq!r}: must be an ordered subset "
                f"of 'pxyzr' containing x and y",
                key="action_sequence",
            )
        if len(self.workspace) != 3 or any(len(r) != 2 for r in self.workspace):
            raise ConfigError("workspace must be three (min, max) ranges", key="workspace")
        (x0, x1), (y0, y1), (z0, z1) = self.workspace
        if not (x1 > x0 and y1 > y0 and z1 > z0 and z0 >= 0):
            raise ConfigError("workspace ranges are empty or negative", key="workspace")
        if abs((x1 - x0) - (y1 - y0)) > 1e-9:
            raise ConfigError("workspace must be square in x and y", key="workspace")
        lo, hi = self.object_scale_range
        if not (0 < lo <= hi):
            raise ConfigError(
                f"invalid object_scale_range {self.object_scale_range}",
                key="object_scale_range",
            )
        if self.max_steps is not None and self.max_steps < 1:
            raise ConfigError("max_steps must be >= 1", key="max_steps")
        if self.num_objects is not None and self.num_objects < 1:
            raise ConfigError("num_objects must be >= 1", key="num_objects")
        if self.obs_size < 8:
            raise ConfigError("obs_size must be >= 8", key="obs_size")
        if self.in_hand_size < 4:
            raise ConfigError("in_hand_size must be >= 4", key="in_hand_size")
        if self.workspace_check not in WORKSPACE_CHECKS:
            raise ConfigError(
                f"workspace_check must be one of {WORKSPACE_CHECKS}",
                key="workspace_check",
            )
        return self

    def bounds(self) -> Workspace:
        (x0, x1), (y0, y1), (_, z1) = self.workspace
        return Workspace(x0, x1, y0, y1, z1)

    @property
    def z_max(self) -> float:
        return self.workspace[2][1]

    def gripper_width(self) -> float:
        return ROBOT_OPEN_WIDTHS[self.robot]

    def with_task_defaults(self, num_objects: int, max_steps: int) -> "EnvConfig":
        return replace(
            self,
            num_objects=self.num_objects if self.num_objects is not None else num_objects,
            max_steps=self.max_steps if self.max_steps is not None else max_steps,
        )


def _format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ",".join(_format_value(v) for v in _flatten(value))
    return repr(value) if isinstance(value, float) else str(value)


def _flatten(value):
    for v in value:
        if isinstance(v, tuple):
            yield from _flatten(v)
        else:
            yield v


def config_to_text(config: EnvConfig) -> str:
    """Canonical one-pair-per-line rendering; unset optionals are omitted."""
    lines = []
    for f in fields(EnvConfig):
        value = getattr(config, f.name)
        if value is None:
            continue
        lines.append(f"{f.name}={_format_value(value)}")
    return "\n".join(lines) + "\n"


def _parse_bool(raw: str, key: str) -> bool:
    low = raw.strip().lower()
    if low in ("true", "1", "yes"):
        return True
    if low in ("false", "0", "no"):
        return False
    raise ConfigError(f"invalid boolean {raw!r} for {key}", key=key)


def _parse_floats(raw: str, key: str, count: int) -> tuple[float, ...]:
    parts = [p for p in raw.replace(" ", "").split(",") if p]
    if len(parts) != count:
        raise ConfigError(f"{key} expects {count} comma-separated numbers", key=key)
    try:
        return tuple(float(p) for p in parts)
    except ValueError as exc:
        raise ConfigError(f"invalid number in {key}: {exc}", key=key) from exc


def config_from_mapping(mapping: dict[str, str], base: EnvConfig | None = None) -> EnvConfig:
    """Build a config from string key/value pairs, rejecting unknown keys."""
    known = {f.name for f in fields(EnvConfig)}
    values: dict[str, object] = {}
    for key, raw in mapping.items():
        if key not in known:
            raise ConfigError(f"unknown configuration key {key!r}", key=key)
        if key == "workspace":
            flat = _parse_floats(raw, key, 6)
            values[key] = ((flat[0], flat[1]), (flat[2], flat[3]), (flat[4], flat[5]))
        elif key == "object_scale_range":
            values[key] = _parse_floats(raw, key, 2)
        elif key in ("max_steps", "num_objects", "obs_size", "in_hand_size", "seed"):
            try:
                values[key] = int(raw)
            except ValueError as exc:
                raise ConfigError(f"invalid integer for {key}: {raw!r}", key=key) from exc
        elif key in ("fast_mode", "render", "random_orientation", "half_rotation"):
            values[key] = _parse_bool(raw, key)
        else:
            values[key] = raw.strip()
    config = replace(base, **values) if base is not None else EnvConfig(**values)
    return config.validate()


def config_from_text(text: str, base: EnvConfig | None = None) -> EnvConfig:
    """Parse the flat key=value document used on the wire and in demo files."""
    mapping: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected key=value, got {line!r}")
        key, _, raw = stripped.partition("=")
        key = key.strip()
        if key in mapping:
            raise ConfigError(f"duplicate configuration key {key!r}", key=key)
        mapping[key] = raw
    return config_from_mapping(mapping, base=base)
