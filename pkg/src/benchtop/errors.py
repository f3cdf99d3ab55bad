"""Exception types shared across the package."""


class BenchtopError(Exception):
    """Base class for all benchtop errors."""


class InvalidInputError(BenchtopError, ValueError):
    """A value violated a function precondition (non-finite angle, bad shape, ...)."""


class OutOfWorkspaceError(BenchtopError, ValueError):
    """A point that must lie inside the workspace does not."""


class GripperStateError(BenchtopError):
    """A pick/place primitive is inconsistent with the current gripper state."""


class ConfigError(BenchtopError, ValueError):
    """An environment configuration is invalid; ``key`` names the offending entry."""

    def __init__(self, message: str, key: str | None = None):
        super().__init__(message)
        self.key = key


class TaskRegistrationError(BenchtopError):
    """A task could not be registered (duplicate or malformed spec)."""


class UnknownTaskError(BenchtopError, KeyError):
    """A task name is not present in the registry."""


class InitializationError(BenchtopError):
    """Episode initialization could not find a feasible object layout."""


class PlannerStuckError(BenchtopError):
    """The scripted expert found no applicable action in the current state."""


class DemoGenerationError(BenchtopError):
    """Expert data generation failed (success rate below the attempt budget)."""


class DemoFormatError(BenchtopError):
    """A demonstration file is malformed; ``offset`` is the failing byte position."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


class RunnerUsageError(BenchtopError):
    """The vectorized runner API was used out of order (e.g. step before reset)."""


class ActionFormatError(BenchtopError, ValueError):
    """An action batch does not match the configured action sequence or env count."""


class ProtocolError(BenchtopError):
    """A wire-protocol failure; ``code`` is the on-wire error code."""

    def __init__(self, code: int, message: str):
        super().__init__(f"[0x{code:04x}] {message}")
        self.code = code
