"""Exception types shared across the package."""

from __future__ import annotations


class EmofusionError(Exception):
    """Base class for all package-specific errors."""


class ShapeError(EmofusionError):
    """An operation received inputs whose shapes violate its shape rule."""

    def __init__(self, op: str, message: str, *shapes):
        self.op = op
        self.shapes = tuple(shapes)
        detail = f"{op}: {message}"
        if shapes:
            detail += " (shapes: " + ", ".join(str(tuple(s)) for s in shapes) + ")"
        super().__init__(detail)


class GraphError(EmofusionError):
    """backward() was called on an unusable graph (non-scalar or detached loss)."""


class NumericError(EmofusionError):
    """A non-finite value was detected while strict checking is enabled."""


class ConfigError(EmofusionError):
    """A configuration value violates its documented invariant."""


class DataFormatError(EmofusionError):
    """A binary or CSV artifact failed to parse.

    Carries the byte offset at which parsing failed, when known.
    """

    def __init__(self, message: str, offset: int | None = None):
        self.offset = offset
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)


class TrainingError(EmofusionError):
    """Training aborted (e.g. repeated non-finite gradients)."""
