"""Exception types raised across viws."""

from __future__ import annotations

from typing import Dict, Optional


class ViwsError(Exception):
    """Base class for every error viws raises on purpose."""


class ConfigurationError(ViwsError, ValueError):
    pass


class ShapeError(ViwsError, ValueError):
    pass


class RangeError(ViwsError, IndexError):
    pass


class ParameterError(ViwsError, ValueError):
    pass


class CheckpointError(ViwsError, RuntimeError):
    pass


class EvaluationError(ViwsError, ValueError):
    pass


class NonFiniteLossError(ViwsError, FloatingPointError):
    """Raised when a training step produces a NaN/inf objective."""

    def __init__(self, message: str, components: Optional[Dict[str, float]] = None):
        super().__init__(message)
        self.components = dict(components or {})
