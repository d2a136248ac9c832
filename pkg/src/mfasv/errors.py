"""Exception taxonomy shared across the toolkit.

Each failure class is distinct so callers (and the CLI exit-code map) can
react without string matching.
"""

from __future__ import annotations


class ToolkitError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(ToolkitError):
    """Tensor or parameter shapes are inconsistent with the operation."""


class ConfigError(ToolkitError):
    """A configuration value is out of contract (bad key, bad range, bad combo)."""


class InputError(ToolkitError):
    """Runtime input data violates a precondition (empty trials, zero vectors...)."""


class NumericsError(ToolkitError):
    """Numerical guard tripped (NaN gradients, vanishing norms)."""


class GradientCheckError(ToolkitError):
    """Analytic and numeric gradients disagree beyond tolerance."""


class ArchiveError(ToolkitError):
    """A feature archive is malformed (bad magic, truncated payload...)."""


class CheckpointError(ToolkitError):
    """Base class for checkpoint load failures. Always fail closed."""


class CheckpointVersionError(CheckpointError):
    """Unknown or unsupported checkpoint format version."""


class CheckpointShapeError(CheckpointError):
    """Parameter inventory of the file does not match the target model."""


class CheckpointTruncatedError(CheckpointError):
    """The blob section is shorter than the manifest promises."""


class TrainingDiverged(ToolkitError):
    """Loss became non-finite; carries the last good parameter snapshot."""

    def __init__(self, message: str, last_good: dict | None = None):
        super().__init__(message)
        self.last_good = last_good


class RunDirLocked(ToolkitError):
    """Another process owns the run directory."""
