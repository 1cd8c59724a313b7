"""Exception types shared across the package.

The CLI maps these onto exit codes: configuration/usage problems exit 1,
data problems (audio, labels, checkpoints) exit 2, numeric failures exit 3.
"""


class NotebankError(Exception):
    """Base class for all package errors."""


class AudioFormatError(NotebankError):
    """Input audio has an unsupported format; message names the offending field."""


class AudioParseError(NotebankError):
    """Malformed or truncated audio container."""

    def __init__(self, message: str, byte_offset: int):
        super().__init__(f"{message} (at byte {byte_offset})")
        self.byte_offset = byte_offset


class LabelSchemaError(NotebankError):
    """Label CSV is missing required columns."""


class LabelRowError(NotebankError):
    """A label CSV row could not be parsed; carries the 1-based line number."""

    def __init__(self, message: str, line_number: int):
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number


class GraphShapeError(NotebankError):
    """Layer shapes are inconsistent, at build time or when loading weights."""


class NonFiniteError(NotebankError):
    """A NaN or Inf appeared in a forward pass or a training step."""


class CheckpointError(NotebankError):
    """Checkpoint file is corrupt, truncated, or has an unsupported version."""


class ConfigError(NotebankError):
    """Run configuration is invalid (unknown keys, unresolvable paths, bad values)."""
