"""Exception taxonomy shared across the lab.

The CLI maps ConfigError/ParseError to exit code 2 and everything else
to exit code 3, so raising the right class matters at the boundaries.
"""


class SaturnLabError(Exception):
    """Base class for all lab-specific failures."""


class ShapeError(SaturnLabError):
    """Tensor dimensions incompatible with the operation."""


class NumericError(SaturnLabError):
    """Non-finite values or numerically degenerate inputs."""


class StateError(SaturnLabError):
    """Stale caches, checkpoint mismatches, or bad call ordering."""


class InputError(SaturnLabError):
    """A value outside the operation's documented domain."""


class ConfigError(SaturnLabError):
    """Invalid or incomplete experiment configuration."""


class ParseError(SaturnLabError):
    """Malformed file content; carries a line number when known."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class ContractError(SaturnLabError):
    """Adaptive-attack contract violated (target/shadow configs differ)."""


class StageError(SaturnLabError):
    """A pipeline stage failed; names the stage and wraps the cause."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause
