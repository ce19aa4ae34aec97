"""
Exception hierarchy for evoloss
"""
from typing import Any, Optional


class EvolossError(Exception):
    """Base class for every error raised by the library"""


class DimensionMismatchError(EvolossError, ValueError):
    """A shape or length did not match what the network or loss expects"""

    def __init__(self, what: str, expected: Any, actual: Any):
        self.what = what
        self.expected = expected
        self.actual = actual
        super().__init__(f"{what}: expected {expected}, got {actual}")


class TraceMismatchError(DimensionMismatchError):
    """A forward trace was passed to backward with a different spec or params"""


class TaskGenerationError(EvolossError):
    """Task generation could not satisfy its constraints"""

    def __init__(self, message: str, attempts: int = 0):
        self.attempts = attempts
        super().__init__(message)


class DivergenceError(EvolossError, ArithmeticError):
    """The inner loop produced a non-finite loss or gradient"""

    def __init__(self, step: int, detail: str = "non-finite value"):
        self.step = step
        self.detail = detail
        super().__init__(f"training diverged at step {step}: {detail}")


class GenomeFileError(EvolossError, IOError):
    """A genome file could not be decoded"""

    NOT_A_GENOME = "not a genome file"
    CORRUPT = "corrupt"
    INCONSISTENT = "inconsistent header"

    def __init__(self, reason: str, path: Optional[str] = None, detail: str = ""):
        self.reason = reason
        self.path = path
        message = f"{path}: {reason}" if path else reason
        if detail:
            message += f" ({detail})"
        super().__init__(message)


class IdxFormatError(EvolossError, ValueError):
    """An MNIST IDX file is missing, truncated or has the wrong magic number"""

    def __init__(self, path: str, detail: str):
        self.path = path
        super().__init__(f"{path}: {detail}")


class ConfigError(EvolossError, ValueError):
    """Invalid run configuration"""

    def __init__(self, key: str, detail: str):
        self.key = key
        super().__init__(f"config '{key}': {detail}")


class CheckpointError(EvolossError):
    """A run directory holds checkpoint files that do not agree with each other"""

    def __init__(self, path: str, detail: str):
        self.path = path
        super().__init__(f"{path}: {detail}")
