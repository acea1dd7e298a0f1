"""Exception types shared across the package.

The CLI maps these onto exit codes: usage problems exit 2, data problems
exit 3, numerical failures exit 4.
"""


class CMatchError(Exception):
    """Base class for all package-specific errors."""


class InvalidShapeError(CMatchError):
    """Operands have incompatible or malformed dimensions."""


class InvalidTranscriptError(CMatchError):
    """A transcript or label sequence violates the character set contract."""


class InfeasibleAlignmentError(CMatchError):
    """The transcript cannot be aligned to the available frames."""


class MissingTranscriptError(CMatchError):
    """An operation requiring a transcript was given none."""


class EmptyDomainError(CMatchError):
    """A corpus or sample set that must be non-empty is empty."""


class NoOverlapError(CMatchError):
    """No character occurs in both the source and target feature bags."""


class EvaluationError(CMatchError):
    """A numerical evaluation produced a non-finite or invalid result."""


class ParseError(CMatchError):
    """An on-disk file could not be parsed."""

    def __init__(self, path, line, message):
        self.path = str(path)
        self.line = line
        super().__init__(f"{self.path}:{line}: {message}")


class ConfigError(CMatchError):
    """A run configuration is malformed (unknown key, bad value, ...)."""
