"""
errors.py - Exception hierarchy for rankguard.

Every error carries the process exit code the CLI reports for it:
1 for data problems, 2 for schema and configuration problems.
"""

from typing import Optional, Union


class RankGuardError(Exception):
    """Base class for all rankguard errors."""
    exit_code = 1


class SchemaError(RankGuardError):
    """Malformed input: wrong lengths, out-of-range values, bad files."""
    exit_code = 2
    
    def __init__(
        self,
        message: str,
        file: Optional[str] = None,
        location: Optional[Union[int, str]] = None,
        field: Optional[str] = None,
    ):
        self.file = file
        self.location = location
        self.field = field
        self.message = message
        super().__init__(self._render())
    
    def _render(self) -> str:
        where = []
        if self.file:
            where.append(str(self.file))
        if self.location is not None:
            where.append(f"row {self.location}" if isinstance(self.location, int) else str(self.location))
        if self.field:
            where.append(f"field '{self.field}'")
        prefix = ", ".join(where)
        return f"{prefix}: {self.message}" if prefix else self.message


class InvalidConfigError(RankGuardError):
    """Invalid generator, estimator or command-line configuration."""
    exit_code = 2


class EmptyInputError(RankGuardError):
    """An operation received no data to work on."""


class NotFoundError(RankGuardError):
    """A requested architecture, run, split or coordinate is absent."""


class DegenerateInputError(RankGuardError):
    """Input is well-formed but the statistic is undefined (e.g. zero rank variance)."""
