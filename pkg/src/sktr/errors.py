"""Exception hierarchy shared across the package."""


class SktrError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(SktrError):
    """Structurally or numerically invalid input data."""


class PnmlError(ValidationError):
    """Malformed or incomplete PNML content."""


class InfeasibleAlignmentError(SktrError):
    """The final marking cannot be reached from the initial marking."""


class SearchLimitError(SktrError):
    """A search resource cap (states, time, or token bound) was exceeded."""

    def __init__(self, message: str, states_expanded: int = 0):
        super().__init__(message)
        self.states_expanded = states_expanded


class OracleError(SktrError):
    """The exhaustive oracle hit a cap and cannot certify its result."""
