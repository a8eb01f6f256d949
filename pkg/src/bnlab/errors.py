"""Exception hierarchy shared by all bnlab modules.

Each class carries the process exit code the CLI uses when the error
escapes a subcommand.
"""


class BnlabError(Exception):
    exit_code = 1


class ConfigError(BnlabError, ValueError):
    exit_code = 2


class InvalidParameterError(BnlabError, ValueError):
    exit_code = 2


class PreconditionError(BnlabError, ValueError):
    exit_code = 3


class DegenerateColumnError(PreconditionError):
    """A column with zero norm where a direction is required."""


class DegenerateStdError(PreconditionError):
    """A row with zero standard deviation under rescaling with eps = 0."""

    def __init__(self, row, message=None):
        self.row = row
        super().__init__(message or f"row {row} has zero standard deviation and rescale_epsilon is 0")


class UnsupportedDimensionError(PreconditionError):
    pass


class InsufficientDepthError(PreconditionError):
    pass


class BudgetError(BnlabError, MemoryError):
    exit_code = 4


class TheoremCheckError(BnlabError):
    exit_code = 5
