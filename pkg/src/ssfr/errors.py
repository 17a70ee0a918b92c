"""Exception hierarchy shared by all modules."""


class SSFRError(Exception):
    """Base class for errors raised by this package."""


class InvalidArgumentError(SSFRError, ValueError):
    """An argument violates a documented precondition."""


class FormatError(SSFRError, ValueError):
    """An input file does not have the expected layout."""


class ParseError(FormatError):
    """A cell in an input file could not be parsed as a finite number."""

    def __init__(self, path, row, column, value):
        self.path = str(path)
        self.row = row
        self.column = column
        self.value = value
        super().__init__(
            f"{self.path}: row {row}, column {column}: cannot parse {value!r} as a finite number"
        )


class DegenerateDataError(SSFRError, ValueError):
    """Data is too degenerate for the requested computation."""

    def __init__(self, message, rows=None):
        self.rows = list(rows) if rows is not None else []
        super().__init__(message)


class CapacityError(SSFRError, MemoryError):
    """A dense allocation would exceed the configured memory budget."""


class TrainingFailure(SSFRError, RuntimeError):
    """Training produced a non-finite risk."""

    def __init__(self, message, last_finite_epoch):
        self.last_finite_epoch = last_finite_epoch
        super().__init__(message)


class CheckpointError(SSFRError, IOError):
    """A checkpoint file is corrupt or has an unsupported version."""


class ContractViolation(SSFRError, RuntimeError):
    """Internal state was used inconsistently, e.g. a stale forward cache."""
