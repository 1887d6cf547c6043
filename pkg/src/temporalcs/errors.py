"""Exception types shared across the package."""


class ArgumentError(ValueError):
    """An argument violates a documented precondition."""


class ShapeError(ValueError):
    """Tensor or matrix shapes are incompatible for the requested operation."""


class ParseError(ValueError):
    """An input file line could not be parsed; carries the line number."""

    def __init__(self, message, line_no=None):
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)
        self.line_no = line_no


class IngestError(ParseError):
    """Parsed input refers to entities the graph does not contain."""


class CheckpointError(RuntimeError):
    """A checkpoint file is missing, truncated, or from an unknown version."""


class NumericError(RuntimeError):
    """A computation produced non-finite values."""


class TrainingError(RuntimeError):
    """Training aborted; message carries diagnostics."""


class StateError(RuntimeError):
    """An object was used in a way its lifecycle forbids."""
