"""Exception hierarchy shared by every module."""


class PosecalError(Exception):
    """Base class for all errors raised by this package."""


class ZeroLengthVector(PosecalError, ValueError):
    pass


class IndexOutOfRange(PosecalError, IndexError):
    pass


class ParseError(PosecalError):
    """A file could not be parsed. The message carries line/field context."""


class SchemaError(PosecalError, ValueError):
    """Parsed data violates a structural rule (topology, counts, shapes)."""


class SkeletonMismatch(PosecalError, ValueError):
    pass


class DegenerateBone(PosecalError, ValueError):
    pass


class ShapeMismatch(PosecalError, ValueError):
    pass


class DegenerateConfiguration(PosecalError, ValueError):
    pass


class Divergence(PosecalError, ArithmeticError):
    """Weight fitting produced a non-finite loss or non-finite weights."""


class StageError(PosecalError):
    """Wraps an error raised inside a named pipeline stage."""

    def __init__(self, stage: str, cause: BaseException):
        self.stage = stage
        self.cause = cause
        super().__init__(f"[{stage}] {type(cause).__name__}: {cause}")
