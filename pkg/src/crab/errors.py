"""Exception hierarchy shared by every crab module."""


class CrabError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(CrabError, ValueError):
    """Operand shapes do not conform."""


class ContractError(CrabError, ValueError):
    """A precondition of an operation was violated."""


class ConfigError(CrabError, ValueError):
    """Invalid configuration value."""


class ParseError(CrabError, ValueError):
    """Malformed input file. ``line`` is 1-based when known."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class LabelError(ParseError):
    """A row carries a label that is not declared in the corpus header."""


class StratificationError(CrabError, ValueError):
    """A class has no examples to stratify."""


class VocabError(CrabError, IndexError):
    """Token id outside the vocabulary."""


class CorruptModelError(CrabError):
    """Model file is unreadable or internally inconsistent."""


class NumericError(CrabError, ArithmeticError):
    """Training produced a non-finite loss."""
