"""
Errors raised by the library. Every class also derives from the matching built-in exception, so callers that catch
``ValueError`` or ``ArithmeticError`` keep working.
"""

from typing import List, Optional


class LibReparamError(Exception):
    """
    Base class for every error this library raises on purpose.
    """


class DomainError(LibReparamError, ValueError):
    """
    An argument lies outside the domain of a function: non-finite or non-positive parameters, or latent values outside
    the support of their distribution.
    """


class RangeError(LibReparamError, OverflowError):
    """
    A transformation overflowed while mapping a standardized value back to the latent space.
    """


class NumericalError(LibReparamError, ArithmeticError):
    """
    A numerical routine could not produce a trustworthy result.
    """


class TrainingAborted(NumericalError):
    """
    The optimization loop met a non-finite gradient or parameter. The iterations done so far are kept in ``trace``.
    """

    def __init__(self, message: str, trace=None):
        super().__init__(message)
        self.trace = trace


class DatasetParseError(LibReparamError, ValueError):
    """
    A dataset file could not be parsed.

    :param message: What went wrong.
    :param line: The 1-based line number of the offending row, if known.
    """

    def __init__(self, message: str, line: Optional[int] = None):
        if line is not None:
            message = "line %d: %s" % (line, message)
        super().__init__(message)
        self.line = line


class ConfigError(LibReparamError, ValueError):
    """
    A run configuration failed validation. All problems are collected before this is raised.

    :param errors: One message per problem found.
    """

    def __init__(self, errors: List[str]):
        super().__init__("Invalid configuration:\n  - " + "\n  - ".join(errors))
        self.errors = errors
