"""Exception hierarchy.

Errors fall into three families that the command line maps to exit codes:
``UsageError`` (1), ``DataError`` (2) and ``NumericalError`` (3).
"""

from __future__ import annotations


class IpacError(Exception):
    """Base class for every error raised by this package."""


class UsageError(IpacError):
    pass


class DataError(IpacError, ValueError):
    pass


class NumericalError(IpacError, ArithmeticError):
    pass


# numerics
class ShapeMismatch(DataError):
    pass


class NonFinite(NumericalError):
    pass


class NotScalar(DataError):
    pass


class GraphConsumed(IpacError, RuntimeError):
    pass


# phoneme handling
class EmptyCorpus(DataError):
    pass


class UnknownWord(DataError, KeyError):
    def __init__(self, word: str, lang: str):
        super().__init__(f"no G2P entry for {word!r} in language {lang!r}")
        self.word = word
        self.lang = lang

    def __str__(self) -> str:
        return self.args[0]


class EmptySequence(DataError):
    pass


# model
class SequenceTooLong(DataError):
    pass


class ProjectionRemoved(IpacError, RuntimeError):
    pass


class AlreadyStripped(IpacError, RuntimeError):
    pass


class NoAdapters(DataError):
    pass


class CheckpointError(DataError):
    pass


# loss
class NonPositiveTemperature(DataError):
    pass


class EmptyBatch(DataError):
    pass


# data files
class _LineError(DataError):
    def __init__(self, line: int, message: str = ""):
        text = f"line {line}"
        if message:
            text += f": {message}"
        super().__init__(text)
        self.line = line


class ParseError(_LineError):
    pass


class InvalidLang(_LineError):
    pass


class EmptyField(_LineError):
    pass


class UnknownTag(_LineError):
    pass


class EmptySentence(DataError):
    pass


class LengthMismatch(DataError):
    pass


class CapExceedsAvailable(DataError):
    pass
