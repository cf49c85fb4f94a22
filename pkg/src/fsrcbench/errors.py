"""Exception hierarchy shared across the toolkit.

Every error class carries a distinct process exit code so the CLI can map
failures one-to-one onto nonzero exits.
"""

from __future__ import annotations


class FsrcError(Exception):
    """Base class for all toolkit errors."""

    exit_code = 1


class UsageError(FsrcError):
    exit_code = 2


class MalformedRecord(FsrcError):
    """A corpus line is not a valid record. Carries the 1-based line number."""

    exit_code = 4

    def __init__(self, line_no: int, reason: str):
        super().__init__(f"line {line_no}: {reason}")
        self.line_no = line_no
        self.reason = reason


class SpanOutOfBounds(FsrcError):
    exit_code = 5


class DuplicateUid(FsrcError):
    exit_code = 6


class EmptyCorpus(FsrcError):
    exit_code = 7


class NOutOfRange(FsrcError):
    exit_code = 8


class CapTooSmall(FsrcError):
    exit_code = 9


class InsufficientRelations(FsrcError):
    exit_code = 10


class InsufficientInstances(FsrcError):
    exit_code = 11


class UnsatisfiableConfig(FsrcError):
    exit_code = 12


class NoNotaSource(FsrcError):
    exit_code = 13


class OverlappingSpans(FsrcError):
    exit_code = 14


class DimensionMismatch(FsrcError):
    exit_code = 15


class EmptyText(FsrcError):
    exit_code = 16


class EmptyTrainingSet(FsrcError):
    exit_code = 17


class DivergedLoss(FsrcError):
    exit_code = 18


class EmptyEvalSet(FsrcError):
    exit_code = 19


class DegenerateDevSet(FsrcError):
    exit_code = 20


class BridgeUnavailable(FsrcError):
    exit_code = 21


class BridgeError(FsrcError):
    """A bridge process answered a request with an error record."""

    exit_code = 22


class NoResults(FsrcError):
    exit_code = 23


class ProvenanceMismatch(FsrcError):
    exit_code = 24


# Exit code 3 is reserved for missing input files (builtin FileNotFoundError).
FILE_NOT_FOUND_EXIT = 3
