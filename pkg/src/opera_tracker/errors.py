"""Exception hierarchy shared by every stage of the tracker."""

from __future__ import annotations


class TrackerError(Exception):
    """Base class for all errors raised on bad input data or configuration."""


class UnsupportedFormat(TrackerError):
    pass


class CorruptFile(TrackerError):
    pass


class EmptyAudio(TrackerError):
    pass


class InvalidGeometry(TrackerError, ValueError):
    pass


class InvalidConfig(TrackerError, ValueError):
    pass


class DimensionMismatch(TrackerError, ValueError):
    pass


class ReferenceEmpty(TrackerError):
    pass


class OutOfRange(TrackerError, IndexError):
    pass


class InputTooLarge(TrackerError):
    pass


class EmptyDataset(TrackerError):
    pass


class NonBinaryLabels(TrackerError, ValueError):
    pass


class CorruptModel(TrackerError):
    pass


class KindMismatch(TrackerError):
    pass


class InvalidScript(TrackerError, ValueError):
    pass


class EmptyTrace(TrackerError):
    pass


class AnnotationError(TrackerError, ValueError):
    """Malformed or inconsistent annotation file (carries the offending line)."""

    def __init__(self, message: str, path=None, line: int | None = None):
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        super().__init__(where + message)
        self.path = path
        self.line = line
