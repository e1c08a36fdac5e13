# src/errors.py
# Exception hierarchy shared by the matching pipeline
# InputError subclasses mean "the caller's data is wrong" and map to exit status 2
# RELEVANT FILES: main.py, commands/base.py, storage.py

from pathlib import Path
from typing import Optional, Union


class WeaveError(Exception):
    """Base class for every error raised by this package"""

    pass


class InputError(WeaveError):
    """The supplied data violates a precondition"""

    pass


class DimensionMismatch(InputError):
    """Embeddings of different dimension were combined"""

    pass


class ZeroNormVector(InputError):
    """An embedding has zero Euclidean norm (failed upstream extraction)"""

    pass


class IndexOutOfRange(WeaveError):
    """An assignment refers to a cell outside its cost matrix"""

    pass


class UnknownTrackId(InputError):
    """A matched track id has no observation"""

    pass


class InconsistentCounts(InputError):
    """More vehicles were matched in a lane than were counted there"""

    pass


class ZeroDetected(InputError):
    """Match metrics need at least one detected vehicle"""

    pass


class QueryIdentityAbsentFromGallery(InputError):
    """A query identity has no gallery instance"""

    pass


class InvalidDistribution(InputError):
    """A probability row does not sum to one or holds a bad label"""

    pass


class InvalidSpec(InputError):
    """A scenario specification is not usable against the given zone"""

    pass


class TooLargeForEnumeration(InputError):
    """The brute-force oracle was asked for more than it can enumerate"""

    pass


class InputFormatError(InputError):
    """
    A record in an input file could not be parsed.

    Args:
        path: File holding the record
        line: 1-based line number (None for whole-file problems)
        message: What went wrong
    """

    def __init__(self, path: Union[str, Path], line: Optional[int], message: str):
        self.path = Path(path)
        self.line = line
        self.message = message
        where = f"{self.path}:{line}" if line is not None else str(self.path)
        super().__init__(f"{where}: {message}")
