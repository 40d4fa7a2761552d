"""Exception taxonomy shared across the package.

Every error raised by library code derives from ConevecError so callers
(and the CLI error reporter) can categorize failures by class name.
"""

from __future__ import annotations


class ConevecError(Exception):
    """Base class for all package-specific errors."""


# --- parsing / serialization ------------------------------------------------

class SequenceTooLong(ConevecError):
    """A serialized or tokenized sequence exceeds the maximum length."""


class LengthMismatch(ConevecError):
    """Parallel lists (e.g. headers vs. cells) differ in length."""


# --- numeric / tensor plumbing ----------------------------------------------

class NonFiniteInput(ConevecError):
    """A value that must be finite is NaN or infinite."""


class ShapeMismatch(ConevecError):
    """Matrix or vector shapes are inconsistent with the operation."""


class IndexOutOfBounds(ConevecError):
    """A positional index falls outside the sequence it refers to."""


# --- training ---------------------------------------------------------------

class EmptyCorpus(ConevecError):
    """A training routine received no usable sequences or blocks."""


class DivergenceDetected(ConevecError):
    """A training loss became NaN or infinite."""


class NonPositiveMagnitude(ConevecError):
    """A magnitude entering the log-loss is not strictly positive."""


# --- composite assembly -----------------------------------------------------

class TextCellUnsupported(ConevecError):
    """Text cells carry no numeric component and cannot form value slots."""


class DuplicateSlot(ConevecError):
    """The same slot name was supplied more than once during assembly."""


# --- aggregation / index ----------------------------------------------------

class EmptyColumn(ConevecError):
    """Aggregation over zero cell embeddings."""


class DimMismatch(ConevecError):
    """Vector dimensionality differs from what the container expects."""


class ZeroVector(ConevecError):
    """Cosine similarity is undefined for a zero-norm vector."""


class DuplicateId(ConevecError):
    """An id was added to an index that already contains it."""


class EmptyIndex(ConevecError):
    """A query was issued against an index with no entries."""


class CorruptFile(ConevecError):
    """A persisted artifact failed its magic, length, or bounds checks."""


# --- evaluation -------------------------------------------------------------

class ConstantSeries(ConevecError):
    """Correlation is undefined when one series has zero variance."""


class DegenerateUnion(ConevecError):
    """Reserved for interval pairs whose union has zero measure."""


class NoQueries(ConevecError):
    """A ranking metric was asked to average over zero queries."""


class UnknownQueryId(ConevecError):
    """Ranked results reference a query id absent from the ground truth."""


class RangeTooSmall(ConevecError):
    """A probe task needs more distinct integers than its range contains."""
