"""Domain error hierarchy.

Every error the engine can surface has a stable code equal to the class
name; the CLI prints them as ``error: <code>: <message>``.
"""

from __future__ import annotations


class MinilakeError(Exception):
    """Base class for all minilake domain errors."""

    @property
    def code(self) -> str:
        return type(self).__name__


# --- object store ---------------------------------------------------------

class AlreadyExists(MinilakeError):
    """A write-once object key is already occupied."""


class NotFound(MinilakeError):
    """No object stored under the requested key."""


class IoError(MinilakeError):
    """Underlying storage failure."""


# --- columnar files -------------------------------------------------------

class SchemaViolation(MinilakeError):
    """Row data does not conform to the table schema."""


class CorruptFile(MinilakeError):
    """A data file fails structural validation."""


# --- table format ---------------------------------------------------------

class UnsupportedTransform(MinilakeError):
    """Partition transform is not defined for the source column type."""


class UnknownColumn(MinilakeError):
    """Column name does not resolve against the schema."""


class DuplicateColumn(MinilakeError):
    """Column or partition field name would collide."""


class DropOfPartitionSource(MinilakeError):
    """Cannot drop a column referenced by the current partition spec."""


class UnknownSnapshot(MinilakeError):
    """Snapshot id does not exist in the table history."""


class CorruptMetadata(MinilakeError):
    """Table metadata object fails invariant validation."""


# --- transactions ---------------------------------------------------------

class UnknownBranch(MinilakeError):
    """Branch ref does not exist."""


class UnknownTable(MinilakeError):
    """Table name is absent from the catalog tree."""


class ConflictError(MinilakeError):
    """Optimistic concurrency validation failed; nothing became visible."""


class RetriesExhausted(MinilakeError):
    """Commit lost the CAS race more times than max_retries allows."""


class TransactionClosed(MinilakeError):
    """Transaction was already committed or aborted."""


# --- catalog --------------------------------------------------------------

class AlreadyInitialized(MinilakeError):
    """Warehouse root already holds a catalog."""


class RefExists(MinilakeError):
    """Branch or tag name is already taken."""


class UnknownRef(MinilakeError):
    """Ref name or commit hash does not resolve."""


class MergeConflict(MinilakeError):
    """Three-way merge failed for one or more tables."""

    def __init__(self, message: str, tables: tuple[str, ...] = ()):
        super().__init__(message)
        self.tables = tables


class CorruptCommit(MinilakeError):
    """Stored commit payload does not match its content address."""


# --- scan -----------------------------------------------------------------

class ParseError(MinilakeError):
    """Predicate text failed to parse.

    Carries the character position and the token classes that would have
    been accepted there.
    """

    def __init__(self, message: str, position: int, expected: tuple[str, ...] = ()):
        detail = f"{message} at position {position}"
        if expected:
            detail += " (expected " + ", ".join(expected) + ")"
        super().__init__(detail)
        self.position = position
        self.expected = expected


class TypeMismatch(MinilakeError):
    """Literal or column type is incompatible with the comparison."""


class NoSnapshotAsOf(MinilakeError):
    """Requested time precedes the table's first snapshot."""


# --- maintenance ----------------------------------------------------------

class NothingToCompact(MinilakeError):
    """No partition holds two or more undersized files."""


# --- scd ------------------------------------------------------------------

class DuplicateSourceKey(MinilakeError):
    """Merge source contains the same key tuple twice."""


# --- cli ------------------------------------------------------------------

class ConfigParseError(MinilakeError):
    """minilake.conf contains a malformed line."""
