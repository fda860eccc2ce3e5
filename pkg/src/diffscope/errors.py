"""Exception hierarchy shared across the package."""

from __future__ import annotations


class DiffscopeError(Exception):
    """Base class for all diffscope errors."""


class UnreadableSource(DiffscopeError):
    pass


class RaggedRow(DiffscopeError):
    def __init__(self, line: int, expected: int, got: int):
        super().__init__(f"line {line}: expected {expected} fields, got {got}")
        self.line = line
        self.expected = expected
        self.got = got


class EmptyInput(DiffscopeError):
    pass


class QueryFailed(DiffscopeError):
    pass


class NonReadOnlyQuery(DiffscopeError):
    pass


class ConflictingOverrides(DiffscopeError):
    pass


class UnknownColumn(DiffscopeError):
    pass


class DuplicateKey(DiffscopeError):
    def __init__(self, key, count: int):
        super().__init__(f"key {key!r} occurs {count} times in one snapshot")
        self.key = key
        self.count = count


class IncomparableProfiles(DiffscopeError):
    pass


class ClientUnavailable(DiffscopeError):
    pass


class NoValidCandidates(DiffscopeError):
    pass


class MissingBatch(DiffscopeError):
    pass


class CorruptCheckpoint(DiffscopeError):
    pass


class SeedMismatch(DiffscopeError):
    pass
