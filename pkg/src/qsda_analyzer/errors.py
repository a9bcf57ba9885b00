"""Exception types shared across the analyzer."""

from __future__ import annotations


class AnalyzerError(Exception):
    """Base class; the CLI maps these to exit code 2."""


class SyntaxError(AnalyzerError):  # noqa: A001 - deliberate, scoped to this package
    def __init__(self, message: str, line: int, column: int, expected: tuple[str, ...] = ()):
        self.line = line
        self.column = column
        self.expected = expected
        hint = f" (expected {', '.join(expected)})" if expected else ""
        super().__init__(f"{line}:{column}: {message}{hint}")


class DuplicatePointerVar(AnalyzerError):
    pass


class UseOfUndeclaredVar(AnalyzerError):
    pass


class InexpressiblePredicate(AnalyzerError):
    pass


class TypeClashInPowerset(AnalyzerError):
    pass


class UnsupportedStmt(AnalyzerError):
    pass


class NonTermination(AnalyzerError):
    pass


class InsufficientUniversals(AnalyzerError):
    pass


class EmptyStream(AnalyzerError):
    pass
