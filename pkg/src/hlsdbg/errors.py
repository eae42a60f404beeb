"""Exception taxonomy shared across the package.

The CLI maps these onto its exit-code contract: usage errors exit 1,
DataError and friends exit 2, NumericError exits 3.
"""

from __future__ import annotations


class DataError(Exception):
    """Malformed or inconsistent input data (files, records, configs)."""


class LexError(DataError):
    """Lexical error carrying the 1-based line/col where it was detected."""

    def __init__(self, message: str, line: int, col: int) -> None:
        super().__init__(f"line {line}, col {col}: {message}")
        self.line = line
        self.col = col


class JsonlError(DataError):
    """Broken JSONL input; names the offending 1-based line number."""

    def __init__(self, message: str, lineno: int) -> None:
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


class NumericError(Exception):
    """Non-finite values encountered where finite math is required."""
