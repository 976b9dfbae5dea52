"""Custom exceptions used throughout the keysim package."""

from __future__ import annotations

from typing import Optional


class KeysimError(Exception):
    """Base exception for analysis failures."""


class ListingParseError(KeysimError):
    """Raised when a disassembly listing violates the expected format."""

    def __init__(
        self,
        message: str,
        *,
        function: Optional[str] = None,
        address: Optional[int] = None,
    ) -> None:
        self.function = function
        self.address = address
        context = []
        if function is not None:
            context.append(f"function {function}")
        if address is not None:
            context.append(f"address {address:#x}")
        if context:
            message = f"{message} ({', '.join(context)})"
        super().__init__(message)


class OperandSyntaxError(ListingParseError):
    """Raised when an Intel-syntax operand string cannot be parsed."""


class TraversalError(KeysimError):
    """Raised when a key instruction has no symbolic record."""


class GraphCycleError(KeysimError):
    """Raised when a topological sort is requested on a cyclic graph."""


class SignatureMismatchError(KeysimError):
    """Raised when two signatures were built with different parameters."""


class EmptyProgramError(KeysimError):
    """Raised when a program has no functions left to compare."""


class FunctionNotFoundError(KeysimError):
    """Raised when a function selector matches nothing."""

    def __init__(self, selector: str, available: list[str]) -> None:
        self.selector = selector
        self.available = available
        super().__init__(f"No function matches {selector!r}")
