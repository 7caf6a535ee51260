"""Exception hierarchy shared by every module."""

from __future__ import annotations


class HanfError(Exception):
    """Base class for all errors raised by this package."""


class ElementError(HanfError, IndexError):
    """An element index lies outside the universe."""


class ParseError(HanfError, ValueError):
    def __init__(self, message: str, position: int | None = None):
        self.position = position
        if position is not None:
            message = f"{message} (at offset {position})"
        super().__init__(message)


class SignatureError(HanfError, ValueError):
    """Unknown relation symbol, wrong arity, or mismatched signatures."""


class CenterMismatchError(HanfError, ValueError):
    """Two spheres with different numbers of centers were compared."""


class BudgetExceeded(HanfError):
    """A configured resource cap was hit.

    ``stats`` carries whatever partial statistics the caller had gathered
    when the cap tripped.
    """

    def __init__(self, message: str, stats: dict | None = None):
        self.stats = dict(stats or {})
        super().__init__(message)


class EvaluationError(HanfError, ValueError):
    """Unassigned free variable or otherwise ill-posed evaluation."""
