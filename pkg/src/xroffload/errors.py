"""Exception types raised by xroffload.

Configuration and data problems raise `ScenarioError`, numeric infeasibility
raises `NumericError`. Both derive from `XROffloadError` so callers can catch
everything from this package at once; `ScenarioError` is also a `ValueError`.
"""

from __future__ import annotations

__all__ = [
    "XROffloadError",
    "ScenarioError",
    "InstanceTooLargeError",
    "NumericError",
]


class XROffloadError(Exception):
    """Base class for all errors raised by xroffload."""


class ScenarioError(XROffloadError, ValueError):
    """Invalid scenario, experiment or impulse-response input.

    Args:
        message: What is wrong.
        source: File the value came from, if any.
        line: 1-based line number inside `source`, if known.
        field: Dotted path of the offending field, e.g. `devices[1].tdp_w`.
    """

    def __init__(
        self,
        message: str,
        source: str | None = None,
        line: int | None = None,
        field: str | None = None,
    ) -> None:
        self.message = message
        self.source = source
        self.line = line
        self.field = field
        super().__init__(str(self))

    def __str__(self) -> str:
        where = ""
        if self.source:
            where = self.source + (f":{self.line}" if self.line else "")
        if self.field:
            where = f"{where} [{self.field}]" if where else f"[{self.field}]"
        return f"{where}: {self.message}" if where else self.message


class InstanceTooLargeError(ScenarioError):
    """The exhaustive oracle was asked to enumerate too many requests."""


class NumericError(XROffloadError, ArithmeticError):
    """A numeric procedure could not produce a valid answer.

    Args:
        message: What went wrong.
        constraint: Name of the constraint involved (`power`, `battery`, `temperature`).
    """

    def __init__(self, message: str, constraint: str | None = None) -> None:
        self.constraint = constraint
        super().__init__(f"{message} (constraint: {constraint})" if constraint else message)
