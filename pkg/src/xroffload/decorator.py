"""Decorators for xroffload.

`exit_codes` turns the package exceptions raised by a command into a printed
diagnostic and a process exit code:

| exit code | raised                                                      |
|-----------|-------------------------------------------------------------|
| 0         | nothing                                                     |
| 2         | `ScenarioError` and other `ValueError`s, unreadable files   |
| 3         | `NumericError`                                              |

Examples:

```python
import click
from xroffload.decorator import exit_codes

@click.command()
@exit_codes
def solve() -> None:
    ...
```
"""

from __future__ import annotations

from functools import wraps
from typing import Any, Callable, TypeVar, cast

import click
from loguru import logger

from xroffload._console import error
from xroffload.errors import NumericError

__all__ = ["exit_codes", "EXIT_CONFIG", "EXIT_NUMERIC"]

EXIT_CONFIG = 2
EXIT_NUMERIC = 3

_F = TypeVar("_F", bound=Callable[..., Any])


def exit_codes(command: _F) -> _F:
    """Map package errors raised by `command` to exit codes 2 and 3."""

    @wraps(command)
    def wrapper(*args: Any, **kwargs: Any) -> Any:
        try:
            return command(*args, **kwargs)
        except NumericError as exc:
            logger.opt(exception=exc).debug("numeric failure")
            error(str(exc))
            raise click.exceptions.Exit(EXIT_NUMERIC) from exc
        except (ValueError, OSError) as exc:
            logger.opt(exception=exc).debug("configuration failure")
            error(str(exc))
            raise click.exceptions.Exit(EXIT_CONFIG) from exc

    return cast(_F, wrapper)
