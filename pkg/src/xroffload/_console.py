"""Terminal output of the command line: status lines on stderr, tables on stdout."""

from __future__ import annotations

import shutil

import pandas as pd
from rich.console import Console
from rich.table import Table

out = Console(highlight=False)
err = Console(stderr=True, highlight=False)


def header(msg: str = "", symb: str = "-", style: str = "blue bold") -> None:
    width = shutil.get_terminal_size(fallback=(80, 20)).columns
    width = 50 if width < 50 else 120 if width > 120 else width
    min_ = 6
    max_ = width - min_ - 2
    if not msg:
        err.print(f"[dim]{symb * width}[/]")
        return
    start = symb * (max_ - len(msg)) if len(msg) < max_ else symb * min_
    err.print(f"[dim]{start}[/] [{style}]{msg}[/] [dim]{symb * min_}[/]")


def info(msg: str) -> None:
    err.print("[blue]Info   :[/]", msg)


def success(msg: str) -> None:
    err.print("[green bold]Success:[/]", msg)


def warning(msg: str) -> None:
    err.print("[yellow]Warning:[/]", msg)


def error(msg: str) -> None:
    err.print(f"[red bold]Error:  [/] [red]{msg}[/]", soft_wrap=True)


def table(frame: pd.DataFrame, title: str | None = None, digits: int = 4) -> None:
    """Print a data frame as a rich table."""
    view = Table(title=title, title_justify="left")
    for column in frame.columns:
        numeric = pd.api.types.is_numeric_dtype(frame[column]) and frame[column].dtype != bool
        view.add_column(str(column), justify="right" if numeric else "left")
    for row in frame.itertuples(index=False):
        view.add_row(*(_cell(v, digits) for v in row))
    out.print(view)


def _cell(value: object, digits: int) -> str:
    if isinstance(value, float):
        return f"{value:.{digits}g}"
    return str(value)
