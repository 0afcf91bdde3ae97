from __future__ import annotations

import math
from typing import Any, Iterable, Mapping, Sequence

from rich.console import Console
from rich.panel import Panel
from rich.progress import BarColumn, MofNCompleteColumn, Progress, TextColumn, TimeElapsedColumn
from rich.table import Table


def _cell(value: Any) -> str:
    if isinstance(value, float):
        if math.isnan(value) or math.isinf(value):
            return str(value)
        return f"{value:.6g}"
    return str(value)


class RichReport:
    """Console summaries for the command line: tables, panels and a sweep bar."""

    def __init__(self, console: Console | None = None, quiet: bool = False):
        self.console = console or Console()
        self.quiet = quiet
        self._progress: Progress | None = None
        self._task = None

    def table(self, title: str, columns: Sequence[str], rows: Iterable[Sequence[Any]]) -> Table:
        table = Table(title=title, title_style="bold cyan", header_style="magenta")
        for column in columns:
            table.add_column(column)
        for row in rows:
            table.add_row(*(_cell(v) for v in row))
        if not self.quiet:
            self.console.print(table)
        return table

    def mapping(self, title: str, values: Mapping[str, Any]) -> Table:
        return self.table(title, ("quantity", "value"), ((k, v) for k, v in values.items()))

    def panel(self, text: str, title: str = "", style: str = "green") -> None:
        if not self.quiet:
            self.console.print(Panel(text, title=title, border_style=style))

    def written(self, paths: Iterable[Any]) -> None:
        lines = "\n".join(f"[bright_green]{p}[/]" for p in paths)
        self.panel(lines or "(nothing)", title="Files written", style="green")

    def error(self, message: str) -> None:
        # errors are shown even when quiet
        self.console.print(Panel(f"[bold red]{message}[/]", title="Error", border_style="red"))

    def warn(self, message: str) -> None:
        if not self.quiet:
            self.console.print(f"[yellow]warning:[/] {message}")

    # -- sweep progress (ResultSink hooks) ---------------------------------

    def start(self, total: int) -> None:
        self._progress = Progress(
            TextColumn("[cyan]sweep"),
            BarColumn(),
            MofNCompleteColumn(),
            TimeElapsedColumn(),
            console=self.console,
            disable=self.quiet,
        )
        self._progress.start()
        self._task = self._progress.add_task("sweep", total=total)

    def advance(self) -> None:
        if self._progress is not None:
            self._progress.advance(self._task)

    def stop(self) -> None:
        if self._progress is not None:
            self._progress.stop()
            self._progress = None
