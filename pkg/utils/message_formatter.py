from enum import Enum

import pandas as pd
from rich.console import Console
from rich.panel import Panel
from rich.table import Table


class Role(str, Enum):
    STAGE = "stage"
    RESULT = "result"
    WARNING = "warning"
    ERROR = "error"


class MessageFormatter:
    console = Console(highlight=False)

    @staticmethod
    def _render(renderable) -> str:
        with MessageFormatter.console.capture() as capture:
            MessageFormatter.console.print(renderable)
        return capture.get()

    @staticmethod
    def format_message(role: Role, content: str) -> str:
        """Format a message with a colored box based on the role."""
        if role == Role.STAGE:
            color = "blue"
            emoji = "⚙️"
        elif role == Role.RESULT:
            color = "green"
            emoji = "📈"
        elif role == Role.WARNING:
            color = "yellow"
            emoji = "⚠️"
        elif role == Role.ERROR:
            color = "red"
            emoji = "❌"
        else:
            color = "gray"
            emoji = "📝"

        panel = Panel(
            content,
            title=f"{emoji} {Role(role).value.upper()}",
            border_style=color,
            expand=False,
            padding=(1, 2),
        )
        return MessageFormatter._render(panel)

    @staticmethod
    def format_table(frame: pd.DataFrame, title: str = "", float_format: str = "{:.4g}") -> str:
        """Render a report frame as a rich table; an empty frame shows its header only."""
        table = Table(title=title or None, show_lines=False)
        for column in frame.columns:
            table.add_column(str(column), justify="right")
        for row in frame.itertuples(index=False):
            table.add_row(*(float_format.format(value) if isinstance(value, float) else str(value) for value in row))
        return MessageFormatter._render(table)
