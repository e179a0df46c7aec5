"""
    Logging setup shared by the CLI and the services.
    Everything goes to stderr so stdout only carries CSV / JSON output.
"""
import logging

from rich.console import Console
from rich.logging import RichHandler

from app.core.config import LOG_LEVEL

_configured = False


def configure_logging(level: str | None = None) -> None:
    global _configured
    level_name = (level or LOG_LEVEL).upper()
    if not isinstance(logging.getLevelName(level_name), int):
        level_name = "WARNING"
    if _configured:
        logging.getLogger().setLevel(level_name)
        return
    logging.basicConfig(
        level=level_name,
        format="%(message)s",
        datefmt="[%X]",
        handlers=[RichHandler(console=Console(stderr=True), show_path=False, rich_tracebacks=False)],
    )
    _configured = True
