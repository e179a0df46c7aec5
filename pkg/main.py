"""
    unisort command line: differentiable sorting demo, Plackett-Luce sampler check,
    desk-scale training tasks, temperature / variance sweep and the oracle validation suite.

    Exit codes: 0 success, 1 usage error, 2 runtime or validation failure.
"""
import logging
import sys
from typing import Annotated, Optional

import click
import typer

from app.core.config import EXIT_OK, EXIT_RUNTIME, EXIT_USAGE
from app.core.logging_config import configure_logging

# --- Import your command(s) ---
from app.api.endpoints import demo
from app.api.endpoints import pl_check
from app.api.endpoints import train
from app.api.endpoints import sweep
from app.api.endpoints import validate

# --- Main Typer Application Instance ---
app = typer.Typer(
    name="unisort",
    help="Differentiable sorting with unimodal relaxations and Plackett-Luce gradient estimators.",
    no_args_is_help=True,
    add_completion=False,
    pretty_exceptions_enable=False,
)

# --- Register your commands ---
app.command("sort-demo")(demo.sort_demo)
app.command("pl-check")(pl_check.pl_check)
app.command("train")(train.train)
app.command("variance-sweep")(sweep.variance_sweep)
app.command("validate")(validate.validate)


@app.callback()
def main(
        log_level: Annotated[Optional[str], typer.Option(help="Overrides UNISORT_LOG_LEVEL, e.g. INFO")] = None,
):
    """ Logging goes to stderr; stdout only carries reports, CSV and JSON """
    if log_level is not None and not isinstance(logging.getLevelName(log_level.upper()), int):
        raise typer.BadParameter(f"unknown level {log_level!r}", param_hint="--log-level")
    configure_logging(log_level)


def run(argv: list[str] | None = None) -> int:
    """ Runs the CLI without exiting the interpreter and returns the exit code """
    command = typer.main.get_command(app)
    try:
        code = command.main(args=argv, prog_name="unisort", standalone_mode=False)
    except click.UsageError as e:
        e.show()
        return EXIT_USAGE
    except click.ClickException as e:
        e.show()
        return EXIT_USAGE
    except click.Abort:
        return EXIT_RUNTIME
    return code if isinstance(code, int) else EXIT_OK


if __name__ == "__main__":
    sys.exit(run())
