""" VALIDATE COMMAND """
from typing import Annotated, List, Optional

import typer
from pydantic import TypeAdapter
from rich.console import Console
from rich.table import Table

from app.api.dependencies import resolve_seed
from app.core.config import EXIT_RUNTIME
from app.datamanager.exception_classes import InvalidArgumentError
from app.datamanager.exceptions_handler import handle_exceptions
from app.schemas.pydantic_models import PropertyResult
from app.services.validation_service import PROPERTIES, run_validation_suite

console = Console()


@handle_exceptions
def validate(
        only: Annotated[Optional[List[str]], typer.Option(help=f"Run only these properties: {', '.join(PROPERTIES)}")] = None,
        seed: Annotated[Optional[int], typer.Option(help="Seed of the property inputs (default: UNISORT_SEED or 0)")] = None,
        as_json: Annotated[bool, typer.Option("--json", help="Print the results as JSON")] = False,
):
    """
    Runs the oracle property suite and prints pass/fail per property; exits with 2 if any property fails.
    :param only: subset of property keys
    :param seed: input seed
    :param as_json: machine-readable output
    """
    unknown = sorted(set(only or []) - set(PROPERTIES))
    if unknown:
        raise InvalidArgumentError("only", unknown, f"property keys among {list(PROPERTIES)}")
    results = run_validation_suite(resolve_seed(seed), only)

    if as_json:
        typer.echo(TypeAdapter(list[PropertyResult]).dump_json(results, indent=2).decode())
    else:
        table = Table(title="Validation suite")
        table.add_column("property")
        table.add_column("result")
        table.add_column("detail")
        table.add_column("counterexample", overflow="fold")
        for result in results:
            status = "[green]PASS[/green]" if result.passed else "[red]FAIL[/red]"
            table.add_row(result.name, status, result.detail, result.counterexample or "")
        console.print(table)

    if not all(result.passed for result in results):
        raise typer.Exit(code=EXIT_RUNTIME)
