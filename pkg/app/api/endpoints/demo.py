""" SORT DEMO COMMAND """
from pathlib import Path
from typing import Annotated, List, Optional

import typer
from rich.console import Console
from rich.table import Table

from app.api.dependencies import get_data_manager, parse_scores
from app.datamanager.exceptions_handler import handle_exceptions
from app.schemas.pydantic_models import SortDemoReport
from app.services.relaxation_service import (
    as_scores, check_temperature, classify_matrix, project_hard, relaxed_sort, sort_permutation
)

console = Console()


def build_report(scores: list[float], tau: float) -> SortDemoReport:
    s = as_scores(scores)
    p_hat = relaxed_sort(s, check_temperature(tau))
    return SortDemoReport(
        scores=scores,
        tau=tau,
        permutation=sort_permutation(s).tolist(),
        relaxed=p_hat.tolist(),
        projection=project_hard(p_hat).tolist(),
        classification=classify_matrix(p_hat),
    )


def _render(report: SortDemoReport):
    console.print(f"sort(s)        = {report.permutation}")
    table = Table(title=f"relaxed sort matrix (tau = {report.tau:g})")
    table.add_column("rank", justify="right")
    for j in range(len(report.scores)):
        table.add_column(f"s{j + 1}={report.scores[j]:g}", justify="right")
    for i, row in enumerate(report.relaxed, start=1):
        table.add_row(str(i), *(f"{p:.4f}" for p in row))
    console.print(table)
    console.print(f"project_hard   = {report.projection}")
    flags = report.classification
    console.print(
        f"row stochastic: {flags.row_stochastic}  doubly stochastic: {flags.doubly_stochastic}  "
        f"unimodal: {flags.unimodal}  permutation: {flags.permutation}"
    )


@handle_exceptions
def sort_demo(
        scores: Annotated[List[str], typer.Argument(help="Scores, e.g. `9 1 5 2` (negative values after `--`)")],
        tau: Annotated[float, typer.Option(help="Temperature tau > 0")] = 1.0,
        out: Annotated[Optional[Path], typer.Option(help="Also write the JSON dump to this file")] = None,
        as_json: Annotated[bool, typer.Option("--json", help="Print JSON instead of tables")] = False,
):
    """
    Exact sort, relaxed sort matrix, hard projection and matrix classification of SCORES.
    :param scores: positional score list
    :param tau: relaxation temperature
    :param out: optional JSON path
    :param as_json: machine-readable output
    """
    report = build_report(parse_scores(scores), tau)
    if out is not None:
        get_data_manager().write_json(report, out)
    if as_json:
        typer.echo(report.model_dump_json(indent=2))
    else:
        _render(report)
