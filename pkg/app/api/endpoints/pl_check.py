""" PLACKETT-LUCE CHECK COMMAND """
from pathlib import Path
from typing import Annotated, List, Optional

import typer
from rich.console import Console
from rich.table import Table

from app.api.dependencies import get_data_manager, parse_scores, resolve_seed
from app.datamanager.exceptions_handler import handle_exceptions
from app.services import validation_service

console = Console()


@handle_exceptions
def pl_check(
        scores: Annotated[List[str], typer.Argument(help="Positive Plackett-Luce scores, n <= 6")],
        samples: Annotated[int, typer.Option(help="Number of hard samples", min=1)] = 100000,
        seed: Annotated[Optional[int], typer.Option(help="Sampler seed (default: UNISORT_SEED or 0)")] = None,
        out: Annotated[Optional[Path], typer.Option(help="Write permutation,pmf,frequency CSV here")] = None,
        as_json: Annotated[bool, typer.Option("--json", help="Print the report as JSON")] = False,
):
    """
    Goodness of fit of the Gumbel sampler: exact pmf against empirical frequencies of every permutation.
    :param scores: PL scores
    :param samples: sample count
    :param seed: sampler seed
    :param out: optional CSV path
    :param as_json: machine-readable output
    :return: table, total-variation distance and chi-squared statistic
    """
    report = validation_service.pl_check(parse_scores(scores), samples, resolve_seed(seed))
    if out is not None:
        get_data_manager().write_pl_check(report, out)
    if as_json:
        typer.echo(report.model_dump_json(indent=2))
        return
    table = Table(title=f"Plackett-Luce check, {report.n_samples} samples, seed {report.seed}")
    table.add_column("permutation")
    table.add_column("pmf", justify="right")
    table.add_column("frequency", justify="right")
    for row in report.rows:
        table.add_row(row.permutation, f"{row.pmf:.6f}", f"{row.frequency:.6f}")
    console.print(table)
    console.print(
        f"TV distance {report.tv_distance:.6f}   chi-squared {report.chi_squared:.4f}   p-value {report.p_value:.4f}"
    )
