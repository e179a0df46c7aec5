""" VARIANCE SWEEP COMMAND """
import json
from pathlib import Path
from typing import Annotated, Optional

import typer

from app.api.dependencies import build_sweep_config, get_data_manager
from app.datamanager.data_manager_files import sweep_csv
from app.datamanager.exceptions_handler import handle_exceptions
from app.services.training_service import is_non_increasing, variance_sweep as run_sweep


@handle_exceptions
def variance_sweep(
        n: Annotated[Optional[int], typer.Option(help="Sequence length")] = None,
        d: Annotated[Optional[int], typer.Option(help="Feature dimension")] = None,
        noise: Annotated[Optional[float], typer.Option()] = None,
        sequences: Annotated[Optional[int], typer.Option(help="Sequences averaged per temperature")] = None,
        taus: Annotated[Optional[str], typer.Option(help="Comma separated temperatures, default 1,2,4,8,16")] = None,
        samples: Annotated[Optional[int], typer.Option(help="Gradient samples per sequence (>= 2)")] = None,
        seed: Annotated[Optional[int], typer.Option(help="Sweep seed (default: UNISORT_SEED or 0)")] = None,
        out: Annotated[Optional[Path], typer.Option(help="Write tau,log_variance CSV here instead of stdout")] = None,
        config: Annotated[Optional[Path], typer.Option(help="key=value sweep configuration")] = None,
        as_json: Annotated[bool, typer.Option("--json", help="Print rows and trend flag as JSON")] = False,
):
    """
    Log-variance of reparameterized gradient samples of the stochastic sort objective per temperature.
    :param taus: temperatures to sweep
    :param samples: per-sample gradients used for each variance
    :return: CSV (or JSON) and a `# non_increasing=` summary line
    """
    sweep_config = build_sweep_config(
        config, n=n, d=d, noise=noise, n_sequences=sequences, taus=taus, n_samples=samples, seed=seed
    )
    rows = run_sweep(sweep_config)
    trend = is_non_increasing(rows)
    if out is not None:
        get_data_manager().write_sweep(rows, out)
    if as_json:
        payload = {"rows": [r.model_dump() for r in rows], "non_increasing": trend}
        typer.echo(json.dumps(payload, indent=2))
        return
    if out is None:
        typer.echo(sweep_csv(rows), nl=False)
    typer.echo(f"# non_increasing={str(trend).lower()}")
