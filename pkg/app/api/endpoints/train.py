""" TRAIN COMMAND """
from pathlib import Path
from typing import Annotated, Optional

import typer

from app.api.dependencies import build_run_config, get_data_manager
from app.datamanager.exceptions_handler import handle_exceptions
from app.services.training_service import run_task, tune_temperature


@handle_exceptions
def train(
        task: Annotated[Optional[str], typer.Option(help="sort | median | knn")] = None,
        mode: Annotated[Optional[str], typer.Option(help="det | stoch | st")] = None,
        n: Annotated[Optional[int], typer.Option(help="Sequence length, or kNN candidates per query")] = None,
        d: Annotated[Optional[int], typer.Option(help="Feature dimension")] = None,
        k: Annotated[Optional[int], typer.Option(help="Neighbours for kNN")] = None,
        tau: Annotated[Optional[float], typer.Option(help="Temperature")] = None,
        epochs: Annotated[Optional[int], typer.Option()] = None,
        lr: Annotated[Optional[float], typer.Option(help="Learning rate")] = None,
        samples: Annotated[Optional[int], typer.Option(help="Monte Carlo samples per step (stochastic mode)")] = None,
        seed: Annotated[Optional[int], typer.Option(help="Run seed (default: UNISORT_SEED or 0)")] = None,
        noise: Annotated[Optional[float], typer.Option(help="Feature noise of the synthetic sequences")] = None,
        quantile: Annotated[Optional[float], typer.Option(help="Quantile for the median task")] = None,
        readout: Annotated[Optional[str], typer.Option(help="features | values (median task)")] = None,
        dataset: Annotated[Optional[str], typer.Option(help="rings | blobs (kNN task)")] = None,
        tune_tau: Annotated[bool, typer.Option("--tune-tau", help="Pick tau from {1,2,4,8,16} on validation")] = False,
        out: Annotated[Optional[Path], typer.Option(help="Per-epoch CSV; metrics JSON goes next to it")] = None,
        config: Annotated[Optional[Path], typer.Option(help="key=value run configuration, overridden by flags")] = None,
):
    """
    Trains one desk-scale task and prints the final test metrics as JSON.
    :param task: which experiment
    :param config: optional config file; every other option overrides its keys
    :param out: where to write the learning curve
    :return: MetricsRecord JSON on stdout
    """
    run_config = build_run_config(
        config,
        task=task, mode=mode, n=n, d=d, k=k, tau=tau, epochs=epochs, lr=lr, n_samples=samples, seed=seed,
        noise=noise, quantile=quantile, readout=readout, dataset=dataset, out=str(out) if out else None,
    )
    if tune_tau:
        best, results = tune_temperature(run_config)
        result = results[best]
    else:
        result = run_task(run_config)

    if run_config.out:
        data_manager = get_data_manager()
        curve_path = Path(run_config.out)
        data_manager.write_curve(result.curve, curve_path)
        data_manager.write_json(result.metrics, curve_path.with_suffix(".json"))
    typer.echo(result.metrics.model_dump_json(indent=2))
