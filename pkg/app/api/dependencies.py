import math
from pathlib import Path
from typing import Any, Optional

from app.core.config import get_default_seed
from app.datamanager.data_manager_files import FileDataManager
from app.datamanager.exception_classes import InvalidArgumentError, InvalidInputError
from app.schemas.pydantic_models import RunConfig, SweepConfig


def get_data_manager() -> FileDataManager:
    return FileDataManager()


def resolve_seed(seed: Optional[int], config_values: Optional[dict] = None) -> int:
    """ --seed, then a `seed` key of the config file, then UNISORT_SEED, then 0 """
    if seed is not None:
        return seed
    if config_values and config_values.get("seed") is not None:
        try:
            return int(config_values["seed"])
        except ValueError:
            raise InvalidArgumentError("seed", config_values["seed"], "an integer")
    try:
        return get_default_seed()
    except ValueError as e:
        raise InvalidArgumentError("UNISORT_SEED", str(e), "an integer")


def parse_scores(tokens: list[str]) -> list[float]:
    """ Scores given as separate arguments and/or comma separated, e.g. `9 1 5 2` or `9,1,5,2` """
    values = []
    for token in tokens:
        for part in token.split(","):
            part = part.strip()
            if not part:
                continue
            try:
                value = float(part)
            except ValueError:
                raise InvalidInputError("scores", f"{part!r} is not a number")
            if not math.isfinite(value):
                raise InvalidInputError("scores", f"{part!r} is not finite")
            values.append(value)
    if not values:
        raise InvalidInputError("scores", "at least one score is required")
    return values


def _merge(config_path: Optional[Path], overrides: dict[str, Any]) -> dict[str, Any]:
    """ Config file values overridden by every flag that was given """
    values: dict[str, Any] = {}
    if config_path is not None:
        values.update({k: v for k, v in get_data_manager().read_config(config_path).items() if v is not None})
    values.update({k: v for k, v in overrides.items() if v is not None})
    return values


def build_run_config(config_path: Optional[Path], **flags) -> RunConfig:
    """ Validated RunConfig from an optional key=value file plus CLI flags (flags win) """
    values = _merge(config_path, {k: v for k, v in flags.items() if k != "seed"})
    values["seed"] = resolve_seed(flags.get("seed"), values)
    return RunConfig.model_validate(values)


def build_sweep_config(config_path: Optional[Path], **flags) -> SweepConfig:
    values = _merge(config_path, {k: v for k, v in flags.items() if k != "seed"})
    values["seed"] = resolve_seed(flags.get("seed"), values)
    return SweepConfig.model_validate(values)
