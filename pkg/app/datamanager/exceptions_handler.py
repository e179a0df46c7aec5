import logging
from functools import wraps

import typer
from pydantic import ValidationError

from app.core.config import EXIT_RUNTIME, EXIT_USAGE
from app.datamanager.exception_classes import (
    AmbiguousRankError, CapacityError, ConfigFileError, DatasetGenerationError, DomainError, InvalidArgumentError,
    InvalidInputError, TrainingDivergedError, UnisortError
)

logger = logging.getLogger(__name__)

# Errors the caller can fix by changing the command line or the config file
USAGE_ERRORS = (InvalidInputError, InvalidArgumentError, CapacityError, ConfigFileError)
# Failures while running a valid request
RUNTIME_ERRORS = (TrainingDivergedError, DomainError, AmbiguousRankError, DatasetGenerationError)


def _validation_message(exc: ValidationError) -> str:
    """ One line per failing field, e.g. `task: Field required` """
    lines = []
    for error in exc.errors():
        location = ".".join(str(part) for part in error["loc"]) or exc.title
        lines.append(f"{location}: {error['msg']}")
    return "; ".join(lines)


def handle_exceptions(func):
    """
    Turns library errors raised by a CLI command into a logged message and an exit code:
    usage errors exit with 1, runtime failures (and anything unexpected) with 2.
    """
    @wraps(func)
    def decorator(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except typer.Exit:
            raise
        except ValidationError as e:
            logger.error("Invalid configuration: %s", _validation_message(e))
            raise typer.Exit(code=EXIT_USAGE)
        except USAGE_ERRORS as e:
            logger.error("%s: %s", type(e).__name__, e)
            raise typer.Exit(code=EXIT_USAGE)
        except RUNTIME_ERRORS as e:
            logger.error("%s: %s", type(e).__name__, e)
            raise typer.Exit(code=EXIT_RUNTIME)
        except UnisortError as e:
            logger.error("%s: %s", type(e).__name__, e)
            raise typer.Exit(code=EXIT_RUNTIME)
        except Exception:
            logger.exception("Unexpected exception")
            raise typer.Exit(code=EXIT_RUNTIME)
    return decorator
