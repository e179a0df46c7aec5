"""
    DataManager on plain UTF-8 files: key=value configs in, CSV and JSON results out.

    CSV layout (gnuplot friendly, '\\n' line endings, floats with 17 significant digits):
        learning curve   epoch,train_loss,valid_metric
        variance sweep   tau,log_variance
        pl-check         permutation,pmf,frequency
"""
import csv
import io
import logging
from pathlib import Path
from typing import Iterable, Sequence

from pydantic import BaseModel

from app.core.config import CSV_FLOAT_FORMAT
from app.datamanager.data_manager_interface import DataManagerInterface
from app.datamanager.exception_classes import ConfigFileError
from app.schemas.pydantic_models import EpochRecord, PLCheckReport, SweepRow

logger = logging.getLogger(__name__)

CURVE_HEADER = ("epoch", "train_loss", "valid_metric")
SWEEP_HEADER = ("tau", "log_variance")
PL_CHECK_HEADER = ("permutation", "pmf", "frequency")


def _cell(value) -> str:
    if isinstance(value, float):
        return format(value, CSV_FLOAT_FORMAT)
    return str(value)


def to_csv(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_cell(v) for v in row])
    return buffer.getvalue()


def curve_csv(curve: list[EpochRecord]) -> str:
    return to_csv(CURVE_HEADER, ((r.epoch, r.train_loss, r.valid_metric) for r in curve))


def sweep_csv(rows: list[SweepRow]) -> str:
    return to_csv(SWEEP_HEADER, ((r.tau, r.log_variance) for r in rows))


def pl_check_csv(report: PLCheckReport) -> str:
    return to_csv(PL_CHECK_HEADER, ((r.permutation, r.pmf, r.frequency) for r in report.rows))


def parse_config_text(text: str, source: str = "<string>") -> dict[str, str]:
    """
    key=value per line; '#' starts a comment, blank lines are skipped.
    Keys are case-insensitive and '-' is read as '_' (so `n-samples` and `n_samples` agree).
    An empty value or `none` stands for "unset".
    """
    values: dict[str, str] = {}
    for line_number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigFileError(source, f"expected key=value, got {raw.strip()!r}", line_number)
        key, value = (part.strip() for part in line.split("=", 1))
        key = key.lower().replace("-", "_")
        if not key:
            raise ConfigFileError(source, "empty key", line_number)
        if key in values:
            raise ConfigFileError(source, f"duplicate key {key!r}", line_number)
        values[key] = None if value.lower() in ("", "none") else value
    return values


class FileDataManager(DataManagerInterface):
    """ Reads configs from and writes results to the local filesystem """

    def __init__(self, encoding: str = "utf-8"):
        self.encoding = encoding

    def read_config(self, path: str | Path) -> dict[str, str]:
        path = Path(path)
        try:
            text = path.read_text(encoding=self.encoding)
        except FileNotFoundError:
            raise ConfigFileError(str(path), "file not found")
        except (OSError, UnicodeDecodeError) as e:
            raise ConfigFileError(str(path), f"cannot be read ({e})")
        return parse_config_text(text, str(path))

    def _write(self, text: str, path: str | Path) -> Path:
        path = Path(path)
        if path.parent != Path(""):
            path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding=self.encoding, newline="") as handle:
            handle.write(text)
        logger.info("Wrote %s", path)
        return path

    def write_curve(self, curve: list[EpochRecord], path: str | Path) -> Path:
        return self._write(curve_csv(curve), path)

    def write_sweep(self, rows: list[SweepRow], path: str | Path) -> Path:
        return self._write(sweep_csv(rows), path)

    def write_pl_check(self, report: PLCheckReport, path: str | Path) -> Path:
        return self._write(pl_check_csv(report), path)

    def write_json(self, record: BaseModel, path: str | Path) -> Path:
        return self._write(record.model_dump_json(indent=2) + "\n", path)
