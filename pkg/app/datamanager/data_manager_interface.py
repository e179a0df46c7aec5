"""
    Defines an interface for our DataManager using Python’s abc (Abstract Base Classes) module
    Every CLI command reads run configurations and writes its results through it.
"""
from abc import ABC, abstractmethod
from pathlib import Path

from pydantic import BaseModel

from app.schemas.pydantic_models import EpochRecord, PLCheckReport, SweepRow


class DataManagerInterface(ABC):
    """ Defines methods for reading configurations and persisting results. """

# Configuration
    @abstractmethod
    def read_config(self, path: str | Path) -> dict[str, str]:
        """ Parses a flat key=value config file into raw string values. """
        pass

# Results
    @abstractmethod
    def write_curve(self, curve: list[EpochRecord], path: str | Path) -> Path:
        """ Writes a per-epoch learning curve. """
        pass

    @abstractmethod
    def write_sweep(self, rows: list[SweepRow], path: str | Path) -> Path:
        """ Writes a temperature / log-variance table. """
        pass

    @abstractmethod
    def write_pl_check(self, report: PLCheckReport, path: str | Path) -> Path:
        """ Writes the permutation / pmf / frequency table of a goodness-of-fit check. """
        pass

    @abstractmethod
    def write_json(self, record: BaseModel, path: str | Path) -> Path:
        """ Writes one record as JSON. """
        pass
