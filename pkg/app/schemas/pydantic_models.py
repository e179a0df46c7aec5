import math
from typing import List, Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


# -----   SCORES AND PERMUTATIONS   -----

class ScoreVector(BaseModel):
    model_config = ConfigDict(frozen=True)

    values: tuple[float, ...]

    @field_validator("values")
    def validate_values(cls, v):
        """ n >= 1 and every entry finite """
        if len(v) == 0:
            raise ValueError("A score vector needs at least one entry")
        if not all(math.isfinite(x) for x in v):
            raise ValueError("Scores must be finite (no NaN or Inf)")
        return v

    def to_array(self) -> np.ndarray:
        return np.asarray(self.values, dtype=np.float64)


class Permutation(BaseModel):
    """ 1-based list of unique indices """
    model_config = ConfigDict(frozen=True)

    indices: tuple[int, ...]

    @field_validator("indices")
    def validate_indices(cls, v):
        if sorted(v) != list(range(1, len(v) + 1)):
            raise ValueError(f"{list(v)} is not a permutation of 1..{len(v)}")
        return v

    def to_array(self) -> np.ndarray:
        return np.asarray(self.indices, dtype=np.int64)

    def __str__(self) -> str:
        return "[" + ",".join(str(i) for i in self.indices) + "]"


class MatrixClassification(BaseModel):
    row_stochastic: bool
    doubly_stochastic: bool
    unimodal: bool
    permutation: bool


# -----   PLACKETT-LUCE   -----

class PLParams(BaseModel):
    model_config = ConfigDict(frozen=True)

    scores: tuple[float, ...]
    beta: float = Field(1.0, gt=0)  # Gumbel scale, 1 unless stated otherwise

    @field_validator("scores")
    def validate_scores(cls, v):
        """ Plackett-Luce scores are strictly positive """
        if len(v) == 0:
            raise ValueError("At least one score is required")
        if not all(math.isfinite(x) and x > 0 for x in v):
            raise ValueError("Plackett-Luce scores must be finite and > 0")
        return v

    @property
    def n(self) -> int:
        return len(self.scores)

    def to_array(self) -> np.ndarray:
        return np.asarray(self.scores, dtype=np.float64)


class GumbelNoise(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    g: np.ndarray
    seed: int
    eps: float = 1e-10


class EstimatorReport(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    estimate: np.ndarray
    n_samples: int
    samples: np.ndarray  # one gradient per row
    objective_values: Optional[np.ndarray] = None

    @model_validator(mode="after")
    def check_mean(self):
        if self.samples.shape[0] != self.n_samples:
            raise ValueError("One per-sample gradient is required per sample")
        if not np.allclose(self.estimate, self.samples.mean(axis=0), rtol=0, atol=1e-12):
            raise ValueError("The estimate must equal the mean of the per-sample values")
        return self

    @property
    def variance(self) -> np.ndarray:
        """ Per-coordinate unbiased variance of the per-sample gradients """
        if self.n_samples < 2:
            raise ValueError("Variance needs at least two samples")
        return self.samples.var(axis=0, ddof=1)

    @property
    def standard_error(self) -> np.ndarray:
        return np.sqrt(self.variance / self.n_samples)


# -----   DATASETS   -----

class SyntheticSequenceDataset(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    features: np.ndarray  # (count, n, d)
    values: np.ndarray  # (count, n), distinct within a sequence
    split: Literal["train", "valid", "test"] = "train"
    seed: int

    @property
    def count(self) -> int:
        return int(self.values.shape[0])

    @property
    def n(self) -> int:
        return int(self.values.shape[1])


class SequenceSplits(BaseModel):
    train: SyntheticSequenceDataset
    valid: SyntheticSequenceDataset
    test: SyntheticSequenceDataset


class LabeledPointDataset(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    features: np.ndarray  # (count, d)
    labels: np.ndarray  # (count,) integer classes
    split: Literal["train", "valid", "test"] = "train"
    seed: int

    @property
    def count(self) -> int:
        return int(self.labels.shape[0])


# -----   TRAINING   -----

Mode = Literal["deterministic", "stochastic", "straight_through"]
Task = Literal["sort", "median", "knn"]

MODE_ALIASES = {
    "det": "deterministic",
    "stoch": "stochastic",
    "st": "straight_through",
}


def normalize_mode(value: str) -> str:
    return MODE_ALIASES.get(value, value)


class MetricsRecord(BaseModel):
    task: Task
    mode: Mode
    tau: float
    exact_perm_accuracy: Optional[float] = Field(None, ge=0, le=1)
    element_rank_accuracy: Optional[float] = Field(None, ge=0, le=1)
    relaxation_mse: Optional[float] = Field(None, ge=0)
    mse: Optional[float] = Field(None, ge=0)
    r2: Optional[float] = Field(None, le=1)
    mse_sample_avg: Optional[float] = Field(None, ge=0)
    knn_accuracy: Optional[float] = Field(None, ge=0, le=1)
    raw_knn_accuracy: Optional[float] = Field(None, ge=0, le=1)

    @model_validator(mode="after")
    def check_accuracy_order(self):
        """ A fully correct permutation has every element rank correct """
        if self.exact_perm_accuracy is not None and self.element_rank_accuracy is not None:
            if self.exact_perm_accuracy > self.element_rank_accuracy + 1e-12:
                raise ValueError("exact_perm_accuracy cannot exceed element_rank_accuracy")
        return self


class EpochRecord(BaseModel):
    epoch: int
    train_loss: float
    valid_metric: float


class TrainingResult(BaseModel):
    metrics: MetricsRecord
    curve: List[EpochRecord]
    initial_loss: float  # training objective before the first update

    @property
    def final_loss(self) -> float:
        return self.curve[-1].train_loss if self.curve else self.initial_loss


_TASK_DEFAULTS = {
    "sort": {"n": 5, "d": 4, "epochs": 30, "lr": 0.05, "k": 1},
    "median": {"n": 5, "d": 4, "epochs": 40, "lr": 0.05, "k": 1},
    "knn": {"n": 20, "d": 10, "epochs": 100, "lr": 0.01, "k": 3},
}


class RunConfig(BaseModel):
    """ Validated settings of one `train` invocation (config file + flags) """
    model_config = ConfigDict(extra="forbid")

    task: Task
    mode: Mode = "deterministic"
    n: Optional[int] = Field(None, ge=2)  # sequence length, or kNN candidate count
    d: Optional[int] = Field(None, ge=1)
    k: Optional[int] = Field(None, ge=1)
    tau: float = Field(1.0, gt=0)
    epochs: Optional[int] = Field(None, ge=1)
    lr: Optional[float] = Field(None, gt=0)
    n_samples: int = Field(5, ge=1)
    seed: int = 0
    out: Optional[str] = None
    noise: float = Field(0.05, ge=0)
    n_train: int = Field(400, ge=2)
    n_valid: int = Field(100, ge=1)
    n_test: int = Field(200, ge=1)
    batch_size: int = Field(20, ge=1)
    hidden: int = Field(16, ge=1)
    embedding_dim: int = Field(4, ge=1)
    momentum: Optional[float] = Field(None, ge=0, lt=1)
    quantile: float = Field(0.5, gt=0, lt=1)
    readout: Literal["features", "values"] = "features"
    dataset: Literal["rings", "blobs"] = "rings"
    levels: Optional[int] = Field(10, ge=2)

    @field_validator("mode", mode="before")
    def validate_mode(cls, v):
        """ Accepts the short flag spellings det / stoch / st """
        return normalize_mode(v) if isinstance(v, str) else v

    @model_validator(mode="after")
    def fill_task_defaults(self):
        for key, value in _TASK_DEFAULTS[self.task].items():
            if getattr(self, key) is None:
                setattr(self, key, value)
        if self.momentum is None:
            # SGD with momentum 0.9 for kNN, constant-step SGD elsewhere
            self.momentum = 0.9 if self.task == "knn" else 0.0
        if self.task == "knn":
            if self.k > self.n:
                raise ValueError(f"k={self.k} must not exceed the candidate count n={self.n}")
            if self.n >= self.n_train:
                raise ValueError("kNN needs more training points than candidates per query")
            if self.d < 2:
                raise ValueError("kNN datasets need d >= 2")
        elif self.task == "median" and self.quantile == 0.5 and self.n % 2 == 0:
            raise ValueError(f"The median task needs an odd sequence length, got n={self.n}")
        if self.levels is not None and self.task != "knn" and self.levels < self.n:
            raise ValueError(f"levels={self.levels} cannot produce {self.n} distinct values")
        return self


class SweepConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    n: int = Field(5, ge=2)
    d: int = Field(4, ge=1)
    noise: float = Field(0.05, ge=0)
    n_sequences: int = Field(4, ge=1)
    hidden: int = Field(16, ge=1)
    taus: tuple[float, ...] = (1.0, 2.0, 4.0, 8.0, 16.0)
    n_samples: int = Field(200, ge=2)
    seed: int = 0

    @field_validator("taus", mode="before")
    def split_taus(cls, v):
        """ Config files and flags give the temperatures as `1,2,4,8,16` """
        if isinstance(v, str):
            return tuple(part.strip() for part in v.split(",") if part.strip())
        return v

    @field_validator("taus")
    def validate_taus(cls, v):
        if len(v) == 0 or not all(math.isfinite(t) and t > 0 for t in v):
            raise ValueError("taus must be a non-empty list of positive temperatures")
        return v


class SweepRow(BaseModel):
    tau: float
    log_variance: float


# -----   CLI REPORTS   -----

class PLCheckRow(BaseModel):
    permutation: str
    pmf: float
    frequency: float


class PLCheckReport(BaseModel):
    scores: List[float]
    n_samples: int
    seed: int
    rows: List[PLCheckRow]
    tv_distance: float
    chi_squared: float
    p_value: float


class SortDemoReport(BaseModel):
    scores: List[float]
    tau: float
    permutation: List[int]
    relaxed: List[List[float]]
    projection: List[int]
    classification: MatrixClassification


class PropertyResult(BaseModel):
    name: str
    passed: bool
    detail: str
    counterexample: Optional[str] = None
