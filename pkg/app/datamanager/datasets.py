"""
    Synthetic, desk-scale datasets.

    Sequences: every item carries a hidden scalar value u in [0, 1] and is observed through d features
    x = u * a + noise * eps, with a fixed random encoding direction a (norm sqrt(d), a_1 > 0) and eps ~ N(0, I).
    Values are distinct within a sequence, so the ground-truth permutation is unique.

    Point clouds for kNN: two classes, either concentric rings or Gaussian blobs, in the first two
    coordinates, padded with nuisance Gaussian coordinates that swamp raw Euclidean distances.
"""
import logging

import numpy as np

from app.datamanager.exception_classes import DatasetGenerationError, InvalidArgumentError
from app.schemas.pydantic_models import LabeledPointDataset, SequenceSplits, SyntheticSequenceDataset
from app.services.plackett_luce_service import spawn_rng

logger = logging.getLogger(__name__)

MAX_RETRIES = 100
_SPLIT_STREAMS = {"train": 0, "valid": 1, "test": 2}


def encoding_direction(d: int, seed: int) -> np.ndarray:
    """ Fixed linear encoding shared by every split generated from the same seed """
    a = spawn_rng(seed, 99).standard_normal(d)
    a = a / np.linalg.norm(a) * np.sqrt(d)
    if a[0] < 0:
        a = -a
    return a


def _draw_values(rng: np.random.Generator, n: int, levels: int | None) -> np.ndarray:
    """ n distinct values in [0, 1]; on a grid of `levels` points, or continuous with retry on ties """
    if levels is not None:
        return rng.choice(levels, size=n, replace=False) / (levels - 1)
    for _ in range(MAX_RETRIES):
        values = rng.random(n)
        if np.unique(values).size == n:
            return values
    raise DatasetGenerationError("could not draw distinct values", MAX_RETRIES)


def generate_sequences(
        n: int,
        d: int,
        count: int,
        noise: float,
        seed: int,
        split: str = "train",
        levels: int | None = 10
) -> SyntheticSequenceDataset:
    """
    `count` sequences of n items with d features each, deterministic under (seed, split).
    With levels=None values are continuous and a sequence with tied values is redrawn (up to 100 times).
    """
    if n < 2:
        raise InvalidArgumentError("n", n, "an integer >= 2")
    if d < 1:
        raise InvalidArgumentError("d", d, "an integer >= 1")
    if count < 1:
        raise InvalidArgumentError("count", count, "an integer >= 1")
    if noise < 0:
        raise InvalidArgumentError("noise", noise, "a value >= 0")
    if levels is not None and levels < n:
        raise InvalidArgumentError("levels", levels, f"at least n = {n}")

    rng = spawn_rng(seed, _SPLIT_STREAMS[split])
    a = encoding_direction(d, seed)
    values = np.stack([_draw_values(rng, n, levels) for _ in range(count)])
    features = values[:, :, None] * a[None, None, :]
    if noise > 0:
        features = features + noise * rng.standard_normal(features.shape)
    logger.debug("Generated %d %s sequences (n=%d, d=%d, noise=%g)", count, split, n, d, noise)
    return SyntheticSequenceDataset(features=features, values=values, split=split, seed=seed)


def generate_splits(
        n: int,
        d: int,
        noise: float,
        seed: int,
        n_train: int,
        n_valid: int,
        n_test: int,
        levels: int | None = 10
) -> SequenceSplits:
    return SequenceSplits(
        train=generate_sequences(n, d, n_train, noise, seed, "train", levels),
        valid=generate_sequences(n, d, n_valid, noise, seed, "valid", levels),
        test=generate_sequences(n, d, n_test, noise, seed, "test", levels),
    )


def _rings(rng: np.random.Generator, count: int) -> tuple[np.ndarray, np.ndarray]:
    labels = rng.integers(0, 2, size=count)
    radius = np.where(labels == 0, 1.0, 2.0) + 0.1 * rng.standard_normal(count)
    angle = rng.uniform(0.0, 2.0 * np.pi, size=count)
    plane = np.stack([radius * np.cos(angle), radius * np.sin(angle)], axis=1)
    return plane, labels


def _blobs(rng: np.random.Generator, count: int) -> tuple[np.ndarray, np.ndarray]:
    labels = rng.integers(0, 2, size=count)
    centres = np.array([[-2.0, 0.0], [2.0, 0.0]])
    plane = centres[labels] + 0.5 * rng.standard_normal((count, 2))
    return plane, labels


def generate_points(
        kind: str,
        count: int,
        d: int,
        seed: int,
        split: str = "train",
        nuisance_scale: float = 1.5
) -> LabeledPointDataset:
    """
    Two-class points in d >= 2 dimensions: the class structure lives in the first two coordinates,
    the remaining d - 2 coordinates are N(0, nuisance_scale^2) noise.
    """
    if d < 2:
        raise InvalidArgumentError("d", d, "an integer >= 2")
    generators = {"rings": _rings, "blobs": _blobs}
    if kind not in generators:
        raise InvalidArgumentError("dataset", kind, "'rings' or 'blobs'")
    rng = spawn_rng(seed, _SPLIT_STREAMS[split] + 10)
    plane, labels = generators[kind](rng, count)
    nuisance = nuisance_scale * rng.standard_normal((count, d - 2))
    features = np.concatenate([plane, nuisance], axis=1)
    return LabeledPointDataset(features=features, labels=labels, split=split, seed=seed)


def generate_point_splits(
        kind: str,
        d: int,
        seed: int,
        n_train: int,
        n_valid: int,
        n_test: int
) -> tuple[LabeledPointDataset, LabeledPointDataset, LabeledPointDataset]:
    return (
        generate_points(kind, n_train, d, seed, "train"),
        generate_points(kind, n_valid, d, seed, "valid"),
        generate_points(kind, n_test, d, seed, "test"),
    )
