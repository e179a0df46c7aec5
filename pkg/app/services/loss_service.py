"""
    Training losses. Each one accepts numpy arrays (returns a float) or tape Values
    (returns a scalar Value); both paths run the same tape code, so values agree exactly.
"""
from typing import Callable

import numpy as np
from numpy.typing import ArrayLike

from app.core.config import PROBABILITY_CLAMP
from app.datamanager.exception_classes import InvalidArgumentError, ShapeMismatchError
from app.services.autodiff_service import Tape, Value


def _taped(fn: Callable[..., Value], *operands):
    """ Runs fn on Values, lifting plain arrays onto a throwaway tape when no operand is a Value """
    if any(isinstance(op, Value) for op in operands):
        return fn(*operands)
    tape = Tape()
    return float(fn(*(tape.constant(op) for op in operands)).data)


def cross_entropy_rows(p_true: ArrayLike, p_pred) -> float | Value:
    """
    Row-averaged multiclass cross entropy -(1/n) sum_i log P_pred[i, j_i], where P_true[i, j_i] = 1.
    Predicted probabilities are clamped at 1e-12 inside the log.
    """
    p_true = np.asarray(p_true, dtype=np.float64)

    def loss(pred: Value) -> Value:
        if pred.shape != p_true.shape or pred.ndim != 2:
            raise ShapeMismatchError("cross_entropy_rows", (p_true.shape, pred.shape))
        picked = (pred * p_true).sum(axis=1)
        return -picked.clamp_min(PROBABILITY_CLAMP).log().mean()
    return _taped(loss, p_pred)


def squared_error_rows(p_true: ArrayLike, p_pred) -> float | Value:
    """ (1/n) ||P_true - P_pred||_F^2; well defined on hard matrices, used for straight-through training """
    p_true = np.asarray(p_true, dtype=np.float64)

    def loss(pred: Value) -> Value:
        if pred.shape != p_true.shape or pred.ndim != 2:
            raise ShapeMismatchError("squared_error_rows", (p_true.shape, pred.shape))
        return (pred - p_true).square().sum() / p_true.shape[0]
    return _taped(loss, p_pred)


def knn_loss(p, y, neighbors: ArrayLike, k: int) -> float | Value:
    """
    Uniformly weighted kNN loss: -(1/k) sum_{r <= k} sum_i 1[y_i = y] P[r, i].
    Rows of P are ranks and columns are candidates; on a hard permutation matrix this is
    minus the fraction of the k nearest candidates that share the query label.
    """
    neighbors = np.asarray(neighbors)
    n = neighbors.shape[0]
    if not isinstance(k, (int, np.integer)) or not 1 <= k <= n:
        raise InvalidArgumentError("k", k, f"an integer in [1, {n}]")
    match = (neighbors == y).astype(np.float64)

    def loss(matrix: Value) -> Value:
        if matrix.ndim != 2 or matrix.shape[1] != n or matrix.shape[0] < k:
            raise ShapeMismatchError("knn_loss", (matrix.shape, (n,)))
        top = matrix.take_rows(list(range(k)))
        return (top @ match).sum() * (-1.0 / k)
    return _taped(loss, p)


def mse(y_true, y_pred) -> float | Value:
    """ Squared error (y_true - y_pred)^2, averaged when given batches """
    def loss(a: Value, b: Value) -> Value:
        return (a - b).square().mean()
    return _taped(loss, y_true, y_pred)


def r2_score(y_true: ArrayLike, y_pred: ArrayLike) -> float:
    """ 1 - SS_res / SS_tot; 0 for a constant target """
    y_true = np.asarray(y_true, dtype=np.float64)
    y_pred = np.asarray(y_pred, dtype=np.float64)
    ss_res = float(np.sum(np.square(y_true - y_pred)))
    ss_tot = float(np.sum(np.square(y_true - y_true.mean())))
    if ss_tot == 0.0:
        return 0.0
    return 1.0 - ss_res / ss_tot
