"""
    Exact sorting semantics and the unimodal row-stochastic relaxation of the sort operator.

    Public indices are 1-based: a permutation z of n items is an int array holding each of 1..n once,
    and its permutation matrix has P_z[i, z_i] = 1. Every kernel works on float64 numpy arrays.
"""
import logging

import numpy as np
from numpy.typing import ArrayLike
from scipy.special import softmax

from app.core.config import ROW_SUM_TOLERANCE
from app.datamanager.exception_classes import (
    AmbiguousRankError, InvalidArgumentError, InvalidInputError, InvalidTemperatureError
)
from app.schemas.pydantic_models import MatrixClassification
from app.services.autodiff_service import Value

logger = logging.getLogger(__name__)


# -----    validation helpers     -----

def as_scores(s: ArrayLike) -> np.ndarray:
    """
    Converts s to a 1-D float64 array and checks the ScoreVector invariants.
    Raises InvalidInputError for empty, non 1-D or non-finite input.
    """
    arr = np.asarray(s, dtype=np.float64)
    if arr.ndim != 1 or arr.size == 0:
        raise InvalidInputError("score vector", f"expected a non-empty 1-D vector, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError("score vector", "entries must be finite (no NaN or Inf)")
    return arr


def as_permutation(z: ArrayLike) -> np.ndarray:
    """ 1-based permutation as an int64 array """
    arr = np.asarray(z)
    if arr.ndim != 1 or arr.size == 0:
        raise InvalidInputError("permutation", f"expected a non-empty 1-D vector, got shape {arr.shape}")
    if not np.issubdtype(arr.dtype, np.integer):
        if not np.all(np.mod(arr, 1) == 0):
            raise InvalidInputError("permutation", "entries must be integers")
        arr = arr.astype(np.int64)
    n = arr.size
    if not np.array_equal(np.sort(arr), np.arange(1, n + 1)):
        raise InvalidInputError("permutation", f"{arr.tolist()} is not a permutation of 1..{n}")
    return arr.astype(np.int64)


def check_temperature(tau: float) -> float:
    tau = float(tau)
    if not np.isfinite(tau) or tau <= 0:
        raise InvalidTemperatureError(tau)
    return tau


# -----    exact sort     -----

def sort_permutation(s: ArrayLike) -> np.ndarray:
    """
    Descending-order permutation of s; equal scores keep their order of appearance.
    sort([9, 1, 5, 2]) = [1, 3, 4, 2]
    """
    s = as_scores(s)
    return np.argsort(-s, kind="stable") + 1


def permutation_to_matrix(z: ArrayLike) -> np.ndarray:
    """ P_z[i, z_i] = 1, all other entries 0 """
    z = as_permutation(z)
    n = z.size
    matrix = np.zeros((n, n), dtype=np.float64)
    matrix[np.arange(n), z - 1] = 1.0
    return matrix


# -----    identities     -----

def pairwise_abs_diff(s: ArrayLike, smooth_eps: float = 0.0) -> np.ndarray:
    """
    A_s[i, j] = |s_i - s_j|.
    With smooth_eps > 0 the everywhere-differentiable sqrt((s_i - s_j)^2 + smooth_eps) is used instead.
    """
    s = as_scores(s)
    diff = s[:, None] - s[None, :]
    if smooth_eps > 0:
        return np.sqrt(np.square(diff) + smooth_eps)
    return np.abs(diff)


def rank_coefficients(n: int) -> np.ndarray:
    """ n + 1 - 2i for i = 1..n """
    return (n + 1 - 2 * np.arange(1, n + 1)).astype(np.float64)


def sort_logits(s: ArrayLike, smooth_eps: float = 0.0) -> np.ndarray:
    """
    Row i is (n + 1 - 2i) s - A_s 1.
    For distinct s the argmax of row i is the index of the i-th largest element.
    """
    s = as_scores(s)
    n = s.size
    row_sums = pairwise_abs_diff(s, smooth_eps).sum(axis=1)
    return rank_coefficients(n)[:, None] * s[None, :] - row_sums[None, :]


def top_k_sum(s: ArrayLike, k: int) -> float:
    """
    Sum of the k largest entries, evaluated as min over lambda in s of
    lambda * k + sum_i max(s_i - lambda, 0).
    """
    s = as_scores(s)
    n = s.size
    if not isinstance(k, (int, np.integer)) or not 1 <= k <= n:
        raise InvalidArgumentError("k", k, f"an integer in [1, {n}]")
    lam = s[:, None]
    objective = lam[:, 0] * k + np.maximum(s[None, :] - lam, 0.0).sum(axis=1)
    return float(objective.min())


def kth_largest_index(s: ArrayLike, k: int) -> int:
    """
    1-based index of the k-th largest element, taken as the argmax of (n + 1 - 2k) s - A_s 1.
    Raises AmbiguousRankError when that row has several maximisers (duplicate scores).
    """
    s = as_scores(s)
    n = s.size
    if not isinstance(k, (int, np.integer)) or not 1 <= k <= n:
        raise InvalidArgumentError("k", k, f"an integer in [1, {n}]")
    row = (n + 1 - 2 * k) * s - pairwise_abs_diff(s).sum(axis=1)
    maximisers = np.flatnonzero(row == row.max())
    if maximisers.size > 1:
        raise AmbiguousRankError(int(k), (maximisers + 1).tolist())
    return int(maximisers[0]) + 1


# -----    relaxation     -----

def relaxed_sort(s: ArrayLike, tau: float, smooth_eps: float = 0.0) -> np.ndarray:
    """
    Unimodal row-stochastic relaxation of the sort permutation matrix:
    row i = softmax(((n + 1 - 2i) s - A_s 1) / tau). O(n^2) time and memory.
    """
    tau = check_temperature(tau)
    logits = sort_logits(s, smooth_eps)
    # scipy's softmax subtracts the row max before exponentiating
    return softmax(logits / tau, axis=1)


def relaxed_sort_value(s: Value, tau: float, smooth_eps: float = 0.0) -> Value:
    """
    relaxed_sort recorded on the tape of s, so losses built on it can be differentiated w.r.t. s.
    The forward value is bit-identical to relaxed_sort(s.data, tau).
    """
    tau = check_temperature(tau)
    if s.ndim != 1 or s.shape[0] == 0:
        raise InvalidInputError("score vector", f"expected a non-empty 1-D Value, got shape {s.shape}")
    n = s.shape[0]
    columns = s.broadcast_to((n, n))  # [i, j] = s_j
    diff = columns.T - columns  # [i, j] = s_i - s_j
    if smooth_eps > 0:
        A = (diff.square() + smooth_eps).sqrt()
    else:
        A = diff.abs()
    row_sums = A.sum(axis=1).reshape((1, n))
    coefficients = s.tape.constant(rank_coefficients(n)[:, None])
    logits = coefficients * s.reshape((1, n)) - row_sums
    return logits.softmax_rows(tau)


def relaxed_sort_batch(scores: ArrayLike, tau: float, smooth_eps: float = 0.0) -> np.ndarray:
    """ relaxed_sort applied to every row of an (m, n) score stack; returns (m, n, n) """
    tau = check_temperature(tau)
    S = np.asarray(scores, dtype=np.float64)
    if S.ndim != 2 or S.shape[1] == 0:
        raise InvalidInputError("score stack", f"expected shape (m, n), got {S.shape}")
    if not np.all(np.isfinite(S)):
        raise InvalidInputError("score stack", "entries must be finite (no NaN or Inf)")
    n = S.shape[1]
    diff = S[:, :, None] - S[:, None, :]
    A = np.sqrt(np.square(diff) + smooth_eps) if smooth_eps > 0 else np.abs(diff)
    logits = rank_coefficients(n)[None, :, None] * S[:, None, :] - A.sum(axis=2)[:, None, :]
    return softmax(logits / tau, axis=2)


def relaxation_gap(p_hat: ArrayLike, p_hard: ArrayLike) -> float:
    """ Element-wise mean squared difference between a relaxed matrix and its hard projection """
    p_hat = np.asarray(p_hat, dtype=np.float64)
    p_hard = np.asarray(p_hard, dtype=np.float64)
    if p_hat.shape != p_hard.shape:
        raise InvalidArgumentError("p_hard", p_hard.shape, f"shape {p_hat.shape}")
    return float(np.mean(np.square(p_hat - p_hard)))


# -----    projection and classification     -----

def _as_square(M: ArrayLike, what: str) -> np.ndarray:
    M = np.asarray(M, dtype=np.float64)
    if M.ndim != 2 or M.shape[0] != M.shape[1] or M.shape[0] == 0:
        raise InvalidArgumentError(what, getattr(M, "shape", None), "a non-empty square matrix")
    if not np.all(np.isfinite(M)):
        raise InvalidInputError(what, "entries must be finite")
    return M


def _tie_protocol_argmax(M: np.ndarray, repair: bool) -> np.ndarray:
    """
    Row-wise argmax with the tie rules:
      1. the smallest maximising index not yet assigned to an earlier row;
      2. otherwise the smallest maximising index.
    With repair=True, rule 2 is replaced by the unassigned column with the largest entry,
    which only matters for matrices that are not unimodal.
    Returns 0-based column indices.
    """
    n = M.shape[0]
    assigned = np.zeros(M.shape[1], dtype=bool)
    result = np.empty(n, dtype=np.int64)
    for i in range(n):
        row = M[i]
        maximisers = np.flatnonzero(row == row.max())
        free = maximisers[~assigned[maximisers]]
        if free.size:
            j = free[0]
        elif repair:
            candidates = np.flatnonzero(~assigned)
            j = candidates[np.argmax(row[candidates])]
        else:
            j = maximisers[0]
        result[i] = j
        assigned[j] = True
    return result


def project_hard(U: ArrayLike) -> np.ndarray:
    """
    Projects a row-stochastic matrix to the permutation given by its row-wise argmaxes.
    Ties follow the tie rules of _tie_protocol_argmax; the result is always a valid 1-based permutation.
    """
    U = _as_square(U, "matrix")
    return _tie_protocol_argmax(U, repair=True) + 1


def classify_matrix(M: ArrayLike) -> MatrixClassification:
    """
    Flags the classes a square matrix belongs to.
    permutation => (doubly stochastic and unimodal) => row stochastic.
    """
    M = _as_square(M, "matrix")
    non_negative = bool(np.all(M >= 0))
    rows_ok = bool(np.all(np.abs(M.sum(axis=1) - 1.0) <= ROW_SUM_TOLERANCE))
    cols_ok = bool(np.all(np.abs(M.sum(axis=0) - 1.0) <= ROW_SUM_TOLERANCE))

    row_stochastic = non_negative and rows_ok
    doubly_stochastic = row_stochastic and cols_ok
    unimodal = False
    if row_stochastic:
        argmaxes = _tie_protocol_argmax(M, repair=False)
        unimodal = np.unique(argmaxes).size == M.shape[0]
    binary = bool(np.all((M == 0.0) | (M == 1.0)))
    permutation = binary and doubly_stochastic

    return MatrixClassification(
        row_stochastic=row_stochastic,
        doubly_stochastic=doubly_stochastic,
        unimodal=bool(unimodal),
        permutation=permutation,
    )


def is_unimodal(M: ArrayLike) -> bool:
    return classify_matrix(M).unimodal


def sort_values(s: ArrayLike) -> np.ndarray:
    """ P_sort(s) s, the descending sorted vector """
    s = as_scores(s)
    return permutation_to_matrix(sort_permutation(s)) @ s

