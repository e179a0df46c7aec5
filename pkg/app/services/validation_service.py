"""
    Oracle-backed property suite behind `validate`, and the Plackett-Luce goodness-of-fit report behind `pl-check`.

    Every property draws its inputs from its own PCG64 stream, so a suite run is reproducible under its seed.
    A property that fails reports the first counterexample it met.
"""
import logging
import math
import time
from typing import Callable

import numpy as np
from scipy.stats import chisquare

from app.core.config import MAX_PL_CHECK_N
from app.datamanager.exception_classes import CapacityError, UnisortError
from app.schemas.pydantic_models import Permutation, PLCheckReport, PLCheckRow, PLParams, PropertyResult
from app.services.autodiff_service import finite_diff_gradient, gradient, relative_error
from app.services.loss_service import cross_entropy_rows, knn_loss, mse
from app.services.plackett_luce_service import (
    all_permutations, crn_finite_difference_gradient, enumerate_expectation, gumbel_from_uniform, pl_log_pmf,
    pl_sample_hard, pl_sample_hard_batch, pl_sample_relaxed, reinforce_gradient, reparam_gradient, spawn_rng
)
from app.services.relaxation_service import (
    classify_matrix, kth_largest_index, permutation_to_matrix, project_hard, relaxed_sort, relaxed_sort_value,
    sort_permutation, top_k_sum
)

logger = logging.getLogger(__name__)


# -----    pl-check     -----

def pl_check(scores: list[float], n_samples: int, seed: int) -> PLCheckReport:
    """
    Compares the empirical distribution of n_samples hard PL samples with the exact pmf:
    per-permutation table, total-variation distance and a chi-squared goodness-of-fit test.
    """
    params = PLParams(scores=tuple(scores))
    if params.n > MAX_PL_CHECK_N:
        raise CapacityError("pl-check", params.n, MAX_PL_CHECK_N)
    perms = all_permutations(params.n)
    samples = pl_sample_hard_batch(params, n_samples, seed)
    observed, counts = np.unique(samples, axis=0, return_counts=True)
    count_of = {tuple(row.tolist()): int(c) for row, c in zip(observed, counts)}

    pmf = np.array([math.exp(pl_log_pmf(params, np.asarray(z))) for z in perms])
    observed_counts = np.array([count_of.get(z, 0) for z in perms], dtype=np.float64)
    frequencies = observed_counts / n_samples
    tv_distance = 0.5 * float(np.abs(pmf - frequencies).sum())
    if len(perms) > 1:
        # renormalise so the expected counts sum to n_samples exactly
        expected = pmf / pmf.sum() * n_samples
        statistic, p_value = chisquare(observed_counts, f_exp=expected)
    else:
        statistic, p_value = 0.0, 1.0

    rows = [
        PLCheckRow(permutation=str(Permutation(indices=z)), pmf=float(p), frequency=float(f))
        for z, p, f in zip(perms, pmf, frequencies)
    ]
    logger.debug("pl-check: TV %.6f, chi2 %.4f, p %.4f", tv_distance, statistic, p_value)
    return PLCheckReport(
        scores=list(params.scores),
        n_samples=n_samples,
        seed=seed,
        rows=rows,
        tv_distance=tv_distance,
        chi_squared=float(statistic),
        p_value=float(p_value),
    )


# -----    input generators     -----

def _spaced_scores(rng: np.random.Generator, n: int, min_gap: float = 0.05, scale: float = 0.2) -> np.ndarray:
    """ Distinct scores whose sorted neighbours differ by at least min_gap, in random order """
    s = np.cumsum(min_gap + rng.exponential(scale, size=n))
    return rng.permutation(s - s.mean())


def _fmt(array) -> str:
    return np.array2string(np.asarray(array), precision=17, separator=",")


def _result(name: str, cases: int, failure: str | None = None, detail: str = "") -> PropertyResult:
    if failure is None:
        return PropertyResult(name=name, passed=True, detail=detail or f"{cases} cases")
    return PropertyResult(name=name, passed=False, detail=detail or "counterexample found", counterexample=failure)


# -----    properties     -----

def check_unimodality(rng: np.random.Generator, cases: int = 10000) -> PropertyResult:
    """ relaxed_sort is always unimodal row-stochastic, and projects to the exact sort on distinct scores """
    name = "unimodality fuzz"
    for _ in range(cases):
        n = int(rng.integers(1, 17))
        tau = float(10.0 ** rng.uniform(-3, 3))
        s = rng.standard_normal(n) * 10.0 ** rng.uniform(-1, 1)
        p_hat = relaxed_sort(s, tau)
        classification = classify_matrix(p_hat)
        if not (classification.row_stochastic and classification.unimodal):
            return _result(name, cases, f"s={_fmt(s)}, tau={tau!r}: {classification}")
        if np.unique(s).size == n and not np.array_equal(project_hard(p_hat), sort_permutation(s)):
            return _result(name, cases, f"s={_fmt(s)}, tau={tau!r}: projection differs from the exact sort")
    return _result(name, cases)


def check_zero_temperature_limit(rng: np.random.Generator, cases: int = 1000) -> PropertyResult:
    """ At tau = 1e-3 the relaxation is within 1e-6 of the exact permutation matrix """
    name = "zero-temperature limit"
    worst = 0.0
    for _ in range(cases):
        s = _spaced_scores(rng, int(rng.integers(1, 9)))
        deviation = float(np.max(np.abs(relaxed_sort(s, 1e-3) - permutation_to_matrix(sort_permutation(s)))))
        worst = max(worst, deviation)
        if deviation >= 1e-6:
            return _result(name, cases, f"s={_fmt(s)}: max deviation {deviation:.3e}")
    return _result(name, cases, detail=f"{cases} cases, max deviation {worst:.3e}")


def check_sort_identities(rng: np.random.Generator, cases: int = 1000) -> PropertyResult:
    """ top_k_sum and kth_largest_index against sort-based oracles, for every k """
    name = "top-k and k-th largest identities"
    for _ in range(cases):
        n = int(rng.integers(1, 9))
        s = rng.standard_normal(n)
        ordered = np.sort(s)[::-1]
        perm = sort_permutation(s)
        for k in range(1, n + 1):
            if abs(top_k_sum(s, k) - float(ordered[:k].sum())) > 1e-12:
                return _result(name, cases, f"s={_fmt(s)}, k={k}: top_k_sum differs")
            if kth_largest_index(s, k) != perm[k - 1]:
                return _result(name, cases, f"s={_fmt(s)}, k={k}: kth_largest_index differs")
    return _result(name, cases)


def _gradient_composites(rng: np.random.Generator, n: int, tau: float) -> dict[str, tuple[Callable, Callable]]:
    """ (taped, eager) pairs of every training loss composed with the relaxation """
    p_true = permutation_to_matrix(rng.permutation(n) + 1)
    labels = rng.integers(0, 2, size=n)
    y_label = int(rng.integers(0, 2))
    k = int(rng.integers(1, n + 1))
    items = rng.standard_normal(n)
    y_value = float(rng.standard_normal())
    row = (n + 1) // 2 - 1
    return {
        "cross entropy": (
            lambda v: cross_entropy_rows(p_true, relaxed_sort_value(v, tau)),
            lambda x: cross_entropy_rows(p_true, relaxed_sort(x, tau)),
        ),
        "kNN": (
            lambda v: knn_loss(relaxed_sort_value(v, tau), y_label, labels, k),
            lambda x: knn_loss(relaxed_sort(x, tau), y_label, labels, k),
        ),
        "median regression": (
            lambda v: mse(y_value, relaxed_sort_value(v, tau).select_row(row) @ items),
            lambda x: mse(y_value, relaxed_sort(x, tau)[row] @ items),
        ),
    }


def check_loss_gradients(rng: np.random.Generator, cases: int = 200) -> PropertyResult:
    """ Autodiff gradients of the loss composites agree with central differences """
    name = "loss gradients vs finite differences"
    worst = 0.0
    for _ in range(cases):
        n = int(rng.integers(2, 7))
        tau = float(rng.choice([0.5, 1.0, 4.0]))
        s = _spaced_scores(rng, n)
        for label, (taped, eager) in _gradient_composites(rng, n, tau).items():
            _, ad = gradient(taped, s)
            fd = finite_diff_gradient(eager, s, h=1e-5)
            error = relative_error(ad, fd, floor=1e-3)
            worst = max(worst, error)
            if error >= 1e-4:
                return _result(name, cases, f"{label}: s={_fmt(s)}, tau={tau!r}, relative error {error:.3e}")
    return _result(name, cases, detail=f"{cases} instances x 3 losses, max relative error {worst:.3e}")


def check_pmf_normalization(rng: np.random.Generator, cases: int = 30) -> PropertyResult:
    name = "PL pmf normalization"
    for _ in range(cases):
        n = int(rng.integers(1, 7))
        params = PLParams(scores=tuple(rng.uniform(0.1, 5.0, size=n).tolist()))
        total = enumerate_expectation(params, lambda z: 1.0)
        if abs(total - 1.0) > 1e-10:
            return _result(name, cases, f"s={list(params.scores)}: sum = {total!r}")
    return _result(name, cases)


def check_sampler_exactness(rng: np.random.Generator, n_samples: int = 100000) -> PropertyResult:
    """ Hard samples at s = [3, 2, 1] match the pmf (TV < 0.01, chi-squared at significance 0.001) """
    name = "PL sampler exactness"
    report = pl_check([3.0, 2.0, 1.0], n_samples, int(rng.integers(2 ** 31)))
    detail = f"TV {report.tv_distance:.4f}, chi2 {report.chi_squared:.3f}, p {report.p_value:.4f}"
    if report.tv_distance >= 0.01 or report.p_value < 0.001:
        return _result(name, 1, f"seed={report.seed}", detail=detail)
    return _result(name, 1, detail=detail)


def check_coupling(rng: np.random.Generator, cases: int = 200) -> PropertyResult:
    """ Under shared noise the relaxed sample projects to the hard sample, at every temperature """
    name = "relaxed/hard sample coupling"
    for _ in range(cases):
        n = int(rng.integers(1, 9))
        params = PLParams(scores=tuple(rng.uniform(0.1, 5.0, size=n).tolist()))
        tau = float(10.0 ** rng.uniform(-2, 1))
        seed = int(rng.integers(2 ** 31))
        if not np.array_equal(project_hard(pl_sample_relaxed(params, tau, seed)), pl_sample_hard(params, seed)):
            return _result(name, cases, f"s={list(params.scores)}, tau={tau!r}, seed={seed}")
    return _result(name, cases)


def _exact_expectation_gradient(params: PLParams, f: Callable, h: float = 1e-5) -> np.ndarray:
    def expectation(s: np.ndarray) -> float:
        return enumerate_expectation(PLParams(scores=tuple(s.tolist()), beta=params.beta), f)
    return finite_diff_gradient(expectation, params.to_array(), h)


def check_reinforce(rng: np.random.Generator, n_samples: int = 100000) -> PropertyResult:
    """ REINFORCE mean within 3 standard errors of the exhaustive gradient at n = 3 """
    name = "REINFORCE consistency"
    params = PLParams(scores=(3.0, 2.0, 1.0))

    def f(z):
        return float(z[0])
    seed = int(rng.integers(2 ** 31))
    report = reinforce_gradient(params, f, n_samples, seed)
    exact = _exact_expectation_gradient(params, f)
    z_scores = np.abs(report.estimate - exact) / report.standard_error
    detail = f"max |z| = {z_scores.max():.2f}"
    if np.any(z_scores > 3.0):
        return _result(name, 1, f"seed={seed}, estimate={_fmt(report.estimate)}, exact={_fmt(exact)}", detail)
    return _result(name, 1, detail=detail)


def check_reparam(rng: np.random.Generator, n_samples: int = 2000, n_target: int = 20000) -> PropertyResult:
    """
    Reparameterized mean within 3 standard errors of the finite-difference gradient of the relaxed objective,
    the latter estimated on an independent, larger noise block with common random numbers.
    """
    name = "reparameterized consistency"
    params = PLParams(scores=(3.0, 2.0, 1.0))
    tau = 1.0
    weights = rng.standard_normal((3, 3))

    def f_taped(p):
        return (p * weights).sum()

    def f_batch(stack: np.ndarray) -> np.ndarray:
        return np.einsum("mij,ij->m", stack, weights)

    seed = int(rng.integers(2 ** 31))
    report = reparam_gradient(params, f_taped, tau, n_samples, seed)
    noise = gumbel_from_uniform(rng.random((n_target, params.n)))
    target_rows = crn_finite_difference_gradient(params, f_batch, tau, noise)
    target = target_rows.mean(axis=0)
    combined_se = np.sqrt(report.standard_error ** 2 + target_rows.var(axis=0, ddof=1) / n_target)
    z_scores = np.abs(report.estimate - target) / combined_se
    detail = f"max |z| = {z_scores.max():.2f}"
    if np.any(z_scores > 3.0):
        return _result(name, 1, f"seed={seed}, estimate={_fmt(report.estimate)}, target={_fmt(target)}", detail)
    return _result(name, 1, detail=detail)


PROPERTIES: dict[str, Callable[[np.random.Generator], PropertyResult]] = {
    "unimodality": check_unimodality,
    "limit": check_zero_temperature_limit,
    "identities": check_sort_identities,
    "gradients": check_loss_gradients,
    "normalization": check_pmf_normalization,
    "sampler": check_sampler_exactness,
    "coupling": check_coupling,
    "reinforce": check_reinforce,
    "reparam": check_reparam,
}


def run_validation_suite(seed: int = 0, only: list[str] | None = None) -> list[PropertyResult]:
    """ Runs the selected properties (all by default); an exception inside a property counts as a failure """
    results = []
    for stream, (key, check) in enumerate(PROPERTIES.items()):
        if only and key not in only:
            continue
        started = time.perf_counter()
        try:
            result = check(spawn_rng(seed, stream))
        except (UnisortError, ValueError, FloatingPointError) as exc:
            result = PropertyResult(name=key, passed=False, detail="raised an error", counterexample=str(exc))
        logger.info("%s: %s (%.2fs)", result.name, "pass" if result.passed else "FAIL", time.perf_counter() - started)
        results.append(result)
    return results
