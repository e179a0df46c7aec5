"""
    Plackett-Luce distribution q(z | s) over permutations of n items.

    q(z | s) = prod_i s_{z_i} / (Z - sum_{k<i} s_{z_k}),  Z = sum_i s_i

    Sampling uses the Gumbel trick: sorting beta * log s + g with g ~ Gumbel(0, beta) yields an exact PL sample.
    Monte Carlo estimators draw one (n_samples, n) noise block from a PCG64 generator seeded with `seed`;
    sample i always uses row i, so results do not depend on how the samples are processed.
"""
import itertools
import logging
import math
from typing import Callable

import numpy as np
from numpy.typing import ArrayLike

from app.core.config import GUMBEL_EPS, MAX_ENUMERATION_N
from app.datamanager.exception_classes import CapacityError, InvalidArgumentError
from app.schemas.pydantic_models import EstimatorReport, GumbelNoise, PLParams
from app.services.autodiff_service import Tape, Value, backward
from app.services.relaxation_service import (
    as_permutation, check_temperature, permutation_to_matrix, project_hard, relaxed_sort, relaxed_sort_batch,
    relaxed_sort_value, sort_permutation
)

logger = logging.getLogger(__name__)


def make_rng(seed: int) -> np.random.Generator:
    """ Portable, seedable generator shared by every sampler """
    return np.random.Generator(np.random.PCG64(seed))


def spawn_rng(seed: int, stream: int) -> np.random.Generator:
    """ Independent PCG64 stream `stream` derived from `seed` (datasets, initialisation, training noise) """
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(stream,))))


# -----    pmf     -----

def pl_log_pmf(params: PLParams, z: ArrayLike) -> float:
    """ log q(z | s) for a 1-based permutation z """
    s = params.to_array()
    z = as_permutation(z)
    if z.size != s.size:
        raise InvalidArgumentError("z", z.tolist(), f"a permutation of {s.size} items")
    ordered = s[z - 1]
    remaining = np.cumsum(ordered[::-1])[::-1]  # Z - sum_{k<i} s_{z_k}
    return float(np.sum(np.log(ordered)) - np.sum(np.log(remaining)))


def pl_log_pmf_value(scores: Value, z: ArrayLike) -> Value:
    """ log q(z | s) recorded on the tape of `scores` """
    z = as_permutation(z)
    n = z.size
    if scores.shape != (n,):
        raise InvalidArgumentError("scores", scores.shape, f"shape ({n},)")
    ordered = permutation_to_matrix(z) @ scores
    upper = scores.tape.constant(np.triu(np.ones((n, n))))
    remaining = upper @ ordered
    return ordered.log().sum() - remaining.log().sum()


def pl_score_function(params: PLParams, z: ArrayLike) -> np.ndarray:
    """
    Closed-form gradient of log q(z | s) w.r.t. s:
    d/ds_j = 1 / s_j - sum_{i <= pos(j)} 1 / (Z - sum_{k<i} s_{z_k}).
    """
    return _score_function_batch(params.to_array(), as_permutation(z)[None, :])[0]


def _score_function_batch(s: np.ndarray, perms: np.ndarray) -> np.ndarray:
    """ Score function for every row of an (m, n) array of 1-based permutations """
    ordered = s[perms - 1]
    remaining = np.cumsum(ordered[:, ::-1], axis=1)[:, ::-1]
    cumulative = np.cumsum(1.0 / remaining, axis=1)
    positions = np.argsort(perms - 1, axis=1)  # position of item j in each permutation
    return 1.0 / s[None, :] - np.take_along_axis(cumulative, positions, axis=1)


def enumerate_expectation(params: PLParams, f: Callable[[np.ndarray], float]) -> float:
    """ Exact sum_z q(z | s) f(z) over all n! permutations (n <= 8) """
    n = params.n
    if n > MAX_ENUMERATION_N:
        raise CapacityError("Exhaustive enumeration", n, MAX_ENUMERATION_N)
    terms = []
    for perm in itertools.permutations(range(1, n + 1)):
        z = np.asarray(perm, dtype=np.int64)
        terms.append(math.exp(pl_log_pmf(params, z)) * float(f(z)))
    return math.fsum(terms)


def all_permutations(n: int) -> list[tuple[int, ...]]:
    if n > MAX_ENUMERATION_N:
        raise CapacityError("Exhaustive enumeration", n, MAX_ENUMERATION_N)
    return list(itertools.permutations(range(1, n + 1)))


# -----    Gumbel noise     -----

def gumbel_from_uniform(u: ArrayLike, eps: float = GUMBEL_EPS) -> np.ndarray:
    """ g = -log(-log(u + eps) + eps) """
    u = np.asarray(u, dtype=np.float64)
    return -np.log(-np.log(u + eps) + eps)


def sample_gumbel(shape, seed: int, eps: float = GUMBEL_EPS) -> GumbelNoise:
    """ Standard Gumbel noise, deterministic given seed """
    if eps < 0:
        raise InvalidArgumentError("eps", eps, "a value >= 0")
    u = make_rng(seed).random(shape)
    return GumbelNoise(g=gumbel_from_uniform(u, eps), seed=seed, eps=eps)


def perturbed_log_scores(params: PLParams, g: np.ndarray) -> np.ndarray:
    """ beta * log s + g, with g ~ Gumbel(0, beta) obtained by scaling standard noise """
    return params.beta * np.log(params.to_array()) + params.beta * g


# -----    samplers     -----

def pl_sample_hard(params: PLParams, seed: int) -> np.ndarray:
    """ One exact PL sample: the sort permutation of the Gumbel-perturbed log-scores """
    noise = sample_gumbel((params.n,), seed)
    return sort_permutation(perturbed_log_scores(params, noise.g))


def pl_sample_hard_batch(params: PLParams, n_samples: int, seed: int) -> np.ndarray:
    """ (n_samples, n) array of 1-based PL samples; row i uses noise row i """
    if n_samples < 1:
        raise InvalidArgumentError("n_samples", n_samples, "an integer >= 1")
    noise = sample_gumbel((n_samples, params.n), seed)
    perturbed = params.beta * np.log(params.to_array())[None, :] + params.beta * noise.g
    return np.argsort(-perturbed, axis=1, kind="stable") + 1


def pl_sample_relaxed(params: PLParams, tau: float, seed: int) -> np.ndarray:
    """
    Relaxed PL sample relaxed_sort(beta log s + g, tau).
    Under the same seed, project_hard of the result equals pl_sample_hard.
    """
    tau = check_temperature(tau)
    noise = sample_gumbel((params.n,), seed)
    return relaxed_sort(perturbed_log_scores(params, noise.g), tau)


# -----    gradient estimators     -----

def _noise_block(params: PLParams, n_samples: int, seed: int) -> np.ndarray:
    if n_samples < 1:
        raise InvalidArgumentError("n_samples", n_samples, "an integer >= 1")
    return sample_gumbel((n_samples, params.n), seed).g


def reinforce_gradient(
        params: PLParams,
        f: Callable[[np.ndarray], float],
        n_samples: int,
        seed: int
) -> EstimatorReport:
    """
    Score-function estimate of grad_s E_{z ~ q(z|s)}[f(z)]: mean of f(z) * grad_s log q(z | s).
    f must not depend on s directly, so the E[grad_s f] term is zero and omitted.
    """
    g = _noise_block(params, n_samples, seed)
    s = params.to_array()
    perturbed = params.beta * np.log(s)[None, :] + params.beta * g
    perms = np.argsort(-perturbed, axis=1, kind="stable") + 1
    values = np.array([float(f(z)) for z in perms])
    samples = values[:, None] * _score_function_batch(s, perms)
    logger.debug("REINFORCE: %d samples, mean objective %.6g", n_samples, values.mean())
    return EstimatorReport(
        estimate=samples.mean(axis=0), n_samples=n_samples, samples=samples, objective_values=values
    )


def _taped_sample(params: PLParams, g_row: np.ndarray, tau: float) -> tuple[Tape, Value, Value]:
    """ Records s -> relaxed_sort(beta log s + g, tau) on a fresh tape """
    tape = Tape()
    s = tape.leaf(params.to_array())
    perturbed = s.log() * params.beta + params.beta * g_row
    return tape, s, relaxed_sort_value(perturbed, tau)


def reparam_gradient(
        params: PLParams,
        f_relaxed: Callable[[Value], Value],
        tau: float,
        n_samples: int,
        seed: int
) -> EstimatorReport:
    """
    Reparameterized estimate of grad_s E_g[f(relaxed_sort(beta log s + g, tau))].
    The target is the gradient of the relaxed objective, not of the exact expectation over permutations.
    """
    tau = check_temperature(tau)
    g = _noise_block(params, n_samples, seed)
    samples = np.empty((n_samples, params.n))
    values = np.empty(n_samples)
    for i in range(n_samples):
        tape, s, p_hat = _taped_sample(params, g[i], tau)
        out = f_relaxed(p_hat)
        grads = backward(tape, out)
        samples[i] = grads[s.id]
        values[i] = float(out.data)
    logger.debug("Reparameterized: %d samples at tau=%g", n_samples, tau)
    return EstimatorReport(
        estimate=samples.mean(axis=0), n_samples=n_samples, samples=samples, objective_values=values
    )


def straight_through_gradient(
        params: PLParams,
        f_hard: Callable[[Value], Value],
        tau: float,
        n_samples: int,
        seed: int
) -> EstimatorReport:
    """
    Straight-through estimate: f is evaluated on the hard projected permutation matrix
    in the forward pass and differentiated through the relaxed matrix in the backward pass.
    """
    tau = check_temperature(tau)
    g = _noise_block(params, n_samples, seed)
    samples = np.empty((n_samples, params.n))
    values = np.empty(n_samples)
    for i in range(n_samples):
        tape, s, p_hat = _taped_sample(params, g[i], tau)
        p_hard = permutation_to_matrix(project_hard(p_hat.data))
        out = f_hard(p_hat.straight_through(p_hard))
        grads = backward(tape, out)
        samples[i] = grads[s.id]
        values[i] = float(out.data)
    return EstimatorReport(
        estimate=samples.mean(axis=0), n_samples=n_samples, samples=samples, objective_values=values
    )


def relaxed_objective_samples(
        params: PLParams,
        f_batch: Callable[[np.ndarray], np.ndarray],
        tau: float,
        g: np.ndarray
) -> np.ndarray:
    """
    f(relaxed_sort(beta log s + g_i, tau)) for every row g_i of a fixed noise block.
    f_batch maps an (m, n, n) stack of relaxed matrices to m objective values.
    """
    tau = check_temperature(tau)
    perturbed = params.beta * np.log(params.to_array())[None, :] + params.beta * np.atleast_2d(g)
    return np.asarray(f_batch(relaxed_sort_batch(perturbed, tau)), dtype=np.float64)


def crn_finite_difference_gradient(
        params: PLParams,
        f_batch: Callable[[np.ndarray], np.ndarray],
        tau: float,
        g: np.ndarray,
        h: float = 1e-5
) -> np.ndarray:
    """
    Per-row central differences in s of the relaxed objective, with both sides of every difference
    evaluated on the same noise rows (common random numbers). Returns (m, n); the column means are the
    finite-difference target of reparam_gradient.
    """
    s = params.to_array()
    if np.any(s - h <= 0):
        raise InvalidArgumentError("h", h, f"a step smaller than min(s) = {s.min()}")
    grads = np.empty((np.atleast_2d(g).shape[0], s.size))
    for i in range(s.size):
        step = np.zeros_like(s)
        step[i] = h
        upper = PLParams(scores=tuple(s + step), beta=params.beta)
        lower = PLParams(scores=tuple(s - step), beta=params.beta)
        grads[:, i] = (
            relaxed_objective_samples(upper, f_batch, tau, g) - relaxed_objective_samples(lower, f_batch, tau, g)
        ) / (2.0 * h)
    return grads
