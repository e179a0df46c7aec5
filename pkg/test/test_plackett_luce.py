import math

import numpy as np
import pytest
from pydantic import ValidationError

from app.datamanager.exception_classes import CapacityError, InvalidArgumentError
from app.schemas.pydantic_models import EstimatorReport, PLParams
from app.services.autodiff_service import gradient
from app.services.plackett_luce_service import (
    all_permutations, crn_finite_difference_gradient, enumerate_expectation, gumbel_from_uniform, make_rng,
    pl_log_pmf, pl_log_pmf_value, pl_sample_hard, pl_sample_hard_batch, pl_sample_relaxed, pl_score_function,
    reinforce_gradient, relaxed_objective_samples, reparam_gradient, sample_gumbel, spawn_rng,
    straight_through_gradient
)
from app.services.relaxation_service import permutation_to_matrix, project_hard, relaxed_sort


@pytest.fixture
def params():
    """PL scores used throughout: strongly ordered, n = 3."""
    return PLParams(scores=(3.0, 2.0, 1.0))


@pytest.fixture
def weights():
    """Fixed weights of a linear objective f(P) = sum(W * P)."""
    return np.array([[0.5, -1.0, 0.2], [1.5, 0.3, -0.7], [-0.4, 0.8, 1.1]])


def empirical_tv(samples: np.ndarray, params: PLParams) -> float:
    perms, counts = np.unique(samples, axis=0, return_counts=True)
    freq = {tuple(p.tolist()): c / samples.shape[0] for p, c in zip(perms, counts)}
    return 0.5 * sum(abs(math.exp(pl_log_pmf(params, np.asarray(z))) - freq.get(z, 0.0))
                     for z in all_permutations(params.n))


class TestPmf:

    def test_two_items(self):
        assert pl_log_pmf(PLParams(scores=(2.0, 1.0)), [1, 2]) == pytest.approx(math.log(2 / 3))

    def test_uniform_scores(self):
        assert pl_log_pmf(PLParams(scores=(1.0,) * 4), [3, 1, 4, 2]) == pytest.approx(math.log(1 / 24))

    def test_normalization(self, rng):
        for _ in range(5):
            p = PLParams(scores=tuple(rng.uniform(0.1, 5.0, size=4).tolist()))
            assert enumerate_expectation(p, lambda z: 1.0) == pytest.approx(1.0, abs=1e-12)

    def test_enumerate_first_item(self):
        assert enumerate_expectation(PLParams(scores=(1.0, 1.0, 1.0)), lambda z: z[0]) == pytest.approx(2.0)

    def test_enumerate_indicator(self):
        p = PLParams(scores=(2.0, 1.0))
        assert enumerate_expectation(p, lambda z: float(z.tolist() == [1, 2])) == pytest.approx(2 / 3)

    def test_enumeration_capacity(self):
        with pytest.raises(CapacityError):
            enumerate_expectation(PLParams(scores=(1.0,) * 9), lambda z: 1.0)

    def test_score_function_matches_autodiff(self, params):
        for z in all_permutations(3):
            _, taped = gradient(lambda v: pl_log_pmf_value(v, z), params.to_array())
            np.testing.assert_allclose(pl_score_function(params, z), taped, atol=1e-12)

    def test_taped_pmf_matches_eager(self, params):
        value, _ = gradient(lambda v: pl_log_pmf_value(v, [2, 3, 1]), params.to_array())
        assert value == pytest.approx(pl_log_pmf(params, [2, 3, 1]))

    @pytest.mark.parametrize("scores", [(), (1.0, 0.0), (1.0, -2.0), (float("nan"),)])
    def test_invalid_scores(self, scores):
        with pytest.raises(ValidationError):
            PLParams(scores=scores)

    def test_wrong_length_permutation(self, params):
        with pytest.raises(InvalidArgumentError):
            pl_log_pmf(params, [1, 2])


class TestGumbel:

    def test_quantiles(self):
        assert gumbel_from_uniform(1 / math.e, eps=0.0) == pytest.approx(0.0, abs=1e-15)
        assert gumbel_from_uniform(math.exp(-math.e), eps=0.0) == pytest.approx(-1.0, abs=1e-12)

    def test_eps_guard_keeps_noise_finite(self):
        assert np.all(np.isfinite(gumbel_from_uniform([0.0])))

    def test_moments(self):
        g = sample_gumbel((1_000_000,), seed=7).g
        assert g.mean() == pytest.approx(0.5772, abs=0.01)
        assert g.var() == pytest.approx(math.pi ** 2 / 6, abs=0.05)

    def test_deterministic_under_seed(self):
        np.testing.assert_array_equal(sample_gumbel((3, 4), seed=5).g, sample_gumbel((3, 4), seed=5).g)
        assert not np.array_equal(sample_gumbel((3, 4), seed=5).g, sample_gumbel((3, 4), seed=6).g)

    def test_negative_eps_rejected(self):
        with pytest.raises(InvalidArgumentError):
            sample_gumbel((2,), seed=0, eps=-1.0)

    def test_spawned_streams_differ(self):
        assert make_rng(1).random() != spawn_rng(1, 0).random()
        assert spawn_rng(1, 0).random() != spawn_rng(1, 1).random()
        assert spawn_rng(1, 4).random() == spawn_rng(1, 4).random()


class TestSamplers:

    def test_single_item(self):
        assert pl_sample_hard(PLParams(scores=(4.0,)), seed=0).tolist() == [1]
        np.testing.assert_array_equal(pl_sample_relaxed(PLParams(scores=(4.0,)), 0.1, seed=0), [[1.0]])

    def test_hard_sample_is_first_batch_row(self, params):
        for seed in range(5):
            assert np.array_equal(pl_sample_hard(params, seed), pl_sample_hard_batch(params, 4, seed)[0])

    def test_frequencies_match_pmf(self, params):
        samples = pl_sample_hard_batch(params, 100_000, seed=11)
        assert empirical_tv(samples, params) < 0.01

    def test_beta_scaling_leaves_samples_unchanged(self):
        # Setup
        base = PLParams(scores=(3.0, 2.0, 1.0, 0.5))
        scaled = PLParams(scores=(3.0, 2.0, 1.0, 0.5), beta=2.0)

        # Execute / Verify
        np.testing.assert_array_equal(
            pl_sample_hard_batch(base, 1000, seed=2), pl_sample_hard_batch(scaled, 1000, seed=2)
        )

    def test_coupling_of_relaxed_and_hard_samples(self, rng):
        for _ in range(50):
            p = PLParams(scores=tuple(rng.uniform(0.1, 5.0, size=5).tolist()))
            seed = int(rng.integers(2 ** 31))
            tau = float(10.0 ** rng.uniform(-2, 1))
            assert np.array_equal(project_hard(pl_sample_relaxed(p, tau, seed)), pl_sample_hard(p, seed))

    def test_relaxed_sample_near_hard_at_small_temperature(self):
        # Setup
        p = PLParams(scores=(4.0, 3.0, 2.0, 1.0))
        checked = 0

        for seed in range(20):
            perturbed = np.log(p.to_array()) + sample_gumbel((4,), seed).g
            # only well separated perturbed scores saturate at tau = 1e-3
            if np.min(np.diff(np.sort(perturbed))) < 0.05:
                continue
            checked += 1

            # Execute
            relaxed = pl_sample_relaxed(p, 1e-3, seed)

            # Verify
            hard = permutation_to_matrix(pl_sample_hard(p, seed))
            assert np.max(np.abs(relaxed - hard)) < 1e-6
        assert checked >= 10


class TestEstimators:

    def test_reinforce_constant_objective_is_unbiased(self, params):
        report = reinforce_gradient(params, lambda z: 5.0, 50_000, seed=3)
        assert np.all(np.abs(report.estimate) < 4 * report.standard_error)

    def test_reinforce_single_item_has_zero_gradient(self):
        report = reinforce_gradient(PLParams(scores=(2.0,)), lambda z: 1.0, 10, seed=0)
        np.testing.assert_array_equal(report.estimate, [0.0])

    def test_reinforce_matches_exhaustive_gradient(self, params):
        # Setup
        def f(z):
            return float(z[0])

        def expectation(s):
            return enumerate_expectation(PLParams(scores=tuple(s.tolist())), f)
        exact = np.array([
            (expectation(params.to_array() + h) - expectation(params.to_array() - h)) / 2e-5
            for h in np.eye(3) * 1e-5
        ])

        # Execute
        report = reinforce_gradient(params, f, 100_000, seed=0)

        # Verify
        assert np.all(np.abs(report.estimate - exact) <= 3 * report.standard_error)

    def test_reparam_total_mass_has_zero_gradient(self, params):
        report = reparam_gradient(params, lambda p: p.sum(), 1.0, 20, seed=0)
        np.testing.assert_allclose(report.estimate, 0.0, atol=1e-10)

    def test_reparam_matches_common_random_number_target(self, params, weights):
        # Setup
        noise = gumbel_from_uniform(make_rng(99).random((20_000, 3)))
        rows = crn_finite_difference_gradient(params, lambda stack: np.einsum("mij,ij->m", stack, weights), 1.0,
                                              noise)

        # Execute
        report = reparam_gradient(params, lambda p: (p * weights).sum(), 1.0, 2000, seed=4)

        # Verify
        combined_se = np.sqrt(report.standard_error ** 2 + rows.var(axis=0, ddof=1) / rows.shape[0])
        assert np.all(np.abs(report.estimate - rows.mean(axis=0)) <= 3 * combined_se)

    def test_relaxed_objective_samples(self, params, weights):
        g = sample_gumbel((3, 3), seed=1).g
        values = relaxed_objective_samples(params, lambda stack: np.einsum("mij,ij->m", stack, weights), 0.5, g)
        expected = [(relaxed_sort(np.log(params.to_array()) + row, 0.5) * weights).sum() for row in g]
        np.testing.assert_allclose(values, expected, atol=1e-12)

    def test_crn_step_must_stay_positive(self, params):
        with pytest.raises(InvalidArgumentError):
            crn_finite_difference_gradient(params, lambda stack: stack.sum(axis=(1, 2)), 1.0, np.zeros((1, 3)), h=2.0)

    def test_straight_through_forward_uses_hard_sample(self, params, weights):
        report = straight_through_gradient(params, lambda p: (p * weights).sum(), 0.5, 3, seed=8)
        hard = permutation_to_matrix(pl_sample_hard(params, seed=8))
        assert report.objective_values[0] == pytest.approx((hard * weights).sum())

    def test_straight_through_gradient_equals_reparam_for_linear_objective(self, params, weights):
        straight = straight_through_gradient(params, lambda p: (p * weights).sum(), 1e-3, 10, seed=6)
        reparam = reparam_gradient(params, lambda p: (p * weights).sum(), 1e-3, 10, seed=6)
        np.testing.assert_allclose(straight.estimate, reparam.estimate, atol=1e-12)

    def test_straight_through_single_item(self):
        report = straight_through_gradient(PLParams(scores=(2.0,)), lambda p: p.sum() * 3.0, 1.0, 4, seed=0)
        np.testing.assert_allclose(report.estimate, [0.0], atol=1e-15)

    def test_estimators_are_deterministic(self, params, weights):
        first = reparam_gradient(params, lambda p: (p * weights).sum(), 1.0, 5, seed=12)
        second = reparam_gradient(params, lambda p: (p * weights).sum(), 1.0, 5, seed=12)
        np.testing.assert_array_equal(first.samples, second.samples)

    def test_variance_needs_two_samples(self, params):
        report = reinforce_gradient(params, lambda z: 1.0, 1, seed=0)
        with pytest.raises(ValueError):
            _ = report.variance

    def test_report_mean_invariant(self):
        with pytest.raises(ValidationError):
            EstimatorReport(estimate=np.zeros(2), n_samples=2, samples=np.ones((2, 2)))

    def test_invalid_sample_count(self, params):
        with pytest.raises(InvalidArgumentError):
            reinforce_gradient(params, lambda z: 1.0, 0, seed=0)
