import numpy as np
import pytest
from pydantic import ValidationError

from app.datamanager.datasets import generate_point_splits
from app.datamanager.exception_classes import InvalidArgumentError, TrainingDivergedError
from app.schemas.pydantic_models import RunConfig, SweepConfig, SweepRow
from app.services import training_service
from app.services.model_service import SGD, EmbeddingModel, MLP, ScoreModel
from app.services.autodiff_service import Tape, backward, finite_diff_gradient, gradient, relative_error
from app.services.relaxation_service import relaxed_sort, relaxed_sort_value, sort_permutation
from app.services.training_service import (
    QuantileRegressor, evaluate_sort, is_non_increasing, knn_accuracy, majority_vote, quantile_row,
    raw_neighbor_scores, sequence_splits, train_knn, train_median, train_sort, tune_temperature, variance_sweep
)


class TestRunConfig:

    def test_task_defaults(self):
        config = RunConfig(task="knn")
        assert (config.n, config.d, config.k, config.momentum) == (20, 10, 3, 0.9)
        assert (config.epochs, config.lr) == (100, 0.01)
        assert RunConfig(task="sort").momentum == 0.0

    def test_mode_aliases(self):
        assert RunConfig(task="sort", mode="st").mode == "straight_through"
        assert RunConfig(task="sort", mode="stoch").mode == "stochastic"

    @pytest.mark.parametrize("values", [
        {"task": "sort", "tau": 0.0},
        {"task": "sort", "unknown": 1},
        {"task": "median", "n": 4},
        {"task": "knn", "k": 30},
        {"task": "sort", "n": 12},
        {"task": "regression"},
    ])
    def test_invalid(self, values):
        with pytest.raises(ValidationError):
            RunConfig(**values)

    def test_sweep_taus_from_text(self):
        assert SweepConfig(taus="1, 2,4").taus == (1.0, 2.0, 4.0)
        with pytest.raises(ValidationError):
            SweepConfig(taus="1,-2")


class TestModels:

    def test_forward_matches_predict(self, rng):
        # Setup
        model = MLP("net", (3, 8, 2), rng)
        X = rng.standard_normal((5, 3))

        # Execute
        tape = Tape()
        taped = model.forward(model.bind(tape), X)

        # Verify
        np.testing.assert_array_equal(taped.data, model.predict(X))

    def test_zero_output_scores(self, rng):
        model = ScoreModel(4, 8, rng, zero_output=True)
        np.testing.assert_array_equal(model.predict_scores(rng.standard_normal((3, 4))), np.zeros(3))

    def test_default_scores_are_not_tied(self, rng):
        scores = ScoreModel(4, 8, rng).predict_scores(rng.standard_normal((5, 4)))
        assert np.unique(scores).size == 5

    def test_parameter_gradient(self, rng):
        # Setup
        model = EmbeddingModel(3, 6, 2, rng)
        query, candidates = rng.standard_normal(3), rng.standard_normal((4, 3))
        weights = np.array([0.3, -1.0, 0.5, 2.0])

        # Execute
        tape = Tape()
        bound = model.bind(tape)
        loss = (model.neighbor_scores(bound, query, candidates) * weights).sum()
        grads = backward(tape, loss)

        # Verify
        def loss_of_b1(b1):
            saved = model.params["b1"].copy()
            model.params["b1"] = b1
            value = float((model.predict_neighbor_scores(query, candidates) * weights).sum())
            model.params["b1"] = saved
            return value
        fd = finite_diff_gradient(loss_of_b1, model.params["b1"], h=1e-6)
        assert relative_error(grads[bound["embedding.b1"].id], fd) < 1e-5

    def test_sgd_momentum(self, rng):
        model = MLP("net", (1, 1, 1), rng)
        model.params["b2"][:] = 1.0
        optimizer = SGD([model], lr=0.1, momentum=0.5)
        optimizer.step({"net.b2": np.array([1.0])})
        optimizer.step({"net.b2": np.array([1.0])})
        # 1 - 0.1 * 1 - 0.1 * (0.5 + 1)
        assert model.params["b2"][0] == pytest.approx(0.75)

    def test_sgd_rejects_bad_settings(self, rng):
        with pytest.raises(InvalidArgumentError):
            SGD([MLP("net", (1, 1, 1), rng)], lr=0.0)
        with pytest.raises(InvalidArgumentError):
            SGD([MLP("net", (1, 1, 1), rng)], lr=0.1, momentum=1.0)


class TestSortTask:

    def test_untrained_model_is_at_chance(self, small_sort_config):
        # Setup
        splits = sequence_splits(small_sort_config)
        model = ScoreModel(small_sort_config.d, small_sort_config.hidden, np.random.default_rng(0), zero_output=True)

        # Execute
        metrics = evaluate_sort(model, splits.test, small_sort_config)

        # Verify
        assert metrics.element_rank_accuracy == pytest.approx(1 / 5, abs=0.1)
        assert metrics.exact_perm_accuracy <= metrics.element_rank_accuracy

    @pytest.mark.parametrize("mode", ["deterministic", "stochastic"])
    def test_training_improves_the_loss(self, small_sort_config, mode):
        config = small_sort_config.model_copy(update={"mode": mode})
        result = train_sort(config)
        assert len(result.curve) == config.epochs
        assert result.final_loss < result.initial_loss
        assert result.metrics.task == "sort"
        assert result.metrics.mode == mode

    def test_more_samples_do_not_hurt(self, small_sort_config):
        # Execute
        metrics = {
            n_samples: train_sort(
                small_sort_config.model_copy(update={"mode": "stochastic", "n_samples": n_samples})
            ).metrics
            for n_samples in (1, 5)
        }

        # Verify
        assert metrics[5].element_rank_accuracy >= metrics[1].element_rank_accuracy - 0.1
        assert metrics[5].exact_perm_accuracy >= metrics[1].exact_perm_accuracy - 0.15

    def test_straight_through_runs(self, small_sort_config):
        config = small_sort_config.model_copy(update={"mode": "straight_through", "epochs": 2})
        result = train_sort(config)
        assert 0.0 <= result.metrics.exact_perm_accuracy <= result.metrics.element_rank_accuracy <= 1.0

    def test_bit_reproducible(self, small_sort_config):
        config = small_sort_config.model_copy(update={"epochs": 2})
        first, second = train_sort(config), train_sort(config)
        assert first.curve == second.curve
        assert first.metrics == second.metrics

    def test_divergence_is_reported(self, small_sort_config, monkeypatch):
        # Setup
        monkeypatch.setattr(training_service, "cross_entropy_rows", lambda target, p: p.sum() * float("nan"))

        # Execute / Verify
        with pytest.raises(TrainingDivergedError) as exc_info:
            train_sort(small_sort_config)
        assert exc_info.value.epoch == 1


class TestMedianTask:

    @pytest.mark.parametrize("n, quantile, row", [(5, 0.5, 3), (5, 0.9, 1), (4, 0.25, 3), (7, 0.1, 6)])
    def test_quantile_row(self, n, quantile, row):
        assert quantile_row(n, quantile) == row

    def test_soft_median_at_small_temperature_selects_the_median_item(self, rng):
        s = np.array([0.3, 2.0, -1.0, 1.1, 0.7])
        X = rng.standard_normal((5, 3))
        selected = relaxed_sort(s, 1e-3)[2] @ X
        np.testing.assert_allclose(selected, X[sort_permutation(s)[2] - 1], atol=1e-9)

    def test_deterministic_run(self, small_median_config):
        result = train_median(small_median_config)
        assert len(result.curve) == small_median_config.epochs
        assert result.final_loss < result.initial_loss
        assert result.metrics.r2 <= 1.0
        assert result.metrics.mse_sample_avg is None

    def test_tied_scores_give_no_median_gradient(self):
        _, grad = gradient(lambda v: (relaxed_sort_value(v, 1.0).select_row(2) * np.arange(5.0)).sum(), np.zeros(5))
        np.testing.assert_array_equal(grad, np.zeros(5))

    def test_deterministic_run_trains_the_score_model(self, small_median_config, monkeypatch):
        # Setup
        built = []

        class RecordingRegressor(QuantileRegressor):
            def __init__(self, config):
                super().__init__(config)
                built.append(self)
        monkeypatch.setattr(training_service, "QuantileRegressor", RecordingRegressor)
        initial = {k: v.copy() for k, v in QuantileRegressor(small_median_config).score_model.params.items()}

        # Execute
        train_median(small_median_config)

        # Verify
        trained = built[0].score_model.params
        assert not np.array_equal(trained["W1"], initial["W1"])
        assert not np.array_equal(trained["W2"], initial["W2"])

    def test_stochastic_run_reports_sample_average(self, small_median_config):
        config = small_median_config.model_copy(update={"mode": "stochastic", "epochs": 1, "n_samples": 2})
        result = train_median(config)
        assert result.metrics.mse_sample_avg is not None

    def test_values_readout(self, small_median_config):
        config = small_median_config.model_copy(update={"readout": "values", "epochs": 1})
        assert train_median(config).metrics.mse >= 0.0


class TestKnnTask:

    def test_majority_vote(self):
        assert majority_vote(np.array([1, 0, 0])) == 0
        # tie: the label of the nearest neighbour wins
        assert majority_vote(np.array([1, 0])) == 1
        assert majority_vote(np.array([0, 1, 1, 0])) == 0

    def test_raw_distance_on_separated_blobs(self):
        train, _, test = generate_point_splits("blobs", 2, 0, 100, 10, 50)
        accuracy = knn_accuracy(raw_neighbor_scores(train.features), train, test, 3, 1.0)
        assert accuracy >= 0.95

    def test_k_out_of_range(self):
        train, _, test = generate_point_splits("blobs", 2, 0, 10, 5, 5)
        with pytest.raises(InvalidArgumentError):
            knn_accuracy(raw_neighbor_scores(train.features), train, test, 11, 1.0)

    def test_quick_run(self, small_knn_config):
        result = train_knn(small_knn_config)
        assert len(result.curve) == small_knn_config.epochs
        assert 0.0 <= result.metrics.knn_accuracy <= 1.0
        assert result.metrics.raw_knn_accuracy is not None


class TestOrchestration:

    def test_tune_temperature_picks_a_candidate(self, small_sort_config):
        config = small_sort_config.model_copy(update={"epochs": 1})
        best, results = tune_temperature(config, taus=(1.0, 4.0))
        assert best in (1.0, 4.0)
        assert set(results) == {1.0, 4.0}
        assert results[4.0].metrics.tau == 4.0

    def test_tune_temperature_needs_candidates(self, small_sort_config):
        with pytest.raises(InvalidArgumentError):
            tune_temperature(small_sort_config, taus=())

    def test_variance_sweep_rows(self, small_sweep_config):
        rows = variance_sweep(small_sweep_config)
        assert [row.tau for row in rows] == [1.0, 2.0, 4.0, 8.0, 16.0]
        assert all(np.isfinite(row.log_variance) for row in rows)
        assert variance_sweep(small_sweep_config) == rows

    def test_is_non_increasing(self):
        rows = [SweepRow(tau=t, log_variance=v) for t, v in [(1, 0.0), (2, -1.0), (4, -0.5), (8, -2.0)]]
        assert is_non_increasing(rows)
        assert not is_non_increasing(rows, allowed_inversions=0)
        rising = [SweepRow(tau=t, log_variance=float(t)) for t in (1, 2, 4)]
        assert not is_non_increasing(rising)


@pytest.mark.slow
class TestDeskScaleTargets:

    def test_sort_deterministic(self):
        metrics = train_sort(RunConfig(task="sort", mode="deterministic", seed=0)).metrics
        assert metrics.exact_perm_accuracy >= 0.95

    def test_sort_stochastic(self):
        metrics = train_sort(RunConfig(task="sort", mode="stochastic", seed=0)).metrics
        assert metrics.exact_perm_accuracy >= 0.90

    def test_median_noise_free(self):
        metrics = train_median(RunConfig(task="median", n=5, noise=0.0, seed=0)).metrics
        assert metrics.r2 >= 0.95

    def test_knn_rings(self):
        metrics = train_knn(RunConfig(task="knn", dataset="rings", seed=0)).metrics
        assert metrics.knn_accuracy >= 0.9
        assert metrics.knn_accuracy >= metrics.raw_knn_accuracy + 0.1

    def test_variance_decreases_with_temperature(self):
        assert is_non_increasing(variance_sweep(SweepConfig(seed=0)))
