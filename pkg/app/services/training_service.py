"""
    Desk-scale training tasks on synthetic data: sorting, quantile regression and differentiable kNN,
    plus temperature tuning and the temperature / gradient-variance sweep.

    Modes:
      deterministic     loss on relaxed_sort(s, tau)
      stochastic        s are log-scores; loss averaged over n_samples relaxed PL samples relaxed_sort(s + g, tau)
      straight_through  loss on the hard projection of relaxed_sort(s, tau), gradients through the relaxation

    Evaluation always uses hard permutations (project_hard), never relaxed matrices.
"""
import logging
import math
from typing import Callable, Sequence

import numpy as np

from app.core.config import DEFAULT_TAUS
from app.datamanager.datasets import generate_point_splits, generate_sequences, generate_splits
from app.datamanager.exception_classes import InvalidArgumentError, TrainingDivergedError
from app.schemas.pydantic_models import (
    EpochRecord, LabeledPointDataset, MetricsRecord, PLParams, RunConfig, SequenceSplits, SweepConfig, SweepRow,
    SyntheticSequenceDataset, TrainingResult
)
from app.services.autodiff_service import Tape, Value, backward
from app.services.loss_service import cross_entropy_rows, knn_loss, mse, r2_score, squared_error_rows
from app.services.model_service import MLP, SGD, EmbeddingModel, RegressorModel, ScoreModel
from app.services.plackett_luce_service import gumbel_from_uniform, reparam_gradient, spawn_rng
from app.services.relaxation_service import (
    permutation_to_matrix, project_hard, relaxation_gap, relaxed_sort, relaxed_sort_batch, relaxed_sort_value,
    sort_permutation
)

logger = logging.getLogger(__name__)

# PCG64 streams derived from the run seed
INIT_STREAM = 20
TRAIN_STREAM = 21
OBJECTIVE_STREAM = 22
PREDICTION_STREAM = 23

ExampleLoss = Callable[[dict[str, Value], int, np.random.Generator], Value]


# -----    shared helpers     -----

def _relax(scores: Value, config: RunConfig, noise_row: np.ndarray | None = None) -> Value:
    """ Relaxed (or straight-through) sort matrix of one score vector under the configured mode """
    if noise_row is not None:
        scores = scores + noise_row
    p_hat = relaxed_sort_value(scores, config.tau)
    if config.mode == "straight_through":
        p_hard = permutation_to_matrix(project_hard(p_hat.data))
        p_hat = p_hat.straight_through(p_hard)
    return p_hat


def _mode_average(
        scores: Value,
        config: RunConfig,
        rng: np.random.Generator,
        loss_of_matrix: Callable[[Value], Value]
) -> Value:
    """ The configured objective for one example; stochastic mode averages n_samples Gumbel draws """
    if config.mode != "stochastic":
        return loss_of_matrix(_relax(scores, config))
    noise = gumbel_from_uniform(rng.random((config.n_samples, scores.shape[0])))
    total = None
    for row in noise:
        loss = loss_of_matrix(_relax(scores, config, row))
        total = loss if total is None else total + loss
    return total / config.n_samples


def _example_gradients(models: Sequence[MLP], example_loss: ExampleLoss, index: int, rng: np.random.Generator):
    tape = Tape()
    leaves: dict[str, Value] = {}
    for model in models:
        leaves.update(model.bind(tape))
    loss = example_loss(leaves, index, rng)
    grads = backward(tape, loss)
    return float(loss.data), {key: grads[leaf.id] for key, leaf in leaves.items()}


def _objective(models: Sequence[MLP], example_loss: ExampleLoss, count: int, seed: int) -> float:
    """ Mean training objective over all examples, with its own noise stream """
    rng = spawn_rng(seed, OBJECTIVE_STREAM)
    tape = Tape()
    leaves: dict[str, Value] = {}
    for model in models:
        leaves.update(model.bind(tape))
    return math.fsum(float(example_loss(leaves, i, rng).data) for i in range(count)) / count


def _fit(
        task: str,
        config: RunConfig,
        models: Sequence[MLP],
        example_loss: ExampleLoss,
        count: int,
        validate: Callable[[], float]
) -> tuple[list[EpochRecord], float]:
    """
    Minibatch SGD over `count` training examples. Per-example gradients are summed in batch order
    and averaged, so a run is bit-reproducible under its seed.
    Returns the learning curve and the objective before the first update.
    """
    optimizer = SGD(models, config.lr, config.momentum)
    rng = spawn_rng(config.seed, TRAIN_STREAM)
    initial_loss = _objective(models, example_loss, count, config.seed)
    logger.info("%s [%s, tau=%g]: initial loss %.6f", task, config.mode, config.tau, initial_loss)

    curve: list[EpochRecord] = []
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(count)
        losses = []
        for step, start in enumerate(range(0, count, config.batch_size)):
            batch = order[start:start + config.batch_size]
            total: dict[str, np.ndarray] = {}
            for index in batch:
                loss, grads = _example_gradients(models, example_loss, int(index), rng)
                if not math.isfinite(loss) or not all(np.all(np.isfinite(g)) for g in grads.values()):
                    raise TrainingDivergedError(task, epoch, step, loss)
                losses.append(loss)
                for key, g in grads.items():
                    total[key] = total[key] + g if key in total else g.copy()
            optimizer.step({key: g / len(batch) for key, g in total.items()})

        train_loss = math.fsum(losses) / len(losses)
        valid_metric = validate()
        curve.append(EpochRecord(epoch=epoch, train_loss=train_loss, valid_metric=valid_metric))
        logger.info(
            "%s epoch %d/%d: train loss %.6f, valid metric %.4f", task, epoch, config.epochs, train_loss, valid_metric
        )
    return curve, initial_loss


def _batch_scores(model: ScoreModel, features: np.ndarray) -> np.ndarray:
    """ Scores of every item of a (count, n, d) stack, as (count, n) """
    count, n, d = features.shape
    return model.predict_scores(features.reshape(count * n, d)).reshape(count, n)


def sequence_splits(config: RunConfig) -> SequenceSplits:
    return generate_splits(
        config.n, config.d, config.noise, config.seed, config.n_train, config.n_valid, config.n_test, config.levels
    )


# -----    sorting     -----

def evaluate_sort(model: ScoreModel, dataset: SyntheticSequenceDataset, config: RunConfig) -> MetricsRecord:
    """ Exact-permutation and element-rank accuracy of the hard projected predictions """
    p_hat = relaxed_sort_batch(_batch_scores(model, dataset.features), config.tau)
    exact, element, gaps = [], [], []
    for matrix, values in zip(p_hat, dataset.values):
        predicted = project_hard(matrix)
        truth = sort_permutation(values)
        hits = predicted == truth
        exact.append(float(np.all(hits)))
        element.append(float(np.mean(hits)))
        gaps.append(relaxation_gap(matrix, permutation_to_matrix(predicted)))
    return MetricsRecord(
        task="sort",
        mode=config.mode,
        tau=config.tau,
        exact_perm_accuracy=float(np.mean(exact)),
        element_rank_accuracy=float(np.mean(element)),
        relaxation_mse=float(np.mean(gaps)),
    )


def train_sort(config: RunConfig, splits: SequenceSplits | None = None) -> TrainingResult:
    """
    Learns a score model h_phi from permutation supervision only.
    deterministic / stochastic minimise row-wise cross entropy against P_y,
    straight_through the squared error ||P_y - P||^2 / n.
    """
    splits = splits or sequence_splits(config)
    train = splits.train
    model = ScoreModel(config.d, config.hidden, spawn_rng(config.seed, INIT_STREAM), zero_output=True)
    targets = [permutation_to_matrix(sort_permutation(values)) for values in train.values]
    loss_fn = squared_error_rows if config.mode == "straight_through" else cross_entropy_rows

    def example_loss(leaves, index, rng):
        scores = model.scores(leaves, train.features[index])
        return _mode_average(scores, config, rng, lambda p: loss_fn(targets[index], p))

    curve, initial_loss = _fit(
        "sort", config, [model], example_loss, train.count,
        lambda: evaluate_sort(model, splits.valid, config).exact_perm_accuracy
    )
    metrics = evaluate_sort(model, splits.test, config)
    return TrainingResult(metrics=metrics, curve=curve, initial_loss=initial_loss)


# -----    quantile regression     -----

def quantile_row(n: int, quantile: float) -> int:
    """ 1-based row of the sort matrix holding the q-quantile; (n + 1) // 2 for the median of odd n """
    if not 0 < quantile < 1:
        raise InvalidArgumentError("quantile", quantile, "a value in (0, 1)")
    return n - int(round(quantile * (n - 1)))


def quantile_targets(dataset: SyntheticSequenceDataset, quantile: float) -> np.ndarray:
    row = quantile_row(dataset.n, quantile)
    return np.sort(dataset.values, axis=1)[:, ::-1][:, row - 1].copy()


class QuantileRegressor:
    """
    Score model h_phi and regressor g_theta trained jointly; the readout decides where g_theta is applied.
    h_phi needs random output weights: on tied scores the middle row of the relaxed sort has zero gradient.
    """

    def __init__(self, config: RunConfig):
        rng = spawn_rng(config.seed, INIT_STREAM)
        self.score_model = ScoreModel(config.d, config.hidden, rng)
        self.regressor = RegressorModel(config.d, config.hidden, rng)
        self.readout = config.readout

    @property
    def models(self) -> list[MLP]:
        return [self.score_model, self.regressor]

    def soft_prediction(self, leaves: dict[str, Value], row: Value, features: np.ndarray) -> Value:
        """ g(P[r, :] X) for the features readout, P[r, :] g(X) for the values readout """
        if self.readout == "values":
            return row @ self.regressor.regress(leaves, features)
        mixed = row @ features
        return self.regressor.regress(leaves, mixed.reshape((1, features.shape[1]))).reshape(())

    def predict_items(self, features: np.ndarray) -> np.ndarray:
        """ g(x_j) for every item of one sequence; the prediction once an item is hard-selected """
        return self.regressor.predict_values(features)


def evaluate_median(
        regressor: QuantileRegressor,
        dataset: SyntheticSequenceDataset,
        config: RunConfig
) -> MetricsRecord:
    row = quantile_row(dataset.n, config.quantile)
    y_true = quantile_targets(dataset, config.quantile)
    scores = _batch_scores(regressor.score_model, dataset.features)
    p_hat = relaxed_sort_batch(scores, config.tau)
    predictions = np.empty(dataset.count)
    for c in range(dataset.count):
        selected = project_hard(p_hat[c])[row - 1] - 1
        predictions[c] = regressor.predict_items(dataset.features[c][selected:selected + 1])[0]

    sample_avg = None
    if config.mode == "stochastic":
        rng = spawn_rng(config.seed, PREDICTION_STREAM)
        averaged = np.empty(dataset.count)
        for c in range(dataset.count):
            noise = gumbel_from_uniform(rng.random((config.n_samples, dataset.n)))
            perms = np.argsort(-(scores[c][None, :] + noise), axis=1, kind="stable")
            item_predictions = regressor.predict_items(dataset.features[c])
            averaged[c] = item_predictions[perms[:, row - 1]].mean()
        sample_avg = mse(y_true, averaged)

    return MetricsRecord(
        task="median",
        mode=config.mode,
        tau=config.tau,
        mse=mse(y_true, predictions),
        r2=r2_score(y_true, predictions),
        mse_sample_avg=sample_avg,
    )


def train_median(config: RunConfig, splits: SequenceSplits | None = None) -> TrainingResult:
    """ Jointly learns h_phi and g_theta to predict the value of the q-quantile item of a sequence """
    splits = splits or sequence_splits(config)
    train = splits.train
    regressor = QuantileRegressor(config)
    row = quantile_row(train.n, config.quantile)
    targets = quantile_targets(train, config.quantile)

    def example_loss(leaves, index, rng):
        features = train.features[index]
        scores = regressor.score_model.scores(leaves, features)

        def loss_of_matrix(p: Value) -> Value:
            return mse(float(targets[index]), regressor.soft_prediction(leaves, p.select_row(row - 1), features))
        return _mode_average(scores, config, rng, loss_of_matrix)

    curve, initial_loss = _fit(
        "median", config, regressor.models, example_loss, train.count,
        lambda: evaluate_median(regressor, splits.valid, config).mse
    )
    metrics = evaluate_median(regressor, splits.test, config)
    return TrainingResult(metrics=metrics, curve=curve, initial_loss=initial_loss)


# -----    kNN     -----

def majority_vote(neighbor_labels: np.ndarray) -> int:
    """ Most frequent label among the neighbours (nearest first); ties go to the label seen first """
    labels, counts = np.unique(neighbor_labels, return_counts=True)
    winners = set(labels[counts == counts.max()].tolist())
    return next(int(label) for label in neighbor_labels if int(label) in winners)


def knn_accuracy(
        score_fn: Callable[[np.ndarray], np.ndarray],
        candidates: LabeledPointDataset,
        queries: LabeledPointDataset,
        k: int,
        tau: float
) -> float:
    """
    Hard kNN accuracy with the entire candidate set: the k nearest are the first k entries of
    project_hard(relaxed_sort(scores)), scores = score_fn(query).
    """
    if not 1 <= k <= candidates.count:
        raise InvalidArgumentError("k", k, f"an integer in [1, {candidates.count}]")
    hits = 0
    for query, label in zip(queries.features, queries.labels):
        order = project_hard(relaxed_sort(score_fn(query), tau))
        hits += majority_vote(candidates.labels[order[:k] - 1]) == int(label)
    return hits / queries.count


def raw_neighbor_scores(candidates: np.ndarray) -> Callable[[np.ndarray], np.ndarray]:
    return lambda query: -np.square(candidates - query[None, :]).sum(axis=1)


def train_knn(
        config: RunConfig,
        splits: tuple[LabeledPointDataset, LabeledPointDataset, LabeledPointDataset] | None = None
) -> TrainingResult:
    """
    Learns an embedding h_phi with the kNN loss. Every training query sees n candidates drawn from the
    rest of the training split; evaluation votes over the whole training split.
    """
    train, valid, test = splits or generate_point_splits(
        config.dataset, config.d, config.seed, config.n_train, config.n_valid, config.n_test
    )
    model = EmbeddingModel(config.d, config.hidden, config.embedding_dim, spawn_rng(config.seed, INIT_STREAM))
    indices = np.arange(train.count)

    def example_loss(leaves, index, rng):
        candidates = rng.choice(np.delete(indices, index), size=config.n, replace=False)
        scores = model.neighbor_scores(leaves, train.features[index], train.features[candidates])
        labels = train.labels[candidates]
        return _mode_average(scores, config, rng, lambda p: knn_loss(p, train.labels[index], labels, config.k))

    def learned_scores(query: np.ndarray) -> np.ndarray:
        return model.predict_neighbor_scores(query, train.features)

    curve, initial_loss = _fit(
        "knn", config, [model], example_loss, train.count,
        lambda: knn_accuracy(learned_scores, train, valid, config.k, config.tau)
    )
    metrics = MetricsRecord(
        task="knn",
        mode=config.mode,
        tau=config.tau,
        knn_accuracy=knn_accuracy(learned_scores, train, test, config.k, config.tau),
        raw_knn_accuracy=knn_accuracy(raw_neighbor_scores(train.features), train, test, config.k, config.tau),
    )
    return TrainingResult(metrics=metrics, curve=curve, initial_loss=initial_loss)


# -----    orchestration     -----

TASK_TRAINERS = {
    "sort": train_sort,
    "median": train_median,
    "knn": train_knn,
}

# sort and kNN maximise their validation metric, quantile regression minimises MSE
_HIGHER_IS_BETTER = {"sort": True, "median": False, "knn": True}


def run_task(config: RunConfig) -> TrainingResult:
    logger.info("Training %s in %s mode (seed %d)", config.task, config.mode, config.seed)
    return TASK_TRAINERS[config.task](config)


def tune_temperature(
        config: RunConfig,
        taus: Sequence[float] = DEFAULT_TAUS
) -> tuple[float, dict[float, TrainingResult]]:
    """
    One run per temperature; returns the tau with the best final validation metric
    (the smallest tau on ties) and every run.
    """
    if len(taus) == 0:
        raise InvalidArgumentError("taus", list(taus), "at least one temperature")
    results = {}
    for tau in taus:
        candidate = RunConfig.model_validate({**config.model_dump(), "tau": float(tau)})
        results[float(tau)] = run_task(candidate)

    def key(tau: float):
        metric = results[tau].curve[-1].valid_metric
        return (-metric if _HIGHER_IS_BETTER[config.task] else metric, tau)

    best = min(results, key=key)
    logger.info("Best temperature for %s: %g", config.task, best)
    return best, results


def variance_sweep(config: SweepConfig) -> list[SweepRow]:
    """
    log of the mean per-coordinate variance of reparameterized gradient samples of the stochastic sort
    objective, one row per temperature. Scores come from a randomly initialised score model on
    synthetic sequences; every temperature reuses the same Gumbel draws.
    """
    if config.n_samples < 2:
        raise InvalidArgumentError("n_samples", config.n_samples, "an integer >= 2")
    data = generate_sequences(config.n, config.d, config.n_sequences, config.noise, config.seed)
    model = ScoreModel(config.d, config.hidden, spawn_rng(config.seed, INIT_STREAM))
    log_scores = _batch_scores(model, data.features)

    rows = []
    for tau in config.taus:
        variances = []
        for c in range(data.count):
            params = PLParams(scores=tuple(np.exp(log_scores[c]).tolist()))
            target = permutation_to_matrix(sort_permutation(data.values[c]))
            report = reparam_gradient(
                params, lambda p: cross_entropy_rows(target, p), tau, config.n_samples, config.seed + c
            )
            variances.append(float(report.variance.mean()))
        log_variance = math.log(math.fsum(variances) / len(variances))
        logger.debug("Sweep tau=%g: log variance %.6f", tau, log_variance)
        rows.append(SweepRow(tau=float(tau), log_variance=log_variance))
    return rows


def is_non_increasing(rows: Sequence[SweepRow], allowed_inversions: int = 1) -> bool:
    """ True when log-variance decreases with tau, up to `allowed_inversions` upward steps """
    ordered = sorted(rows, key=lambda r: r.tau)
    inversions = sum(1 for a, b in zip(ordered, ordered[1:]) if b.log_variance > a.log_variance)
    return inversions <= allowed_inversions
