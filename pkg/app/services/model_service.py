"""
    Small perceptrons trained through the tape, and the SGD optimiser that updates them.

    Parameters live as plain numpy arrays on the model. For a gradient step they are bound to a Tape as
    leaves; `predict` runs the same arithmetic eagerly for evaluation.
"""
import logging
from typing import Sequence

import numpy as np

from app.datamanager.exception_classes import InvalidArgumentError, ShapeMismatchError
from app.services.autodiff_service import Tape, Value

logger = logging.getLogger(__name__)


class MLP:
    """
    Two-layer perceptron x -> relu(x W1 + b1) W2 + b2, applied row-wise to an (m, in) input.
    With zero_output=True the output layer starts at zero.
    """

    def __init__(self, name: str, sizes: Sequence[int], rng: np.random.Generator, zero_output: bool = False):
        if len(sizes) != 3 or any(size < 1 for size in sizes):
            raise InvalidArgumentError("sizes", list(sizes), "three positive layer widths (in, hidden, out)")
        n_in, n_hidden, n_out = sizes
        self.name = name
        self.sizes = tuple(sizes)
        self.params: dict[str, np.ndarray] = {
            "W1": rng.standard_normal((n_in, n_hidden)) * np.sqrt(2.0 / n_in),
            "b1": np.zeros(n_hidden),
            "W2": (np.zeros((n_hidden, n_out)) if zero_output
                   else rng.standard_normal((n_hidden, n_out)) * np.sqrt(1.0 / n_hidden)),
            "b2": np.zeros(n_out),
        }

    def __repr__(self) -> str:
        return f"MLP(name={self.name!r}, sizes={self.sizes})"

    def key(self, param: str) -> str:
        return f"{self.name}.{param}"

    def named_parameters(self) -> dict[str, np.ndarray]:
        return {self.key(k): v for k, v in self.params.items()}

    def parameter_count(self) -> int:
        return sum(v.size for v in self.params.values())

    def bind(self, tape: Tape) -> dict[str, Value]:
        """ Registers the current parameters as leaves of `tape` """
        return {self.key(k): tape.leaf(v) for k, v in self.params.items()}

    def _check_input(self, shape: tuple):
        if len(shape) != 2 or shape[1] != self.sizes[0]:
            raise ShapeMismatchError(f"{self.name} forward", (shape, (None, self.sizes[0])))

    def forward(self, bound: dict[str, Value], X) -> Value:
        """ Taped forward pass; X is an (m, in) array or Value, returns an (m, out) Value """
        W1, b1, W2, b2 = (bound[self.key(k)] for k in ("W1", "b1", "W2", "b2"))
        if not isinstance(X, Value):
            X = W1.tape.constant(X)
        self._check_input(X.shape)
        hidden = (X @ W1 + b1).relu()
        return hidden @ W2 + b2

    def predict(self, X: np.ndarray) -> np.ndarray:
        """ Eager forward pass, numerically identical to `forward` """
        X = np.asarray(X, dtype=np.float64)
        self._check_input(X.shape)
        p = self.params
        hidden = np.maximum(X @ p["W1"] + p["b1"], 0.0)
        return hidden @ p["W2"] + p["b2"]


class ScoreModel(MLP):
    """
    h_phi: one scalar score per item, weights shared across sequence positions.
    zero_output=True starts every item at the same score.
    """

    def __init__(self, d: int, hidden: int, rng: np.random.Generator, zero_output: bool = False):
        super().__init__("score", (d, hidden, 1), rng, zero_output=zero_output)

    def scores(self, bound: dict[str, Value], X) -> Value:
        out = self.forward(bound, X)
        return out.reshape((out.shape[0],))

    def predict_scores(self, X: np.ndarray) -> np.ndarray:
        return self.predict(X)[:, 0]


class RegressorModel(MLP):
    """ g_theta: maps one item representation to a real prediction """

    def __init__(self, d: int, hidden: int, rng: np.random.Generator):
        super().__init__("regressor", (d, hidden, 1), rng)

    def regress(self, bound: dict[str, Value], X) -> Value:
        out = self.forward(bound, X)
        return out.reshape((out.shape[0],))

    def predict_values(self, X: np.ndarray) -> np.ndarray:
        return self.predict(X)[:, 0]


class EmbeddingModel(MLP):
    """ h_phi for kNN: raw features to an embedding space """

    def __init__(self, d: int, hidden: int, embedding_dim: int, rng: np.random.Generator):
        super().__init__("embedding", (d, hidden, embedding_dim), rng)

    def neighbor_scores(self, bound: dict[str, Value], query: np.ndarray, candidates: np.ndarray) -> Value:
        """ s_j = -||h(x) - h(x_j)||^2 for every candidate row x_j """
        points = np.vstack([np.asarray(query, dtype=np.float64)[None, :], candidates])
        embedded = self.forward(bound, points)
        e_query = embedded.take_rows([0])
        e_candidates = embedded.take_rows(list(range(1, points.shape[0])))
        return -(e_candidates - e_query).square().sum(axis=1)

    def predict_neighbor_scores(self, query: np.ndarray, candidates: np.ndarray) -> np.ndarray:
        e_query = self.predict(np.asarray(query, dtype=np.float64)[None, :])
        e_candidates = self.predict(candidates)
        return -np.square(e_candidates - e_query).sum(axis=1)


class SGD:
    """
    Stochastic gradient descent with (heavy-ball) momentum over the parameters of several models:
    v <- momentum * v + grad;  p <- p - lr * v
    """

    def __init__(self, models: Sequence[MLP], lr: float, momentum: float = 0.0):
        if lr <= 0:
            raise InvalidArgumentError("lr", lr, "a value > 0")
        if not 0 <= momentum < 1:
            raise InvalidArgumentError("momentum", momentum, "a value in [0, 1)")
        self.models = list(models)
        self.lr = lr
        self.momentum = momentum
        self.velocity = {k: np.zeros_like(v) for m in self.models for k, v in m.named_parameters().items()}

    def step(self, grads: dict[str, np.ndarray]):
        for model in self.models:
            for name, param in model.params.items():
                key = model.key(name)
                if key not in grads:
                    continue
                self.velocity[key] = self.momentum * self.velocity[key] + grads[key]
                param -= self.lr * self.velocity[key]
