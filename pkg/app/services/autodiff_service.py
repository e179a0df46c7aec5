"""
    Minimal reverse-mode automatic differentiation on dense float64 arrays.

    A Tape records Values in creation order, so parents always precede children and a single
    reverse sweep over the tape applies the chain rule. Each Value keeps a vector-Jacobian
    product closure mapping its adjoint to the contributions of its parents.

        tape = Tape()
        s = tape.leaf([0.3, -1.2, 2.0])
        loss = (s * s).sum()
        grads = backward(tape, loss)
        grads[s.id]  # 2 s

    Subgradient conventions: abs'(0) = 0, relu'(0) = 0, max-reduce sends the adjoint to the first maximiser.
"""
import logging
from typing import Callable, Sequence

import numpy as np
from numpy.typing import ArrayLike
from scipy.special import softmax

from app.datamanager.exception_classes import (
    DomainError, InvalidArgumentError, InvalidTemperatureError, ShapeMismatchError, TapeMismatchError
)

logger = logging.getLogger(__name__)

Vjp = Callable[[np.ndarray], tuple]


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """ Sums grad over the axes numpy broadcasting added or stretched to reach grad.shape """
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad.reshape(shape)


class Value:
    """ A node of the tape: forward data, accumulated adjoint and the op that produced it """

    __slots__ = ("tape", "id", "data", "adjoint", "op", "parents", "_vjp")
    # lets `ndarray @ value` and friends fall through to the reflected Value operators
    __array_ufunc__ = None

    def __init__(self, tape: "Tape", data: np.ndarray, op: str, parents: tuple = (), vjp: Vjp | None = None):
        self.tape = tape
        self.data = data
        self.adjoint = np.zeros_like(data)
        self.op = op
        self.parents = parents  # parent Values, in operand order
        self._vjp = vjp
        self.id = tape._append(self)

    def __repr__(self) -> str:
        return f"Value(id={self.id}, op={self.op!r}, shape={self.data.shape})"

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def parent_ids(self) -> list[int]:
        return [p.id for p in self.parents]

    # -----    helpers     -----

    def _lift(self, other, op: str) -> "Value":
        if isinstance(other, Value):
            if other.tape is not self.tape:
                raise TapeMismatchError(op)
            return other
        return self.tape.constant(other)

    def _record(self, data: np.ndarray, op: str, parents: tuple, vjp: Vjp) -> "Value":
        return Value(self.tape, np.asarray(data, dtype=np.float64), op, parents, vjp)

    def _elementwise(self, other, op: str, fn, vjp_fn) -> "Value":
        other = self._lift(other, op)
        try:
            np.broadcast_shapes(self.shape, other.shape)
        except ValueError:
            raise ShapeMismatchError(op, (self.shape, other.shape))
        a, b = self, other
        out = fn(a.data, b.data)

        def vjp(g):
            ga, gb = vjp_fn(g, a.data, b.data)
            return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)
        return self._record(out, op, (a, b), vjp)

    # -----    binary ops     -----

    def __add__(self, other) -> "Value":
        return self._elementwise(other, "add", np.add, lambda g, a, b: (g, g))

    def __radd__(self, other) -> "Value":
        return self._lift(other, "add") + self

    def __sub__(self, other) -> "Value":
        return self._elementwise(other, "sub", np.subtract, lambda g, a, b: (g, -g))

    def __rsub__(self, other) -> "Value":
        return self._lift(other, "sub") - self

    def __mul__(self, other) -> "Value":
        return self._elementwise(other, "mul", np.multiply, lambda g, a, b: (g * b, g * a))

    def __rmul__(self, other) -> "Value":
        return self._lift(other, "mul") * self

    def __neg__(self) -> "Value":
        return self._record(-self.data, "neg", (self,), lambda g: (-g,))

    def __truediv__(self, other) -> "Value":
        """ Division by a scalar constant """
        if isinstance(other, Value) or np.ndim(other) != 0:
            raise InvalidArgumentError("divisor", other, "a scalar constant")
        c = float(other)
        if c == 0.0:
            raise DomainError("scalar_divide", "division by zero")
        return self._record(self.data / c, "scalar_divide", (self,), lambda g: (g / c,))

    def __matmul__(self, other) -> "Value":
        other = self._lift(other, "matmul")
        a, b = self, other
        if a.ndim not in (1, 2) or b.ndim not in (1, 2):
            raise ShapeMismatchError("matmul", (a.shape, b.shape))
        a2 = a.data[None, :] if a.ndim == 1 else a.data
        b2 = b.data[:, None] if b.ndim == 1 else b.data
        if a2.shape[1] != b2.shape[0]:
            raise ShapeMismatchError("matmul", (a.shape, b.shape))
        out2 = a2 @ b2

        def vjp(g):
            g2 = np.asarray(g).reshape(out2.shape)
            ga = (g2 @ b2.T).reshape(a.shape)
            gb = (a2.T @ g2).reshape(b.shape)
            return ga, gb
        return self._record(a.data @ b.data, "matmul", (a, b), vjp)

    def __rmatmul__(self, other) -> "Value":
        return self._lift(other, "matmul") @ self

    # -----    unary ops     -----

    def abs(self) -> "Value":
        x = self.data
        return self._record(np.abs(x), "abs", (self,), lambda g: (g * np.sign(x),))

    def exp(self) -> "Value":
        out = np.exp(self.data)
        return self._record(out, "exp", (self,), lambda g: (g * out,))

    def log(self) -> "Value":
        x = self.data
        if np.any(x <= 0):
            raise DomainError("log", "argument must be strictly positive")
        return self._record(np.log(x), "log", (self,), lambda g: (g / x,))

    def sqrt(self) -> "Value":
        x = self.data
        if np.any(x < 0):
            raise DomainError("sqrt", "argument must be non-negative")
        out = np.sqrt(x)
        if np.any(out == 0):
            raise DomainError("sqrt", "derivative is unbounded at 0")
        return self._record(out, "sqrt", (self,), lambda g: (g / (2.0 * out),))

    def square(self) -> "Value":
        x = self.data
        return self._record(np.square(x), "square", (self,), lambda g: (2.0 * g * x,))

    def relu(self) -> "Value":
        x = self.data
        return self._record(np.maximum(x, 0.0), "relu", (self,), lambda g: (g * (x > 0),))

    def clamp_min(self, floor: float) -> "Value":
        """ max(x, floor); the adjoint only reaches entries strictly above the floor """
        x = self.data
        return self._record(np.maximum(x, floor), "clamp_min", (self,), lambda g: (g * (x > floor),))

    # -----    reductions     -----

    def sum(self, axis: int | None = None) -> "Value":
        shape = self.shape
        out = self.data.sum(axis=axis)

        def vjp(g):
            if axis is None:
                return (np.broadcast_to(g, shape).copy(),)
            return (np.broadcast_to(np.expand_dims(g, axis), shape).copy(),)
        return self._record(out, "sum", (self,), vjp)

    def mean(self, axis: int | None = None) -> "Value":
        count = self.data.size if axis is None else self.shape[axis]
        return self.sum(axis) / count

    def max(self, axis: int | None = None) -> "Value":
        x = self.data
        if axis is None:
            flat_index = int(np.argmax(x))

            def vjp(g):
                grad = np.zeros_like(x)
                grad.flat[flat_index] = g
                return (grad,)
            return self._record(x.max(), "max", (self,), vjp)

        index = np.argmax(x, axis=axis)

        def vjp(g):
            grad = np.zeros_like(x)
            np.put_along_axis(grad, np.expand_dims(index, axis), np.expand_dims(g, axis), axis=axis)
            return (grad,)
        return self._record(x.max(axis=axis), "max", (self,), vjp)

    def softmax_rows(self, tau: float = 1.0) -> "Value":
        """ softmax(x / tau) over the last axis, with max subtraction """
        tau = float(tau)
        if not np.isfinite(tau) or tau <= 0:
            raise InvalidTemperatureError(tau)
        out = softmax(self.data / tau, axis=-1)

        def vjp(g):
            inner = np.sum(g * out, axis=-1, keepdims=True)
            return (out * (g - inner) / tau,)
        return self._record(out, "softmax_rows", (self,), vjp)

    # -----    shape ops     -----

    def broadcast_to(self, shape: tuple) -> "Value":
        src = self.shape
        try:
            out = np.broadcast_to(self.data, shape).copy()
        except ValueError:
            raise ShapeMismatchError("broadcast", (src, shape))
        return self._record(out, "broadcast", (self,), lambda g: (_unbroadcast(g, src),))

    def reshape(self, shape: tuple) -> "Value":
        src = self.shape
        try:
            out = self.data.reshape(shape)
        except ValueError:
            raise ShapeMismatchError("reshape", (src, shape))
        return self._record(out.copy(), "reshape", (self,), lambda g: (np.reshape(g, src),))

    @property
    def T(self) -> "Value":
        return self.transpose()

    def transpose(self) -> "Value":
        if self.ndim != 2:
            raise ShapeMismatchError("transpose", (self.shape,))
        return self._record(self.data.T.copy(), "transpose", (self,), lambda g: (g.T,))

    def select_row(self, i: int) -> "Value":
        """ Row i (0-based) of a matrix, or entry i of a vector """
        return self.take_rows([i], op="select_row").reshape(self.shape[1:])

    def take_rows(self, indices: Sequence[int], op: str = "take_rows") -> "Value":
        """ Rows at the given 0-based indices, in that order """
        idx = np.asarray(indices, dtype=np.int64)
        if self.ndim == 0 or idx.ndim != 1 or np.any(idx < 0) or np.any(idx >= self.shape[0]):
            raise ShapeMismatchError(op, (self.shape, tuple(idx.tolist())))
        shape = self.shape

        def vjp(g):
            grad = np.zeros(shape, dtype=np.float64)
            np.add.at(grad, idx, g)
            return (grad,)
        return self._record(self.data[idx].copy(), op, (self,), vjp)

    def straight_through(self, hard: ArrayLike) -> "Value":
        """ Forward value `hard`, backward pass as the identity onto this (relaxed) value """
        hard = np.asarray(hard, dtype=np.float64)
        if hard.shape != self.shape:
            raise ShapeMismatchError("straight_through", (self.shape, hard.shape))
        return self._record(hard.copy(), "straight_through", (self,), lambda g: (g,))


class Tape:
    """ Append-only record of Values; creation order is a topological order """

    def __init__(self):
        self.nodes: list[Value] = []

    def __len__(self) -> int:
        return len(self.nodes)

    def _append(self, value: Value) -> int:
        self.nodes.append(value)
        return len(self.nodes) - 1

    def leaf(self, data: ArrayLike, op: str = "leaf") -> Value:
        arr = np.array(data, dtype=np.float64)
        return Value(self, arr, op)

    def constant(self, data: ArrayLike) -> Value:
        return self.leaf(data, op="const")

    def stack(self, values: Sequence[Value]) -> Value:
        """ Stacks equally-shaped Values along a new leading axis """
        if len(values) == 0:
            raise InvalidArgumentError("values", values, "at least one Value")
        for v in values:
            if v.tape is not self:
                raise TapeMismatchError("stack")
            if v.shape != values[0].shape:
                raise ShapeMismatchError("stack", tuple(u.shape for u in values))
        parents = tuple(values)
        out = np.stack([v.data for v in values])

        def vjp(g):
            return tuple(g[i] for i in range(len(parents)))
        return Value(self, out, "stack", parents, vjp)


def backward(tape: Tape, root: Value) -> dict[int, np.ndarray]:
    """
    Reverse sweep from a scalar root.
    Returns node id -> adjoint (d root / d node) and stores each adjoint on its Value.
    """
    if root.tape is not tape:
        raise TapeMismatchError("backward")
    if root.data.size != 1 or root.ndim > 1:
        raise InvalidArgumentError("root", root.shape, "a scalar Value")
    for node in tape.nodes:
        node.adjoint = np.zeros_like(node.data)
    root.adjoint = np.ones_like(root.data)

    for node in reversed(tape.nodes[: root.id + 1]):
        if node._vjp is None or not node.parents:
            continue
        if not np.any(node.adjoint):
            continue
        contributions = node._vjp(node.adjoint)
        for parent, contribution in zip(node.parents, contributions):
            parent.adjoint = parent.adjoint + np.asarray(contribution, dtype=np.float64).reshape(parent.shape)

    return {node.id: node.adjoint for node in tape.nodes}


def finite_diff_gradient(f: Callable[[np.ndarray], float], s: ArrayLike, h: float = 1e-5) -> np.ndarray:
    """ Central differences (f(s + h e_i) - f(s - h e_i)) / 2h, for any array shape """
    x = np.array(s, dtype=np.float64)
    grad = np.zeros_like(x)
    for i in range(x.size):
        step = np.zeros_like(x)
        step.flat[i] = h
        grad.flat[i] = (float(f(x + step)) - float(f(x - step))) / (2.0 * h)
    return grad


def relative_error(a: ArrayLike, b: ArrayLike, floor: float = 1e-2) -> float:
    """ ||a - b|| / max(||a||, ||b||, floor); the floor turns it into an absolute error near zero """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    scale = max(float(np.linalg.norm(a)), float(np.linalg.norm(b)), floor)
    return float(np.linalg.norm(a - b)) / scale


def gradient(fn: Callable[[Value], Value], x: ArrayLike) -> tuple[float, np.ndarray]:
    """ Value and gradient of a scalar tape function of one array argument """
    tape = Tape()
    leaf = tape.leaf(x)
    out = fn(leaf)
    grads = backward(tape, out)
    return float(out.data), grads[leaf.id]
