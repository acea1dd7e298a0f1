"""Dense 64-bit matrices and a reverse-mode gradient tape.

The tape records a fixed set of primitives (matmul, add, elementwise maps,
row softmax, reductions) while a ``GradTape`` is active; replaying the
record backwards yields gradients for any recorded matrix.  Matrices are
immutable values, so they can be shared freely between tapes and threads.
"""

from __future__ import annotations

import threading
from typing import Callable, Sequence

import numpy as np

from .errors import EvaluationError, InvalidShapeError

_LOCAL = threading.local()


def _tape_stack() -> list["GradTape"]:
    stack = getattr(_LOCAL, "stack", None)
    if stack is None:
        stack = []
        _LOCAL.stack = stack
    return stack


def _active_tape() -> "GradTape | None":
    stack = _tape_stack()
    return stack[-1] if stack else None


class Matrix:
    """Immutable 2-D float64 array with finite entries."""

    __slots__ = ("data",)

    def __init__(self, data):
        arr = np.array(data, dtype=np.float64)
        if arr.ndim == 1:
            arr = arr.reshape(1, -1)
        if arr.ndim != 2:
            raise InvalidShapeError(f"expected 2-D data, got ndim={arr.ndim}")
        if not np.all(np.isfinite(arr)):
            raise EvaluationError("matrix entries must be finite")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def cols(self) -> int:
        return self.data.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    def item(self) -> float:
        if self.data.shape != (1, 1):
            raise InvalidShapeError(f"item() needs a 1x1 matrix, got {self.data.shape}")
        return float(self.data[0, 0])

    def __repr__(self) -> str:
        return f"Matrix({self.rows}x{self.cols})"


class _Record:
    """One primitive application: output node, input nodes, and a vjp."""

    __slots__ = ("out", "inputs", "vjp")

    def __init__(self, out: Matrix, inputs: tuple[Matrix, ...],
                 vjp: Callable[[np.ndarray], tuple]):
        self.out = out
        self.inputs = inputs
        self.vjp = vjp


class GradTape:
    """Ordered record of primitive ops, replayed backwards for gradients.

    Use as a context manager around the forward computation::

        with GradTape() as tape:
            loss = sum_all(mul(x, x))
        (dx,) = tape.gradients(loss, [x])

    A tape is single-threaded; distinct tapes may run concurrently on
    distinct threads.  Parameters never touched by the recorded ops get
    exactly-zero gradients.
    """

    def __init__(self):
        self._records: list[_Record] = []

    def __enter__(self) -> "GradTape":
        _tape_stack().append(self)
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        popped = _tape_stack().pop()
        assert popped is self

    def _record(self, out: Matrix, inputs: tuple[Matrix, ...], vjp) -> None:
        self._records.append(_Record(out, inputs, vjp))

    def gradients(self, loss: Matrix, params: Sequence[Matrix]) -> list[np.ndarray]:
        """Gradients of a 1x1 ``loss`` with respect to each matrix in ``params``."""
        if loss.shape != (1, 1):
            raise InvalidShapeError(f"loss must be 1x1, got {loss.shape}")
        if not np.isfinite(loss.data[0, 0]):
            raise EvaluationError("loss is not finite")
        adjoint: dict[int, np.ndarray] = {id(loss): np.ones((1, 1))}
        for rec in reversed(self._records):
            grad_out = adjoint.pop(id(rec.out), None)
            if grad_out is None:
                continue
            for node, grad_in in zip(rec.inputs, rec.vjp(grad_out)):
                if grad_in is None:
                    continue
                acc = adjoint.get(id(node))
                adjoint[id(node)] = grad_in if acc is None else acc + grad_in
        return [adjoint.get(id(p), np.zeros_like(p.data)) for p in params]


def _emit(out_data: np.ndarray, inputs: tuple[Matrix, ...], vjp) -> Matrix:
    out = Matrix(out_data)
    tape = _active_tape()
    if tape is not None:
        tape._record(out, inputs, vjp)
    return out


# ---------------------------------------------------------------------------
# Primitives
# ---------------------------------------------------------------------------

def matmul(a: Matrix, b: Matrix) -> Matrix:
    """Standard matrix product; recorded on the active tape."""
    if a.cols != b.rows:
        raise InvalidShapeError(f"matmul: {a.shape} x {b.shape}")
    return _emit(a.data @ b.data, (a, b),
                 lambda g: (g @ b.data.T, a.data.T @ g))


def add(a: Matrix, b: Matrix) -> Matrix:
    """Elementwise sum; ``b`` may be a 1-row matrix broadcast over rows."""
    if a.shape == b.shape:
        return _emit(a.data + b.data, (a, b), lambda g: (g, g))
    if b.rows == 1 and b.cols == a.cols:
        return _emit(a.data + b.data, (a, b),
                     lambda g: (g, g.sum(axis=0, keepdims=True)))
    raise InvalidShapeError(f"add: {a.shape} + {b.shape}")


def sub(a: Matrix, b: Matrix) -> Matrix:
    if a.shape != b.shape:
        raise InvalidShapeError(f"sub: {a.shape} - {b.shape}")
    return _emit(a.data - b.data, (a, b), lambda g: (g, -g))


def mul(a: Matrix, b: Matrix) -> Matrix:
    """Hadamard product of same-shape matrices."""
    if a.shape != b.shape:
        raise InvalidShapeError(f"mul: {a.shape} * {b.shape}")
    return _emit(a.data * b.data, (a, b),
                 lambda g: (g * b.data, g * a.data))


def scale(a: Matrix, c: float) -> Matrix:
    c = float(c)
    return _emit(a.data * c, (a,), lambda g: (g * c,))


def tanh(a: Matrix) -> Matrix:
    y = np.tanh(a.data)
    return _emit(y, (a,), lambda g: (g * (1.0 - y * y),))


def exp(a: Matrix) -> Matrix:
    with np.errstate(over="ignore"):
        y = np.exp(a.data)
    if not np.all(np.isfinite(y)):
        raise EvaluationError("exp overflow")
    return _emit(y, (a,), lambda g: (g * y,))


def log(a: Matrix) -> Matrix:
    if np.any(a.data <= 0.0):
        raise EvaluationError("log of non-positive entry")
    return _emit(np.log(a.data), (a,), lambda g: (g / a.data,))


def log_softmax_rows(a: Matrix) -> Matrix:
    """Row-wise log softmax, computed with max subtraction for stability.

    Each output row exponentiates to a distribution summing to 1 within
    1e-12.
    """
    shifted = a.data - a.data.max(axis=1, keepdims=True)
    logz = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    y = shifted - logz
    return _emit(y, (a,),
                 lambda g: (g - np.exp(y) * g.sum(axis=1, keepdims=True),))


def sum_all(a: Matrix) -> Matrix:
    """Sum of all entries, as a 1x1 matrix."""
    return _emit(np.array([[a.data.sum()]]), (a,),
                 lambda g: (np.full(a.shape, g[0, 0]),))


def transpose(a: Matrix) -> Matrix:
    return _emit(a.data.T.copy(), (a,), lambda g: (g.T,))


def take_rows(a: Matrix, indices: Sequence[int]) -> Matrix:
    """Gather rows of ``a`` by index (embedding-style lookup)."""
    idx = np.asarray(indices, dtype=np.intp)
    if idx.ndim != 1 or (idx.size and (idx.min() < 0 or idx.max() >= a.rows)):
        raise InvalidShapeError(f"take_rows: bad indices for {a.shape}")

    def vjp(g):
        acc = np.zeros(a.shape)
        np.add.at(acc, idx, g)
        return (acc,)

    return _emit(a.data[idx], (a,), vjp)


def external_scalar(value: float, grads: Sequence[tuple[Matrix, np.ndarray]]) -> Matrix:
    """Inject a scalar computed outside the tape with known gradients.

    ``grads`` pairs each upstream matrix with d(value)/d(matrix); used for
    losses whose gradients come from a dynamic program rather than the
    primitive set.
    """
    value = float(value)
    if not np.isfinite(value):
        raise EvaluationError("external scalar is not finite")
    pairs = []
    for node, g in grads:
        g = np.asarray(g, dtype=np.float64)
        if g.shape != node.shape:
            raise InvalidShapeError(f"external gradient {g.shape} vs {node.shape}")
        pairs.append((node, g))
    inputs = tuple(node for node, _ in pairs)
    fixed = tuple(g for _, g in pairs)
    return _emit(np.array([[value]]), inputs,
                 lambda g: tuple(g[0, 0] * gi for gi in fixed))


# ---------------------------------------------------------------------------
# Initialization and verification helpers
# ---------------------------------------------------------------------------

def uniform_init(rng: np.random.Generator, rows: int, cols: int, fan_in: int) -> Matrix:
    """Uniform [-s, s] initialization with s = 1/sqrt(fan_in)."""
    s = 1.0 / np.sqrt(float(fan_in))
    return Matrix(rng.uniform(-s, s, size=(rows, cols)))


def grad_check(f: Callable[[list[Matrix]], Matrix], params: Sequence[Matrix],
               eps: float = 1e-5) -> float:
    """Max relative error between tape gradients and central differences.

    ``f`` must be a pure scalar-valued function of the given parameter
    list.  The analytic pass runs under a fresh tape; the numeric pass
    perturbs one coordinate at a time.  Error for a coordinate is
    |analytic - central| / max(1, |central|).
    """
    if not (0.0 < eps <= 1e-2):
        raise ValueError(f"eps must be in (0, 1e-2], got {eps}")
    params = list(params)
    with GradTape() as tape:
        out = f(params)
    if out.shape != (1, 1):
        raise InvalidShapeError("grad_check target must be scalar (1x1)")
    if not np.isfinite(out.data[0, 0]):
        raise EvaluationError("grad_check: loss is not finite")
    analytic = tape.gradients(out, params)

    def value_at(ps: list[Matrix]) -> float:
        v = f(ps).item()
        if not np.isfinite(v):
            raise EvaluationError("grad_check: perturbed loss is not finite")
        return v

    worst = 0.0
    for k, p in enumerate(params):
        base = p.data
        for i in range(p.rows):
            for j in range(p.cols):
                bumped = base.copy()
                bumped[i, j] = base[i, j] + eps
                plus = value_at(params[:k] + [Matrix(bumped)] + params[k + 1:])
                bumped[i, j] = base[i, j] - eps
                minus = value_at(params[:k] + [Matrix(bumped)] + params[k + 1:])
                central = (plus - minus) / (2.0 * eps)
                err = abs(analytic[k][i, j] - central) / max(1.0, abs(central))
                worst = max(worst, err)
    return worst
