"""Dense-matrix math with reverse-mode differentiation.

Matrices are immutable float64 values. A Tape records every primitive
operation whose inputs are tracked; replaying the records backward yields
gradients for the registered trainable parameters. Tapes are rebuilt per
forward pass (define-by-run) and are single-owner during a pass;
independent tapes may run concurrently.
"""

from __future__ import annotations

import contextlib
import math
from typing import Callable, Sequence

import numpy as np

from .errors import ContractError, DegenerateVectorError, ShapeError

# Scale applied inside sigmoid's backward rule. Test-only hook used by the
# gradcheck negative control; always 1.0 in normal operation.
_SIGMOID_VJP_SCALE = 1.0


@contextlib.contextmanager
def corrupted_sigmoid_backward(scale=1.01):
    """Deliberately break sigmoid's backward rule within the context (test-only)."""
    global _SIGMOID_VJP_SCALE
    _SIGMOID_VJP_SCALE = scale
    try:
        yield
    finally:
        _SIGMOID_VJP_SCALE = 1.0


class Matrix:
    """Immutable dense 2-D array of float64 scalars, row-major.

    A Matrix optionally belongs to a Tape; operations record themselves on
    the tape when any operand is tracked.
    """

    __slots__ = ("array", "tape")

    def __init__(self, data, tape: "Tape | None" = None):
        arr = np.array(data, dtype=np.float64, copy=True)
        if arr.ndim != 2:
            raise ShapeError(f"Matrix must be 2-D, got ndim={arr.ndim}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ShapeError(f"Matrix dimensions must be positive, got {arr.shape}")
        arr.setflags(write=False)
        self.array = arr
        self.tape = tape

    @property
    def rows(self) -> int:
        return self.array.shape[0]

    @property
    def cols(self) -> int:
        return self.array.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.array.shape

    def item(self) -> float:
        if self.shape != (1, 1):
            raise ShapeError(f"item() requires a 1x1 matrix, got {self.shape}")
        return float(self.array[0, 0])

    def tolist(self):
        return self.array.tolist()

    def __repr__(self):
        tag = " tracked" if self.tape is not None else ""
        return f"Matrix({self.rows}x{self.cols}{tag})"

    # Operator sugar delegates to the module-level primitives.
    def __matmul__(self, other):
        return matmul(self, other)

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, float(other))
        return hadamard(self, other)

    def __rmul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, float(other))
        return NotImplemented

    def __neg__(self):
        return scale(self, -1.0)

    @staticmethod
    def zeros(rows, cols):
        return Matrix(np.zeros((rows, cols)))

    @staticmethod
    def ones(rows, cols):
        return Matrix(np.ones((rows, cols)))

    @staticmethod
    def identity(n):
        return Matrix(np.eye(n))


class Tape:
    """Record of primitive operations plus a registry of trainable parameters.

    Gradients accumulate across backward() calls until zero_gradients() is
    called; parameters never reached by a loss report exactly-zero gradients.
    """

    def __init__(self):
        self._nodes: list[tuple[Matrix, list[tuple[Matrix, Callable]]]] = []
        self._params: dict[str, Matrix] = {}
        self._grads: dict[int, np.ndarray] = {}

    def parameter(self, data, name: str) -> Matrix:
        """Register a trainable matrix under a unique name."""
        if name in self._params:
            raise ContractError(f"parameter {name!r} already registered on this tape")
        mat = Matrix(data, tape=self)
        self._params[name] = mat
        return mat

    @property
    def parameters(self) -> dict[str, Matrix]:
        return dict(self._params)

    def _record(self, out: Matrix, pulls: list[tuple[Matrix, Callable]]):
        self._nodes.append((out, pulls))

    def backward(self, loss: Matrix) -> dict[str, Matrix]:
        """Propagate d(loss)/d(param) for every registered parameter.

        Repeated calls accumulate into the stored gradients.
        """
        if loss.shape != (1, 1):
            raise ContractError(f"loss must be a 1x1 scalar node, got shape {loss.shape}")
        if loss.tape is not self:
            raise ContractError("loss was not produced through operations on this tape")
        flowing: dict[int, np.ndarray] = {id(loss): np.ones((1, 1))}
        for out, pulls in reversed(self._nodes):
            g = flowing.get(id(out))
            if g is None:
                continue
            for inp, vjp in pulls:
                contrib = vjp(g)
                key = id(inp)
                if key in flowing:
                    flowing[key] = flowing[key] + contrib
                else:
                    flowing[key] = contrib
        for name, param in self._params.items():
            contrib = flowing.get(id(param))
            if contrib is None:
                continue
            key = id(param)
            if key in self._grads:
                self._grads[key] = self._grads[key] + contrib
            else:
                self._grads[key] = contrib.copy()
        return self.gradients()

    def gradient(self, param: Matrix) -> Matrix:
        g = self._grads.get(id(param))
        if g is None:
            return Matrix(np.zeros(param.shape))
        return Matrix(g)

    def gradients(self) -> dict[str, Matrix]:
        return {name: self.gradient(p) for name, p in self._params.items()}

    def zero_gradients(self):
        self._grads.clear()


def _result_tape(*mats: Matrix) -> Tape | None:
    tape = None
    for m in mats:
        if m.tape is None:
            continue
        if tape is None:
            tape = m.tape
        elif tape is not m.tape:
            raise ContractError("operands belong to different tapes")
    return tape


def _make(out_array, pulls, tape: Tape | None) -> Matrix:
    out = Matrix(out_array, tape=tape)
    if tape is not None:
        tracked = [(inp, vjp) for inp, vjp in pulls if inp.tape is tape]
        tape._record(out, tracked)
    return out


def _as_matrix(x) -> Matrix:
    return x if isinstance(x, Matrix) else Matrix(x)


# ---------------------------------------------------------------------------
# Primitive operations
# ---------------------------------------------------------------------------

def matmul(a: Matrix, b: Matrix) -> Matrix:
    """Standard matrix product a @ b."""
    a, b = _as_matrix(a), _as_matrix(b)
    if a.cols != b.rows:
        raise ShapeError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
    tape = _result_tape(a, b)
    out = a.array @ b.array
    pulls = [
        (a, lambda g, B=b.array: g @ B.T),
        (b, lambda g, A=a.array: A.T @ g),
    ]
    return _make(out, pulls, tape)


def hadamard(a: Matrix, b: Matrix) -> Matrix:
    """Entry-wise product of two equal-shape matrices."""
    a, b = _as_matrix(a), _as_matrix(b)
    if a.shape != b.shape:
        raise ShapeError(f"hadamard shape mismatch: {a.shape} vs {b.shape}")
    tape = _result_tape(a, b)
    pulls = [
        (a, lambda g, B=b.array: g * B),
        (b, lambda g, A=a.array: g * A),
    ]
    return _make(a.array * b.array, pulls, tape)


def add(a: Matrix, b: Matrix) -> Matrix:
    a, b = _as_matrix(a), _as_matrix(b)
    if a.shape != b.shape:
        raise ShapeError(f"add shape mismatch: {a.shape} vs {b.shape}")
    tape = _result_tape(a, b)
    pulls = [(a, lambda g: g), (b, lambda g: g)]
    return _make(a.array + b.array, pulls, tape)


def sub(a: Matrix, b: Matrix) -> Matrix:
    a, b = _as_matrix(a), _as_matrix(b)
    if a.shape != b.shape:
        raise ShapeError(f"sub shape mismatch: {a.shape} vs {b.shape}")
    tape = _result_tape(a, b)
    pulls = [(a, lambda g: g), (b, lambda g: -g)]
    return _make(a.array - b.array, pulls, tape)


def scale(a: Matrix, s: float) -> Matrix:
    """Multiply every entry by the scalar constant s."""
    a = _as_matrix(a)
    s = float(s)
    return _make(a.array * s, [(a, lambda g: g * s)], a.tape)


def add_scalar(a: Matrix, s: float) -> Matrix:
    """Add the scalar constant s to every entry."""
    a = _as_matrix(a)
    return _make(a.array + float(s), [(a, lambda g: g)], a.tape)


def add_rowvec(a: Matrix, row: Matrix) -> Matrix:
    """Add a 1xD row vector to every row of a (explicit row broadcast)."""
    a, row = _as_matrix(a), _as_matrix(row)
    if row.rows != 1 or row.cols != a.cols:
        raise ShapeError(f"add_rowvec needs a 1x{a.cols} row, got {row.shape}")
    tape = _result_tape(a, row)
    pulls = [
        (a, lambda g: g),
        (row, lambda g: g.sum(axis=0, keepdims=True)),
    ]
    return _make(a.array + row.array, pulls, tape)


def transpose(a: Matrix) -> Matrix:
    a = _as_matrix(a)
    return _make(a.array.T, [(a, lambda g: g.T)], a.tape)


def sigmoid(a: Matrix) -> Matrix:
    """Entry-wise logistic function, numerically stable for large |x|."""
    a = _as_matrix(a)
    x = a.array
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)

    def pull(g, y=out):
        return g * y * (1.0 - y) * _SIGMOID_VJP_SCALE

    return _make(out, [(a, pull)], a.tape)


def tanh(a: Matrix) -> Matrix:
    a = _as_matrix(a)
    out = np.tanh(a.array)
    return _make(out, [(a, lambda g, y=out: g * (1.0 - y * y))], a.tape)


def softmax_rows(a: Matrix) -> Matrix:
    """Row-wise softmax with max-subtraction for stability."""
    a = _as_matrix(a)
    shifted = a.array - a.array.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=1, keepdims=True)

    def pull(g, y=out):
        return y * (g - (g * y).sum(axis=1, keepdims=True))

    return _make(out, [(a, pull)], a.tape)


def logsumexp_rows(a: Matrix) -> Matrix:
    """Per-row log(sum(exp(.))) as an Nx1 column, max-shifted for stability."""
    a = _as_matrix(a)
    m = a.array.max(axis=1, keepdims=True)
    e = np.exp(a.array - m)
    s = e.sum(axis=1, keepdims=True)
    out = m + np.log(s)

    def pull(g, w=e / s):
        return g * w

    return _make(out, [(a, pull)], a.tape)


def take_diag(a: Matrix) -> Matrix:
    """Diagonal of a square matrix as an Nx1 column."""
    a = _as_matrix(a)
    if a.rows != a.cols:
        raise ShapeError(f"take_diag requires a square matrix, got {a.shape}")
    out = np.diag(a.array).reshape(-1, 1)

    def pull(g, n=a.rows):
        return np.diag(g[:, 0]) if n > 1 else g.reshape(1, 1)

    return _make(out, [(a, pull)], a.tape)


def sum_entries(a: Matrix) -> Matrix:
    """Sum of all entries, as a 1x1 scalar node."""
    a = _as_matrix(a)
    out = np.array([[a.array.sum()]])
    return _make(out, [(a, lambda g, s=a.shape: np.full(s, g[0, 0]))], a.tape)


def mean_entries(a: Matrix) -> Matrix:
    """Mean of all entries, as a 1x1 scalar node."""
    a = _as_matrix(a)
    n = a.array.size
    out = np.array([[a.array.mean()]])
    return _make(out, [(a, lambda g, s=a.shape: np.full(s, g[0, 0] / n))], a.tape)


def mean_rows(a: Matrix) -> Matrix:
    """Arithmetic mean over rows, returning a 1xD row."""
    a = _as_matrix(a)
    n = a.rows
    out = a.array.mean(axis=0, keepdims=True)
    return _make(out, [(a, lambda g: np.repeat(g, n, axis=0) / n)], a.tape)


def tile_rows(row: Matrix, n: int) -> Matrix:
    """Stack n exact copies of a 1xD row."""
    row = _as_matrix(row)
    if row.rows != 1:
        raise ShapeError(f"tile_rows requires a 1xD row, got {row.shape}")
    if n < 1:
        raise ContractError(f"tile count must be >= 1, got {n}")
    out = np.repeat(row.array, n, axis=0)
    return _make(out, [(row, lambda g: g.sum(axis=0, keepdims=True))], row.tape)


def stack_rows(rows: Sequence[Matrix]) -> Matrix:
    """Stack 1xD rows into a len(rows) x D matrix."""
    rows = [_as_matrix(r) for r in rows]
    if not rows:
        raise ContractError("stack_rows needs at least one row")
    d = rows[0].cols
    for r in rows:
        if r.rows != 1 or r.cols != d:
            raise ShapeError(f"stack_rows expects 1x{d} rows, got {r.shape}")
    tape = _result_tape(*rows)
    out = np.vstack([r.array for r in rows])
    pulls = [(r, lambda g, i=i: g[i : i + 1, :]) for i, r in enumerate(rows)]
    return _make(out, pulls, tape)


def gather_rows(table: Matrix, indices: Sequence[int]) -> Matrix:
    """Select rows of a table by index (embedding lookup)."""
    table = _as_matrix(table)
    idx = [int(i) for i in indices]
    if not idx:
        raise ContractError("gather_rows needs at least one index")
    for i in idx:
        if not 0 <= i < table.rows:
            raise ContractError(f"row index {i} out of range [0, {table.rows})")
    out = table.array[idx, :]

    def pull(g, shape=table.shape, idx=tuple(idx)):
        acc = np.zeros(shape)
        np.add.at(acc, list(idx), g)
        return acc

    return _make(out, [(table, pull)], table.tape)


def normalize_rows(a: Matrix) -> Matrix:
    """Scale each row to unit Euclidean norm."""
    a = _as_matrix(a)
    norms = np.linalg.norm(a.array, axis=1, keepdims=True)
    if np.any(norms < 1e-300):
        bad = int(np.argmin(norms))
        raise DegenerateVectorError(f"row {bad} has zero norm and cannot be normalized")
    out = a.array / norms

    def pull(g, y=out, r=norms):
        return (g - y * (g * y).sum(axis=1, keepdims=True)) / r

    return _make(out, [(a, pull)], a.tape)


def cosine_sim(u: Matrix, v: Matrix) -> Matrix:
    """Cosine similarity of two 1xD rows, as a 1x1 scalar node in [-1, 1]."""
    u, v = _as_matrix(u), _as_matrix(v)
    if u.rows != 1 or v.rows != 1:
        raise ShapeError(f"cosine_sim expects 1xD rows, got {u.shape} and {v.shape}")
    if u.cols != v.cols:
        raise ShapeError(f"cosine_sim length mismatch: {u.shape} vs {v.shape}")
    return matmul(normalize_rows(u), transpose(normalize_rows(v)))


def backward(loss: Matrix, tape: Tape) -> dict[str, Matrix]:
    """Function form of Tape.backward for callers that prefer it."""
    return tape.backward(loss)


def finite_diff_grad(f: Callable[[Matrix], float], x: Matrix, step: float = 1e-4) -> Matrix:
    """Central-difference gradient estimate of a scalar-valued f at x."""
    if step <= 0:
        raise ContractError(f"step must be positive, got {step}")
    x = _as_matrix(x)
    base = x.array
    grad = np.zeros_like(base)
    for i in range(base.shape[0]):
        for j in range(base.shape[1]):
            bumped = base.copy()
            bumped[i, j] = base[i, j] + step
            f_plus = float(f(Matrix(bumped)))
            bumped[i, j] = base[i, j] - step
            f_minus = float(f(Matrix(bumped)))
            grad[i, j] = (f_plus - f_minus) / (2.0 * step)
    return Matrix(grad)


def relative_error(a: np.ndarray, b: np.ndarray, floor: float = 1e-6) -> float:
    """Max entry-wise |a-b| / max(|a|, |b|, floor); the gradcheck criterion."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    if a.size == 0:
        return 0.0
    return float(np.max(np.abs(a - b) / denom))


def is_finite(a: Matrix) -> bool:
    return bool(np.all(np.isfinite(a.array)))
