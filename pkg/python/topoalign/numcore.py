##########################################################################
# Copyright (c) 2024 TopoAlign developers                                #
# This program is free software under the terms of the MIT license.      #
##########################################################################
#
# This module provides the dense numeric kernel of the package: the
# class Matrix, a reverse-mode differentiation tape, a parameter store
# with Adam optimizer state and a finite-difference gradient verifier.
#
# All values are two-dimensional 64-bit float arrays. Vectors are 1 x n
# matrices and scalars are 1 x 1 matrices. Every primitive operation
# checks its result for non-finite entries.
#
# Operations executed while a Tape is active are recorded on it:
#
#     with Tape() as tape:
#         loss = sum(tanh(matmul(x, params["w"])))
#     backward(loss, tape, params)
#
# Outside of an active tape, operations run on plain numpy and record
# nothing. This is the inference path.
#
##########################################################################

import contextlib
import threading
import typing
from dataclasses import dataclass, field

import numpy as np
from loguru import logger

from .errors import (
    InvalidConfig,
    InvalidInput,
    NondeterminismError,
    NumericError,
    ShapeError,
)

DTYPE = np.float64


##########################################################################
# Matrix class


class Matrix:
    """Dense two-dimensional 64-bit float matrix."""

    __slots__ = ("data", "name")

    def __init__(self, data, name: str = None):
        data = np.array(data, dtype=DTYPE)
        if data.ndim == 0:
            data = data.reshape(1, 1)
        elif data.ndim == 1:
            data = data.reshape(1, -1)
        elif data.ndim != 2:
            raise ShapeError("Matrix data must have at most two axes!")
        _check_finite(data, "Matrix")
        self.data = data
        self.name = name

    @classmethod
    def _wrap(cls, data: np.ndarray, op: str) -> "Matrix":
        """Wrap an op result without copying it."""
        _check_finite(data, op)
        obj = cls.__new__(cls)
        obj.data = data
        obj.name = None
        return obj

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def cols(self) -> int:
        return self.data.shape[1]

    @property
    def shape(self) -> typing.Tuple[int, int]:
        return self.data.shape

    def item(self) -> float:
        """Return the value of a 1 x 1 matrix as float."""
        if self.data.shape != (1, 1):
            raise ShapeError("Matrix of shape %s is no scalar!"
                             % (self.shape,))
        return float(self.data[0, 0])

    def flatten(self) -> "Matrix":
        """Return the row-major 1 x (rows*cols) form of this matrix."""
        return reshape(self, 1, self.rows * self.cols)

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __matmul__(self, other):
        return matmul(self, other)

    def __neg__(self):
        return scale(self, -1.0)

    def __repr__(self):
        return "Matrix(%d x %d%s)" % (
            self.rows,
            self.cols,
            ", name=%r" % self.name if self.name else "",
        )


def _check_finite(data: np.ndarray, op: str):
    if not np.isfinite(data).all():
        raise NumericError("Non-finite value produced by %s!" % op)


def as_matrix(value) -> Matrix:
    """Return value as Matrix. Non-Matrix values become constants."""
    if isinstance(value, Matrix):
        return value
    return Matrix(value)


def detach(value: Matrix) -> Matrix:
    """Return a copy of value which is not linked to any tape."""
    return Matrix(as_matrix(value).data)


##########################################################################
# Differentiation tape

_local = threading.local()


def _tape_stack() -> list:
    stack = getattr(_local, "tapes", None)
    if stack is None:
        stack = _local.tapes = []
    return stack


def active_tape() -> typing.Optional["Tape"]:
    """Return the innermost active tape of this thread or None."""
    stack = _tape_stack()
    return stack[-1] if stack else None


@dataclass
class _Op:
    name: str
    output: Matrix
    inputs: tuple
    backward: typing.Callable


class Tape:
    """Ordered record of the primitive operations of one forward pass.

    The tape is activated as context manager. Tapes nest per thread; only
    the innermost one records.
    """

    def __init__(self):
        self.ops: typing.List[_Op] = []

    def __enter__(self) -> "Tape":
        _tape_stack().append(self)
        return self

    def __exit__(self, *exc):
        stack = _tape_stack()
        if stack and stack[-1] is self:
            stack.pop()
        return False

    def __len__(self):
        return len(self.ops)

    def record(self, name, output, inputs, backward):
        self.ops.append(_Op(name, output, tuple(inputs), backward))


@contextlib.contextmanager
def no_tape():
    """Suspend recording of the active tape, e.g. for inference or for
    detached reference encodings inside a training pass."""
    stack = _tape_stack()
    stack.append(None)
    try:
        yield
    finally:
        stack.pop()


def _record(name: str, output: Matrix, inputs, backward) -> Matrix:
    tape = active_tape()
    if tape is not None:
        tape.record(name, output, inputs, backward)
    return output


def backward(loss: Matrix, tape: Tape, params: "ParamStore") -> dict:
    """Propagate the gradient of a scalar loss back through a tape.

    The gradients are accumulated into the gradient buffers of the
    parameter store, which supports gradient accumulation over several
    forward passes. Parameters which do not contribute to the loss
    receive a zero gradient.

    Args:
        loss: 1 x 1 matrix recorded on the tape.
        tape: Tape of the forward pass.
        params: Parameter store holding the leaf matrices.

    Returns:
        dict: Gradient of this pass for every parameter name.
    """
    if loss.shape != (1, 1):
        raise InvalidInput(
            "Backward pass requires a scalar loss, got shape %s!"
            % (loss.shape,)
        )

    grads = {id(loss): np.ones((1, 1), dtype=DTYPE)}
    for op in reversed(tape.ops):
        g = grads.pop(id(op.output), None)
        if g is None:
            continue
        for inp, gi in zip(op.inputs, op.backward(g)):
            if gi is None:
                continue
            key = id(inp)
            if key in grads:
                grads[key] = grads[key] + gi
            else:
                grads[key] = gi

    result = {}
    for name, p in params.items():
        g = grads.get(id(p))
        if g is None:
            g = np.zeros_like(p.data)
        result[name] = g
    params.accumulate(result)
    return result


##########################################################################
# Primitive operations


def _broadcast_shape(a: Matrix, b: Matrix, op: str):
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(
            "Shapes %s and %s do not match in %s!" % (a.shape, b.shape, op)
        )


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    if g.shape == shape:
        return g
    if shape[0] == 1 and g.shape[0] != 1:
        g = g.sum(axis=0, keepdims=True)
    if shape[1] == 1 and g.shape[1] != 1:
        g = g.sum(axis=1, keepdims=True)
    return g


def matmul(a, b) -> Matrix:
    a, b = as_matrix(a), as_matrix(b)
    if a.cols != b.rows:
        raise ShapeError(
            "Cannot multiply %s by %s matrix!" % (a.shape, b.shape)
        )
    out = Matrix._wrap(a.data @ b.data, "matmul")

    def grad(g):
        return g @ b.data.T, a.data.T @ g

    return _record("matmul", out, (a, b), grad)


def add(a, b) -> Matrix:
    a, b = as_matrix(a), as_matrix(b)
    _broadcast_shape(a, b, "add")
    out = Matrix._wrap(a.data + b.data, "add")

    def grad(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _record("add", out, (a, b), grad)


def sub(a, b) -> Matrix:
    a, b = as_matrix(a), as_matrix(b)
    _broadcast_shape(a, b, "sub")
    out = Matrix._wrap(a.data - b.data, "sub")

    def grad(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _record("sub", out, (a, b), grad)


def mul(a, b) -> Matrix:
    a, b = as_matrix(a), as_matrix(b)
    _broadcast_shape(a, b, "mul")
    out = Matrix._wrap(a.data * b.data, "mul")

    def grad(g):
        return (
            _unbroadcast(g * b.data, a.shape),
            _unbroadcast(g * a.data, b.shape),
        )

    return _record("mul", out, (a, b), grad)


def div(a, b) -> Matrix:
    a, b = as_matrix(a), as_matrix(b)
    _broadcast_shape(a, b, "div")
    if (b.data == 0).any():
        raise NumericError("Division by zero!")
    out = Matrix._wrap(a.data / b.data, "div")

    def grad(g):
        return (
            _unbroadcast(g / b.data, a.shape),
            _unbroadcast(-g * a.data / (b.data * b.data), b.shape),
        )

    return _record("div", out, (a, b), grad)


def scale(a, c: float) -> Matrix:
    a = as_matrix(a)
    c = float(c)
    out = Matrix._wrap(a.data * c, "scale")
    return _record("scale", out, (a,), lambda g: (g * c,))


def tanh(a) -> Matrix:
    a = as_matrix(a)
    y = np.tanh(a.data)
    out = Matrix._wrap(y, "tanh")
    return _record("tanh", out, (a,), lambda g: (g * (1.0 - y * y),))


def relu(a) -> Matrix:
    a = as_matrix(a)
    mask = a.data > 0.0
    out = Matrix._wrap(np.where(mask, a.data, 0.0), "relu")
    return _record("relu", out, (a,), lambda g: (g * mask,))


def exp(a) -> Matrix:
    a = as_matrix(a)
    with np.errstate(over="ignore"):
        y = np.exp(a.data)
    out = Matrix._wrap(y, "exp")
    return _record("exp", out, (a,), lambda g: (g * y,))


def log(a) -> Matrix:
    a = as_matrix(a)
    if (a.data <= 0).any():
        raise NumericError("Logarithm of a non-positive value!")
    out = Matrix._wrap(np.log(a.data), "log")
    return _record("log", out, (a,), lambda g: (g / a.data,))


def sqrt(a) -> Matrix:
    a = as_matrix(a)
    if (a.data < 0).any():
        raise NumericError("Square root of a negative value!")
    y = np.sqrt(a.data)
    out = Matrix._wrap(y, "sqrt")

    def grad(g):
        if (y == 0).any():
            raise NumericError("Gradient of sqrt at zero!")
        return (g * 0.5 / y,)

    return _record("sqrt", out, (a,), grad)


def clip(a, low: float, high: float) -> Matrix:
    """Clamp entries to [low, high]. Clamped entries pass no gradient."""
    a = as_matrix(a)
    mask = (a.data >= low) & (a.data <= high)
    out = Matrix._wrap(np.clip(a.data, low, high), "clip")
    return _record("clip", out, (a,), lambda g: (g * mask,))


def _softmax_rows(x: np.ndarray) -> np.ndarray:
    z = x - x.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def softmax(a) -> Matrix:
    """Row-wise softmax computed with max subtraction."""
    a = as_matrix(a)
    if a.cols == 0:
        raise InvalidInput("Softmax of an empty vector!")
    y = _softmax_rows(a.data)
    out = Matrix._wrap(y, "softmax")

    def grad(g):
        return (y * (g - (g * y).sum(axis=1, keepdims=True)),)

    return _record("softmax", out, (a,), grad)


def log_softmax(a) -> Matrix:
    """Row-wise log-softmax computed with log-sum-exp."""
    a = as_matrix(a)
    if a.cols == 0:
        raise InvalidInput("Softmax of an empty vector!")
    z = a.data - a.data.max(axis=1, keepdims=True)
    y = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    out = Matrix._wrap(y, "log_softmax")

    def grad(g):
        return (g - np.exp(y) * g.sum(axis=1, keepdims=True),)

    return _record("log_softmax", out, (a,), grad)


def sum(a) -> Matrix:  # noqa: A001 - mirrors numpy naming
    a = as_matrix(a)
    out = Matrix._wrap(a.data.sum().reshape(1, 1), "sum")
    return _record("sum", out, (a,), lambda g: (np.full(a.shape, g[0, 0]),))


def mean(a) -> Matrix:
    a = as_matrix(a)
    n = a.data.size
    out = Matrix._wrap(a.data.mean().reshape(1, 1), "mean")
    return _record(
        "mean", out, (a,), lambda g: (np.full(a.shape, g[0, 0] / n),)
    )


def sum_rows(a) -> Matrix:
    """Column sums, i.e. the 1 x cols sum over all rows."""
    a = as_matrix(a)
    out = Matrix._wrap(a.data.sum(axis=0, keepdims=True), "sum_rows")
    return _record(
        "sum_rows", out, (a,), lambda g: (np.broadcast_to(g, a.shape).copy(),)
    )


def sum_cols(a) -> Matrix:
    """Row sums, i.e. the rows x 1 sum over all columns."""
    a = as_matrix(a)
    out = Matrix._wrap(a.data.sum(axis=1, keepdims=True), "sum_cols")
    return _record(
        "sum_cols", out, (a,), lambda g: (np.broadcast_to(g, a.shape).copy(),)
    )


def reshape(a, rows: int, cols: int) -> Matrix:
    a = as_matrix(a)
    if rows * cols != a.data.size:
        raise ShapeError(
            "Cannot reshape %s matrix to %d x %d!" % (a.shape, rows, cols)
        )
    out = Matrix._wrap(a.data.reshape(rows, cols), "reshape")
    return _record("reshape", out, (a,), lambda g: (g.reshape(a.shape),))


def transpose(a) -> Matrix:
    a = as_matrix(a)
    out = Matrix._wrap(a.data.T.copy(), "transpose")
    return _record("transpose", out, (a,), lambda g: (g.T,))


def concat_rows(items: typing.Sequence) -> Matrix:
    items = [as_matrix(m) for m in items]
    if not items:
        raise InvalidInput("Nothing to concatenate!")
    cols = {m.cols for m in items}
    if len(cols) != 1:
        raise ShapeError("Row concatenation needs equal column counts!")
    out = Matrix._wrap(np.vstack([m.data for m in items]), "concat_rows")
    bounds = np.cumsum([0] + [m.rows for m in items])

    def grad(g):
        return tuple(g[bounds[i]:bounds[i + 1]] for i in range(len(items)))

    return _record("concat_rows", out, items, grad)


def slice_rows(a, start: int, stop: int) -> Matrix:
    a = as_matrix(a)
    out = Matrix._wrap(a.data[start:stop].copy(), "slice_rows")

    def grad(g):
        full = np.zeros_like(a.data)
        full[start:stop] = g
        return (full,)

    return _record("slice_rows", out, (a,), grad)


def take_rows(a, index) -> Matrix:
    """Gather rows by index, e.g. an embedding lookup."""
    a = as_matrix(a)
    index = np.asarray(index, dtype=np.int64)
    if index.size and (index.min() < 0 or index.max() >= a.rows):
        raise InvalidInput("Row index out of range!")
    out = Matrix._wrap(a.data[index], "take_rows")

    def grad(g):
        full = np.zeros_like(a.data)
        np.add.at(full, index, g)
        return (full,)

    return _record("take_rows", out, (a,), grad)


def pick(a, rows, cols) -> Matrix:
    """Gather single entries into a 1 x n matrix."""
    a = as_matrix(a)
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    out = Matrix._wrap(a.data[rows, cols].reshape(1, -1), "pick")

    def grad(g):
        full = np.zeros_like(a.data)
        np.add.at(full, (rows, cols), g.reshape(-1))
        return (full,)

    return _record("pick", out, (a,), grad)


def _frame_index(n: int, kernel: int, stride: int) -> np.ndarray:
    return np.arange(n)[:, None] * stride + np.arange(kernel)[None, :]


def conv1d(x, w, b=None, kernel: int = 3, stride: int = 1,
           padding: int = 0) -> Matrix:
    """Strided 1-D convolution over the rows (time axis) of x.

    Args:
        x: T x C_in input, one row per time frame.
        w: (kernel*C_in) x C_out weights. Row k*C_in + c holds tap k of
           input channel c.
        b: Optional 1 x C_out bias.
        kernel: Kernel width in frames.
        stride: Step between output frames.
        padding: Number of zero frames added at both ends.

    Returns:
        Matrix: T' x C_out output, T' = (T + 2*padding - kernel) // stride + 1.
    """
    x, w = as_matrix(x), as_matrix(w)
    t_in, c_in = x.shape
    if w.rows != kernel * c_in:
        raise ShapeError(
            "Convolution weight has %d rows, expected %d!"
            % (w.rows, kernel * c_in)
        )
    t_pad = t_in + 2 * padding
    t_out = (t_pad - kernel) // stride + 1
    if t_out < 1:
        raise ShapeError("Input of %d frames is too short to convolve!" % t_in)

    xp = np.zeros((t_pad, c_in), dtype=DTYPE)
    xp[padding:padding + t_in] = x.data
    index = _frame_index(t_out, kernel, stride)
    cols = xp[index].reshape(t_out, kernel * c_in)
    y = cols @ w.data
    inputs = [x, w]
    if b is not None:
        b = as_matrix(b)
        y = y + b.data
        inputs.append(b)
    out = Matrix._wrap(y, "conv1d")

    def grad(g):
        dcols = (g @ w.data.T).reshape(t_out, kernel, c_in)
        dxp = np.zeros_like(xp)
        np.add.at(dxp, index, dcols)
        grads = [dxp[padding:padding + t_in], cols.T @ g]
        if b is not None:
            grads.append(g.sum(axis=0, keepdims=True))
        return tuple(grads)

    return _record("conv1d", out, inputs, grad)


def conv_transpose1d(x, w, b=None, kernel: int = 3, stride: int = 1,
                     padding: int = 0) -> Matrix:
    """Transposed (fractionally strided) 1-D convolution over rows of x.

    Args:
        x: T x C_in input.
        w: C_in x (kernel*C_out) weights. Column k*C_out + c holds tap k of
           output channel c.
        b: Optional 1 x C_out bias.

    Returns:
        Matrix: T' x C_out output, T' = (T - 1)*stride + kernel - 2*padding.
    """
    x, w = as_matrix(x), as_matrix(w)
    t_in, c_in = x.shape
    if w.rows != c_in or w.cols % kernel:
        raise ShapeError(
            "Transposed convolution weight of shape %s does not fit %d "
            "input channels!" % (w.shape, c_in)
        )
    c_out = w.cols // kernel
    t_full = (t_in - 1) * stride + kernel
    t_out = t_full - 2 * padding
    if t_out < 1:
        raise ShapeError("Padding exceeds transposed convolution output!")

    index = _frame_index(t_in, kernel, stride)
    taps = (x.data @ w.data).reshape(t_in, kernel, c_out)
    full = np.zeros((t_full, c_out), dtype=DTYPE)
    np.add.at(full, index, taps)
    y = full[padding:padding + t_out]
    inputs = [x, w]
    if b is not None:
        b = as_matrix(b)
        y = y + b.data
        inputs.append(b)
    out = Matrix._wrap(y, "conv_transpose1d")

    def grad(g):
        gfull = np.zeros((t_full, c_out), dtype=DTYPE)
        gfull[padding:padding + t_out] = g
        gtaps = gfull[index].reshape(t_in, kernel * c_out)
        grads = [gtaps @ w.data.T, x.data.T @ gtaps]
        if b is not None:
            grads.append(g.sum(axis=0, keepdims=True))
        return tuple(grads)

    return _record("conv_transpose1d", out, inputs, grad)


def rnn_tanh(xs, h0, w) -> Matrix:
    """Elman recurrence h_t = tanh(xs_t + h_{t-1} w) over the rows of xs.

    Args:
        xs: L x H input pre-activations.
        h0: 1 x H initial state.
        w: H x H recurrent weights.

    Returns:
        Matrix: L x H hidden states.
    """
    xs, h0, w = as_matrix(xs), as_matrix(h0), as_matrix(w)
    steps, hidden = xs.shape
    if h0.shape != (1, hidden) or w.shape != (hidden, hidden):
        raise ShapeError("Recurrence shapes do not match!")
    hs = np.empty((steps, hidden), dtype=DTYPE)
    h = h0.data
    for t in range(steps):
        h = np.tanh(xs.data[t:t + 1] + h @ w.data)
        hs[t] = h[0]
    out = Matrix._wrap(hs, "rnn_tanh")

    def grad(g):
        dxs = np.zeros_like(xs.data)
        dw = np.zeros_like(w.data)
        dh = np.zeros((1, hidden), dtype=DTYPE)
        for t in range(steps - 1, -1, -1):
            da = (g[t:t + 1] + dh) * (1.0 - hs[t:t + 1] ** 2)
            dxs[t] = da[0]
            prev = hs[t - 1:t] if t > 0 else h0.data
            dw += prev.T @ da
            dh = da @ w.data.T
        return dxs, dh, dw

    return _record("rnn_tanh", out, (xs, h0, w), grad)


##########################################################################
# Composite operations


def dot(a, b) -> Matrix:
    """Inner product of two equally shaped matrices."""
    return sum(mul(a, b))


def sqdist(a, b) -> Matrix:
    """Squared Euclidean distance of two equally shaped matrices."""
    a, b = as_matrix(a), as_matrix(b)
    if a.shape != b.shape:
        raise ShapeError(
            "Shapes %s and %s differ in squared distance!" % (a.shape, b.shape)
        )
    d = sub(a, b)
    return sum(mul(d, d))


def norm(a) -> Matrix:
    """Frobenius norm as 1 x 1 matrix."""
    return sqrt(dot(a, a))


##########################################################################
# Parameter store and optimizer


class ParamStore:
    """Named parameter matrices with gradient buffers and Adam state."""

    def __init__(self):
        self._params: typing.Dict[str, Matrix] = {}
        self.grads: typing.Dict[str, np.ndarray] = {}
        self._m: typing.Dict[str, np.ndarray] = {}
        self._v: typing.Dict[str, np.ndarray] = {}
        self.step_count = 0

    def add(self, name: str, data) -> Matrix:
        """Register a new parameter and return its matrix."""
        if name in self._params:
            raise InvalidInput("Parameter '%s' exists already!" % name)
        p = Matrix(data, name=name)
        self._params[name] = p
        self.grads[name] = np.zeros_like(p.data)
        self._m[name] = np.zeros_like(p.data)
        self._v[name] = np.zeros_like(p.data)
        return p

    def __getitem__(self, name: str) -> Matrix:
        try:
            return self._params[name]
        except KeyError:
            raise KeyError("Unknown parameter '%s'!" % name)

    def __contains__(self, name):
        return name in self._params

    def __iter__(self):
        return iter(self._params)

    def __len__(self):
        return len(self._params)

    def keys(self) -> typing.List[str]:
        return list(self._params)

    def items(self):
        return self._params.items()

    def accumulate(self, grads: dict):
        """Add the gradients of one backward pass to the gradient
        buffers."""
        for name, g in grads.items():
            self.grads[name] += g

    def zero_grad(self):
        for g in self.grads.values():
            g.fill(0.0)

    def l2(self) -> float:
        """Return the regularizer value 1/2 * sum of squared parameters."""
        return 0.5 * float(
            np.sum([np.sum(p.data * p.data) for p in self._params.values()])
        )

    def subset(self, prefix: typing.Union[str, tuple]) -> "ParamStore":
        """Return a store sharing the matrices whose names start with
        prefix (or one of several prefixes)."""
        sub_store = ParamStore()
        for name, p in self._params.items():
            if name.startswith(prefix):
                sub_store._params[name] = p
                sub_store.grads[name] = self.grads[name]
                sub_store._m[name] = self._m[name]
                sub_store._v[name] = self._v[name]
        sub_store.step_count = self.step_count
        return sub_store

    def reset_optimizer(self):
        """Clear the Adam moments and the step counter."""
        for name in self._params:
            self._m[name].fill(0.0)
            self._v[name].fill(0.0)
        self.step_count = 0

    def copy(self, prefix: str = "") -> "ParamStore":
        """Return an independent copy of the (prefixed) parameters without
        optimizer state."""
        clone = ParamStore()
        for name, p in self._params.items():
            if name.startswith(prefix):
                clone.add(name, p.data)
        return clone

    def max_abs_diff(self, other: "ParamStore") -> float:
        """Largest absolute entry difference over the common parameters."""
        diffs = [
            float(np.max(np.abs(p.data - other[name].data)))
            for name, p in self._params.items()
            if name in other
        ]
        return max(diffs) if diffs else 0.0


def adam_step(params: ParamStore, lr: float, weight_decay: float = 0.0,
              betas: typing.Tuple[float, float] = (0.9, 0.999),
              eps: float = 1e-8):
    """Apply one Adam update with decoupled weight decay.

    theta <- theta - lr * (m_hat / (sqrt(v_hat) + eps) + weight_decay * theta)

    Args:
        params: Store with populated gradient buffers.
        lr: Learning rate, must be positive.
        weight_decay: Decoupled L2 coefficient.
        betas: Decay rates of the first and second moment.
        eps: Denominator offset.
    """
    if lr <= 0:
        raise InvalidConfig("Learning rate must be positive, got %g!" % lr)
    if weight_decay < 0:
        raise InvalidConfig("Weight decay must not be negative!")
    b1, b2 = betas
    params.step_count += 1
    t = params.step_count
    for name, p in params.items():
        g = params.grads[name]
        m = params._m[name]
        v = params._v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        m_hat = m / (1.0 - b1 ** t)
        v_hat = v / (1.0 - b2 ** t)
        p.data -= lr * (m_hat / (np.sqrt(v_hat) + eps) + weight_decay * p.data)
        _check_finite(p.data, "adam_step")


##########################################################################
# Finite-difference gradient check


@dataclass
class GradCheckEntry:
    name: str
    max_rel_error: float
    passed: bool


@dataclass
class GradCheckReport:
    """Per-parameter comparison of analytic and numerical gradients."""

    tol: float
    h: float
    entries: typing.List[GradCheckEntry] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return bool(self.entries) and all(e.passed for e in self.entries)

    @property
    def max_rel_error(self) -> float:
        return max((e.max_rel_error for e in self.entries), default=0.0)

    def __str__(self):
        s = ["Gradient check %s (tol %g, h %g)"
             % ("passed" if self.passed else "FAILED", self.tol, self.h)]
        for e in self.entries:
            s.append("  %-24s %.3e  %s"
                     % (e.name, e.max_rel_error, "ok" if e.passed else "FAIL"))
        return "\n".join(s)


def finite_diff_check(loss_fn: typing.Callable[[], Matrix],
                      params: ParamStore, h: float = 1e-6,
                      tol: float = 1e-5, atol: float = 1e-10,
                      analytic_hook: typing.Callable[[dict], None] = None
                      ) -> GradCheckReport:
    """Compare analytic gradients with central finite differences.

    The relative error of a parameter is the largest absolute deviation of
    its gradient entries divided by the largest gradient magnitude of that
    parameter (at least atol).

    Args:
        loss_fn: Deterministic function returning a scalar loss computed
                 from the matrices in params.
        params: Store holding the parameters to check.
        h: Step of the central difference.
        tol: A parameter passes if its relative error is below tol.
        atol: Lower bound of the error denominator.
        analytic_hook: Optional callable which may modify the analytic
                 gradients before comparison (negative controls).

    Returns:
        GradCheckReport: One entry per parameter.
    """
    if h <= 0:
        raise InvalidInput("Finite-difference step must be positive!")

    first = np.array(loss_fn().data)
    second = np.array(loss_fn().data)
    if first.shape != (1, 1):
        raise InvalidInput("Loss function must return a scalar!")
    if not np.array_equal(first, second):
        raise NondeterminismError(
            "Two forward passes disagree: %r != %r!"
            % (first[0, 0], second[0, 0])
        )

    saved = {name: g.copy() for name, g in params.grads.items()}
    params.zero_grad()
    with Tape() as tape:
        loss = loss_fn()
    analytic = backward(loss, tape, params)
    for name, g in saved.items():
        params.grads[name][...] = g
    if analytic_hook is not None:
        analytic_hook(analytic)

    report = GradCheckReport(tol=tol, h=h)
    for name, p in params.items():
        numeric = np.zeros_like(p.data)
        for idx in np.ndindex(p.shape):
            orig = p.data[idx]
            xp = orig + h
            xm = orig - h
            p.data[idx] = xp
            fp = loss_fn().item()
            p.data[idx] = xm
            fm = loss_fn().item()
            p.data[idx] = orig
            numeric[idx] = (fp - fm) / (xp - xm)
        a = analytic[name]
        denom = max(float(np.abs(a).max()), float(np.abs(numeric).max()), atol)
        err = float(np.abs(a - numeric).max()) / denom
        report.entries.append(GradCheckEntry(name, err, err < tol))
        logger.debug("gradcheck {}: rel. error {:.3e}", name, err)
    return report
