"""Dense float64 tensors with tape-based reverse-mode differentiation.

Only the operations the network needs are implemented: matrix products,
elementwise arithmetic with numpy-style broadcasting, the usual activations,
row softmax, dropout, concatenation, slicing, and reductions. Neighbor
aggregation happens through ordinary matrix products against a (dense)
normalized adjacency, so no sparse support is required.

A Tape and the tensors recorded on it belong to a single thread; independent
tapes may run concurrently.
"""

from __future__ import annotations

import numpy as np

from .errors import ArgumentError, NumericError, ShapeError


class Tape:
    """Ordered record of executed primitives.

    Operations append their backward closures in execution order, which is a
    topological order of the computation DAG; ``backward`` replays the record
    once in reverse.
    """

    def __init__(self):
        self._records = []

    def watch(self, t: "Tensor") -> None:
        """Register ``t`` as a differentiable leaf on this tape."""
        t.tape = self
        t.grad = np.zeros_like(t.data)

    def _record(self, fn) -> None:
        self._records.append(fn)

    def __len__(self) -> int:
        return len(self._records)

    def backward(self, loss: "Tensor") -> None:
        if loss.tape is not self:
            raise ArgumentError("loss tensor was not computed on this tape")
        if loss.data.size != 1:
            raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
        loss.grad = np.ones_like(loss.data)
        for fn in reversed(self._records):
            fn()


class Tensor:
    """A dense float64 array, optionally recorded on a tape for gradients."""

    __slots__ = ("data", "grad", "tape")

    def __init__(self, data, tape: Tape | None = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.tape = tape
        self.grad = np.zeros_like(self.data) if tape is not None else None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        """Copy of the values with no tape attachment."""
        return Tensor(self.data.copy())

    def detach_(self) -> "Tensor":
        self.tape = None
        self.grad = None
        return self

    def __repr__(self):
        taped = ", taped" if self.tape is not None else ""
        return f"Tensor(shape={self.shape}{taped})"

    # -- arithmetic ---------------------------------------------------------

    def __add__(self, other):
        return _elementwise(self, other, np.add, lambda a, b, g: (g, g))

    __radd__ = __add__

    def __sub__(self, other):
        return _elementwise(self, other, np.subtract, lambda a, b, g: (g, -g))

    def __rsub__(self, other):
        return _as_tensor(other) - self

    def __mul__(self, other):
        return _elementwise(self, other, np.multiply, lambda a, b, g: (g * b, g * a))

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise ArgumentError("division is only supported by a plain scalar")
        return self * (1.0 / float(other))

    def __neg__(self):
        return self * -1.0

    def __pow__(self, exponent):
        p = float(exponent)
        return _unary(self, lambda a: a**p, lambda a, out, g: g * p * a ** (p - 1.0))

    def __matmul__(self, other):
        return matmul(self, other)

    # -- shape --------------------------------------------------------------

    def transpose(self) -> "Tensor":
        if self.ndim != 2:
            raise ShapeError(f"transpose needs a 2-d tensor, got shape {self.shape}")
        return _unary(self, lambda a: a.T.copy(), lambda a, out, g: g.T)

    def reshape(self, shape) -> "Tensor":
        old = self.shape
        return _unary(
            self, lambda a: a.reshape(shape), lambda a, out, g: g.reshape(old)
        )

    # -- activations --------------------------------------------------------

    def relu(self) -> "Tensor":
        # relu'(0) = 0 by convention: the pass-through mask is strict.
        return _unary(
            self, lambda a: np.maximum(a, 0.0), lambda a, out, g: g * (a > 0.0)
        )

    def tanh(self) -> "Tensor":
        return _unary(self, np.tanh, lambda a, out, g: g * (1.0 - out * out))

    def sigmoid(self) -> "Tensor":
        def fwd(a):
            out = np.empty_like(a)
            pos = a >= 0
            out[pos] = 1.0 / (1.0 + np.exp(-a[pos]))
            e = np.exp(a[~pos])
            out[~pos] = e / (1.0 + e)
            return out

        return _unary(self, fwd, lambda a, out, g: g * out * (1.0 - out))

    def log(self) -> "Tensor":
        return _unary(self, np.log, lambda a, out, g: g / a)

    def clip(self, lo: float, hi: float) -> "Tensor":
        # Subgradient zero outside [lo, hi], matching the relu convention.
        return _unary(
            self,
            lambda a: np.clip(a, lo, hi),
            lambda a, out, g: g * ((a >= lo) & (a <= hi)),
        )

    # -- reductions ---------------------------------------------------------

    def sum(self) -> "Tensor":
        return _unary(
            self, lambda a: np.array(a.sum()), lambda a, out, g: np.broadcast_to(g, a.shape)
        )

    def mean(self) -> "Tensor":
        return self.sum() / self.size


# -- helpers ----------------------------------------------------------------


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float64))


def _tape_of(*tensors) -> Tape | None:
    tapes = {t.tape for t in tensors if t.tape is not None}
    if len(tapes) > 1:
        raise ArgumentError("operands belong to different tapes")
    return tapes.pop() if tapes else None


def _out(data, tape: Tape | None) -> Tensor:
    t = Tensor(data)
    if tape is not None:
        t.tape = tape
        t.grad = np.zeros_like(t.data)
    return t


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    """Sum ``g`` down to ``shape`` along the axes numpy broadcast over."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _unary(x: Tensor, fwd, bwd) -> Tensor:
    out = _out(fwd(x.data), x.tape)
    if out.tape is not None:
        a = x.data

        def backward():
            if x.tape is not None:
                x.grad += bwd(a, out.data, out.grad)

        out.tape._record(backward)
    return out


def _elementwise(x: Tensor, y, fwd, bwd) -> Tensor:
    y = _as_tensor(y)
    tape = _tape_of(x, y)
    out = _out(fwd(x.data, y.data), tape)
    if tape is not None:
        a, b = x.data, y.data

        def backward():
            ga, gb = bwd(a, b, out.grad)
            if x.tape is not None:
                x.grad += _unbroadcast(ga, a.shape)
            if y.tape is not None:
                y.grad += _unbroadcast(gb, b.shape)

        tape._record(backward)
    return out


# -- operations with their own entry points ----------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply shapes {a.shape} and {b.shape}")
    tape = _tape_of(a, b)
    out = _out(a.data @ b.data, tape)
    if tape is not None:
        da, db = a.data, b.data

        def backward():
            g = out.grad
            if a.tape is not None:
                a.grad += g @ db.T
            if b.tape is not None:
                b.grad += da.T @ g

        tape._record(backward)
    return out


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    """Numerically stabilized softmax along ``axis`` (rows for 2-d input)."""
    if x.size == 0:
        raise ArgumentError("softmax of an empty tensor")
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    data = e / e.sum(axis=axis, keepdims=True)
    out = _out(data, x.tape)
    if out.tape is not None:

        def backward():
            if x.tape is not None:
                g = out.grad
                s = out.data
                x.grad += s * (g - (g * s).sum(axis=axis, keepdims=True))

        out.tape._record(backward)
    return out


def dropout(x: Tensor, rate: float, training: bool, rng: np.random.Generator | None = None) -> Tensor:
    """Inverted dropout: zero entries with probability ``rate``, scale survivors."""
    if not 0.0 <= rate < 1.0:
        raise ArgumentError(f"dropout rate must be in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return x
    if rng is None:
        raise ArgumentError("training-mode dropout needs an explicit generator")
    keep = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return _unary(x, lambda a: a * keep, lambda a, out, g: g * keep)


def concat(tensors, axis: int = 1) -> Tensor:
    tensors = [_as_tensor(t) for t in tensors]
    if not tensors:
        raise ArgumentError("concat of an empty sequence")
    tape = _tape_of(*tensors)
    out = _out(np.concatenate([t.data for t in tensors], axis=axis), tape)
    if tape is not None:
        sizes = [t.shape[axis] for t in tensors]
        offsets = np.cumsum([0] + sizes)

        def backward():
            g = out.grad
            for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
                if t.tape is not None:
                    idx = [slice(None)] * g.ndim
                    idx[axis] = slice(lo, hi)
                    t.grad += g[tuple(idx)]

        tape._record(backward)
    return out


def slice_cols(x: Tensor, lo: int, hi: int) -> Tensor:
    if x.ndim != 2:
        raise ShapeError(f"slice_cols needs a 2-d tensor, got shape {x.shape}")

    def bwd(a, out, g):
        full = np.zeros_like(a)
        full[:, lo:hi] = g
        return full

    return _unary(x, lambda a: a[:, lo:hi].copy(), bwd)


def gather_rows(x: Tensor, indices) -> Tensor:
    idx = np.asarray(indices, dtype=np.intp)

    def bwd(a, out, g):
        full = np.zeros_like(a)
        np.add.at(full, idx, g)
        return full

    return _unary(x, lambda a: a[idx], bwd)


# -- gradient checking --------------------------------------------------------


def grad_check(f, params, eps: float = 1e-5) -> float:
    """Max relative error between tape gradients and central differences.

    ``f`` is a zero-argument callable returning a scalar Tensor; it must be a
    deterministic function of ``params`` (disable dropout). The relative error
    denominator is max(|analytic|, |numeric|, 1e-8).
    """
    if eps <= 0:
        raise ArgumentError("eps must be positive")
    tape = Tape()
    for p in params:
        tape.watch(p)
    loss = f()
    if not np.isfinite(loss.data).all():
        raise NumericError("loss is not finite")
    tape.backward(loss)
    analytic = [p.grad.copy() for p in params]
    for p in params:
        p.detach_()

    worst = 0.0
    for p, grad in zip(params, analytic):
        flat = p.data.reshape(-1)
        for i in range(flat.size):
            saved = flat[i]
            flat[i] = saved + eps
            up = f().item()
            flat[i] = saved - eps
            down = f().item()
            flat[i] = saved
            if not (np.isfinite(up) and np.isfinite(down)):
                raise NumericError("loss is not finite during finite differencing")
            numeric = (up - down) / (2.0 * eps)
            a = grad.reshape(-1)[i]
            err = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
            worst = max(worst, err)
    return worst
