"""Dense float64 primitives, recurrent cells, a reverse-mode tape and Adam.

Every primitive accepts plain ``numpy`` arrays or :class:`Var` nodes. When at
least one argument is a ``Var`` the result is recorded on that variable's tape
and returned as a ``Var``; otherwise the plain array result is returned. The
model code is therefore written once and used both for inference (no tape) and
for training (tape + :func:`backward`).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

DTYPE = np.float64


class ShapeError(ValueError):
    """Operand dimensions do not agree."""


class Var:
    """A node on a :class:`Tape` holding a float64 array."""

    __slots__ = ("value", "tape", "name")

    def __init__(self, value: np.ndarray, tape: "Tape", name: str | None = None):
        self.value = value
        self.tape = tape
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    def __repr__(self) -> str:
        label = f" {self.name!r}" if self.name else ""
        return f"Var{label}(shape={self.value.shape})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__


class Tape:
    """Ordered record of the primitive operations of one forward pass.

    A tape is single-use: :func:`backward` replays it once and then marks it
    consumed.
    """

    def __init__(self) -> None:
        self._records: list[tuple[Var, tuple, Callable]] = []
        self._params: dict[str, Var] = {}
        self.consumed = False

    def param(self, name: str, value: np.ndarray) -> Var:
        if name in self._params:
            raise ValueError(f"parameter {name!r} already registered on this tape")
        var = Var(np.asarray(value, dtype=DTYPE), self, name)
        self._params[name] = var
        return var

    def params(self, values: dict[str, np.ndarray]) -> dict[str, Var]:
        return {name: self.param(name, arr) for name, arr in values.items()}

    def record(self, value: np.ndarray, inputs: tuple, backward_fn: Callable) -> Var:
        if self.consumed:
            raise RuntimeError("tape already consumed by backward()")
        out = Var(value, self)
        self._records.append((out, inputs, backward_fn))
        return out

    def __len__(self) -> int:
        return len(self._records)


def _val(x) -> np.ndarray:
    return x.value if isinstance(x, Var) else np.asarray(x, dtype=DTYPE)


def _tape_of(*xs) -> Tape | None:
    tape = None
    for x in xs:
        if isinstance(x, Var):
            if tape is None:
                tape = x.tape
            elif x.tape is not tape:
                raise ValueError("operands recorded on different tapes")
    return tape


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _emit(value, inputs, backward_fn):
    tape = _tape_of(*inputs)
    if tape is None:
        return value
    return tape.record(value, inputs, backward_fn)


# ---------------------------------------------------------------------------
# primitives
# ---------------------------------------------------------------------------


def add(a, b):
    av, bv = _val(a), _val(b)
    try:
        out = av + bv
    except ValueError as exc:
        raise ShapeError(f"add: cannot combine {av.shape} and {bv.shape}") from exc
    return _emit(out, (a, b), lambda g: (_unbroadcast(g, av.shape), _unbroadcast(g, bv.shape)))


def sub(a, b):
    av, bv = _val(a), _val(b)
    out = av - bv
    return _emit(out, (a, b), lambda g: (_unbroadcast(g, av.shape), -_unbroadcast(g, bv.shape)))


def mul(a, b):
    av, bv = _val(a), _val(b)
    try:
        out = av * bv
    except ValueError as exc:
        raise ShapeError(f"mul: cannot combine {av.shape} and {bv.shape}") from exc
    return _emit(
        out, (a, b), lambda g: (_unbroadcast(g * bv, av.shape), _unbroadcast(g * av, bv.shape))
    )


def affine(W, x, b=None):
    """``W x + b`` for a vector ``x`` of shape (m,) or a batch of rows (B, m)."""
    Wv, xv = _val(W), _val(x)
    if Wv.ndim != 2:
        raise ShapeError(f"affine: weight must be a matrix, got shape {Wv.shape}")
    if xv.ndim not in (1, 2) or xv.shape[-1] != Wv.shape[1]:
        raise ShapeError(f"affine: weight {Wv.shape} cannot multiply input {xv.shape}")
    out = xv @ Wv.T
    if b is not None:
        bv = _val(b)
        if bv.shape != (Wv.shape[0],):
            raise ShapeError(f"affine: bias {bv.shape} does not match output size {Wv.shape[0]}")
        out = out + bv

    def backward_fn(g):
        if xv.ndim == 1:
            gW = np.outer(g, xv)
            gb = g
        else:
            gW = g.T @ xv
            gb = g.sum(axis=0)
        return (gW, g @ Wv, gb)

    inputs = (W, x) if b is None else (W, x, b)
    return _emit(out, inputs, backward_fn)


def matmul(a, b):
    av, bv = _val(a), _val(b)
    try:
        out = av @ bv
    except ValueError as exc:
        raise ShapeError(f"matmul: {av.shape} @ {bv.shape}") from exc

    def backward_fn(g):
        if av.ndim == 1 and bv.ndim == 1:
            return g * bv, g * av
        if av.ndim == 1:
            return bv @ g, np.outer(av, g)
        if bv.ndim == 1:
            return np.outer(g, bv), av.T @ g
        return g @ bv.T, av.T @ g

    return _emit(out, (a, b), backward_fn)


def sigmoid(a):
    av = _val(a)
    out = np.empty_like(av)
    pos = av >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-av[pos]))
    ez = np.exp(av[~pos])
    out[~pos] = ez / (1.0 + ez)
    return _emit(out, (a,), lambda g: (g * out * (1.0 - out),))


def tanh(a):
    out = np.tanh(_val(a))
    return _emit(out, (a,), lambda g: (g * (1.0 - out * out),))


def exp(a):
    out = np.exp(_val(a))
    return _emit(out, (a,), lambda g: (g * out,))


def log_softmax(z):
    """Log-softmax over the last axis, computed with max subtraction."""
    zv = _val(z)
    if zv.size == 0 or zv.shape[-1] == 0:
        raise ValueError("log_softmax of an empty vector")
    shifted = zv - zv.max(axis=-1, keepdims=True)
    out = shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))

    def backward_fn(g):
        p = np.exp(out)
        return (g - p * g.sum(axis=-1, keepdims=True),)

    return _emit(out, (z,), backward_fn)


def softmax(z):
    """Softmax over the last axis. Outputs are nonnegative and sum to one."""
    zv = _val(z)
    if zv.size == 0 or zv.shape[-1] == 0:
        raise ValueError("softmax of an empty vector")
    if not np.all(np.isfinite(zv)):
        raise ValueError("softmax input contains non-finite entries")
    e = np.exp(zv - zv.max(axis=-1, keepdims=True))
    out = e / e.sum(axis=-1, keepdims=True)

    def backward_fn(g):
        return (out * (g - (g * out).sum(axis=-1, keepdims=True)),)

    return _emit(out, (z,), backward_fn)


def outer(u, v):
    """Outer product ``u vᵀ``; batched over a leading axis when both are 2-D."""
    uv, vv = _val(u), _val(v)
    if uv.size == 0 or vv.size == 0:
        raise ShapeError("outer: empty operand")
    if uv.ndim == 1 and vv.ndim == 1:
        out = np.outer(uv, vv)
        return _emit(out, (u, v), lambda g: (g @ vv, g.T @ uv))
    if uv.ndim == 2 and vv.ndim == 2 and uv.shape[0] == vv.shape[0]:
        out = uv[:, :, None] * vv[:, None, :]
        return _emit(
            out,
            (u, v),
            lambda g: (np.einsum("bij,bj->bi", g, vv), np.einsum("bij,bi->bj", g, uv)),
        )
    raise ShapeError(f"outer: incompatible operands {uv.shape} and {vv.shape}")


def vec(M):
    """Row-major vectorization of the trailing two axes: ``vec(M)[i*c + j] = M[i, j]``."""
    Mv = _val(M)
    shape = Mv.shape
    out = Mv.reshape(shape[:-2] + (shape[-2] * shape[-1],))
    return _emit(out, (M,), lambda g: (g.reshape(shape),))


def reshape(a, shape: tuple[int, ...]):
    av = _val(a)
    out = av.reshape(shape)
    return _emit(out, (a,), lambda g: (g.reshape(av.shape),))


def concat(parts: Sequence, axis: int = -1):
    vals = [_val(p) for p in parts]
    out = np.concatenate(vals, axis=axis)
    bounds = np.cumsum([v.shape[axis] for v in vals])[:-1]
    return _emit(out, tuple(parts), lambda g: tuple(np.split(g, bounds, axis=axis)))


def slice_last(a, start: int, stop: int):
    av = _val(a)
    out = av[..., start:stop]

    def backward_fn(g):
        full = np.zeros_like(av)
        full[..., start:stop] = g
        return (full,)

    return _emit(out, (a,), backward_fn)


def take_columns(X, idx):
    """Columns ``X[:, idx]`` as rows: shape (d,) for a scalar index, (n, d) for an index array."""
    Xv = _val(X)
    idx = np.asarray(idx)
    if idx.size and (idx.min() < 0 or idx.max() >= Xv.shape[1]):
        raise IndexError(f"column index out of range for table with {Xv.shape[1]} columns")
    out = Xv[:, idx].T

    def backward_fn(g):
        gX = np.zeros_like(Xv)
        np.add.at(gX.T, idx, g)
        return (gX,)

    return _emit(out, (X,), backward_fn)


def take_rows(A, idx):
    Av = _val(A)
    idx = np.asarray(idx)
    out = Av[idx]

    def backward_fn(g):
        gA = np.zeros_like(Av)
        np.add.at(gA, idx, g)
        return (gA,)

    return _emit(out, (A,), backward_fn)


def pick(logp, targets):
    """``logp[b, targets[b]]`` for each row b."""
    lv = _val(logp)
    targets = np.asarray(targets)
    rows = np.arange(lv.shape[0])
    out = lv[rows, targets]

    def backward_fn(g):
        gl = np.zeros_like(lv)
        gl[rows, targets] = g
        return (gl,)

    return _emit(out, (logp,), backward_fn)


def dot_const(a, w: np.ndarray):
    """Scalar ``sum(a * w)`` with a constant weight array ``w``."""
    av = _val(a)
    w = np.asarray(w, dtype=DTYPE)
    out = np.asarray(np.sum(av * w))
    return _emit(out, (a,), lambda g: (g * w,))


def total(a):
    av = _val(a)
    out = np.asarray(av.sum())
    return _emit(out, (a,), lambda g: (np.broadcast_to(g, av.shape).copy(),))


# ---------------------------------------------------------------------------
# reverse pass
# ---------------------------------------------------------------------------


def backward(tape: Tape, loss: Var) -> dict[str, np.ndarray]:
    """Gradients of the scalar ``loss`` with respect to every registered parameter.

    Unused parameters receive exact zeros.
    """
    if not isinstance(loss, Var) or loss.tape is not tape:
        raise ValueError("loss is not a node of this tape")
    if len(tape) == 0:
        raise RuntimeError("backward() called before any forward pass was recorded")
    if tape.consumed:
        raise RuntimeError("tape already consumed by backward()")
    if loss.value.size != 1:
        raise ValueError(f"loss must be a scalar, got shape {loss.value.shape}")

    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.value)}
    for out, inputs, backward_fn in reversed(tape._records):
        g = grads.pop(id(out), None)
        if g is None:
            continue
        for inp, gi in zip(inputs, backward_fn(g)):
            if not isinstance(inp, Var) or gi is None:
                continue
            key = id(inp)
            if key in grads:
                grads[key] = grads[key] + gi
            else:
                grads[key] = np.array(gi, dtype=DTYPE, copy=True)
    tape.consumed = True
    return {
        name: grads.get(id(var), np.zeros_like(var.value)).reshape(var.value.shape)
        for name, var in tape._params.items()
    }


# ---------------------------------------------------------------------------
# recurrent cells
# ---------------------------------------------------------------------------

LSTM_GATES = ("input", "forget", "output", "candidate")


@dataclass
class LstmCellParams:
    """Peephole-free LSTM cell; the four gate blocks are stacked row-wise.

    Block order along the 4h axis is :data:`LSTM_GATES`. Fields may hold plain
    arrays or tape variables.
    """

    W_x: object  # (4h, m)
    W_h: object  # (4h, h)
    b: object  # (4h,)

    def __post_init__(self) -> None:
        four_h, m = _val(self.W_x).shape
        if four_h % 4:
            raise ShapeError(f"stacked LSTM weight has {four_h} rows, not a multiple of 4")
        h = four_h // 4
        if _val(self.W_h).shape != (four_h, h) or _val(self.b).shape != (four_h,):
            raise ShapeError(
                f"LSTM blocks disagree: W_x {_val(self.W_x).shape}, "
                f"W_h {_val(self.W_h).shape}, b {_val(self.b).shape}"
            )

    @property
    def hidden_size(self) -> int:
        return _val(self.W_x).shape[0] // 4

    @property
    def input_size(self) -> int:
        return _val(self.W_x).shape[1]

    def block(self, gate: str) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(input-to-hidden, hidden-to-hidden, bias) views for one gate."""
        k = LSTM_GATES.index(gate)
        h = self.hidden_size
        rows = slice(k * h, (k + 1) * h)
        return _val(self.W_x)[rows], _val(self.W_h)[rows], _val(self.b)[rows]


@dataclass
class RnnCellParams:
    W_hx: object  # (h, m)
    W_hh: object  # (h, h)
    b_h: object  # (h,)

    def __post_init__(self) -> None:
        h, _ = _val(self.W_hx).shape
        if _val(self.W_hh).shape != (h, h) or _val(self.b_h).shape != (h,):
            raise ShapeError(
                f"RNN blocks disagree: W_hx {_val(self.W_hx).shape}, "
                f"W_hh {_val(self.W_hh).shape}, b_h {_val(self.b_h).shape}"
            )

    @property
    def hidden_size(self) -> int:
        return _val(self.W_hx).shape[0]


def lstm_step(p: LstmCellParams, x, state):
    """One LSTM step. ``state`` is ``(h_prev, c_prev)``; returns ``(h, (h, c))``."""
    h_prev, c_prev = state
    h = p.hidden_size
    if _val(x).shape[-1] != p.input_size:
        raise ShapeError(f"lstm_step: input width {_val(x).shape[-1]} != {p.input_size}")
    if _val(h_prev).shape[-1] != h or _val(c_prev).shape[-1] != h:
        raise ShapeError(f"lstm_step: state width does not match hidden size {h}")
    z = add(affine(p.W_x, x, p.b), affine(p.W_h, h_prev))
    i = sigmoid(slice_last(z, 0, h))
    f = sigmoid(slice_last(z, h, 2 * h))
    o = sigmoid(slice_last(z, 2 * h, 3 * h))
    g = tanh(slice_last(z, 3 * h, 4 * h))
    c = add(mul(f, c_prev), mul(i, g))
    h_new = mul(o, tanh(c))
    return h_new, (h_new, c)


def rnn_step(p: RnnCellParams, x, h_prev):
    """Elman step ``tanh(W_hx x + W_hh h_prev + b_h)``."""
    if _val(h_prev).shape[-1] != p.hidden_size:
        raise ShapeError(f"rnn_step: state width does not match hidden size {p.hidden_size}")
    return tanh(add(affine(p.W_hx, x, p.b_h), affine(p.W_hh, h_prev)))


# ---------------------------------------------------------------------------
# optimizer
# ---------------------------------------------------------------------------


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(
    params: dict[str, np.ndarray], grads: dict[str, np.ndarray], state: AdamState
) -> tuple[dict[str, np.ndarray], AdamState]:
    """One bias-corrected Adam update.

    Returns new parameter arrays; ``state`` is advanced in place and returned.
    """
    for name, g in grads.items():
        if name not in params:
            raise KeyError(f"gradient for unknown parameter {name!r}")
        if np.shape(g) != np.shape(params[name]):
            raise ShapeError(f"gradient for {name!r} has shape {np.shape(g)}, expected {np.shape(params[name])}")
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient for parameter {name!r}")

    t = state.t + 1
    c1 = 1.0 - state.beta1**t
    c2 = 1.0 - state.beta2**t
    out = {}
    for name, theta in params.items():
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(theta)
        m = state.m.get(name)
        v = state.v.get(name)
        if m is None:
            m = np.zeros_like(theta)
            v = np.zeros_like(theta)
        m = state.beta1 * m + (1.0 - state.beta1) * g
        v = state.beta2 * v + (1.0 - state.beta2) * (g * g)
        state.m[name] = m
        state.v[name] = v
        out[name] = theta - state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    state.t = t
    return out, state


# ---------------------------------------------------------------------------
# finite-difference oracle
# ---------------------------------------------------------------------------


def numeric_gradient(f: Callable[[dict[str, np.ndarray]], float], params: dict[str, np.ndarray], step: float = 1e-4):
    """Central differences of ``f`` with respect to every coordinate of every parameter."""
    out = {}
    for name, arr in params.items():
        g = np.zeros_like(arr)
        flat = arr.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            up = f(params)
            flat[i] = orig - step
            down = f(params)
            flat[i] = orig
            g.reshape(-1)[i] = (up - down) / (2.0 * step)
        out[name] = g
    return out


def gradient_mismatches(
    analytic: dict[str, np.ndarray],
    numeric: dict[str, np.ndarray],
    rtol: float = 1e-4,
    atol: float = 1e-7,
) -> list[tuple[str, int, float, float]]:
    """Coordinates where ``|a - n| > atol`` and ``|a - n| / max(|a|, |n|) > rtol``."""
    bad = []
    for name, n in numeric.items():
        a = analytic[name]
        diff = np.abs(a - n)
        scale = np.maximum(np.abs(a), np.abs(n))
        with np.errstate(divide="ignore", invalid="ignore"):
            rel = np.where(scale > 0, diff / scale, 0.0)
        for i in np.flatnonzero((diff > atol) & (rel > rtol)):
            bad.append((name, int(i), float(a.reshape(-1)[i]), float(n.reshape(-1)[i])))
    return bad
