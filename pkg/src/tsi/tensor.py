"""Dense float64 arrays with a small tape-based reverse-mode autodiff.

Arrays are plain ``numpy.ndarray`` (real float64 or complex128). A
:class:`Tape` records every primitive applied to a :class:`Var`; calling
:func:`backward` walks the tape in reverse and accumulates gradients.

Primitives dispatch on their arguments: with plain arrays they compute the
forward value and return an array, so the same encoder code serves both
training (taped) and inference (untaped).

Complex gradients follow the convention ``dL/dRe(z) + 1j * dL/dIm(z)``, which
makes ``z.view(float64)`` and ``grad.view(float64)`` line up as an ordinary
real parameter/gradient pair.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass
from typing import Any, Callable

import numpy as np

__all__ = [
    "Var",
    "Tape",
    "TapeReplayError",
    "backward",
    "add",
    "sub",
    "mul",
    "div",
    "matmul",
    "tanh",
    "sum",
    "mean",
    "avg_pool_time",
    "log_softmax",
    "l1_norm",
    "l2_norm",
    "l2_normalize",
    "concat",
    "select_time",
    "conv1d_causal",
    "rfft",
    "irfft",
    "complex_linear",
    "value_of",
]


class TapeReplayError(RuntimeError):
    """Raised when re-running the tape does not reproduce the recorded values."""


@dataclass
class Node:
    op: str
    parents: tuple[int, ...]
    attrs: dict[str, Any]
    value: np.ndarray
    name: str | None = None


@dataclass(frozen=True)
class _Primitive:
    forward: Callable[..., np.ndarray]
    vjp: Callable[..., tuple]


_PRIMITIVES: dict[str, _Primitive] = {}


class Var:
    """Handle to a node on a tape."""

    __slots__ = ("tape", "index")
    __array_priority__ = 1000

    def __init__(self, tape: Tape, index: int):
        self.tape = tape
        self.index = index

    @property
    def value(self) -> np.ndarray:
        return self.tape.nodes[self.index].value

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    @property
    def ndim(self) -> int:
        return self.value.ndim

    def __repr__(self) -> str:
        node = self.tape.nodes[self.index]
        return f"Var(#{self.index} {node.op} shape={self.shape})"

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
        return mul(self, -1.0)


class Tape:
    """Append-only record of a computation.

    Nodes are appended after their parents, so list order is a topological
    order. A tape has a single writer.
    """

    def __init__(self):
        self.nodes: list[Node] = []

    def __len__(self) -> int:
        return len(self.nodes)

    def param(self, value, name: str | None = None) -> Var:
        """Register a differentiable leaf."""
        return self._append(Node("param", (), {}, _as_array(value).copy(), name))

    def constant(self, value) -> Var:
        return self._append(Node("const", (), {}, _as_array(value)))

    def params(self) -> list[Var]:
        return [Var(self, i) for i, n in enumerate(self.nodes) if n.op == "param"]

    def record(self, op: str, parents: tuple[int, ...], attrs: dict, value: np.ndarray) -> Var:
        if any(p >= len(self.nodes) for p in parents):
            raise ValueError("parent index out of range")
        return self._append(Node(op, parents, attrs, value))

    def _append(self, node: Node) -> Var:
        self.nodes.append(node)
        return Var(self, len(self.nodes) - 1)

    def replay(self) -> None:
        """Recompute every op node from its parents and compare bit-for-bit."""
        values: list[np.ndarray] = []
        for i, node in enumerate(self.nodes):
            if node.op in ("param", "const"):
                values.append(node.value)
                continue
            prim = _PRIMITIVES[node.op]
            out = prim.forward(*(values[p] for p in node.parents), **node.attrs)
            if out.shape != node.value.shape or not np.array_equal(out, node.value):
                raise TapeReplayError(f"node {i} ({node.op}) does not replay")
            values.append(out)


def _as_array(x) -> np.ndarray:
    a = np.asarray(x)
    if np.iscomplexobj(a):
        return a.astype(np.complex128, copy=False)
    return a.astype(np.float64, copy=False)


def value_of(x):
    """Underlying array of a Var, or the argument itself."""
    return x.value if isinstance(x, Var) else x


def _primitive(vjp):
    """Turn a numpy forward function into a tape-aware primitive."""

    def deco(fwd):
        name = fwd.__name__
        _PRIMITIVES[name] = _Primitive(fwd, vjp)

        @functools.wraps(fwd)
        def wrapper(*args, **attrs):
            tape = next((a.tape for a in args if isinstance(a, Var)), None)
            if tape is None:
                return fwd(*(_as_array(a) for a in args), **attrs)
            parents = []
            for a in args:
                if isinstance(a, Var):
                    if a.tape is not tape:
                        raise ValueError("arguments live on different tapes")
                    parents.append(a.index)
                else:
                    parents.append(tape.constant(a).index)
            vals = [tape.nodes[p].value for p in parents]
            return tape.record(name, tuple(parents), attrs, fwd(*vals, **attrs))

        return wrapper

    return deco


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and grad.shape[ax] != 1:
            grad = grad.sum(axis=ax, keepdims=True)
    return grad


def _real_like(grad: np.ndarray, x: np.ndarray) -> np.ndarray:
    return grad if np.iscomplexobj(x) else grad.real


# ---------------------------------------------------------------------------
# elementwise and linear algebra


@_primitive(lambda g, out, a, b: (_real_like(_unbroadcast(g, a.shape), a),
                                  _real_like(_unbroadcast(g, b.shape), b)))
def add(a, b):
    return a + b


@_primitive(lambda g, out, a, b: (_real_like(_unbroadcast(g, a.shape), a),
                                  _real_like(_unbroadcast(-g, b.shape), b)))
def sub(a, b):
    return a - b


@_primitive(lambda g, out, a, b: (_real_like(_unbroadcast(g * np.conj(b), a.shape), a),
                                  _real_like(_unbroadcast(g * np.conj(a), b.shape), b)))
def mul(a, b):
    return a * b


def _div_vjp(g, out, a, b):
    ga = g / np.conj(b)
    gb = -g * np.conj(out / b)
    return (_real_like(_unbroadcast(ga, a.shape), a), _real_like(_unbroadcast(gb, b.shape), b))


@_primitive(_div_vjp)
def div(a, b):
    return a / b


def _matmul_vjp(g, out, a, b):
    if a.ndim == 1:
        ga = g @ np.conj(b).T
        gb = np.outer(np.conj(a), g)
    else:
        ga = g @ np.conj(np.swapaxes(b, -1, -2))
        gb = _unbroadcast(np.conj(np.swapaxes(a, -1, -2)) @ g, b.shape)
    return _real_like(_unbroadcast(ga, a.shape), a), _real_like(gb, b)


@_primitive(_matmul_vjp)
def matmul(a, b):
    if b.ndim != 2:
        raise ValueError("right operand of matmul must be a matrix")
    if a.shape[-1] != b.shape[0]:
        raise ValueError(f"matmul inner dimensions differ: {a.shape} @ {b.shape}")
    return a @ b


@_primitive(lambda g, out, x: (g * (1.0 - out * out),))
def tanh(x):
    return np.tanh(x)


def _sum_vjp(g, out, x, axis=None, keepdims=False):
    if axis is not None and not keepdims:
        g = np.expand_dims(g, axis)
    return (np.broadcast_to(g, x.shape).copy(),)


@_primitive(_sum_vjp)
def sum(x, axis=None, keepdims=False):
    return np.asarray(np.sum(x, axis=axis, keepdims=keepdims))


def _mean_vjp(g, out, x, axis=None, keepdims=False):
    count = x.size if axis is None else x.shape[axis]
    return (_sum_vjp(g, out, x, axis, keepdims)[0] / count,)


@_primitive(_mean_vjp)
def mean(x, axis=None, keepdims=False):
    return np.asarray(np.mean(x, axis=axis, keepdims=keepdims))


def _avg_pool_vjp(g, out, x):
    return (np.broadcast_to(np.expand_dims(g, -2), x.shape) / x.shape[-2],)


@_primitive(_avg_pool_vjp)
def avg_pool_time(x):
    """Average over the time axis (second to last): ``[..., T, C] -> [..., C]``."""
    return x.mean(axis=-2)


def _log_softmax_vjp(g, out, x):
    return (g - np.exp(out) * g.sum(axis=-1, keepdims=True),)


@_primitive(_log_softmax_vjp)
def log_softmax(x):
    shifted = x - x.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def _l1_vjp(g, out, x, axis=None):
    if axis is not None:
        g = np.expand_dims(g, axis)
    return (g * np.sign(x),)


@_primitive(_l1_vjp)
def l1_norm(x, axis=None):
    return np.asarray(np.abs(x).sum(axis=axis))


def _l2_vjp(g, out, x, axis=-1, keepdims=True):
    if axis is not None and not keepdims:
        g = np.expand_dims(g, axis)
        out = np.expand_dims(out, axis)
    with np.errstate(divide="ignore", invalid="ignore"):
        gx = np.where(out > 0, g * x / out, 0.0)
    return (gx,)


@_primitive(_l2_vjp)
def l2_norm(x, axis=-1, keepdims=True):
    return np.asarray(np.sqrt(np.sum(x * x, axis=axis, keepdims=keepdims)))


def l2_normalize(x):
    """Scale the last axis to unit Euclidean norm."""
    norm = l2_norm(x)
    if np.any(value_of(norm) == 0.0):
        raise ValueError("cannot normalize a zero-norm vector")
    return div(x, norm)


def _concat_vjp(g, out, *xs, axis=-1):
    bounds = np.cumsum([x.shape[axis] for x in xs])[:-1]
    return tuple(np.split(g, bounds, axis=axis))


@_primitive(_concat_vjp)
def concat(*xs, axis=-1):
    return np.concatenate(xs, axis=axis)


def _select_time_vjp(g, out, x, idx):
    gx = np.zeros_like(x)
    gx[np.arange(x.shape[0]), idx.astype(np.intp)] = g
    return gx, None


@_primitive(_select_time_vjp)
def select_time(x, idx):
    """Pick row ``idx[b]`` of ``x[b]``: ``[B, T, C], [B] -> [B, C]``."""
    return x[np.arange(x.shape[0]), idx.astype(np.intp)]


# ---------------------------------------------------------------------------
# convolution and spectral ops


def _check_conv(x, kernel, dilation):
    if dilation < 1:
        raise ValueError("dilation must be >= 1")
    if kernel.ndim != 3 or kernel.shape[0] < 1:
        raise ValueError("kernel must have shape [taps, c_in, c_out] with taps >= 1")
    if x.shape[-1] != kernel.shape[1]:
        raise ValueError(f"input has {x.shape[-1]} channels, kernel expects {kernel.shape[1]}")


def _conv_vjp(g, out, x, kernel, dilation):
    taps = kernel.shape[0]
    T = x.shape[-2]
    pad = (taps - 1) * dilation
    xp = _left_pad(x, pad)
    gxp = np.zeros_like(xp)
    gk = np.empty_like(kernel)
    batch_axes = tuple(range(x.ndim - 1))
    for j in range(taps):
        sl = xp[..., j * dilation: j * dilation + T, :]
        gxp[..., j * dilation: j * dilation + T, :] += g @ kernel[j].T
        gk[j] = np.tensordot(sl, g, axes=(batch_axes, batch_axes))
    return gxp[..., pad:, :], gk


def _left_pad(x, pad):
    if pad == 0:
        return x
    width = [(0, 0)] * x.ndim
    width[-2] = (pad, 0)
    return np.pad(x, width)


def conv1d_causal(x, kernel, dilation=1):
    """Dilated causal convolution along time.

    ``x`` is ``[..., T, c_in]`` and ``kernel`` is ``[taps, c_in, c_out]``. The
    last tap multiplies the current step, tap ``j`` looks back
    ``(taps - 1 - j) * dilation`` steps, and the history before ``t = 0`` is
    zero. Output length equals input length.
    """
    return _conv1d_causal(x, kernel, dilation=int(dilation))


@_primitive(_conv_vjp)
def _conv1d_causal(x, kernel, dilation):
    _check_conv(x, kernel, dilation)
    taps = kernel.shape[0]
    T = x.shape[-2]
    xp = _left_pad(x, (taps - 1) * dilation)
    out = xp[..., 0:T, :] @ kernel[0]
    for j in range(1, taps):
        out = out + xp[..., j * dilation: j * dilation + T, :] @ kernel[j]
    return out


def _rfft_vjp(g, out, x):
    n = x.shape[-2]
    full = np.zeros(x.shape, dtype=np.complex128)
    full[..., : g.shape[-2], :] = g
    return (n * np.fft.ifft(full, axis=-2).real,)


@_primitive(_rfft_vjp)
def rfft(x):
    """Real DFT along time (``[..., T, C] -> [..., T//2 + 1, C]``), unnormalized."""
    if x.shape[-2] < 1:
        raise ValueError("rfft needs at least one time step")
    return np.fft.rfft(x, axis=-2)


def _irfft_weights(bins: int, n: int) -> np.ndarray:
    w = np.full(bins, 2.0)
    w[0] = 1.0
    if n % 2 == 0:
        w[-1] = 1.0
    return w


def _irfft_vjp(g, out, X, n):
    w = _irfft_weights(X.shape[-2], n)[:, None] / n
    return (w * np.fft.rfft(g, axis=-2),)


def irfft(X, n):
    """Inverse of :func:`rfft` with ``1/n`` scaling, returning ``n`` time steps."""
    return _irfft(X, n=int(n))


@_primitive(_irfft_vjp)
def _irfft(X, n):
    if n < 1 or X.shape[-2] != n // 2 + 1:
        raise ValueError(f"{X.shape[-2]} frequency bins cannot produce {n} time steps")
    return np.fft.irfft(X, n=n, axis=-2)


def _freq_major(x: np.ndarray) -> np.ndarray:
    """``[..., F, C] -> [F, prod(...), C]``."""
    return np.moveaxis(x.reshape(-1, *x.shape[-2:]), 1, 0)


def _complex_linear_vjp(g, out, Q, P, B):
    gf = _freq_major(g)
    gQ = np.moveaxis(gf @ np.conj(np.swapaxes(P, 1, 2)), 0, 1).reshape(Q.shape)
    gP = np.conj(np.swapaxes(_freq_major(Q), 1, 2)) @ gf
    gB = _unbroadcast(g, B.shape)
    return _real_like(gQ, Q), gP, gB


@_primitive(_complex_linear_vjp)
def complex_linear(Q, P, B):
    """Per-frequency complex linear map ``out[f, l] = sum_n P[f, n, l] Q[f, n] + B[f, l]``."""
    if P.ndim != 3 or Q.shape[-2:] != P.shape[:2] or B.shape != (P.shape[0], P.shape[2]):
        raise ValueError(f"incompatible shapes Q{Q.shape} P{P.shape} B{B.shape}")
    out = np.moveaxis(_freq_major(Q) @ P, 0, 1)
    return out.reshape(*Q.shape[:-1], P.shape[2]) + B


# ---------------------------------------------------------------------------


def backward(output: Var, verify: bool = False) -> dict[str, np.ndarray]:
    """Gradient of a scalar ``output`` with respect to every param on its tape.

    Returns a dict keyed by param name (or ``"#<index>"`` for unnamed params).
    Params that do not influence the output receive zero arrays. With
    ``verify=True`` the tape is replayed first and a mismatch raises
    :class:`TapeReplayError`.
    """
    if not isinstance(output, Var):
        raise TypeError("backward expects a Var")
    if output.value.size != 1:
        raise ValueError(f"output must be a scalar, got shape {output.shape}")
    tape = output.tape
    if verify:
        tape.replay()
    nodes = tape.nodes
    grads: list[np.ndarray | None] = [None] * len(nodes)
    grads[output.index] = np.ones_like(output.value)
    for i in range(output.index, -1, -1):
        node = nodes[i]
        g = grads[i]
        if g is None or not node.parents:
            continue
        parent_vals = [nodes[p].value for p in node.parents]
        contribs = _PRIMITIVES[node.op].vjp(g, node.value, *parent_vals, **node.attrs)
        for p, c in zip(node.parents, contribs):
            if c is None or nodes[p].op == "const":
                continue
            grads[p] = c if grads[p] is None else grads[p] + c
    result = {}
    for i, node in enumerate(nodes):
        if node.op != "param":
            continue
        key = node.name if node.name is not None else f"#{i}"
        g = grads[i]
        result[key] = np.zeros_like(node.value) if g is None else np.asarray(g).reshape(node.value.shape)
    return result
