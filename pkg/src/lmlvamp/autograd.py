"""Minimal reverse-mode autodiff over numpy arrays, complex-aware.

Covers exactly the operation set the unrolled algorithm needs. Complex arrays
are treated as pairs of reals; the gradient of a real scalar loss with respect
to a complex variable z is stored as dL/dRe(z) + 1j*dL/dIm(z). With that
convention the adjoint of the unitary DFT is the unitary inverse DFT and no
transform matrix is ever materialized.

When no participating variable carries a tape, operations just compute values,
so the same forward code serves both training and plain inference.
"""

from __future__ import annotations

import numpy as np


class AutodiffError(RuntimeError):
    pass


class Tape:
    """Record of forward operations, replayed in reverse by backward()."""

    def __init__(self):
        self.nodes: list[Var] = []

    def watch(self, value) -> "Var":
        """Register a leaf parameter whose gradient should be accumulated."""
        return Var(np.asarray(value, dtype=float), tape=self)

    def backward(self, loss: "Var"):
        backward(self, loss)

    def release(self):
        """Break Var/closure reference cycles so large graphs free immediately."""
        for node in self.nodes:
            node._backward_fn = None
            node._parents = ()
            node.grad = None
        self.nodes.clear()


class Var:
    __slots__ = ("value", "grad", "tape", "_parents", "_backward_fn")

    def __init__(self, value, tape=None, parents=(), backward_fn=None):
        self.value = np.asarray(value)
        self.tape = tape
        self.grad = None
        self._parents = parents
        self._backward_fn = backward_fn
        if tape is not None:
            tape.nodes.append(self)

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        return f"Var(shape={self.value.shape}, dtype={self.value.dtype})"

    # operator sugar (constants allowed on either side)
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return mul(self, -1.0)


def backward(tape: Tape, loss: Var):
    """Reverse sweep: populate .grad on every ancestor of loss, leaves included."""
    if loss.tape is not tape:
        raise AutodiffError("loss was not recorded on this tape (backward before forward?)")
    if not tape.nodes:
        raise AutodiffError("empty tape: no forward pass recorded")
    if loss.value.shape != () or np.iscomplexobj(loss.value):
        raise AutodiffError("loss must be a real scalar")
    for node in tape.nodes:
        node.grad = None
    loss.grad = np.asarray(1.0)
    for node in reversed(tape.nodes):
        if node.grad is not None and node._backward_fn is not None:
            node._backward_fn(node.grad)


def _value(x):
    return x.value if isinstance(x, Var) else np.asarray(x)


def _tape_of(*args):
    for a in args:
        if isinstance(a, Var) and a.tape is not None:
            return a.tape
    return None


def _accumulate(var, g):
    if not isinstance(var, Var) or var.tape is None:
        return
    g = _match_grad(g, var.value)
    var.grad = g if var.grad is None else var.grad + g


def _match_grad(g, value):
    """Reduce a broadcast gradient back to value's shape; drop imag for real vars."""
    g = np.asarray(g)
    if not np.iscomplexobj(value) and np.iscomplexobj(g):
        g = g.real
    extra = g.ndim - np.ndim(value)
    for _ in range(extra):
        g = g.sum(axis=0)
    shape = np.shape(value)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g.reshape(shape)


def _make(value, parents, backward_fn):
    tape = _tape_of(*parents)
    return Var(value, tape=tape, parents=parents, backward_fn=backward_fn if tape else None)


def add(a, b):
    av, bv = _value(a), _value(b)

    def bwd(g):
        _accumulate(a, g)
        _accumulate(b, g)

    return _make(av + bv, (a, b), bwd)


def sub(a, b):
    av, bv = _value(a), _value(b)

    def bwd(g):
        _accumulate(a, g)
        _accumulate(b, -g)

    return _make(av - bv, (a, b), bwd)


def mul(a, b):
    av, bv = _value(a), _value(b)

    def bwd(g):
        _accumulate(a, np.conj(bv) * g)
        _accumulate(b, np.conj(av) * g)

    return _make(av * bv, (a, b), bwd)


def div(a, b):
    av, bv = _value(a), _value(b)

    def bwd(g):
        _accumulate(a, np.conj(1.0 / bv) * g)
        _accumulate(b, np.conj(-av / bv**2) * g)

    return _make(av / bv, (a, b), bwd)


def _real_unary(a, fn, dfn):
    av = _value(a)
    if np.iscomplexobj(av):
        raise AutodiffError("real-only operation applied to complex values")
    out = fn(av)

    def bwd(g):
        _accumulate(a, dfn(av, out) * g)

    return _make(out, (a,), bwd)


def exp(a):
    return _real_unary(a, np.exp, lambda x, y: y)


def log(a):
    return _real_unary(a, np.log, lambda x, y: 1.0 / x)


def sqrt(a):
    return _real_unary(a, np.sqrt, lambda x, y: 0.5 / y)


def sigmoid(a):
    from scipy.special import expit

    return _real_unary(a, expit, lambda x, y: y * (1.0 - y))


def clamp(a, lo: float, hi: float):
    """Clip with pass-through gradient strictly inside [lo, hi]."""
    av = _value(a)
    out = np.clip(av, lo, hi)

    def bwd(g):
        _accumulate(a, g * ((av >= lo) & (av <= hi)))

    return _make(out, (a,), bwd)


def cabs(a):
    """|z| for complex z, gradient z/|z| (zero at the origin)."""
    av = _value(a)
    out = np.abs(av)

    def bwd(g):
        safe = np.where(out == 0, 1.0, out)
        _accumulate(a, g * av / safe)

    return _make(out, (a,), bwd)


def fft_u(a):
    """Unitary DFT along the last axis; adjoint is the unitary inverse DFT."""
    av = _value(a)
    n = av.shape[-1]
    out = np.fft.fft(av, axis=-1) / np.sqrt(n)

    def bwd(g):
        _accumulate(a, np.fft.ifft(np.asarray(g, dtype=complex), axis=-1) * np.sqrt(n))

    return _make(out, (a,), bwd)


def ifft_u(a):
    av = _value(a)
    n = av.shape[-1]
    out = np.fft.ifft(av, axis=-1) * np.sqrt(n)

    def bwd(g):
        _accumulate(a, np.fft.fft(np.asarray(g, dtype=complex), axis=-1) / np.sqrt(n))

    return _make(out, (a,), bwd)


def vsum(a, axis=None, keepdims=False):
    av = _value(a)
    out = av.sum(axis=axis, keepdims=keepdims)

    def bwd(g):
        g = np.asarray(g)
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        _accumulate(a, np.broadcast_to(g, av.shape))

    return _make(out, (a,), bwd)


def vmean(a, axis=None, keepdims=False):
    av = _value(a)
    count = av.size if axis is None else av.shape[axis]
    return mul(vsum(a, axis=axis, keepdims=keepdims), 1.0 / count)


def sumabs2(a, axis=None, keepdims=False):
    """Sum of squared magnitudes; works for real or complex a."""
    av = _value(a)
    out = (np.abs(av) ** 2).sum(axis=axis, keepdims=keepdims)

    def bwd(g):
        g = np.asarray(g)
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        _accumulate(a, 2.0 * av * g)

    return _make(out, (a,), bwd)


def reshape(a, shape):
    av = _value(a)
    out = av.reshape(shape)

    def bwd(g):
        _accumulate(a, np.asarray(g).reshape(av.shape))

    return _make(out, (a,), bwd)


def stack_last(parts):
    """Stack equal-shaped real arrays along a new last axis."""
    values = [_value(p) for p in parts]
    out = np.stack(values, axis=-1)

    def bwd(g):
        g = np.asarray(g)
        for i, p in enumerate(parts):
            _accumulate(p, g[..., i])

    return _make(out, tuple(parts), bwd)


def select_last(a, index: int):
    """a[..., index] with scatter backward."""
    av = _value(a)
    out = av[..., index]

    def bwd(g):
        full = np.zeros_like(av)
        full[..., index] = g
        _accumulate(a, full)

    return _make(out, (a,), bwd)


def linear(x, w, b):
    """x @ w.T + b for 2-D real x (rows = samples), w of shape (out, in)."""
    xv, wv, bv = _value(x), _value(w), _value(b)
    out = xv @ wv.T + bv

    def bwd(g):
        g = np.asarray(g)
        _accumulate(x, g @ wv)
        _accumulate(w, g.T @ xv)
        _accumulate(b, g.sum(axis=0))

    return _make(out, (x, w, b), bwd)


def broadcast_to(a, shape):
    av = _value(a)
    out = np.broadcast_to(av, shape)

    def bwd(g):
        _accumulate(a, g)

    return _make(out, (a,), bwd)
