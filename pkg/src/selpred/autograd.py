"""Dense float64 arrays with reverse-mode automatic differentiation.

Small tape-based engine, just enough for multilayer perceptrons and the
coverage-penalized selective objective. Every operation records a backward
closure on the participating tensors; ``Tensor.backward()`` walks the tape
in reverse topological order and accumulates gradients into the leaves.
"""

from __future__ import annotations

import contextlib

import numpy as np

__all__ = [
    "Tensor",
    "ShapeError",
    "DomainError",
    "GradCheckError",
    "no_grad",
    "matmul",
    "relu",
    "max0",
    "sigmoid",
    "exp",
    "log",
    "square",
    "sqrt",
    "clamp_min",
    "zero_grads",
    "finite_difference_check",
]


class ShapeError(ValueError):
    """Operand shapes violate an operation's contract."""


class DomainError(ValueError):
    """Operand values lie outside an operation's domain."""


class GradCheckError(RuntimeError):
    """The finite-difference oracle cannot be applied (e.g. non-deterministic fn)."""


# When True, every op asserts its result is finite. Debug aid, off by default.
DEBUG_NANS = False

_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Disable tape recording inside the block (eval/inference speed-up)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def _check_finite(data):
    if DEBUG_NANS and not np.all(np.isfinite(data)):
        raise FloatingPointError("non-finite values produced by an operation")


class Tensor:
    """Dense float64 array participating in the gradient tape."""

    def __init__(self, data, requires_grad=False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._parents = ()
        self._backward = None
        self._consumed = False

    # -- construction helpers -------------------------------------------------

    @staticmethod
    def _op(data, parents, backward):
        """Build a non-leaf tensor; skips tape recording when grads are off."""
        _check_finite(data)
        out = Tensor(data)
        if _grad_enabled and any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = tuple(parents)
            out._backward = backward
        return out

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def item(self):
        return float(self.data)

    def _accum(self, g):
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    # -- arithmetic -----------------------------------------------------------

    def __add__(self, other):
        return _binary(self, other, np.add, lambda a, b, g: (g, g))

    __radd__ = __add__

    def __sub__(self, other):
        return _binary(self, other, np.subtract, lambda a, b, g: (g, -g))

    def __rsub__(self, other):
        return _as_tensor(other) - self

    def __mul__(self, other):
        return _binary(self, other, np.multiply,
                       lambda a, b, g: (g * b.data, g * a.data))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return _binary(self, other, np.divide,
                       lambda a, b, g: (g / b.data,
                                        -g * a.data / (b.data * b.data)))

    def __rtruediv__(self, other):
        return _as_tensor(other) / self

    def __neg__(self):
        return self * -1.0

    def __matmul__(self, other):
        return matmul(self, other)

    def reshape(self, *shape):
        old = self.data.shape
        out_data = self.data.reshape(*shape)

        def backward(g):
            self._accum(g.reshape(old))

        return Tensor._op(out_data, (self,), backward)

    # -- reductions -----------------------------------------------------------

    def sum(self, axis=None, keepdims=False):
        _check_axis(self, axis)
        _check_nonempty(self, "sum")
        out_data = self.data.sum(axis=axis, keepdims=keepdims)

        def backward(g):
            self._accum(np.broadcast_to(_restore_dims(g, self.data.shape, axis, keepdims),
                                        self.data.shape).copy())

        return Tensor._op(out_data, (self,), backward)

    def mean(self, axis=None, keepdims=False):
        _check_axis(self, axis)
        _check_nonempty(self, "mean")
        count = self.data.size if axis is None else self.data.shape[axis]
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / count)

    def max(self, axis=None, keepdims=False):
        _check_axis(self, axis)
        _check_nonempty(self, "max")
        out_data = self.data.max(axis=axis, keepdims=keepdims)

        def backward(g):
            full = _restore_dims(g, self.data.shape, axis, keepdims)
            peak = _restore_dims(out_data, self.data.shape, axis, keepdims)
            mask = (self.data == peak)
            ties = mask.sum(axis=axis, keepdims=True) if axis is not None \
                else mask.sum()
            self._accum(mask * full / ties)

        return Tensor._op(out_data, (self,), backward)

    # -- backward pass --------------------------------------------------------

    def backward(self):
        """Accumulate d(self)/d(leaf) into every requires_grad leaf.

        ``self`` must be scalar. A second backward from the same root without
        re-running the forward pass is rejected.
        """
        if self.data.size != 1:
            raise ShapeError(
                f"backward root must be scalar, got shape {self.data.shape}")
        if self._consumed:
            raise RuntimeError(
                "backward already ran from this tensor; re-run the forward pass")
        self._consumed = True

        topo = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))

        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward is not None:
                node._backward(node.grad)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


def _as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(g, shape):
    """Sum gradient over axes that were expanded by numpy broadcasting."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, s in enumerate(shape):
        if s == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


def _binary(a, b, fwd, grads):
    a, b = _as_tensor(a), _as_tensor(b)
    try:
        np.broadcast_shapes(a.data.shape, b.data.shape)
    except ValueError:
        raise ShapeError(
            f"shapes {a.data.shape} and {b.data.shape} are not broadcast-compatible")
    out_data = fwd(a.data, b.data)

    def backward(g):
        ga, gb = grads(a, b, g)
        if a.requires_grad:
            a._accum(_unbroadcast(ga, a.data.shape))
        if b.requires_grad:
            b._accum(_unbroadcast(gb, b.data.shape))

    return Tensor._op(out_data, (a, b), backward)


def _unary(x, fwd, grad):
    x = _as_tensor(x)
    out_data = fwd(x.data)

    def backward(g):
        x._accum(grad(x.data, out_data, g))

    return Tensor._op(out_data, (x,), backward)


def _check_axis(t, axis):
    if axis is not None and not (-t.data.ndim <= axis < t.data.ndim):
        raise ShapeError(f"axis {axis} out of range for rank {t.data.ndim}")


def _check_nonempty(t, opname):
    if t.data.size == 0:
        raise DomainError(f"{opname} of an empty tensor is undefined")


def _restore_dims(g, shape, axis, keepdims):
    g = np.asarray(g)
    if axis is not None and not keepdims:
        g = np.expand_dims(g, axis)
    return np.broadcast_to(g, shape) if axis is not None else g


# -- named operations ---------------------------------------------------------


def matmul(a, b):
    """2-D matrix product with dA = g @ B.T and dB = A.T @ g."""
    a, b = _as_tensor(a), _as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.data.shape[1] != b.data.shape[0]:
        raise ShapeError(
            f"matmul requires (m,k) x (k,n), got {a.data.shape} and {b.data.shape}")
    out_data = a.data @ b.data

    def backward(g):
        if a.requires_grad:
            a._accum(g @ b.data.T)
        if b.requires_grad:
            b._accum(a.data.T @ g)

    return Tensor._op(out_data, (a, b), backward)


# When set (via watch_kink_margins), collects min |input| of every relu/max0
# evaluation, so gradient checks can verify the function is differentiable at
# the probe point (central differences are invalid across the kink).
_kink_watch = None


@contextlib.contextmanager
def watch_kink_margins():
    global _kink_watch
    prev = _kink_watch
    _kink_watch = []
    try:
        yield _kink_watch
    finally:
        _kink_watch = prev


def relu(x):
    x = _as_tensor(x)
    if _kink_watch is not None and x.data.size:
        _kink_watch.append(float(np.min(np.abs(x.data))))
    return _unary(x, lambda d: np.maximum(d, 0.0),
                  lambda d, o, g: g * (d > 0.0))


# Quadratic-penalty building block max(0, a); same kernel as relu.
max0 = relu


def sigmoid(x):
    def fwd(d):
        out = np.empty_like(d)
        pos = d >= 0
        out[pos] = 1.0 / (1.0 + np.exp(-d[pos]))
        ez = np.exp(d[~pos])
        out[~pos] = ez / (1.0 + ez)
        return out

    return _unary(x, fwd, lambda d, o, g: g * o * (1.0 - o))


def exp(x):
    return _unary(x, np.exp, lambda d, o, g: g * o)


def log(x):
    x = _as_tensor(x)
    if np.any(x.data <= 0.0):
        raise DomainError("log requires strictly positive input")
    return _unary(x, np.log, lambda d, o, g: g / d)


def square(x):
    return _unary(x, np.square, lambda d, o, g: g * 2.0 * d)


def sqrt(x):
    x = _as_tensor(x)
    if np.any(x.data < 0.0):
        raise DomainError("sqrt requires non-negative input")
    return _unary(x, np.sqrt, lambda d, o, g: g * 0.5 / o)


def clamp_min(x, lo):
    """max(x, lo) elementwise against a constant; gradient is 0 where clamped."""
    return _unary(x, lambda d: np.maximum(d, lo),
                  lambda d, o, g: g * (d > lo))


def zero_grads(params):
    for p in params:
        p.grad = None


def finite_difference_check(scalar_fn, params, h=1e-5, floor=1e-8):
    """Compare analytic gradients of ``scalar_fn()`` against central differences.

    ``scalar_fn`` must be a deterministic zero-argument callable returning a
    scalar Tensor built from ``params``. Returns the worst relative error
    |analytic - numeric| / max(|analytic|, |numeric|) over every parameter
    coordinate, with an absolute floor: differences below ``floor`` count as
    exact agreement (they are indistinguishable from central-difference
    roundoff noise).
    """
    if h <= 0:
        raise ValueError("step h must be positive")
    v1 = float(scalar_fn().data)
    v2 = float(scalar_fn().data)
    if v1 != v2:
        raise GradCheckError(
            f"scalar_fn is not deterministic ({v1!r} != {v2!r})")

    zero_grads(params)
    out = scalar_fn()
    out.backward()
    analytic = [p.grad.copy() if p.grad is not None else np.zeros_like(p.data)
                for p in params]

    worst = 0.0
    for p, ga in zip(params, analytic):
        flat = p.data.reshape(-1)
        gflat = ga.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            fp = float(scalar_fn().data)
            flat[i] = orig - h
            fm = float(scalar_fn().data)
            flat[i] = orig
            numeric = (fp - fm) / (2.0 * h)
            diff = abs(numeric - gflat[i])
            if diff <= floor:
                continue
            worst = max(worst, diff / max(abs(numeric), abs(gflat[i])))
    return worst
