"""Small reverse-mode automatic differentiation engine over numpy arrays.

A ``Var`` wraps an array value and records, for each differentiable parent,
the vector-Jacobian product that maps the output cotangent back to it. The
same elementwise helpers (``tanh``, ``sigmoid``, ...) accept plain arrays
too, so model code runs untraced for inference and traced for training.

Time derivatives of network outputs are obtained either by propagating a
second-order Taylor jet through the layers (exact, the default) or by a
three-point stencil in the time input. Both are composed from the traced
primitives, so parameter gradients flow through ``dq/dt`` and ``d2q/dt2``.
"""
import contextlib

import numpy as np

from .errors import NonFiniteLoss

_FAULTS = {}


class Var:
    __slots__ = ("value", "parents", "op")
    __array_ufunc__ = None  # make ndarray <op> Var defer to Var's reflected ops

    def __init__(self, value, parents=(), op="leaf"):
        self.value = np.asarray(value, dtype=float)
        self.parents = parents
        self.op = op

    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    @property
    def T(self):
        return transpose(self)

    def __repr__(self):
        return f"Var(op={self.op}, shape={self.value.shape})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, neg(other))

    def __rsub__(self, other):
        return add(other, neg(self))

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)


def value_of(x):
    return x.value if isinstance(x, Var) else np.asarray(x, dtype=float)


def _unbroadcast(g, shape):
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, n in enumerate(shape):
        if n == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


def _node(value, op, parents):
    """Build a traced node; ``parents`` is a list of (input, vjp) pairs."""
    live = tuple((p, f) for p, f in parents if isinstance(p, Var))
    if not live:
        return value
    if op in _FAULTS:
        factor = _FAULTS[op]
        live = tuple((p, (lambda g, f=f: factor * f(g))) for p, f in live)
    return Var(value, live, op)


@contextlib.contextmanager
def inject_fault(op, factor=1.5):
    """Scale the derivative of primitive ``op`` by ``factor`` (for self-tests)."""
    if op not in PRIMITIVES:
        raise ValueError(f"unknown primitive {op!r}")
    _FAULTS[op] = factor
    try:
        yield
    finally:
        _FAULTS.pop(op, None)


# --- primitives ------------------------------------------------------------

def add(a, b):
    av, bv = value_of(a), value_of(b)
    out = av + bv
    return _node(out, "add", [(a, lambda g: _unbroadcast(g, av.shape)),
                              (b, lambda g: _unbroadcast(g, bv.shape))])


def neg(a):
    if not isinstance(a, Var):
        return -np.asarray(a, dtype=float)
    return _node(-a.value, "neg", [(a, lambda g: -g)])


def mul(a, b):
    av, bv = value_of(a), value_of(b)
    return _node(av * bv, "mul", [(a, lambda g: _unbroadcast(g * bv, av.shape)),
                                  (b, lambda g: _unbroadcast(g * av, bv.shape))])


def div(a, b):
    av, bv = value_of(a), value_of(b)
    out = av / bv
    return _node(out, "div", [(a, lambda g: _unbroadcast(g / bv, av.shape)),
                              (b, lambda g: _unbroadcast(-g * out / bv, bv.shape))])


def matmul(a, b):
    av, bv = value_of(a), value_of(b)
    return _node(av @ bv, "matmul", [(a, lambda g: _unbroadcast(g @ bv.T, av.shape)),
                                     (b, lambda g: _unbroadcast(av.T @ g, bv.shape))])


def transpose(a):
    if not isinstance(a, Var):
        return np.asarray(a).T
    return _node(a.value.T, "transpose", [(a, lambda g: g.T)])


def column(a, j):
    """``a[:, j]`` for a 2-D input."""
    av = value_of(a)

    def vjp(g):
        out = np.zeros_like(av)
        out[:, j] = g
        return out

    return _node(av[:, j], "column", [(a, vjp)])


def take_rows(a, idx):
    """``a[idx]`` along the first axis."""
    av = value_of(a)
    idx = np.asarray(idx)

    def vjp(g):
        out = np.zeros_like(av)
        np.add.at(out, idx, g)
        return out

    return _node(av[idx], "take_rows", [(a, vjp)])


def square(a):
    av = value_of(a)
    return _node(av * av, "square", [(a, lambda g: 2.0 * av * g)])


def tanh(a):
    y = np.tanh(value_of(a))
    return _node(y, "tanh", [(a, lambda g: g * (1.0 - y * y))])


def sigmoid(a):
    x = value_of(a)
    y = 0.5 * (1.0 + np.tanh(0.5 * x))
    return _node(y, "sigmoid", [(a, lambda g: g * y * (1.0 - y))])


def sin(a):
    av = value_of(a)
    return _node(np.sin(av), "sin", [(a, lambda g: g * np.cos(av))])


def cos(a):
    av = value_of(a)
    return _node(np.cos(av), "cos", [(a, lambda g: -g * np.sin(av))])


def sum(a, axis=None):  # noqa: A001 - mirrors numpy naming
    av = value_of(a)
    out = av.sum(axis=axis)

    def vjp(g):
        if axis is not None:
            g = np.expand_dims(g, axis)
        return np.broadcast_to(g, av.shape).copy()

    return _node(out, "sum", [(a, vjp)])


def mean(a, axis=None):
    av = value_of(a)
    n = av.size if axis is None else av.shape[axis]
    return sum(a, axis) * (1.0 / n)


PRIMITIVES = ("add", "neg", "mul", "div", "matmul", "transpose", "column", "take_rows", "square",
              "tanh", "sigmoid", "sin", "cos", "sum")


# --- reverse sweep ---------------------------------------------------------

def _toposort(root):
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p, _ in node.parents:
            if id(p) not in seen:
                stack.append((p, False))
    return order


def backward(root, leaves, cotangent=None):
    """Cotangents of ``root`` with respect to each Var in ``leaves``.

    ``root`` is normally a scalar; for vector roots pass the output
    ``cotangent`` to get a vector-Jacobian product.
    """
    seed = np.ones_like(root.value) if cotangent is None else np.asarray(cotangent, dtype=float)
    grads = {id(root): seed}
    for node in reversed(_toposort(root)):
        g = grads.pop(id(node), None) if node.parents else grads.get(id(node))
        if g is None or not node.parents:
            continue
        for p, vjp in node.parents:
            contrib = vjp(g)
            key = id(p)
            if key in grads:
                grads[key] = grads[key] + contrib
            else:
                grads[key] = contrib
    return [grads.get(id(v), np.zeros_like(v.value)) for v in leaves]


def _leaves_of(params):
    if isinstance(params, np.ndarray):
        leaf = Var(params)
        return leaf, [leaf], lambda gs: gs[0].reshape(-1)
    tensors = params.tensors()
    leaves = [Var(t) for t in tensors]
    return params.with_tensors(leaves), leaves, lambda gs: np.concatenate([g.reshape(-1) for g in gs])


def value_and_grad(loss_fn, params, has_aux=False):
    """Evaluate ``loss_fn(params)`` and its exact gradient by reverse mode.

    ``params`` is either a flat array or an object exposing ``tensors()`` and
    ``with_tensors(list)`` (see ``network.MlpParams``). The gradient comes back
    flat in the canonical parameter order. With ``has_aux`` the loss function
    returns ``(loss, aux)`` and ``aux`` is passed through.
    """
    traced, leaves, flatten = _leaves_of(params)
    res = loss_fn(traced)
    loss, aux = res if has_aux else (res, None)
    lv = value_of(loss)
    if lv.size != 1:
        raise ValueError(f"loss must be scalar, got shape {lv.shape}")
    if not np.isfinite(lv):
        raise NonFiniteLoss(f"loss evaluated to {float(lv)}")
    if isinstance(loss, Var):
        g = flatten(backward(loss, leaves))
    else:
        g = flatten([np.zeros_like(v.value) for v in leaves])
    out = (float(lv), g)
    return out + (aux,) if has_aux else out


def grad(loss_fn, params):
    return value_and_grad(loss_fn, params)[1]


# --- time jets -------------------------------------------------------------

def stencil_jet(fn, t, h):
    """Value, first and second derivative of ``fn`` at ``t`` by central stencil."""
    lo, mid, hi = fn(t - h), fn(t), fn(t + h)
    d1 = (hi - lo) * (0.5 / h)
    d2 = (hi - 2.0 * mid + lo) * (1.0 / (h * h))
    return mid, d1, d2


def tanh_jet(z, dz, ddz):
    """tanh applied to a second-order jet (z, z', z'')."""
    a = tanh(z)
    d = 1.0 - square(a)
    da = d * dz
    dz2 = square(dz)
    if ddz is None:
        dda = -2.0 * a * d * dz2
    else:
        dda = d * (ddz - 2.0 * a * dz2)
    return a, da, dda


def sigmoid_jet(z, dz, ddz):
    y = sigmoid(z)
    s = y * (1.0 - y)
    dy = s * dz
    curv = (1.0 - 2.0 * y) * square(dz)
    ddy = s * (curv if ddz is None else ddz + curv)
    return y, dy, ddy


def check_grad(fn, x, h=1e-5, order=2):
    """Central finite-difference gradient of scalar ``fn`` at flat array ``x``.

    ``order=4`` uses the five-point stencil, which tolerates a larger ``h``
    when the function itself amplifies rounding.
    """
    if order not in (2, 4):
        raise ValueError("order must be 2 or 4")
    x = np.array(x, dtype=float)
    out = np.empty_like(x)

    def at(i, old, d):
        x.flat[i] = old + d
        return float(value_of(fn(x)))

    for i in range(x.size):
        old = x.flat[i]
        if order == 2:
            out.flat[i] = (at(i, old, h) - at(i, old, -h)) / (2 * h)
        else:
            out.flat[i] = (8 * (at(i, old, h) - at(i, old, -h))
                           - (at(i, old, 2 * h) - at(i, old, -2 * h))) / (12 * h)
        x.flat[i] = old
    return out


def relative_error(a, b, floor=1e-8):
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
