"""Dense double-precision tensors with define-by-run reverse-mode autodiff.

Every op builds a node holding references to its parents and a closure that
pushes the output gradient back to them.  ``backward`` topologically sorts
the graph reachable from a scalar root, replays the closures once each and
then releases the graph.

Broadcasting is deliberately narrow: elementwise ops accept operands of the
same shape or a scalar.  Bias vectors go through :func:`add_bias` and
``matmul`` follows numpy's batched-matmul rules.
"""

from __future__ import annotations

import contextlib
from typing import Callable, Iterable, Sequence

import numpy as np

__all__ = [
    "Tensor",
    "DimensionError",
    "UsageError",
    "NonFiniteError",
    "tensor",
    "zeros",
    "ones",
    "no_grad",
    "finite_checks",
    "set_finite_checks",
    "add",
    "sub",
    "mul",
    "scale",
    "neg",
    "tanh",
    "relu",
    "gelu",
    "exp",
    "square",
    "huber",
    "matmul",
    "add_bias",
    "add_const",
    "softmax",
    "log_softmax",
    "layer_norm",
    "sum",
    "mean",
    "reshape",
    "transpose",
    "getitem",
    "shift_time",
    "concat",
    "backward",
    "tape",
    "grad_check",
    "directional_grad_check",
]


class DimensionError(ValueError):
    """Operand shapes are incompatible."""


class UsageError(ValueError):
    """An operation was called outside its contract."""


class NonFiniteError(FloatingPointError):
    """A forward op produced NaN or Inf from finite inputs."""


_GRAD_ENABLED = True
_CHECK_FINITE = True


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block (inference, rollouts)."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


def set_finite_checks(enabled: bool) -> bool:
    """Toggle NaN/Inf detection on forward outputs; returns the old setting."""
    global _CHECK_FINITE
    prev = _CHECK_FINITE
    _CHECK_FINITE = bool(enabled)
    return prev


@contextlib.contextmanager
def finite_checks(enabled: bool):
    prev = set_finite_checks(enabled)
    try:
        yield
    finally:
        set_finite_checks(prev)


class Tensor:
    """n-d float64 array with an optional gradient.

    Leaves created by the user carry ``requires_grad``; interior nodes
    inherit it from their parents.  ``grad`` is allocated lazily by
    :func:`backward` and accumulates across calls until :meth:`zero_grad`.
    """

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward", "name")
    __array_priority__ = 1000

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        arr = np.array(data, dtype=np.float64)
        if arr.ndim == 0:
            arr = arr.reshape(())
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], tuple] | None = None
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else _raise_item()

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def backward(self) -> None:
        backward(self)

    def __repr__(self) -> str:
        tag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{tag})"

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return add(neg(self), other)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return getitem(self, idx)


def _raise_item():
    raise UsageError("item() requires a single-element tensor")


def tensor(data, requires_grad: bool = False, name: str | None = None) -> Tensor:
    return Tensor(data, requires_grad=requires_grad, name=name)


def zeros(shape, requires_grad: bool = False) -> Tensor:
    return Tensor(np.zeros(shape), requires_grad=requires_grad)


def ones(shape, requires_grad: bool = False) -> Tensor:
    return Tensor(np.ones(shape), requires_grad=requires_grad)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data: np.ndarray, parents: Sequence[Tensor], backward_fn, op: str) -> Tensor:
    if _CHECK_FINITE and not np.all(np.isfinite(data)):
        if all(np.all(np.isfinite(p.data)) for p in parents):
            raise NonFiniteError(f"{op} produced non-finite values")
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.name = None
    live = [p for p in parents if p.requires_grad]
    if _GRAD_ENABLED and live:
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward_fn
    else:
        out.requires_grad = False
        out._parents = ()
        out._backward = None
    return out


def _accum(t: Tensor, g: np.ndarray) -> None:
    if t.grad is None:
        t.grad = np.array(g, dtype=np.float64, copy=True)
    else:
        t.grad = t.grad + g


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def _check_elementwise(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape == b.shape or a.ndim == 0 or b.ndim == 0:
        return
    raise DimensionError(f"{op}: shapes {a.shape} and {b.shape} differ")


def _fit(g: np.ndarray, t: Tensor) -> np.ndarray:
    # scalar operands receive the summed gradient
    return np.asarray(g.sum()).reshape(()) if t.ndim == 0 and g.ndim else g


# elementwise ----------------------------------------------------------------


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _check_elementwise(a, b, "add")
    return _make(a.data + b.data, (a, b), lambda g: (_fit(g, a), _fit(g, b)), "add")


def sub(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _check_elementwise(a, b, "sub")
    return _make(a.data - b.data, (a, b), lambda g: (_fit(g, a), _fit(-g, b)), "sub")


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _check_elementwise(a, b, "mul")
    return _make(
        a.data * b.data,
        (a, b),
        lambda g: (_fit(g * b.data, a), _fit(g * a.data, b)),
        "mul",
    )


def scale(a: Tensor, c: float) -> Tensor:
    c = float(c)
    return _make(a.data * c, (a,), lambda g: (g * c,), "scale")


def neg(a: Tensor) -> Tensor:
    return scale(a, -1.0)


def add_const(a: Tensor, c) -> Tensor:
    """Add an untracked array, e.g. an additive attention mask.

    ``c`` must match ``a`` exactly or match its trailing dimensions.
    """
    c = np.asarray(c, dtype=np.float64)
    if c.ndim and a.shape[a.ndim - c.ndim:] != c.shape:
        raise DimensionError(f"add_const: {c.shape} does not match {a.shape}")
    return _make(a.data + c, (a,), lambda g: (g,), "add_const")


def tanh(a: Tensor) -> Tensor:
    y = np.tanh(a.data)
    return _make(y, (a,), lambda g: (g * (1.0 - y * y),), "tanh")


def relu(a: Tensor) -> Tensor:
    m = a.data > 0
    return _make(a.data * m, (a,), lambda g: (g * m,), "relu")


_GELU_C = np.sqrt(2.0 / np.pi)


def gelu(a: Tensor) -> Tensor:
    """tanh-approximated GELU."""
    x = a.data
    x2 = x * x
    t = np.tanh(_GELU_C * x * (1.0 + 0.044715 * x2))

    def bw(g):
        du = _GELU_C * (1.0 + 3 * 0.044715 * x2)
        return (g * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du),)

    return _make(0.5 * x * (1.0 + t), (a,), bw, "gelu")


def exp(a: Tensor) -> Tensor:
    with np.errstate(over="ignore"):
        y = np.exp(a.data)
    return _make(y, (a,), lambda g: (g * y,), "exp")


def square(a: Tensor) -> Tensor:
    return _make(a.data * a.data, (a,), lambda g: (2.0 * g * a.data,), "square")


def huber(a: Tensor, delta: float = 1.0) -> Tensor:
    """Elementwise smooth-L1: v^2/(2 delta) for |v| < delta, else |v| - delta/2."""
    x = a.data
    inside = np.abs(x) < delta
    y = np.where(inside, 0.5 * x * x / delta, np.abs(x) - 0.5 * delta)
    return _make(y, (a,), lambda g: (g * np.where(inside, x / delta, np.sign(x)),), "huber")


# linear algebra -------------------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise DimensionError("matmul needs operands with at least 2 dims")
    if a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul: inner dims {a.shape} @ {b.shape}")
    try:
        y = np.matmul(a.data, b.data)
    except ValueError as exc:
        raise DimensionError(str(exc)) from None

    def bw(g):
        ga = gb = None
        if a.requires_grad:
            ga = _unbroadcast(np.matmul(g, np.swapaxes(b.data, -1, -2)), a.shape)
        if b.requires_grad:
            if b.ndim == 2:
                # fold batch dims into one GEMM instead of summing per-batch products
                gb = a.data.reshape(-1, a.shape[-1]).T @ g.reshape(-1, g.shape[-1])
            else:
                gb = _unbroadcast(np.matmul(np.swapaxes(a.data, -1, -2), g), b.shape)
        return ga, gb

    return _make(y, (a, b), bw, "matmul")


def add_bias(x: Tensor, b: Tensor) -> Tensor:
    """x[..., C] + b[C]."""
    if b.ndim != 1 or x.shape[-1] != b.shape[0]:
        raise DimensionError(f"add_bias: {x.shape} + {b.shape}")
    n = b.shape[0]
    return _make(x.data + b.data, (x, b), lambda g: (g, g.reshape(-1, n).sum(axis=0)), "add_bias")


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    if not -x.ndim <= axis < x.ndim:
        raise UsageError(f"softmax: axis {axis} out of range for {x.shape}")
    e = np.exp(x.data - x.data.max(axis=axis, keepdims=True))
    y = e / e.sum(axis=axis, keepdims=True)
    return _make(y, (x,), lambda g: (y * (g - (g * y).sum(axis=axis, keepdims=True)),), "softmax")


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    z = x.data - x.data.max(axis=axis, keepdims=True)
    y = z - np.log(np.exp(z).sum(axis=axis, keepdims=True))
    p = np.exp(y)
    return _make(y, (x,), lambda g: (g - p * g.sum(axis=axis, keepdims=True),), "log_softmax")


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize over the last axis, then apply per-feature gain and bias."""
    if eps <= 0:
        raise UsageError("layer_norm: eps must be positive")
    n = x.shape[-1]
    if gain.shape != (n,) or bias.shape != (n,):
        raise DimensionError(f"layer_norm: gain/bias must have shape ({n},)")
    xc = x.data - x.data.mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt((xc * xc).mean(axis=-1, keepdims=True) + eps)
    xhat = xc * inv

    def bw(g):
        gh = g * gain.data
        gx = inv * (gh - gh.mean(axis=-1, keepdims=True)
                    - xhat * (gh * xhat).mean(axis=-1, keepdims=True))
        return gx, (g * xhat).reshape(-1, n).sum(axis=0), g.reshape(-1, n).sum(axis=0)

    return _make(xhat * gain.data + bias.data, (x, gain, bias), bw, "layer_norm")


# reductions and shape ops -----------------------------------------------------


def sum(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001
    y = np.asarray(x.data.sum(axis=axis, keepdims=keepdims), dtype=np.float64)

    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape),)

    return _make(y, (x,), bw, "sum")


def mean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    if axis is None:
        count = x.size
    else:
        axes = (axis,) if isinstance(axis, int) else tuple(axis)
        count = int(np.prod([x.shape[a] for a in axes]))
    return scale(sum(x, axis=axis, keepdims=keepdims), 1.0 / count)


def reshape(x: Tensor, shape) -> Tensor:
    return _make(x.data.reshape(shape), (x,), lambda g: (g.reshape(x.shape),), "reshape")


def transpose(x: Tensor, axes) -> Tensor:
    axes = tuple(axes)
    inverse = tuple(int(i) for i in np.argsort(axes))
    return _make(np.transpose(x.data, axes), (x,), lambda g: (np.transpose(g, inverse),), "transpose")


def _is_basic_index(idx) -> bool:
    parts = idx if isinstance(idx, tuple) else (idx,)
    return all(isinstance(p, (int, np.integer, slice)) or p is Ellipsis or p is None for p in parts)


def getitem(x: Tensor, idx) -> Tensor:
    basic = _is_basic_index(idx)

    def bw(g):
        full = np.zeros_like(x.data)
        if basic:
            full[idx] = g
        else:
            np.add.at(full, idx, g)
        return (full,)

    return _make(np.array(x.data[idx], dtype=np.float64), (x,), bw, "getitem")


def shift_time(x: Tensor, lag: int, axis: int = 1) -> Tensor:
    """Delay a sequence by ``lag`` steps along ``axis``; negative lags advance it.

    Vacated positions are zero-filled, so ``shift_time(x, k)[t] = x[t - k]``.
    """
    lag = int(lag)
    if lag == 0:
        return x
    n = x.shape[axis]
    y = np.zeros_like(x.data)
    src = [slice(None)] * x.ndim
    dst = [slice(None)] * x.ndim
    if abs(lag) >= n:
        return _make(y, (x,), lambda g: (np.zeros_like(g),), "shift_time")
    if lag > 0:
        src[axis], dst[axis] = slice(0, n - lag), slice(lag, n)
    else:
        src[axis], dst[axis] = slice(-lag, n), slice(0, n + lag)
    src_t, dst_t = tuple(src), tuple(dst)
    y[dst_t] = x.data[src_t]

    def bw(g):
        gx = np.zeros_like(g)
        gx[src_t] = g[dst_t]
        return (gx,)

    return _make(y, (x,), bw, "shift_time")


def concat(xs: Sequence[Tensor], axis: int = -1) -> Tensor:
    xs = list(xs)
    bounds = np.cumsum([t.shape[axis] for t in xs])[:-1]
    return _make(
        np.concatenate([t.data for t in xs], axis=axis),
        xs,
        lambda g: tuple(np.split(g, bounds, axis=axis)),
        "concat",
    )


# reverse pass -----------------------------------------------------------------


def tape(root: Tensor) -> list[Tensor]:
    """Nodes reachable from ``root`` in topological order (parents first)."""
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def backward(root: Tensor, retain_graph: bool = False) -> None:
    """Accumulate d(root)/d(leaf) into every reachable leaf with requires_grad."""
    if root.size != 1:
        raise UsageError(f"backward needs a scalar root, got shape {root.shape}")
    if not root.requires_grad:
        raise UsageError("root does not depend on any tensor requiring grad")
    order = tape(root)
    grads: dict[int, np.ndarray] = {id(root): np.ones_like(root.data)}
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node._backward is None:
            _accum(node, g)
            continue
        for p, gp in zip(node._parents, node._backward(g)):
            if gp is None or not p.requires_grad:
                continue
            prev = grads.get(id(p))
            grads[id(p)] = gp if prev is None else prev + gp
    if not retain_graph:
        for node in order:
            if node._backward is not None:
                node._parents = ()
                node._backward = None


def grad_check(
    f: Callable[[Tensor], Tensor],
    x: Tensor,
    eps: float = 1e-5,
    indices: Iterable[tuple[int, ...]] | None = None,
) -> float:
    """Max relative error between autodiff and central differences.

    The error per coordinate is |a - n| / (|a| + |n| + 1e-12).  ``indices``
    restricts the comparison to a subset of coordinates of ``x``; all
    coordinates are checked by default.
    """
    x.grad = None
    x.requires_grad = True
    out = f(x)
    backward(out)
    analytic = np.zeros_like(x.data) if x.grad is None else x.grad.copy()
    x.grad = None
    if indices is None:
        indices = list(np.ndindex(*x.shape))
    worst = 0.0
    with no_grad():
        for idx in indices:
            orig = x.data[idx]
            x.data[idx] = orig + eps
            fp = float(f(x).data.sum())
            x.data[idx] = orig - eps
            fm = float(f(x).data.sum())
            x.data[idx] = orig
            num = (fp - fm) / (2.0 * eps)
            a = analytic[idx]
            err = abs(a - num) / (abs(a) + abs(num) + 1e-12)
            worst = max(worst, err)
    return worst


def directional_grad_check(
    f: Callable[[Tensor], Tensor],
    x: Tensor,
    rng: np.random.Generator,
    eps: float = 1e-5,
) -> float:
    """Relative error of the analytic directional derivative along a random
    unit direction, against a central difference along that direction."""
    x.grad = None
    x.requires_grad = True
    backward(f(x))
    analytic_grad = np.zeros_like(x.data) if x.grad is None else x.grad.copy()
    x.grad = None
    v = rng.normal(size=x.shape)
    v /= np.linalg.norm(v)
    orig = x.data.copy()
    with no_grad():
        x.data = orig + eps * v
        fp = float(f(x).data.sum())
        x.data = orig - eps * v
        fm = float(f(x).data.sum())
    x.data = orig
    a = float((analytic_grad * v).sum())
    num = (fp - fm) / (2.0 * eps)
    return abs(a - num) / (abs(a) + abs(num) + 1e-12)
