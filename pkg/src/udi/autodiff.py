"""Minimal reverse-mode automatic differentiation over dense float64 arrays.

Every differentiable value is a :class:`Tensor`.  Operations build a graph on
the fly; :func:`backward` walks it in reverse topological order.  Leaf tensors
accumulate into ``.grad`` across calls, intermediate tensors have ``.grad``
overwritten, so calling ``backward`` twice on one graph doubles leaf grads.

Broadcasting is limited to adding (or subtracting) a bias row of shape
``(m,)`` or ``(1, m)`` to an ``(n, m)`` tensor, plus python scalars.
"""

import base64
import hashlib
import json
from collections import OrderedDict

import numpy as np

from . import _kernels
from .errors import ContractError, DimensionError, NumericError

LOG_CLAMP = 1e-12


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "op")

    def __init__(self, data, requires_grad=False, _parents=(), _backward=None, op=""):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = _parents
        self._backward = _backward
        self.op = op

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    @property
    def is_leaf(self):
        return not self._parents

    def item(self):
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else None

    def numpy(self):
        return self.data

    def detach(self):
        return Tensor(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, op={self.op!r}, requires_grad={self.requires_grad})"

    __add__ = lambda self, other: add(self, other)
    __radd__ = lambda self, other: add(self, other)
    __sub__ = lambda self, other: sub(self, other)
    __rsub__ = lambda self, other: add(neg(self), other)
    __mul__ = lambda self, other: mul(self, other)
    __rmul__ = lambda self, other: mul(self, other)
    __neg__ = lambda self: neg(self)
    __matmul__ = lambda self, other: matmul(self, other)


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(value, parents, backward, op):
    live = tuple(p for p in parents if p.requires_grad)
    if not live:
        return Tensor(value, op=op)
    # constant parents stay in place so backward outputs line up; backward() skips them
    return Tensor(value, True, tuple(parents), backward, op)


def _check_same(a, b, op):
    if a.shape != b.shape:
        raise DimensionError(f"{op}: shape mismatch {a.shape} vs {b.shape}")


def _is_row_bias(a, b):
    return (
        a.data.ndim == 2
        and b.data.ndim in (1, 2)
        and b.size == a.shape[1]
        and (b.data.ndim == 1 or b.shape[0] == 1)
        and a.shape != b.shape
    )


# ---------------------------------------------------------------------------
# elementwise ops


def add(a, b):
    if not isinstance(b, Tensor):
        a = as_tensor(a)
        c = float(b)
        return _make(a.data + c, (a,), lambda g: (g,), "add_scalar")
    a = as_tensor(a)
    if a.shape == b.shape:
        return _make(a.data + b.data, (a, b), lambda g: (g, g), "add")
    if _is_row_bias(a, b):
        bshape = b.shape
        return _make(
            a.data + b.data.reshape(1, -1),
            (a, b),
            lambda g: (g, g.sum(axis=0).reshape(bshape)),
            "add_bias",
        )
    raise DimensionError(f"add: shape mismatch {a.shape} vs {b.shape}")


def sub(a, b):
    if not isinstance(b, Tensor):
        return add(a, -float(b))
    a = as_tensor(a)
    if a.shape == b.shape:
        return _make(a.data - b.data, (a, b), lambda g: (g, -g), "sub")
    if _is_row_bias(a, b):
        bshape = b.shape
        return _make(
            a.data - b.data.reshape(1, -1),
            (a, b),
            lambda g: (g, -g.sum(axis=0).reshape(bshape)),
            "sub_bias",
        )
    raise DimensionError(f"sub: shape mismatch {a.shape} vs {b.shape}")


def mul(a, b):
    if not isinstance(b, Tensor):
        return scale(a, b)
    a = as_tensor(a)
    _check_same(a, b, "mul")
    ad, bd = a.data, b.data
    return _make(ad * bd, (a, b), lambda g: (g * bd, g * ad), "mul")


def scale(a, c):
    c = float(c)
    return _make(a.data * c, (a,), lambda g: (g * c,), "scale")


def neg(a):
    return _make(-a.data, (a,), lambda g: (-g,), "neg")


def square(a):
    ad = a.data
    return _make(ad * ad, (a,), lambda g: (2.0 * ad * g,), "square")


def relu(a):
    mask = a.data > 0
    # np.maximum keeps NaN, so a corrupted input surfaces as a non-finite loss
    return _make(np.maximum(a.data, 0.0), (a,), lambda g: (g * mask,), "relu")


def exp(a):
    out = np.exp(a.data)
    return _make(out, (a,), lambda g: (g * out,), "exp")


def log(a):
    """Natural log with the argument clamped below at 1e-12."""
    x = a.data
    live = ~(x <= LOG_CLAMP)  # NaN stays live and propagates
    safe = np.where(live, x, LOG_CLAMP)
    return _make(np.log(safe), (a,), lambda g: (np.where(live, g / safe, 0.0),), "log")


def clamp(a, lo, hi):
    x = a.data
    inside = (x >= lo) & (x <= hi)
    return _make(np.clip(x, lo, hi), (a,), lambda g: (g * inside,), "clamp")


# ---------------------------------------------------------------------------
# reductions and linear algebra


def sum(a, axis=None):  # noqa: A001 - mirrors numpy naming
    shape = a.shape
    if axis is None:
        return _make(a.data.sum(), (a,), lambda g: (np.broadcast_to(g, shape).copy(),), "sum")
    if a.data.ndim != 2 or axis not in (0, 1):
        raise DimensionError(f"sum: axis {axis} unsupported for shape {shape}")

    def back(g):
        return (np.broadcast_to(np.expand_dims(g, axis), shape).copy(),)

    return _make(a.data.sum(axis=axis), (a,), back, f"sum{axis}")


def mean(a, axis=None):
    n = a.size if axis is None else a.shape[axis]
    return scale(sum(a, axis), 1.0 / n)


def dot(a, b):
    return sum(mul(a, b))


def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul: shape mismatch {a.shape} x {b.shape}")
    ad, bd = a.data, b.data
    return _make(ad @ bd, (a, b), lambda g: (g @ bd.T, ad.T @ g), "matmul")


def softmax_rows(z):
    x = z.data
    if x.ndim != 2 or x.shape[1] < 1:
        raise DimensionError(f"softmax_rows: need n x c with c >= 1, got {x.shape}")
    if not np.all(np.isfinite(x)):
        raise NumericError("softmax_rows: non-finite input")
    e = np.exp(x - x.max(axis=1, keepdims=True))
    s = e / e.sum(axis=1, keepdims=True)

    def back(g):
        return (s * (g - (g * s).sum(axis=1, keepdims=True)),)

    return _make(s, (z,), back, "softmax")


def pairwise_gauss_logpdf(mu, logvar, y):
    """n x m matrix of diagonal-Gaussian log-densities of rows of y under rows of (mu, logvar)."""
    if mu.shape != logvar.shape or mu.data.ndim != 2 or y.data.ndim != 2 or y.shape[1] != mu.shape[1]:
        raise DimensionError(
            f"pairwise_gauss_logpdf: mu {mu.shape}, logvar {logvar.shape}, y {y.shape}"
        )
    md, lv, yd = mu.data, logvar.data, y.data
    out = _kernels.pairwise_gauss_logpdf(md, lv, yd)
    return _make(
        out,
        (mu, logvar, y),
        lambda g: _kernels.pairwise_gauss_logpdf_grad(md, lv, yd, g),
        "pairwise_gauss_logpdf",
    )


# ---------------------------------------------------------------------------
# backward


def _topo_order(root):
    order, seen = [], set()
    stack = [(root, False)]
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


def backward(root):
    """Populate ``.grad`` on every differentiable tensor reachable from scalar ``root``."""
    if root.size != 1:
        raise ContractError(f"backward: root must be scalar, got shape {root.shape}")
    if not root.requires_grad:
        return
    grads = {id(root): np.ones_like(root.data)}
    for node in reversed(_topo_order(root)):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node.is_leaf:
            node.grad = g.copy() if node.grad is None else node.grad + g
            continue
        node.grad = g
        for parent, pg in zip(node._parents, node._backward(g)):
            if not parent.requires_grad:
                continue
            key = id(parent)
            grads[key] = pg if key not in grads else grads[key] + pg


# ---------------------------------------------------------------------------
# parameter collections


class ParamSet:
    """Ordered, uniquely keyed collection of trainable tensors.

    Also carries the per-parameter momentum buffers used by the optimizer.
    """

    def __init__(self):
        self._entries = OrderedDict()
        self.velocity = {}

    def add(self, key, value):
        if key in self._entries:
            raise ContractError(f"duplicate parameter key {key!r}")
        t = Tensor(np.array(value, dtype=np.float64), requires_grad=True, op="param")
        self._entries[key] = t
        return t

    def update(self, other):
        for k, t in other.items():
            if k in self._entries:
                raise ContractError(f"duplicate parameter key {k!r}")
            self._entries[k] = t
        return self

    def __getitem__(self, key):
        return self._entries[key]

    def __contains__(self, key):
        return key in self._entries

    def __iter__(self):
        return iter(self._entries)

    def __len__(self):
        return len(self._entries)

    def keys(self):
        return list(self._entries)

    def items(self):
        return list(self._entries.items())

    def values(self):
        return list(self._entries.values())

    def select(self, prefixes):
        """A new ParamSet sharing the tensors whose key starts with any of ``prefixes``."""
        out = ParamSet()
        if isinstance(prefixes, str):
            prefixes = (prefixes,)
        for k, t in self._entries.items():
            if k.startswith(tuple(prefixes)):
                out._entries[k] = t
        return out

    def n_scalars(self):
        return int(np.sum([t.size for t in self._entries.values()]))

    def zero_grad(self):
        for t in self._entries.values():
            t.grad = None

    def set_trainable(self, flag):
        for t in self._entries.values():
            t.requires_grad = flag

    @property
    def trainable(self):
        return any(t.requires_grad for t in self._entries.values())

    def state(self):
        return OrderedDict((k, t.data.copy()) for k, t in self._entries.items())

    def load_state(self, state):
        if list(state) != list(self._entries):
            raise ContractError("load_state: key sets differ")
        for k, v in state.items():
            t = self._entries[k]
            if t.shape != np.shape(v):
                raise DimensionError(f"load_state: {k} has shape {t.shape}, got {np.shape(v)}")
            t.data = np.array(v, dtype=np.float64)

    def checksum(self):
        h = hashlib.sha256()
        for k, t in self._entries.items():
            h.update(k.encode())
            h.update(repr(t.shape).encode())
            h.update(np.ascontiguousarray(t.data, dtype="<f8").tobytes())
        return h.hexdigest()

    def to_json(self):
        doc = OrderedDict()
        for k, t in self._entries.items():
            raw = np.ascontiguousarray(t.data, dtype="<f8").tobytes()
            doc[k] = {"shape": list(t.shape), "f64le": base64.b64encode(raw).decode("ascii")}
        return json.dumps(doc, indent=1)

    @classmethod
    def from_json(cls, text):
        ps = cls()
        for k, entry in json.loads(text, object_pairs_hook=OrderedDict).items():
            raw = base64.b64decode(entry["f64le"])
            ps.add(k, np.frombuffer(raw, dtype="<f8").reshape(entry["shape"]))
        return ps

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_json())

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(fh.read())


def grad_check(f, params, h=1e-5):
    """Max relative error between analytic and central-difference gradients.

    ``f`` maps the ParamSet to a scalar Tensor.  The error for each scalar is
    ``|analytic - numeric| / max(1, |analytic|)``.
    """
    if h <= 0:
        raise ContractError("grad_check: h must be positive")
    params.zero_grad()
    loss = f(params)
    backward(loss)
    analytic = {k: (t.grad.copy() if t.grad is not None else np.zeros_like(t.data)) for k, t in params.items()}
    params.zero_grad()
    first = float(loss.data)
    again = float(f(params).data)
    if first != again:
        raise ContractError(f"grad_check: f is not deterministic ({first!r} vs {again!r})")

    worst = 0.0
    for k, t in params.items():
        flat = t.data.reshape(-1)
        a = analytic[k].reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            fp = float(f(params).data)
            flat[i] = orig - h
            fm = float(f(params).data)
            flat[i] = orig
            num = (fp - fm) / (2.0 * h)
            worst = max(worst, abs(a[i] - num) / max(1.0, abs(a[i])))
    return worst
