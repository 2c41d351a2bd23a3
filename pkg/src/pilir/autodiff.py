"""Tape-based reverse-mode autodiff with order-2 Taylor jets for input derivatives.

Input derivatives are obtained by pushing truncated Taylor jets forward through
the graph. A jet is stored as one stacked node. Its leading axis holds the
value followed by the first derivatives along the requested input axes, then the second
derivative along each axis that asked for order 2. Because the stack is an
ordinary tape node, a PDE residual assembled from ``u``, ``u_x`` and ``u_xx``
is differentiated with respect to the parameters by a single reverse sweep
("reverse over forward").

All arithmetic is float64. Nodes hold whole batches, so the number of nodes
recorded for one model evaluation does not depend on the batch size.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

__all__ = [
    "TapeError",
    "Parameter",
    "Node",
    "Tape",
    "Jet",
    "Jet2",
    "constant",
    "add",
    "sub",
    "mul",
    "div",
    "neg",
    "square",
    "pow_int",
    "sin",
    "cos",
    "exp",
    "tanh",
    "wavelet",
    "affine",
    "linear",
    "sum",
    "mean",
    "reshape",
    "concat",
    "index",
    "broadcast_to",
    "take",
    "floor",
    "backward",
    "jet_eval",
    "jets",
    "seed_jet",
]


class TapeError(RuntimeError):
    """Misuse of a tape: stale handles, mixed tapes, non-scalar roots."""


class Parameter:
    """A named trainable array that outlives individual tapes."""

    __slots__ = ("name", "value")

    def __init__(self, name: str, value):
        self.name = name
        self.value = np.array(value, dtype=np.float64)
        if not np.all(np.isfinite(self.value)):
            raise ValueError(f"parameter {name!r} has non-finite entries")

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.value.shape})"


class _Ops:
    __array_ufunc__ = None  # make numpy defer to the reflected operators
    __slots__ = ()

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

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, n):
        return pow_int(self, n)

    def __getitem__(self, key):
        return index(self, key)


class Node(_Ops):
    __slots__ = ("tape", "id", "value", "op", "parents", "vjp", "requires_grad", "param")

    def __init__(self, tape, id, value, op, parents, vjp, requires_grad, param=None):
        self.tape = tape
        self.id = id
        self.value = value
        self.op = op
        self.parents = parents
        self.vjp = vjp
        self.requires_grad = requires_grad
        self.param = param

    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    def __repr__(self):
        return f"Node(id={self.id}, op={self.op}, shape={self.value.shape})"


class Tape:
    """Append-only record of nodes in topological order.

    ``checkpoint()`` marks the current length; ``clear()`` truncates back to
    the mark and invalidates every handle issued after it.
    """

    def __init__(self, check_finite: bool = False):
        self.nodes: list[Node] = []
        self.check_finite = check_finite
        self._mark = 0
        self._params: dict[str, Node] = {}

    def __len__(self):
        return len(self.nodes)

    def _check(self, node: Node):
        if node.tape is not self:
            raise TapeError("operands live on different tapes")
        if node.id >= len(self.nodes) or self.nodes[node.id] is not node:
            raise TapeError(f"stale node handle {node.id}; the tape was cleared")

    def record(self, value, op, parents=(), vjp=None, param=None) -> Node:
        requires_grad = param is not None
        for p in parents:
            self._check(p)
            requires_grad = requires_grad or p.requires_grad
        if self.check_finite and not np.all(np.isfinite(value)):
            raise FloatingPointError(f"non-finite value produced by {op}")
        node = Node(self, len(self.nodes), value, op, tuple(parents),
                    vjp if requires_grad else None, requires_grad, param)
        self.nodes.append(node)
        return node

    def constant(self, x) -> Node:
        value = np.array(x, dtype=np.float64)
        if not np.all(np.isfinite(value)):
            raise ValueError("constant must be finite")
        return self.record(value, "const")

    def param(self, p: Parameter) -> Node:
        """Leaf node for a parameter; one node per parameter per tape."""
        node = self._params.get(p.name)
        if node is not None and node.id < len(self.nodes) and self.nodes[node.id] is node:
            return node
        node = self.record(p.value, "param", param=p)
        self._params[p.name] = node
        return node

    def checkpoint(self):
        self._mark = len(self.nodes)

    def clear(self):
        del self.nodes[self._mark:]
        self._params = {k: v for k, v in self._params.items() if v.id < self._mark}

    def backward(self, loss: Node) -> dict[str, np.ndarray]:
        return backward(loss)


# ---------------------------------------------------------------------------
# helpers


def _tape_of(*xs):
    tape = None
    for x in xs:
        if isinstance(x, Jet):
            x = x.s
        if isinstance(x, Node):
            if tape is None:
                tape = x.tape
            elif x.tape is not tape:
                raise TapeError("operands live on different tapes")
    return tape


def _val(x):
    return x.value if isinstance(x, Node) else np.asarray(x, dtype=np.float64)


def _unbroadcast(g, shape):
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def _broadcast_shape(a, b):
    """Broadcast result of two shapes (tuples) or two arrays."""
    sa = a if isinstance(a, tuple) else np.shape(a)
    sb = b if isinstance(b, tuple) else np.shape(b)
    try:
        return np.broadcast_shapes(sa, sb)
    except ValueError:
        raise ValueError(f"shape mismatch: {sa} vs {sb}") from None


def _needs(x):
    return isinstance(x, Node) and x.requires_grad


def constant(x, tape: Tape | None = None) -> Node:
    """Wrap ``x`` as a constant node. A fresh tape is created when none is given."""
    return (tape if tape is not None else Tape()).constant(x)


# ---------------------------------------------------------------------------
# node-level primitives


def _binary(a, b, value, op, ga, gb):
    tape = _tape_of(a, b)
    if tape is None:
        return value
    parents = tuple(x for x in (a, b) if isinstance(x, Node))
    na, nb = _needs(a), _needs(b)
    sa, sb = np.shape(_val(a)), np.shape(_val(b))

    def vjp(g):
        out = []
        if isinstance(a, Node):
            out.append(_unbroadcast(ga(g), sa) if na else None)
        if isinstance(b, Node):
            out.append(_unbroadcast(gb(g), sb) if nb else None)
        return out

    return tape.record(value, op, parents, vjp)


def add(a, b):
    if isinstance(a, Jet) or isinstance(b, Jet):
        return _jet_add(a, b)
    av, bv = _val(a), _val(b)
    _broadcast_shape(av, bv)
    return _binary(a, b, av + bv, "add", lambda g: g, lambda g: g)


def sub(a, b):
    if isinstance(a, Jet) or isinstance(b, Jet):
        return _jet_add(a, neg(b) if isinstance(b, (Node, Jet)) else -np.asarray(b, dtype=np.float64))
    av, bv = _val(a), _val(b)
    _broadcast_shape(av, bv)
    return _binary(a, b, av - bv, "sub", lambda g: g, lambda g: -g)


def mul(a, b):
    if isinstance(a, Jet) or isinstance(b, Jet):
        return _jet_mul(a, b)
    av, bv = _val(a), _val(b)
    _broadcast_shape(av, bv)
    return _binary(a, b, av * bv, "mul", lambda g: g * bv, lambda g: g * av)


def div(a, b):
    if isinstance(b, Jet):
        return mul(a, _unary_apply(b, "reciprocal"))
    if isinstance(a, Jet):
        return mul(a, div(1.0, b))
    av, bv = _val(a), _val(b)
    _broadcast_shape(av, bv)
    if np.any(bv == 0):
        raise ZeroDivisionError("division by zero in graph")
    out = av / bv
    return _binary(a, b, out, "div", lambda g: g / bv, lambda g: -g * out / bv)


def neg(x):
    if isinstance(x, Jet):
        return x._with(neg(x.s))
    if not isinstance(x, Node):
        return -np.asarray(x, dtype=np.float64)
    return x.tape.record(-x.value, "neg", (x,), lambda g: (-g,))


# Scalar functions with derivatives up to third order; ``order`` says how many
# are needed so the cheap cases skip the rest.

def _d_tanh(a, order):
    t = np.tanh(a)
    if order == 0:
        return (t,)
    d1 = 1.0 - t * t
    if order == 1:
        return t, d1
    d2 = -2.0 * t * d1
    if order == 2:
        return t, d1, d2
    return t, d1, d2, -2.0 * d1 * (1.0 - 3.0 * t * t)


def _d_sin(a, order):
    s = np.sin(a)
    if order == 0:
        return (s,)
    c = np.cos(a)
    return (s, c, -s, -c)[:order + 1]


def _d_cos(a, order):
    c = np.cos(a)
    if order == 0:
        return (c,)
    s = np.sin(a)
    return (c, -s, -c, s)[:order + 1]


def _d_exp(a, order):
    e = np.exp(a)
    return (e,) * (order + 1)


def _d_square(a, order):
    return (a * a, 2.0 * a, np.full_like(a, 2.0), np.zeros_like(a))[:order + 1]


def _d_reciprocal(a, order):
    r = 1.0 / a
    if order == 0:
        return (r,)
    r2 = r * r
    return (r, -r2, 2.0 * r2 * r, -6.0 * r2 * r2)[:order + 1]


def _d_wavelet(a, order):
    e = np.exp(-0.5 * a * a)
    f = -a * e
    if order == 0:
        return (f,)
    a2 = a * a
    return (f, (a2 - 1.0) * e, (3.0 - a2) * a * e, (a2 * a2 - 6.0 * a2 + 3.0) * e)[:order + 1]


def _d_pow(n):
    def derivs(a, order):
        out = []
        coef = 1.0
        for k in range(order + 1):
            p = n - k
            if coef == 0.0:
                out.append(np.zeros_like(a))
            elif p == 0:
                out.append(np.full_like(a, coef))
            else:
                out.append(coef * a ** p)
            coef *= p
        return tuple(out)
    return derivs


_UNARY = {
    "tanh": _d_tanh,
    "sin": _d_sin,
    "cos": _d_cos,
    "exp": _d_exp,
    "square": _d_square,
    "reciprocal": _d_reciprocal,
    "wavelet": _d_wavelet,
}


def _unary_apply(x, name, derivs=None):
    derivs = derivs or _UNARY[name]
    if isinstance(x, Jet):
        return _jet_unary(x, name, derivs)
    if not isinstance(x, Node):
        return derivs(np.asarray(x, dtype=np.float64), 0)[0]
    xv = x.value
    if x.requires_grad:
        f, f1 = derivs(xv, 1)
        return x.tape.record(f, name, (x,), lambda g: (g * f1,))
    return x.tape.record(derivs(xv, 0)[0], name, (x,))


def square(x):
    return _unary_apply(x, "square")


def pow_int(x, n: int):
    if int(n) != n:
        raise ValueError("pow_int needs an integer exponent")
    n = int(n)
    if n == 2:
        return square(x)
    if n < 0 and np.any(_value_of(x) == 0):
        raise ZeroDivisionError("negative power of zero")
    return _unary_apply(x, f"pow{n}", _d_pow(n))


def sin(x):
    return _unary_apply(x, "sin")


def cos(x):
    return _unary_apply(x, "cos")


def exp(x):
    return _unary_apply(x, "exp")


def tanh(x):
    return _unary_apply(x, "tanh")


def wavelet(x):
    """Gaussian wavelet ``-x * exp(-x**2 / 2)``."""
    return _unary_apply(x, "wavelet")


def floor(x):
    """Elementwise floor, detached: the result enters the graph as a constant."""
    out = np.floor(_value_of(x))
    tape = _tape_of(x)
    return tape.record(out, "floor") if tape is not None else out


def linear(x, W):
    """``x @ W.T`` over the last axis (no bias)."""
    if isinstance(x, Jet):
        return x._with(linear(x.s, W))
    xv, Wv = _val(x), _val(W)
    if Wv.ndim != 2 or xv.shape[-1] != Wv.shape[-1]:
        raise ValueError(f"dimension mismatch: input width {xv.shape[-1]} vs weight {Wv.shape}")
    out = xv @ Wv.T
    tape = _tape_of(x, W)
    if tape is None:
        return out
    parents = tuple(p for p in (x, W) if isinstance(p, Node))
    nx, nW = _needs(x), _needs(W)

    def vjp(g):
        res = []
        if isinstance(x, Node):
            res.append(g @ Wv if nx else None)
        if isinstance(W, Node):
            if nW:
                res.append(g.reshape(-1, g.shape[-1]).T @ xv.reshape(-1, xv.shape[-1]))
            else:
                res.append(None)
        return res

    return tape.record(out, "linear", parents, vjp)


def affine(W, x, b):
    """``W x + b`` along the last axis of ``x``. Scalars are treated as 1x1."""
    if np.ndim(_val(W)) == 0:
        W2 = reshape(W, (1, 1)) if isinstance(W, Node) else np.reshape(_val(W), (1, 1))
        x2 = reshape(x, (1,)) if isinstance(x, (Node, Jet)) else np.reshape(_val(x), (1,))
        b2 = reshape(b, (1,)) if isinstance(b, Node) else np.reshape(_val(b), (1,))
        out = affine(W2, x2, b2)
        return reshape(out, ()) if isinstance(out, (Node, Jet)) else out.reshape(())
    Wv, bv = _val(W), _val(b)
    if bv.shape != (Wv.shape[0],):
        raise ValueError(f"dimension mismatch: bias {bv.shape} vs weight {Wv.shape}")
    return add(linear(x, W), b)


def _reduce_vjp(shape, axis, keepdims, scale=1.0):
    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        if scale != 1.0:
            g = g * scale
        return (np.broadcast_to(g, shape).copy(),)
    return vjp


def _shift_axis(axis):
    if axis is None:
        raise ValueError("full reductions of a jet are not supported; reduce its components")
    if isinstance(axis, tuple):
        return tuple(a + 1 if a >= 0 else a for a in axis)
    return axis + 1 if axis >= 0 else axis


def sum(x, axis=None, keepdims=False):
    if isinstance(x, Jet):
        return x._with(sum(x.s, _shift_axis(axis), keepdims))
    xv = x.value
    return x.tape.record(np.sum(xv, axis=axis, keepdims=keepdims), "sum", (x,),
                         _reduce_vjp(xv.shape, axis, keepdims))


def mean(x, axis=None, keepdims=False):
    if isinstance(x, Jet):
        return x._with(mean(x.s, _shift_axis(axis), keepdims))
    xv = x.value
    n = xv.size if axis is None else int(np.prod([xv.shape[a] for a in np.atleast_1d(axis)]))
    return x.tape.record(np.mean(xv, axis=axis, keepdims=keepdims), "mean", (x,),
                         _reduce_vjp(xv.shape, axis, keepdims, 1.0 / n))


def reshape(x, shape):
    if isinstance(x, Jet):
        return x._with(reshape(x.s, (x.s.value.shape[0],) + tuple(shape)))
    old = x.value.shape
    return x.tape.record(x.value.reshape(shape), "reshape", (x,), lambda g: (g.reshape(old),))


def _is_basic_key(key):
    key = key if isinstance(key, tuple) else (key,)
    return all(k is None or k is Ellipsis or isinstance(k, (int, np.integer, slice)) for k in key)


def index(x, key):
    """Basic or fancy indexing with a constant key."""
    if isinstance(x, Jet):
        k = key if isinstance(key, tuple) else (key,)
        return x._with(index(x.s, (slice(None),) + k))
    xv = x.value
    basic = _is_basic_key(key)

    def vjp(g):
        out = np.zeros_like(xv)
        if basic:
            out[key] += g
        else:
            np.add.at(out, key, g)
        return (out,)

    return x.tape.record(xv[key], "index", (x,), vjp)


def broadcast_to(x, shape):
    if isinstance(x, Jet):
        return x._with(broadcast_to(x.s, (x.s.value.shape[0],) + tuple(shape)))
    old = x.value.shape
    return x.tape.record(np.broadcast_to(x.value, shape), "broadcast", (x,),
                         lambda g: (_unbroadcast(g, old),))


def take(x, idx):
    """Rows of a 2-D node ``x`` selected by an integer array; result shape ``idx.shape + (C,)``."""
    if isinstance(x, Jet):
        raise TypeError("take gathers from parameter tables, not jets")
    xv = x.value
    idx = np.asarray(idx)
    if idx.size and (idx.min() < 0 or idx.max() >= xv.shape[0]):
        raise IndexError("gather index out of bounds")
    n_rows, n_ch = xv.shape
    flat = idx.reshape(-1)

    def vjp(g):
        g2 = g.reshape(-1, n_ch)
        out = np.empty((n_rows, n_ch))
        for c in range(n_ch):
            out[:, c] = np.bincount(flat, weights=g2[:, c], minlength=n_rows)
        return (out,)

    return x.tape.record(xv[idx], "take", (x,), vjp)


def concat(xs: Sequence, axis=-1):
    if any(isinstance(x, Jet) for x in xs):
        ref = next(x for x in xs if isinstance(x, Jet))
        parts = [x.s if isinstance(x, Jet) else _promote(x, ref).s for x in xs]
        return ref._with(concat(parts, _shift_axis(axis)))
    tape = _tape_of(*xs)
    vals = [_val(x) for x in xs]
    out = np.concatenate(vals, axis=axis)
    if tape is None:
        return out
    ax = axis % out.ndim
    bounds = np.cumsum([0] + [v.shape[ax] for v in vals])
    slots = [i for i, x in enumerate(xs) if isinstance(x, Node)]

    def vjp(g):
        res = []
        for i in slots:
            sl = [slice(None)] * g.ndim
            sl[ax] = slice(bounds[i], bounds[i + 1])
            res.append(g[tuple(sl)])
        return res

    return tape.record(out, "concat", [xs[i] for i in slots], vjp)


def _value_of(x):
    if isinstance(x, Jet):
        return x.s.value[0]
    return _val(x)


# ---------------------------------------------------------------------------
# reverse pass


def backward(loss: Node) -> dict[str, np.ndarray]:
    """Gradients of a scalar ``loss`` for every parameter registered on its tape.

    Parameters that the loss does not reach receive zeros. The tape is left
    untouched, so calling this twice returns identical results.
    """
    if isinstance(loss, Jet):
        raise TapeError("backward needs a Node, not a Jet")
    if loss.value.size != 1:
        raise TapeError(f"backward needs a scalar root, got shape {loss.value.shape}")
    tape = loss.tape
    tape._check(loss)
    nodes = tape.nodes
    grads: list = [None] * (loss.id + 1)
    grads[loss.id] = np.ones_like(loss.value)
    result: dict[str, np.ndarray] = {}
    for i in range(loss.id, -1, -1):
        g = grads[i]
        if g is None:
            continue
        grads[i] = None
        node = nodes[i]
        if node.param is not None:
            name = node.param.name
            result[name] = result[name] + g if name in result else g
            continue
        if node.vjp is None:
            continue
        for parent, pg in zip(node.parents, node.vjp(g)):
            if pg is None or not parent.requires_grad:
                continue
            j = parent.id
            grads[j] = pg if grads[j] is None else grads[j] + pg
    for node in nodes:
        if node.param is not None and node.param.name not in result:
            result[node.param.name] = np.zeros_like(node.value)
    return result


# ---------------------------------------------------------------------------
# Taylor jets


class Jet(_Ops):
    """Stacked Taylor jet along several input axes.

    ``s`` is a node of shape ``(K,) + shape``. Slot 0 is the value, slot
    ``1 + k`` the first derivative along ``axes[k]``, and the trailing slots
    the second derivatives of the axes flagged in ``order2``. Cross-axis
    terms are not tracked.
    """

    __slots__ = ("s", "axes", "order2", "_views")

    def __init__(self, s: Node, axes, order2):
        self.s = s
        self.axes = tuple(axes)
        self.order2 = tuple(bool(o) for o in order2)
        self._views = {}

    @property
    def n_axes(self):
        return len(self.axes)

    @property
    def slots(self):
        return 1 + len(self.axes) + _count(self.order2)

    @property
    def shape(self):
        return self.s.value.shape[1:]

    @property
    def value(self):
        return self.s.value[0]

    @property
    def tape(self):
        return self.s.tape

    def _with(self, s):
        return Jet(s, self.axes, self.order2)

    def _slot(self, j) -> Node:
        node = self._views.get(j)
        if node is None:
            node = index(self.s, j)
            self._views[j] = node
        return node

    @property
    def v(self) -> Node:
        return self._slot(0)

    def d1_slot(self, axis) -> int:
        return 1 + self.axes.index(axis)

    def d2_slot(self, axis) -> int:
        k = self.axes.index(axis)
        if not self.order2[k]:
            raise ValueError(f"second derivative along axis {axis} was not requested")
        return 1 + self.n_axes + _count(self.order2[:k])

    def d1(self, axis) -> Node:
        return self._slot(self.d1_slot(axis))

    def d2(self, axis) -> Node:
        return self._slot(self.d2_slot(axis))

    def _d2_pairs(self):
        """(first-derivative slot, second-derivative slot) for every order-2 axis."""
        pairs = []
        j = 1 + self.n_axes
        for k, o in enumerate(self.order2):
            if o:
                pairs.append((1 + k, j))
                j += 1
        return pairs

    def __repr__(self):
        return f"Jet(axes={self.axes}, order2={self.order2}, shape={self.shape})"


def _count(flags):
    n = 0
    for f in flags:
        n += bool(f)
    return n


def _promote(x, like: Jet) -> Jet:
    """Input-independent value promoted to a jet with zero derivative slots."""
    xv = _val(x)
    out = np.zeros((like.slots,) + xv.shape)
    out[0] = xv
    tape = like.tape
    if isinstance(x, Node):
        s = tape.record(out, "promote", (x,), lambda g: (g[0],))
    else:
        s = tape.record(out, "promote")
    return like._with(s)


def _same_layout(a: Jet, b: Jet):
    if a.axes != b.axes or a.order2 != b.order2:
        raise TapeError("jets seeded along different axes cannot be combined")


def _lift(sv, vshape):
    """Reshape a stacked value so its per-slot part has ``len(vshape)`` dims."""
    pad = len(vshape) - (sv.ndim - 1)
    if pad > 0:
        return sv.reshape((sv.shape[0],) + (1,) * pad + sv.shape[1:])
    return sv


def _jet_add(a, b):
    if isinstance(a, Jet) and isinstance(b, Jet):
        _same_layout(a, b)
        vshape = _broadcast_shape(a.shape, b.shape)
        sa, sb = a.s, b.s
        if sa.value.ndim - 1 < len(vshape):
            sa = reshape(sa, _lift(sa.value, vshape).shape)
        if sb.value.ndim - 1 < len(vshape):
            sb = reshape(sb, _lift(sb.value, vshape).shape)
        return a._with(add(sa, sb))
    jet, c = (a, b) if isinstance(a, Jet) else (b, a)
    return _jet_add_const(jet, c)


def _jet_add_const(jet: Jet, c):
    """Add an input-independent term to the value slot; derivative slots broadcast along."""
    sv = jet.s.value
    cv = _val(c)
    vshape = _broadcast_shape(jet.shape, cv.shape)
    lifted = _lift(sv, vshape)
    out = np.empty((sv.shape[0],) + vshape)
    out[...] = lifted
    out[0] += cv
    old, mid = sv.shape, lifted.shape
    cshape = cv.shape
    parents = [jet.s] + ([c] if isinstance(c, Node) else [])
    need_c = _needs(c)

    def vjp(g):
        res = [_unbroadcast(g, mid).reshape(old)]
        if isinstance(c, Node):
            res.append(_unbroadcast(g[0], cshape) if need_c else None)
        return res

    return jet._with(jet.tape.record(out, "jet_add", parents, vjp))


def _jet_scale(jet: Jet, c):
    """Product with an input-independent factor: every slot scales."""
    cv = _val(c)
    vshape = _broadcast_shape(jet.shape, cv.shape)
    s = jet.s
    if s.value.ndim - 1 < len(vshape):
        s = reshape(s, _lift(s.value, vshape).shape)
    c2 = reshape(c, (1,) + cv.shape) if isinstance(c, Node) else cv.reshape((1,) + cv.shape)
    return jet._with(mul(s, c2))


def _jet_mul(a, b):
    if not (isinstance(a, Jet) and isinstance(b, Jet)):
        jet, c = (a, b) if isinstance(a, Jet) else (b, a)
        return _jet_scale(jet, c)
    _same_layout(a, b)
    vshape = _broadcast_shape(a.shape, b.shape)
    av = _lift(a.s.value, vshape)
    bv = _lift(b.s.value, vshape)
    pairs = a._d2_pairs()
    d1 = slice(1, 1 + a.n_axes)
    a0, b0 = av[0], bv[0]
    out = np.empty((a.slots,) + vshape)
    out[0] = a0 * b0
    out[d1] = av[d1] * b0 + a0 * bv[d1]
    for i1, i2 in pairs:
        out[i2] = av[i2] * b0 + 2.0 * av[i1] * bv[i1] + a0 * bv[i2]
    sa, sb = a.s.value.shape, b.s.value.shape
    na, nb = a.s.requires_grad, b.s.requires_grad

    def grad_first(g, xv, yv):
        # gradient w.r.t. x of the stacked product x*y
        y0 = yv[0]
        gx = np.empty(g.shape)
        gx[0] = g[0] * y0 + (g[d1] * yv[d1]).sum(axis=0)
        gx[d1] = g[d1] * y0
        for i1, i2 in pairs:
            gx[0] += g[i2] * yv[i2]
            gx[i1] += 2.0 * g[i2] * yv[i1]
            gx[i2] = g[i2] * y0
        return gx

    def vjp(g):
        ga = _unbroadcast(grad_first(g, av, bv), av.shape).reshape(sa) if na else None
        gb = _unbroadcast(grad_first(g, bv, av), bv.shape).reshape(sb) if nb else None
        return ga, gb

    return a._with(a.tape.record(out, "jet_mul", (a.s, b.s), vjp))


def _jet_unary(x: Jet, name: str, derivs: Callable) -> Jet:
    """Chain rule on a stacked jet: y' = f'·a', y'' = f'·a'' + f''·a'²."""
    sv = x.s.value
    pairs = x._d2_pairs()
    d1 = slice(1, 1 + x.n_axes)
    need = x.s.requires_grad
    order = 3 if (need and pairs) else 2 if (pairs or need) else 1
    fs = derivs(sv[0], order)
    f1 = fs[1]
    out = np.empty_like(sv)
    out[0] = fs[0]
    out[d1] = f1 * sv[d1]
    for i1, i2 in pairs:
        out[i2] = f1 * sv[i2] + fs[2] * sv[i1] * sv[i1]

    def vjp(g):
        ga = np.empty_like(sv)
        ga[d1] = g[d1] * f1
        ga[0] = g[0] * f1 + fs[2] * (g[d1] * sv[d1]).sum(axis=0)
        for i1, i2 in pairs:
            ga[0] += g[i2] * (fs[2] * sv[i2] + fs[3] * sv[i1] * sv[i1])
            ga[i1] += 2.0 * fs[2] * sv[i1] * g[i2]
            ga[i2] = g[i2] * f1
        return (ga,)

    return x._with(x.tape.record(out, f"jet_{name}", (x.s,), vjp))


@dataclass(frozen=True)
class Jet2:
    """Value, first and second derivative along one input axis, all on one tape."""

    v: Node
    d1: Node
    d2: Node


def seed_jet(tape: Tape, x, orders: Mapping[int, int]) -> Jet:
    """Promote coordinates ``x`` (last axis = dimension) to a jet.

    ``orders`` maps axis index to the highest derivative order needed (1 or 2).
    The seed has unit first derivative along its own axis and zero second.
    """
    xv = np.asarray(x, dtype=np.float64)
    dim = xv.shape[-1] if xv.ndim else 1
    for axis, order in orders.items():
        if not 0 <= axis < dim:
            raise ValueError(f"axis {axis} out of range for dimension {dim}")
        if order not in (1, 2):
            raise ValueError("derivative order must be 1 or 2")
    axes = tuple(sorted(orders))
    order2 = [orders[a] == 2 for a in axes]
    s = np.zeros((1 + len(axes) + _count(order2),) + xv.shape)
    s[0] = xv
    for j, axis in enumerate(axes):
        if xv.ndim:
            s[1 + j][..., axis] = 1.0
        else:
            s[1 + j] = 1.0
    return Jet(tape.record(s, "seed"), axes, order2)


def jets(f: Callable, x, orders: Mapping[int, int], tape: Tape | None = None) -> Jet:
    """Evaluate ``f`` on a jet seeded at ``x`` along the requested axes."""
    tape = tape if tape is not None else Tape()
    seed = seed_jet(tape, x, orders)
    out = f(seed)
    if not isinstance(out, Jet):
        # f ignored its input
        return _promote(out, seed)
    return out


def jet_eval(f: Callable, x, axis: int, tape: Tape | None = None) -> Jet2:
    """Exact value, first and second derivative of ``f`` along ``axis`` at ``x``.

    The derivative nodes stay on the tape and can be differentiated with
    respect to parameters via :func:`backward`. ``floor`` contributes a zero
    tangent.
    """
    j = jets(f, x, {axis: 2}, tape)
    return Jet2(j.v, j.d1(axis), j.d2(axis))
