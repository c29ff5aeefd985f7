"""Dense-tensor reverse-mode autodiff engine.

Small by design: float64 numpy arrays (2-D matrices, flat bias vectors,
scalars), and exactly the operations the reader model needs. Every op
records its inputs so a single :func:`backward` call fills the ``grad``
field of each tensor reachable from the loss. Broadcasting is limited to
bias-vector addition over rows; everything else must match shapes exactly.
"""

from __future__ import annotations

import numpy as np


class ShapeMismatch(ValueError):
    """Operand shapes are incompatible for the requested op."""


class FullyMaskedRow(ValueError):
    """A softmax row had every entry masked out."""


class DiffTensor:
    """A numpy array plus a gradient accumulator and the producing-op record.

    ``values`` holds the forward result, ``grad`` a same-shape accumulator
    initialized to zero. Tensors created by ops keep references to their
    inputs, forming an acyclic graph rooted at the loss.
    """

    __slots__ = ("values", "grad", "_parents", "_backward")

    def __init__(self, values, parents=(), backward=None, dtype=np.float64):
        self.values = np.asarray(values, dtype=dtype)
        self.grad = np.zeros_like(self.values)
        self._parents = tuple(parents)
        self._backward = backward

    @property
    def shape(self):
        return self.values.shape

    def zero_grad(self):
        self.grad[...] = 0.0

    def item(self) -> float:
        if self.values.size != 1:
            raise ShapeMismatch(f"item() on non-scalar tensor of shape {self.shape}")
        return float(self.values)

    def __repr__(self):
        return f"DiffTensor(shape={self.shape}, leaf={self._backward is None})"


class Parameter:
    """A named model tensor. Frozen parameters receive no optimizer updates.

    ``weight_decay`` marks tensors the L2 penalty applies to; by default
    that is every matrix (ndim >= 2), never bias/score vectors.
    """

    def __init__(self, name: str, values, trainable: bool = True, weight_decay=None):
        self.name = name
        self.tensor = DiffTensor(values)
        self.trainable = trainable
        if weight_decay is None:
            weight_decay = self.tensor.values.ndim >= 2
        self.weight_decay = weight_decay and trainable

    @property
    def values(self):
        return self.tensor.values

    @property
    def grad(self):
        return self.tensor.grad

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.tensor.shape}, trainable={self.trainable})"


def tensor(values) -> DiffTensor:
    """Wrap raw values as a leaf tensor."""
    return DiffTensor(values)


def zeros(shape) -> DiffTensor:
    return DiffTensor(np.zeros(shape))


# ---------------------------------------------------------------------------
# primitive ops


def matmul(a: DiffTensor, b: DiffTensor) -> DiffTensor:
    if a.values.ndim != 2 or b.values.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeMismatch(f"matmul: {a.shape} @ {b.shape}")

    def bwd(g):
        return g @ b.values.T, a.values.T @ g

    return DiffTensor(a.values @ b.values, (a, b), bwd)


def transpose(a: DiffTensor) -> DiffTensor:
    def bwd(g):
        return (g.T.copy(),)

    return DiffTensor(a.values.T.copy(), (a,), bwd)


def add(a: DiffTensor, b: DiffTensor) -> DiffTensor:
    """Elementwise addition; also accepts a bias vector broadcast over rows."""
    av, bv = a.values, b.values
    if av.shape == bv.shape:
        def bwd(g):
            return g, g
    elif av.ndim == 2 and bv.ndim == 1 and bv.shape[0] == av.shape[1]:
        def bwd(g):
            return g, g.sum(axis=0)
    elif av.ndim == 2 and bv.ndim == 2 and bv.shape == (1, av.shape[1]):
        def bwd(g):
            return g, g.sum(axis=0, keepdims=True)
    else:
        raise ShapeMismatch(f"add: {av.shape} + {bv.shape}")
    return DiffTensor(av + bv, (a, b), bwd)


def sub(a: DiffTensor, b: DiffTensor) -> DiffTensor:
    if a.shape != b.shape:
        raise ShapeMismatch(f"sub: {a.shape} - {b.shape}")

    def bwd(g):
        return g, -g

    return DiffTensor(a.values - b.values, (a, b), bwd)


def hadamard(a: DiffTensor, b: DiffTensor) -> DiffTensor:
    if a.shape != b.shape:
        raise ShapeMismatch(f"hadamard: {a.shape} * {b.shape}")

    def bwd(g):
        return g * b.values, g * a.values

    return DiffTensor(a.values * b.values, (a, b), bwd)


def mul_const(a: DiffTensor, c: float) -> DiffTensor:
    def bwd(g):
        return (g * c,)

    return DiffTensor(a.values * c, (a,), bwd)


def mul_scalar(a: DiffTensor, s: DiffTensor) -> DiffTensor:
    """Multiply a tensor by a scalar tensor (shape () or (1, 1))."""
    if s.values.size != 1:
        raise ShapeMismatch(f"mul_scalar: scalar operand has shape {s.shape}")
    sv = float(s.values)

    def bwd(g):
        return g * sv, np.asarray((g * a.values).sum()).reshape(s.shape)

    return DiffTensor(a.values * sv, (a, s), bwd)


def sigmoid(a: DiffTensor) -> DiffTensor:
    s = _sigmoid(a.values)

    def bwd(g):
        return (g * s * (1.0 - s),)

    return DiffTensor(s, (a,), bwd)


def tanh(a: DiffTensor) -> DiffTensor:
    t = np.tanh(a.values)

    def bwd(g):
        return (g * (1.0 - t * t),)

    return DiffTensor(t, (a,), bwd)


def relu(a: DiffTensor) -> DiffTensor:
    pos = a.values > 0

    def bwd(g):
        return (g * pos,)

    return DiffTensor(np.where(pos, a.values, 0.0), (a,), bwd)


def log(a: DiffTensor) -> DiffTensor:
    def bwd(g):
        return (g / a.values,)

    return DiffTensor(np.log(a.values), (a,), bwd)


def concat(tensors, axis: int) -> DiffTensor:
    tensors = list(tensors)
    if not tensors:
        raise ShapeMismatch("concat of an empty tensor list")
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def bwd(g):
        return tuple(np.split(g, splits, axis=axis))

    return DiffTensor(np.concatenate([t.values for t in tensors], axis=axis), tuple(tensors), bwd)


def row_slice(a: DiffTensor, start: int, stop: int) -> DiffTensor:
    def bwd(g):
        pa = np.zeros(a.shape)
        pa[start:stop] = g
        return (pa,)

    return DiffTensor(a.values[start:stop].copy(), (a,), bwd)


def mean_pool(a: DiffTensor, axis: int) -> DiffTensor:
    n = a.shape[axis]

    def bwd(g):
        return (np.broadcast_to(g / n, a.shape).copy(),)

    return DiffTensor(a.values.mean(axis=axis, keepdims=True), (a,), bwd)


def reduce_sum(a: DiffTensor) -> DiffTensor:
    def bwd(g):
        return (np.full(a.shape, float(g)),)

    return DiffTensor(a.values.sum(), (a,), bwd)


def pick(a: DiffTensor, row: int, col: int) -> DiffTensor:
    """Select one entry of a 2-D tensor as a scalar."""
    if a.values.ndim != 2:
        raise ShapeMismatch(f"pick expects a 2-D tensor, got shape {a.shape}")

    def bwd(g):
        pa = np.zeros(a.shape)
        pa[row, col] = float(g)
        return (pa,)

    return DiffTensor(a.values[row, col], (a,), bwd)


def embedding_lookup(table, ids) -> DiffTensor:
    """Gather embedding rows. The table is frozen: no gradient flows to it."""
    tv = table.values if isinstance(table, (DiffTensor, Parameter)) else np.asarray(table)
    ids = np.asarray(ids, dtype=int)
    if ids.size and (ids.min() < 0 or ids.max() >= tv.shape[0]):
        raise IndexError(
            f"embedding_lookup: id out of range [0, {tv.shape[0]}): "
            f"min={ids.min()}, max={ids.max()}"
        )
    return DiffTensor(tv[ids])


def masked_softmax(scores: DiffTensor, mask=None) -> DiffTensor:
    """Row softmax over the last axis; masked entries get probability exactly 0."""
    x = scores.values
    if mask is None:
        m = np.ones(x.shape, dtype=bool)
    else:
        m = np.asarray(mask, dtype=bool)
        if m.shape != x.shape:
            raise ShapeMismatch(f"masked_softmax: scores {x.shape} vs mask {m.shape}")
    if not m.any(axis=-1).all():
        raise FullyMaskedRow("masked_softmax: a row has no unmasked entries")
    shifted = np.where(m, x, -np.inf)
    shifted = shifted - shifted.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    p = e / e.sum(axis=-1, keepdims=True)

    def bwd(g):
        dot = (g * p).sum(axis=-1, keepdims=True)
        return (p * (g - dot),)

    return DiffTensor(p, (scores,), bwd)


def lstm_cell(x, h_prev, c_prev, wx, wh, b):
    """One LSTM step: gates = sigmoid, candidate = tanh, gate order [i, f, o, g].

    Shapes: x (1, in), h_prev/c_prev (1, H), wx (in, 4H), wh (H, 4H), b (4H,).
    Returns (h, c); gradients flow to all six inputs.
    """
    H = h_prev.shape[1]
    if (
        x.values.ndim != 2
        or wx.shape != (x.shape[1], 4 * H)
        or wh.shape != (H, 4 * H)
        or b.shape != (4 * H,)
        or c_prev.shape != (1, H)
    ):
        raise ShapeMismatch(
            "lstm_cell: x %r h %r c %r wx %r wh %r b %r"
            % (x.shape, h_prev.shape, c_prev.shape, wx.shape, wh.shape, b.shape)
        )
    z = x.values @ wx.values + h_prev.values @ wh.values + b.values
    i = _sigmoid(z[:, :H])
    f = _sigmoid(z[:, H : 2 * H])
    o = _sigmoid(z[:, 2 * H : 3 * H])
    g = np.tanh(z[:, 3 * H :])
    c_vals = f * c_prev.values + i * g
    tc = np.tanh(c_vals)
    h_vals = o * tc

    def to_parents(dz):
        return (
            dz @ wx.values.T,
            dz @ wh.values.T,
            x.values.T @ dz,
            h_prev.values.T @ dz,
            dz.sum(axis=0),
        )

    def bwd_c(gc):
        di = gc * g * i * (1.0 - i)
        df = gc * c_prev.values * f * (1.0 - f)
        dg = gc * i * (1.0 - g * g)
        dz = np.concatenate([di, df, np.zeros_like(o), dg], axis=1)
        dx, dh, dwx, dwh, db = to_parents(dz)
        return dx, dh, gc * f, dwx, dwh, db

    c_t = DiffTensor(c_vals, (x, h_prev, c_prev, wx, wh, b), bwd_c)

    def bwd_h(gh):
        do = gh * tc * o * (1.0 - o)
        zero = np.zeros_like(do)
        dz = np.concatenate([zero, zero, do, zero], axis=1)
        dx, dh, dwx, dwh, db = to_parents(dz)
        return dx, dh, dwx, dwh, db, gh * o * (1.0 - tc * tc)

    h_t = DiffTensor(h_vals, (x, h_prev, wx, wh, b, c_t), bwd_h)
    return h_t, c_t


def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


# ---------------------------------------------------------------------------
# backward pass


def backward(loss: DiffTensor) -> None:
    """Accumulate d(loss)/d(tensor) into ``grad`` of every reachable tensor.

    Repeated calls without zeroing accumulate; each call propagates through
    a fresh per-call gradient map so earlier accumulations never leak into
    the propagation itself.
    """
    if loss.values.size != 1:
        raise ShapeMismatch(f"backward: loss must be a scalar, got shape {loss.shape}")
    order = _topological_order(loss)
    pending = {id(loss): np.ones_like(loss.values)}
    for node in reversed(order):
        g = pending.pop(id(node), None)
        if g is None:
            continue
        node.grad += g
        if node._backward is None:
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if pg is None:
                continue
            prev = pending.get(id(parent))
            pending[id(parent)] = pg if prev is None else prev + pg


def _topological_order(root):
    order, visited, stack = [], set(), [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in visited:
                stack.append((p, False))
    return order


# ---------------------------------------------------------------------------
# finite-difference gradient checking


class GradCheckReport:
    """Per-parameter max relative error between analytic and numeric gradients."""

    def __init__(self, errors: dict, tolerance: float):
        self.errors = errors
        self.tolerance = tolerance

    @property
    def passed(self) -> bool:
        return all(e < self.tolerance for e in self.errors.values())

    @property
    def worst(self) -> float:
        return max(self.errors.values()) if self.errors else 0.0

    def lines(self):
        for name in sorted(self.errors):
            e = self.errors[name]
            status = "PASS" if e < self.tolerance else "FAIL"
            yield f"{status} {name} max_rel_err={e:.3e}"

    def __repr__(self):
        return f"GradCheckReport(worst={self.worst:.3e}, passed={self.passed})"


def grad_check(build_loss, params, epsilon: float = 1e-5, tolerance: float = 1e-4,
               exclude=None) -> GradCheckReport:
    """Compare analytic gradients against central finite differences.

    ``build_loss`` must rebuild the scalar loss graph from the parameters'
    current values each call. ``exclude`` maps parameter name to a boolean
    array marking elements to skip (e.g. probing a rectifier exactly at its
    nondifferentiable point). Relative error per element is
    |ga - gn| / max(1e-8, |ga| + |gn|).
    """
    params = list(params)
    for p in params:
        p.tensor.zero_grad()
    backward(build_loss())
    analytic = {p.name: p.tensor.grad.copy() for p in params}

    errors = {}
    for p in params:
        v = p.tensor.values
        skip = None if exclude is None else exclude.get(p.name)
        worst = 0.0
        it = np.nditer(v, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            if skip is not None and skip[idx]:
                continue
            orig = v[idx]
            v[idx] = orig + epsilon
            lp = float(build_loss().values)
            v[idx] = orig - epsilon
            lm = float(build_loss().values)
            v[idx] = orig
            numeric = (lp - lm) / (2.0 * epsilon)
            ga = analytic[p.name][idx]
            rel = abs(ga - numeric) / max(1e-8, abs(ga) + abs(numeric))
            worst = max(worst, rel)
        errors[p.name] = worst
    return GradCheckReport(errors, tolerance)
