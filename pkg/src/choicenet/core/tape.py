"""Reverse-mode differentiation over a recorded sequence of array operations.

A :class:`Tape` records each primitive as a :class:`Node` holding its forward
value, its parents, a forward closure (so the tape can be replayed after a leaf
is edited) and a vector-Jacobian closure.  Only the feedforward operation set
needed by the choice models is provided.
"""
from __future__ import annotations

import numpy as np

from .functional import BN_EPS, PROB_FLOOR

LOG_FLOOR = float(np.log(PROB_FLOOR))


class Node:
    __slots__ = ("value", "parents", "fwd", "bwd", "op", "grad", "requires_grad", "aux", "name")

    def __init__(self, value, parents=(), fwd=None, bwd=None, op="leaf",
                 requires_grad=False, name=None):
        self.value = value
        self.parents = parents
        self.fwd = fwd
        self.bwd = bwd
        self.op = op
        self.grad = None
        self.requires_grad = requires_grad
        self.aux = None
        self.name = name

    @property
    def shape(self):
        return np.shape(self.value)

    def __repr__(self):
        return f"Node({self.op}, shape={self.shape})"


def unbroadcast(g, shape):
    """Sum ``g`` down to ``shape`` (reverse of numpy broadcasting)."""
    if g.shape == tuple(shape):
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def _swap(a):
    return np.swapaxes(a, -1, -2)


class Tape:
    def __init__(self):
        self.nodes: list[Node] = []

    # -- recording -----------------------------------------------------
    def leaf(self, value, requires_grad=True, name=None) -> Node:
        node = Node(np.asarray(value, dtype=float), requires_grad=requires_grad, name=name)
        self.nodes.append(node)
        return node

    def const(self, value) -> Node:
        return self.leaf(value, requires_grad=False)

    def _record(self, op, fwd, bwd, parents, aux_fwd=None):
        vals = [p.value for p in parents]
        node = Node(None, tuple(parents), fwd, bwd, op,
                    requires_grad=any(p.requires_grad for p in parents))
        if aux_fwd is not None:
            node.value, node.aux = aux_fwd(*vals)
            node.fwd = _AuxForward(aux_fwd)
        else:
            node.value = fwd(*vals)
        self.nodes.append(node)
        return node

    # -- replay & reverse pass -----------------------------------------
    def replay(self):
        """Recompute every non-leaf value in recording order."""
        for node in self.nodes:
            if node.fwd is None:
                continue
            vals = [p.value for p in node.parents]
            if isinstance(node.fwd, _AuxForward):
                node.value, node.aux = node.fwd.fn(*vals)
            else:
                node.value = node.fwd(*vals)

    def backward(self, out: Node):
        """Accumulate d(out)/d(node) into ``node.grad`` for every node on the tape."""
        if np.ndim(out.value) != 0:
            raise ValueError(f"backward needs a scalar output, got shape {out.shape}")
        for node in self.nodes:
            node.grad = None
        out.grad = np.ones(())
        try:
            stop = self.nodes.index(out)
        except ValueError:
            raise ValueError("output node was not recorded on this tape") from None
        for node in reversed(self.nodes[: stop + 1]):
            g = node.grad
            if g is None or node.bwd is None or not node.requires_grad:
                continue
            grads = node.bwd(g, node)
            for parent, pg in zip(node.parents, grads):
                if pg is None or not parent.requires_grad:
                    continue
                if parent.grad is None:
                    parent.grad = pg
                else:
                    parent.grad = parent.grad + pg
        return {n: n.grad for n in self.nodes if n.fwd is None and n.requires_grad}

    # -- elementwise & linear ops --------------------------------------
    def add(self, a, b):
        return self._record(
            "add", np.add,
            lambda g, n: (unbroadcast(g, n.parents[0].shape), unbroadcast(g, n.parents[1].shape)),
            (a, b))

    def sub(self, a, b):
        return self._record(
            "sub", np.subtract,
            lambda g, n: (unbroadcast(g, n.parents[0].shape), unbroadcast(-g, n.parents[1].shape)),
            (a, b))

    def mul(self, a, b):
        def bwd(g, n):
            x, y = n.parents
            return unbroadcast(g * y.value, x.shape), unbroadcast(g * x.value, y.shape)
        return self._record("mul", np.multiply, bwd, (a, b))

    def div(self, a, b):
        def bwd(g, n):
            x, y = n.parents
            return (unbroadcast(g / y.value, x.shape),
                    unbroadcast(-g * x.value / (y.value * y.value), y.shape))
        return self._record("div", np.divide, bwd, (a, b))

    def scale(self, a, c: float):
        return self._record("scale", lambda x: x * c, lambda g, n: (g * c,), (a,))

    def matmul(self, a, b):
        def bwd(g, n):
            x, y = n.parents
            gx = g @ _swap(y.value)
            gy = _swap(x.value) @ g
            return unbroadcast(gx, x.shape), unbroadcast(gy, y.shape)
        return self._record("matmul", np.matmul, bwd, (a, b))

    def relu(self, a):
        return self._record(
            "relu", lambda x: np.maximum(x, 0.0),
            lambda g, n: (g * (n.parents[0].value > 0),), (a,))

    def exp(self, a):
        return self._record("exp", np.exp, lambda g, n: (g * n.value,), (a,))

    def softplus(self, a):
        return self._record(
            "softplus", lambda x: np.logaddexp(0.0, x),
            lambda g, n: (g * np.exp(-np.logaddexp(0.0, -n.parents[0].value)),), (a,))

    # -- shape ops -----------------------------------------------------
    def concat(self, nodes, axis=-1):
        nodes = tuple(nodes)
        sizes = [n.shape[axis] for n in nodes]
        cuts = np.cumsum(sizes)[:-1]
        return self._record(
            "concat", lambda *vs: np.concatenate(vs, axis=axis),
            lambda g, n: tuple(np.split(g, cuts, axis=axis)), nodes)

    def stack(self, nodes, axis=0):
        nodes = tuple(nodes)
        k = len(nodes)

        def bwd(g, n):
            return tuple(np.take(g, i, axis=axis) for i in range(k))
        return self._record("stack", lambda *vs: np.stack(vs, axis=axis), bwd, nodes)

    def take(self, a, idx, axis=-1):
        idx = np.asarray(idx, dtype=int)

        def bwd(g, n):
            out = np.zeros(n.parents[0].shape)
            moved = np.moveaxis(out, axis, 0)
            np.add.at(moved, idx, np.moveaxis(g, axis, 0))
            return (out,)
        return self._record("take", lambda x: np.take(x, idx, axis=axis), bwd, (a,))

    def broadcast_to(self, a, shape):
        shape = tuple(shape)
        return self._record(
            "broadcast", lambda x: np.broadcast_to(x, shape),
            lambda g, n: (unbroadcast(g, n.parents[0].shape),), (a,))

    def reshape(self, a, shape):
        return self._record(
            "reshape", lambda x: np.reshape(x, shape),
            lambda g, n: (np.reshape(g, n.parents[0].shape),), (a,))

    def transpose(self, a, axes):
        inv = tuple(np.argsort(axes))
        return self._record(
            "transpose", lambda x: np.transpose(x, axes),
            lambda g, n: (np.transpose(g, inv),), (a,))

    def sum(self, a):
        return self._record(
            "sum", lambda x: np.sum(x),
            lambda g, n: (np.broadcast_to(g, n.parents[0].shape),), (a,))

    # -- probability ops -----------------------------------------------
    def logsumexp(self, a, axis=-1):
        def fwd(x):
            m = x.max(axis=axis, keepdims=True)
            return m + np.log(np.exp(x - m).sum(axis=axis, keepdims=True))

        def bwd(g, n):
            return (g * np.exp(n.parents[0].value - n.value),)
        return self._record("logsumexp", fwd, bwd, (a,))

    def log_softmax(self, a, axis=-1):
        def fwd(x):
            s = x - x.max(axis=axis, keepdims=True)
            return s - np.log(np.exp(s).sum(axis=axis, keepdims=True))

        def bwd(g, n):
            return (g - np.exp(n.value) * g.sum(axis=axis, keepdims=True),)
        return self._record("log_softmax", fwd, bwd, (a,))

    def nll(self, logp, y):
        """Mean negative log-probability of the chosen columns, floored at PROB_FLOOR."""
        y = np.asarray(y, dtype=int)
        rows = np.arange(len(y))

        def fwd(lp):
            return -np.mean(np.maximum(lp[rows, y], LOG_FLOOR))

        def bwd(g, n):
            lp = n.parents[0].value
            out = np.zeros_like(lp)
            live = lp[rows, y] > LOG_FLOOR
            out[rows[live], y[live]] = -g / len(y)
            return (out,)
        return self._record("nll", fwd, bwd, (logp,))

    def penalty(self, weights, l1: float, l2: float):
        """l1 * sum|w| + l2 * sum w^2 over a list of weight nodes."""
        weights = tuple(weights)

        def fwd(*ws):
            total = 0.0
            for w in ws:
                if l1:
                    total += l1 * np.abs(w).sum()
                if l2:
                    total += l2 * np.square(w).sum()
            return np.asarray(total)

        def bwd(g, n):
            return tuple(g * (l1 * np.sign(w.value) + 2.0 * l2 * w.value) for w in n.parents)
        return self._record("penalty", fwd, bwd, weights)

    # -- normalisation -------------------------------------------------
    def batch_norm(self, x, gamma, beta, axis=-2, eps=BN_EPS):
        """Train-mode batch norm; ``node.aux`` starts with (batch_mean, batch_var)."""
        def fwd(xv, gv, bv):
            mean = xv.mean(axis=axis, keepdims=True)
            xc = xv - mean
            var = np.mean(xc * xc, axis=axis, keepdims=True)
            inv = 1.0 / np.sqrt(var + eps)
            xhat = xc * inv
            return gv * xhat + bv, (mean, var, xhat, inv)

        def bwd(g, n):
            gv = n.parents[1].value
            _, _, xhat, inv = n.aux
            dxhat = g * gv
            dx = inv * (dxhat - dxhat.mean(axis=axis, keepdims=True)
                        - xhat * (dxhat * xhat).mean(axis=axis, keepdims=True))
            return (dx, unbroadcast(g * xhat, n.parents[1].shape),
                    unbroadcast(g, n.parents[2].shape))
        return self._record("batch_norm", None, bwd, (x, gamma, beta), aux_fwd=fwd)

    def frozen_norm(self, x, gamma, beta, mean, var, eps=BN_EPS):
        """Eval-mode batch norm with fixed (running) statistics."""
        inv = 1.0 / np.sqrt(var + eps)

        def bwd(g, n):
            xv = n.parents[0].value
            return (g * n.parents[1].value * inv,
                    unbroadcast(g * (xv - mean) * inv, n.parents[1].shape),
                    unbroadcast(g, n.parents[2].shape))
        return self._record(
            "frozen_norm", lambda xv, gv, bv: gv * ((xv - mean) * inv) + bv, bwd, (x, gamma, beta))


class _AuxForward:
    __slots__ = ("fn",)

    def __init__(self, fn):
        self.fn = fn
