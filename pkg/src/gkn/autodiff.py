"""Minimal reverse-mode differentiation over dense float64 arrays.

Operations are plain functions that take :class:`Tensor` inputs and record
themselves on the :class:`Tape` of their first taped input.  Calling
:func:`backward` on a scalar result walks the tape in reverse and
accumulates gradients for every tensor that requires them.

Only the handful of operations needed by the graph kernel network and the
baselines are provided; there is no general broadcasting.
"""
from __future__ import annotations

from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp

DTYPE = np.float64


class Tensor:
    """Dense float64 array plus an optional handle on a tape node."""

    __slots__ = ("value", "requires_grad", "node_id", "tape")

    def __init__(self, value, requires_grad: bool = False, tape: Tape | None = None,
                 node_id: int | None = None):
        self.value = np.asarray(value, dtype=DTYPE)
        self.requires_grad = requires_grad
        self.tape = tape
        self.node_id = node_id

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    def numpy(self) -> np.ndarray:
        return self.value

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"


class Tape:
    """Ordered record of operations.

    ``nodes[i]`` is ``(kind, input_ids, backward_fn)``; inputs always carry
    smaller ids than their outputs, so reverse order is a valid topological
    order for the backward sweep.
    """

    def __init__(self):
        self.nodes: list[tuple[str, tuple[int | None, ...], Callable | None]] = []
        self.tensors: list[Tensor] = []
        self.grads: dict[int, np.ndarray] = {}

    def leaf(self, value, requires_grad: bool = True) -> Tensor:
        t = Tensor(value, requires_grad=requires_grad, tape=self)
        t.node_id = self._push("leaf", (), None, t)
        return t

    def _push(self, kind, input_ids, backward_fn, out: Tensor) -> int:
        self.nodes.append((kind, tuple(input_ids), backward_fn))
        self.tensors.append(out)
        return len(self.nodes) - 1

    def grad(self, t: Tensor) -> np.ndarray | None:
        return self.grads.get(t.node_id)


def constant(value) -> Tensor:
    return Tensor(value, requires_grad=False)


def _record(kind: str, value: np.ndarray, inputs: Sequence[Tensor], backward_fn) -> Tensor:
    """Wrap ``value`` and register it if any input needs a gradient.

    ``backward_fn(g)`` returns one gradient (or None) per input.
    """
    needs = any(x.requires_grad for x in inputs)
    if not needs:
        return Tensor(value)
    tape = next(x.tape for x in inputs if x.requires_grad)
    out = Tensor(value, requires_grad=True, tape=tape)
    ids = tuple(x.node_id if x.requires_grad else None for x in inputs)
    out.node_id = tape._push(kind, ids, backward_fn, out)
    return out


# ---------------------------------------------------------------------------
# operations

def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.value.ndim != 2 or b.value.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    av, bv = a.value, b.value

    def back(g):
        return (g @ bv.T if a.requires_grad else None,
                av.T @ g if b.requires_grad else None)

    return _record("matmul", av @ bv, (a, b), back)


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """``x @ weight.T + bias`` with ``weight`` stored as (out, in)."""
    if x.value.ndim != 2 or weight.value.ndim != 2 or x.shape[1] != weight.shape[1]:
        raise ValueError(f"linear: input {x.shape} does not fit weight {weight.shape}")
    xv, wv = x.value, weight.value
    out = xv @ wv.T
    if bias is not None:
        if bias.shape != (wv.shape[0],):
            raise ValueError(f"linear: bias shape {bias.shape} != ({wv.shape[0]},)")
        out += bias.value
    inputs = (x, weight) if bias is None else (x, weight, bias)

    def back(g):
        gx = g @ wv if x.requires_grad else None
        gw = g.T @ xv if weight.requires_grad else None
        if bias is None:
            return gx, gw
        return gx, gw, (g.sum(axis=0) if bias.requires_grad else None)

    return _record("linear", out, inputs, back)


def add(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ValueError(f"add: shape mismatch {a.shape} vs {b.shape}")
    return _record("add", a.value + b.value, (a, b), lambda g: (g, g))


def scale(a: Tensor, c: float) -> Tensor:
    return _record("scale", a.value * c, (a,), lambda g: (g * c,))


def relu(x: Tensor) -> Tensor:
    # subgradient at exactly 0 is 0
    mask = x.value > 0
    return _record("relu", np.where(mask, x.value, 0.0), (x,), lambda g: (g * mask,))


def identity(x: Tensor) -> Tensor:
    return x


ACTIVATIONS = {"relu": relu, "identity": identity}


def reshape(x: Tensor, shape: tuple[int, ...]) -> Tensor:
    old = x.shape
    return _record("reshape", x.value.reshape(shape), (x,), lambda g: (g.reshape(old),))


def mul_rows(x: Tensor, s: Tensor) -> Tensor:
    """Scale row ``i`` of ``x`` (E, c) by the scalar ``s[i, 0]`` (E, 1)."""
    if x.value.ndim != 2 or s.shape != (x.shape[0], 1):
        raise ValueError(f"mul_rows: bad shapes {x.shape}, {s.shape}")
    xv, sv = x.value, s.value

    def back(g):
        return (g * sv if x.requires_grad else None,
                (g * xv).sum(axis=1, keepdims=True) if s.requires_grad else None)

    return _record("mul_rows", xv * sv, (x, s), back)


def incidence(index: np.ndarray, num_rows: int, weights: np.ndarray | None = None) -> sp.csr_matrix:
    """Sparse (num_rows, len(index)) matrix with ``weights[e]`` at (index[e], e)."""
    index = np.asarray(index, dtype=np.int64)
    if index.size and (index.min() < 0 or index.max() >= num_rows):
        raise IndexError(f"index out of range for {num_rows} rows")
    if weights is None:
        weights = np.ones(index.size)
    return sp.csr_matrix((weights, (index, np.arange(index.size))), shape=(num_rows, index.size))


def gather(x: Tensor, index: np.ndarray, scatter: sp.csr_matrix | None = None) -> Tensor:
    """Rows ``x[index]``.  ``scatter`` optionally supplies a cached incidence matrix."""
    index = np.asarray(index, dtype=np.int64)
    if index.size and (index.min() < 0 or index.max() >= x.shape[0]):
        raise IndexError("gather: index out of range")
    rows = x.shape[0]

    def back(g):
        s = scatter if scatter is not None else incidence(index, rows)
        return (np.asarray(s @ g.reshape(g.shape[0], -1)).reshape((rows,) + g.shape[1:]),)

    return _record("gather", x.value[index], (x,), back)


def mean_aggregator(targets: np.ndarray, num_nodes: int) -> sp.csr_matrix:
    """Row-normalised incidence: row k averages the messages aimed at k."""
    targets = np.asarray(targets, dtype=np.int64)
    if targets.size and (targets.min() < 0 or targets.max() >= num_nodes):
        raise IndexError(f"scatter_mean: target index out of range for {num_nodes} nodes")
    counts = np.bincount(targets, minlength=num_nodes).astype(DTYPE)
    return incidence(targets, num_nodes, 1.0 / counts[targets])


def scatter_mean(messages: Tensor, targets: np.ndarray, num_nodes: int,
                 aggregator: sp.csr_matrix | None = None) -> Tensor:
    """Mean of the message rows sent to each node; nodes with no messages get 0."""
    if messages.value.ndim != 2 or messages.shape[0] != len(targets):
        raise ValueError(f"scatter_mean: {messages.shape} messages for {len(targets)} targets")
    agg = aggregator if aggregator is not None else mean_aggregator(targets, num_nodes)
    out = np.asarray(agg @ messages.value)
    return _record("scatter_mean", out, (messages,), lambda g: (np.asarray(agg.T @ g),))


class OuterSum:
    """Deferred gradient ``sum_t g_t[e] (x) v_t[e]`` for an (E, n, n) input.

    A kernel shared by T message-passing steps receives T outer-product
    gradients; contracting them in one batched product is cheaper than
    forming and adding T dense (E, n, n) arrays.
    """

    __slots__ = ("left", "right")

    def __init__(self, left: list[np.ndarray], right: list[np.ndarray]):
        self.left = left
        self.right = right

    def __add__(self, other):
        if isinstance(other, OuterSum):
            return OuterSum(self.left + other.left, self.right + other.right)
        return self.materialize() + other

    __radd__ = __add__

    def materialize(self) -> np.ndarray:
        g = np.stack(self.left, axis=2)     # (E, n, T)
        v = np.stack(self.right, axis=1)    # (E, T, n)
        return np.matmul(g, v)


def edge_matvec(kmat: Tensor, v: Tensor) -> Tensor:
    """Per-edge product ``kmat[e] @ v[e]`` for kmat (E, n, n) and v (E, n)."""
    if kmat.value.ndim != 3 or v.value.ndim != 2 or kmat.shape[:2] != v.shape \
            or kmat.shape[2] != v.shape[1]:
        raise ValueError(f"edge_matvec: bad shapes {kmat.shape}, {v.shape}")
    kv, vv = kmat.value, v.value
    out = np.matmul(kv, vv[:, :, None])[:, :, 0]

    def back(g):
        gk = OuterSum([g], [vv]) if kmat.requires_grad else None
        gv = np.matmul(g[:, None, :], kv)[:, 0, :] if v.requires_grad else None
        return gk, gv

    return _record("edge_matvec", out, (kmat, v), back)


def sum_all(x: Tensor) -> Tensor:
    shape = x.shape
    return _record("sum", np.array(x.value.sum()), (x,), lambda g: (np.full(shape, float(g)),))


def mse_loss(pred: Tensor, target: Tensor) -> Tensor:
    if pred.shape != target.shape:
        raise ValueError(f"mse_loss: shape mismatch {pred.shape} vs {target.shape}")
    diff = pred.value - target.value
    count = diff.size

    def back(g):
        d = (2.0 * float(g) / count) * diff
        return (d if pred.requires_grad else None, -d if target.requires_grad else None)

    return _record("mse", np.array(np.mean(diff * diff)), (pred, target), back)


# ---------------------------------------------------------------------------

def backward(loss: Tensor) -> dict[int, np.ndarray]:
    """Accumulate d(loss)/d(node) for every taped node; returns leaf gradients."""
    if loss.value.size != 1 or loss.value.ndim != 0:
        raise ValueError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad or loss.tape is None:
        raise ValueError("loss is not on a tape")
    tape = loss.tape
    grads: dict[int, object] = {loss.node_id: np.array(1.0)}
    owned: set[int] = set()
    for nid in range(loss.node_id, -1, -1):
        g = grads.get(nid)
        if g is None:
            continue
        kind, input_ids, fn = tape.nodes[nid]
        if isinstance(g, OuterSum):
            g = grads[nid] = g.materialize()
        if fn is None:
            continue
        for iid, gi in zip(input_ids, fn(g)):
            if iid is None or gi is None:
                continue
            prev = grads.get(iid)
            if prev is None:
                grads[iid] = gi
            elif iid in owned and isinstance(prev, np.ndarray) and isinstance(gi, np.ndarray):
                prev += gi
            else:
                grads[iid] = prev + gi
                owned.add(iid)
        del grads[nid]
    # only leaves (which have no backward_fn) survive the sweep
    tape.grads = grads
    return grads


def grad_check(f: Callable[[Tensor], Tensor], point, step: float = 1e-5) -> float:
    """Max relative gap between the taped gradient of ``f`` and central differences.

    ``f`` maps a tensor to a scalar tensor.  The relative gap per coordinate is
    ``|analytic - cd| / (|analytic| + |cd| + 1e-12)``.
    """
    x0 = np.array(point, dtype=DTYPE)
    tape = Tape()
    leaf = tape.leaf(x0.copy())
    backward(f(leaf))
    analytic = tape.grad(leaf)
    if analytic is None:
        analytic = np.zeros_like(x0)
    flat = x0.reshape(-1)
    cd = np.empty(flat.size)
    for i in range(flat.size):
        xp = flat.copy()
        xm = flat.copy()
        xp[i] += step
        xm[i] -= step
        fp = float(f(constant(xp.reshape(x0.shape))).value)
        fm = float(f(constant(xm.reshape(x0.shape))).value)
        cd[i] = (fp - fm) / (2 * step)
    a = analytic.reshape(-1)
    return float(np.max(np.abs(a - cd) / (np.abs(a) + np.abs(cd) + 1e-12)))
