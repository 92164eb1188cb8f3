"""Tape-based reverse-mode automatic differentiation on float64 arrays.

A :class:`Tape` records every primitive applied to a tracked tensor. Leaves
are created with :meth:`Tape.parameter`; anything built from plain
:class:`Tensor` objects (no tape) is a constant and costs nothing to track.
:meth:`Tape.backward` walks the record once, newest node first.

    >>> from acorl import autodiff as ad
    >>> tape = ad.Tape()
    >>> x = tape.parameter([1.0, 2.0])
    >>> tape.backward(ad.sum(x * x))[x].tolist()
    [2.0, 4.0]

Broadcasting is deliberately absent except for ``broadcast_add_row`` (bias
addition); every other shape mismatch is a :class:`ContractViolation`.
"""

from __future__ import annotations

import builtins
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ContractViolation, DomainError

__all__ = [
    "Tensor",
    "Tape",
    "Gradients",
    "apply_primitive",
    "add",
    "sub",
    "mul",
    "div",
    "neg",
    "exp",
    "log",
    "relu",
    "scale",
    "broadcast_add_row",
    "matmul",
    "transpose",
    "softmax_rows",
    "log_softmax_rows",
    "grad_reverse",
    "sum",
    "mean",
    "pick",
    "sqrt",
    "clamp",
    "l2_normalize_rows",
    "backward",
    "finite_difference_check",
]

NORM_EPS = 1e-12


class Tensor:
    """A float64 array, optionally bound to a node on a :class:`Tape`."""

    __slots__ = ("data", "tape", "node")

    def __init__(self, data, tape: Tape | None = None, node: int | None = None):
        arr = np.asarray(data, dtype=np.float64)
        if 0 in arr.shape:
            raise ContractViolation(f"tensor dimensions must be positive, got {arr.shape}")
        self.data = arr
        self.tape = tape
        self.node = node

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def tracked(self) -> bool:
        return self.tape is not None

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractViolation(f"item() needs a single element, shape is {self.shape}")
        return float(self.data.reshape(-1)[0])

    def __repr__(self):
        tag = f", node={self.node}" if self.tracked else ""
        return f"Tensor({self.data!r}{tag})"

    def __add__(self, other):
        return add(self, _as_tensor(other))

    def __radd__(self, other):
        # lets builtins.sum() start from 0
        if isinstance(other, (int, float)) and other == 0:
            return self
        return add(_as_tensor(other), self)

    def __sub__(self, other):
        return sub(self, _as_tensor(other))

    def __rsub__(self, other):
        return sub(_as_tensor(other), self)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, other)
        return mul(self, _as_tensor(other))

    def __rmul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, other)
        return mul(_as_tensor(other), self)

    def __truediv__(self, other):
        if isinstance(other, (int, float)):
            if other == 0:
                raise DomainError("division by zero scalar")
            return scale(self, 1.0 / other)
        return div(self, _as_tensor(other))

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, _as_tensor(other))

    # tensors are compared by identity; elementwise comparisons live on .data
    __hash__ = object.__hash__


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


@dataclass
class Node:
    kind: str
    parents: tuple  # node ids, None for constant inputs
    saved: tuple = ()
    attrs: dict = field(default_factory=dict)
    shape: tuple = ()


class Gradients(dict):
    """Mapping node id -> gradient array; also indexable by the tracked tensor."""

    def __getitem__(self, key):
        if isinstance(key, Tensor):
            key = key.node
        return dict.__getitem__(self, key)


class Tape:
    """Append-only record of primitive applications.

    Build one per forward pass and drop it after :meth:`backward`.
    """

    def __init__(self):
        self.nodes: list[Node] = []
        self.parameters: list[int] = []

    def __len__(self):
        return len(self.nodes)

    def parameter(self, data) -> Tensor:
        """Register a leaf whose gradient :meth:`backward` will report."""
        if isinstance(data, Tensor):
            if data.tracked:
                raise ContractViolation("tensor is already tracked on a tape")
            data = data.data
        arr = np.array(data, dtype=np.float64)
        t = self._record("leaf", (), arr)
        self.parameters.append(t.node)
        return t

    def _record(self, kind, inputs, out, saved=(), **attrs) -> Tensor:
        parents = tuple(t.node if t.tracked else None for t in inputs)
        self.nodes.append(Node(kind, parents, saved, attrs, out.shape))
        return Tensor(out, self, len(self.nodes) - 1)

    def backward(self, loss: Tensor) -> Gradients:
        """Return d(loss)/d(parameter) for every parameter registered here.

        Parameters the loss does not depend on get zero arrays. The tape is
        not modified, so calling this twice gives identical results.
        """
        if not isinstance(loss, Tensor) or loss.tape is not self:
            raise ContractViolation("loss is not tracked on this tape")
        if loss.data.size != 1:
            raise ContractViolation(f"loss must be a scalar, got shape {loss.shape}")
        grads: list = [None] * (loss.node + 1)
        grads[loss.node] = np.ones(loss.shape)
        for i in range(loss.node, -1, -1):
            g = grads[i]
            if g is None:
                continue
            node = self.nodes[i]
            if node.kind == "leaf":
                continue
            for p, pg in zip(node.parents, _RULES[node.kind](node, g)):
                if p is None or pg is None:
                    continue
                grads[p] = pg if grads[p] is None else grads[p] + pg
        out = Gradients()
        for p in self.parameters:
            g = grads[p] if p < len(grads) else None
            out[p] = np.zeros(self.nodes[p].shape) if g is None else g
        return out


def backward(loss: Tensor) -> Gradients:
    if not isinstance(loss, Tensor) or not loss.tracked:
        raise ContractViolation("loss is not tracked on any tape")
    return loss.tape.backward(loss)


def _tape_of(*inputs: Tensor) -> Tape | None:
    tape = None
    for t in inputs:
        if t.tape is None:
            continue
        if tape is None:
            tape = t.tape
        elif t.tape is not tape:
            raise ContractViolation("inputs belong to different tapes")
    return tape


def _emit(kind, inputs, out, saved=(), **attrs) -> Tensor:
    tape = _tape_of(*inputs)
    if tape is None:
        return Tensor(out)
    return tape._record(kind, inputs, out, saved, **attrs)


def _same_shape(kind, a: Tensor, b: Tensor):
    if a.shape != b.shape:
        raise ContractViolation(f"{kind}: shape mismatch {a.shape} vs {b.shape}")


def _first_index(mask: np.ndarray):
    idx = tuple(int(i) for i in np.argwhere(mask)[0])
    return idx if len(idx) != 1 else idx[0]


# --------------------------------------------------------------------------
# primitives


def add(a: Tensor, b: Tensor) -> Tensor:
    _same_shape("add", a, b)
    return _emit("add", (a, b), a.data + b.data)


def sub(a: Tensor, b: Tensor) -> Tensor:
    _same_shape("sub", a, b)
    return _emit("sub", (a, b), a.data - b.data)


def mul(a: Tensor, b: Tensor) -> Tensor:
    _same_shape("mul", a, b)
    return _emit("mul", (a, b), a.data * b.data, (a.data, b.data))


def div(a: Tensor, b: Tensor) -> Tensor:
    _same_shape("div", a, b)
    zero = b.data == 0
    if zero.any():
        raise DomainError(f"div: zero divisor at index {_first_index(zero)}")
    return _emit("div", (a, b), a.data / b.data, (a.data, b.data))


def neg(a: Tensor) -> Tensor:
    return _emit("neg", (a,), -a.data)


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)
    return _emit("exp", (a,), out, (out,))


def log(a: Tensor) -> Tensor:
    bad = ~(a.data > 0)
    if bad.any():
        raise DomainError(f"log: non-positive input at index {_first_index(bad)}")
    return _emit("log", (a,), np.log(a.data), (a.data,))


def relu(a: Tensor) -> Tensor:
    # subgradient at exactly 0 is 0
    mask = a.data > 0
    return _emit("relu", (a,), np.where(mask, a.data, 0.0), (mask,))


def scale(a: Tensor, c: float) -> Tensor:
    return _emit("scale", (a,), a.data * float(c), c=float(c))


def broadcast_add_row(a: Tensor, b: Tensor) -> Tensor:
    """``a + b`` where ``b`` is a row vector matching ``a``'s last axis."""
    row = b.data.reshape(-1) if b.data.ndim == 2 and b.shape[0] == 1 else b.data
    if a.data.ndim < 1 or row.ndim != 1 or row.shape[0] != a.shape[-1]:
        raise ContractViolation(
            f"broadcast_add_row: row shape {b.shape} does not match last axis of {a.shape}"
        )
    return _emit("broadcast_add_row", (a, b), a.data + row, b_shape=b.shape)


def apply_primitive(kind: str, a: Tensor, b: Tensor | None = None, **attrs) -> Tensor:
    """Dispatch a primitive by name; ``scale`` takes ``c=...``."""
    binary = {"add": add, "sub": sub, "mul": mul, "div": div, "broadcast_add_row": broadcast_add_row}
    unary = {"neg": neg, "exp": exp, "log": log, "relu": relu}
    if kind in binary:
        if b is None:
            raise ContractViolation(f"{kind} needs two operands")
        return binary[kind](a, b)
    if kind in unary:
        return unary[kind](a)
    if kind == "scale":
        return scale(a, attrs["c"])
    raise ContractViolation(f"unknown primitive {kind!r}")


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ContractViolation(f"matmul: cannot multiply {a.shape} by {b.shape}")
    return _emit("matmul", (a, b), a.data @ b.data, (a.data, b.data))


def transpose(a: Tensor) -> Tensor:
    if a.data.ndim != 2:
        raise ContractViolation(f"transpose: expected a matrix, got shape {a.shape}")
    return _emit("transpose", (a,), a.data.T.copy())


def _check_rows(kind, a: Tensor):
    if a.data.ndim != 2:
        raise ContractViolation(f"{kind}: expected a matrix, got shape {a.shape}")
    if np.isnan(a.data).any():
        raise DomainError(f"{kind}: NaN at index {_first_index(np.isnan(a.data))}")


def softmax_rows(a: Tensor) -> Tensor:
    _check_rows("softmax_rows", a)
    shifted = a.data - a.data.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=1, keepdims=True)
    return _emit("softmax_rows", (a,), out, (out,))


def log_softmax_rows(a: Tensor) -> Tensor:
    _check_rows("log_softmax_rows", a)
    shifted = a.data - a.data.max(axis=1, keepdims=True)
    out = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    return _emit("log_softmax_rows", (a,), out, (out,))


def grad_reverse(a: Tensor, lam: float = 1.0) -> Tensor:
    """Identity forward; multiplies the gradient by ``-lam`` on the way back."""
    if not lam >= 0:
        raise ContractViolation(f"grad_reverse: lambda must be nonnegative, got {lam}")
    return _emit("grad_reverse", (a,), a.data, lam=float(lam))


def sum(a: Tensor) -> Tensor:  # noqa: A001 - mirrors numpy naming
    return _emit("sum", (a,), np.asarray(a.data.sum()), in_shape=a.shape)


def mean(a: Tensor) -> Tensor:
    return _emit("mean", (a,), np.asarray(a.data.mean()), in_shape=a.shape)


def pick(a: Tensor, index) -> Tensor:
    """Row-wise gather ``a[i, index[i]]`` returning a vector."""
    idx = np.asarray(index)
    if a.data.ndim != 2 or idx.shape != (a.shape[0],):
        raise ContractViolation(f"pick: index shape {idx.shape} does not fit {a.shape}")
    if idx.dtype.kind not in "iu" or (idx < 0).any() or (idx >= a.shape[1]).any():
        raise ContractViolation(f"pick: indices must be integers in [0, {a.shape[1]})")
    rows = np.arange(a.shape[0])
    return _emit("pick", (a,), a.data[rows, idx], (rows, idx), in_shape=a.shape)


def sqrt(a: Tensor) -> Tensor:
    bad = a.data < 0
    if bad.any():
        raise DomainError(f"sqrt: negative input at index {_first_index(bad)}")
    out = np.sqrt(a.data)
    return _emit("sqrt", (a,), out, (out,))


def clamp(a: Tensor, lo: float = -np.inf, hi: float = np.inf) -> Tensor:
    """Clip into ``[lo, hi]``; clipped entries pass no gradient."""
    inside = (a.data >= lo) & (a.data <= hi)
    return _emit("clamp", (a,), np.clip(a.data, lo, hi), (inside,))


def l2_normalize_rows(a: Tensor) -> Tensor:
    """Scale each row to unit length (norms floored at 1e-12)."""
    _check_rows("l2_normalize_rows", a)
    norm = np.maximum(np.sqrt((a.data * a.data).sum(axis=1, keepdims=True)), NORM_EPS)
    out = a.data / norm
    return _emit("l2_normalize_rows", (a,), out, (out, norm))


# --------------------------------------------------------------------------
# backward rules: (node, upstream grad) -> tuple of parent grads


def _rule_matmul(node, g):
    a, b = node.saved
    return (g @ b.T if node.parents[0] is not None else None,
            a.T @ g if node.parents[1] is not None else None)


def _rule_broadcast_add_row(node, g):
    gb = g.reshape(-1, g.shape[-1]).sum(axis=0).reshape(node.attrs["b_shape"])
    return g, gb


def _rule_softmax(node, g):
    (y,) = node.saved
    return (y * (g - (g * y).sum(axis=1, keepdims=True)),)


def _rule_log_softmax(node, g):
    (y,) = node.saved
    return (g - np.exp(y) * g.sum(axis=1, keepdims=True),)


def _rule_pick(node, g):
    rows, idx = node.saved
    out = np.zeros(node.attrs["in_shape"])
    out[rows, idx] = g
    return (out,)


def _rule_l2(node, g):
    y, norm = node.saved
    return ((g - y * (g * y).sum(axis=1, keepdims=True)) / norm,)


_RULES: dict[str, Callable] = {
    "add": lambda n, g: (g, g),
    "sub": lambda n, g: (g, -g),
    "mul": lambda n, g: (g * n.saved[1], g * n.saved[0]),
    "div": lambda n, g: (g / n.saved[1], -g * n.saved[0] / (n.saved[1] * n.saved[1])),
    "neg": lambda n, g: (-g,),
    "exp": lambda n, g: (g * n.saved[0],),
    "log": lambda n, g: (g / n.saved[0],),
    "relu": lambda n, g: (np.where(n.saved[0], g, 0.0),),
    "scale": lambda n, g: (g * n.attrs["c"],),
    "broadcast_add_row": _rule_broadcast_add_row,
    "matmul": _rule_matmul,
    "transpose": lambda n, g: (g.T,),
    "softmax_rows": _rule_softmax,
    "log_softmax_rows": _rule_log_softmax,
    "grad_reverse": lambda n, g: (g * -n.attrs["lam"],),
    "sum": lambda n, g: (np.full(n.attrs["in_shape"], g.reshape(())),),
    "mean": lambda n, g: (
        np.full(n.attrs["in_shape"], g.reshape(()) / np.prod(n.attrs["in_shape"], dtype=np.int64)),
    ),
    "pick": _rule_pick,
    "sqrt": lambda n, g: (g * 0.5 / n.saved[0],),
    "clamp": lambda n, g: (np.where(n.saved[0], g, 0.0),),
    "l2_normalize_rows": _rule_l2,
}


# --------------------------------------------------------------------------


def finite_difference_check(
    f: Callable[[Tensor], Tensor], x, eps: float = 1e-5, factor: float = 1.0
) -> float:
    """Max relative error between backward() and central differences of ``f`` at ``x``.

    The denominator per coordinate is ``max(|analytic|, |numeric|, 1e-12)``.
    Central differences only see the forward function, so a graph routed
    through ``grad_reverse(., lam)`` is checked with ``factor=-lam``: the
    analytic gradient is compared against ``factor * numeric``.
    """
    x = np.array(x.data if isinstance(x, Tensor) else x, dtype=np.float64)
    tape = Tape()
    xt = tape.parameter(x)
    out = f(xt)
    if not isinstance(out, Tensor) or out.tape is not tape:
        analytic = np.zeros_like(x)
    else:
        analytic = tape.backward(out)[xt]
    worst = 0.0
    flat = x.reshape(-1)
    for i in range(flat.size):
        hi, lo = flat.copy(), flat.copy()
        hi[i] += eps
        lo[i] -= eps
        f_hi = _value(f(Tensor(hi.reshape(x.shape))))
        f_lo = _value(f(Tensor(lo.reshape(x.shape))))
        numeric = factor * (f_hi - f_lo) / (2 * eps)
        a = analytic.reshape(-1)[i]
        err = abs(a - numeric) / builtins.max(abs(a), abs(numeric), 1e-12)
        worst = builtins.max(worst, err)
    return worst


def _value(t) -> float:
    return t.item() if isinstance(t, Tensor) else float(t)
