"""Minimal reverse-mode automatic differentiation over dense float64 arrays.

A :class:`Tape` records primitive applications in execution order; backward
replays them strictly in reverse, accumulating vector-Jacobian products into
the leaves that require gradients.  The primitive set is exactly what the
hyperbolic graph layers need: elementwise arithmetic with broadcasting,
cosh/sinh/arcosh/sqrt, clamp (zero gradient on the clamped branch), ReLU,
masked selection, dense and sparse matrix products, reductions, transpose,
concatenation, row-wise log-softmax and masked negative log-likelihood.

Every public function also accepts plain numpy arrays and then evaluates
eagerly with no recording, so geometric code written against this module
runs identically on raw arrays (diagnostics, evaluation) and on tracked
tensors (training).

Sessions are single-threaded by design: the active tape is thread-local,
so independent runs may execute on separate threads without sharing state.
"""

from __future__ import annotations

import threading
from contextlib import contextmanager
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import DimensionError, UsageError

__all__ = [
    "Tensor",
    "Tape",
    "GradCheckResult",
    "grad_check",
    "add", "sub", "mul", "div", "neg", "matmul", "transpose",
    "sum", "mean", "cosh", "sinh", "arcosh", "sqrt", "clamp", "relu",
    "where", "concat", "spmm", "log_softmax", "nll_loss",
]

_TLS = threading.local()

# Floor for denominators inside backward rules; keeps gradients finite at
# domain boundaries (the clamped branch then carries gradient zero anyway).
_GRAD_FLOOR = 1e-24

# Test-only hook: when True, sinh's backward rule is deliberately wrong.
_CORRUPT_BACKWARD = False


@contextmanager
def corrupted_backward():
    """Negative-control hook for gradient-check tests."""
    global _CORRUPT_BACKWARD
    _CORRUPT_BACKWARD = True
    try:
        yield
    finally:
        _CORRUPT_BACKWARD = False


def _active_tape() -> "Tape | None":
    return getattr(_TLS, "tape", None)


class Tensor:
    """Dense float64 array with optional gradient tracking.

    Shapes are immutable after creation.  ``grad`` is populated by
    ``Tape.backward`` for leaves created with ``requires_grad=True``.
    """

    __array_ufunc__ = None  # keep numpy from absorbing us in mixed expressions

    __slots__ = ("data", "requires_grad", "grad", "name", "decay",
                 "_tape", "_nid", "_tracked")

    def __init__(self, data, requires_grad: bool = False, name: str = "",
                 decay: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self.name = name
        self.decay = decay
        self._tape = None
        self._nid = -1
        self._tracked = False

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def __repr__(self) -> str:
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.data.shape}{tag}, requires_grad={self.requires_grad})"

    # arithmetic sugar; definitions follow the module-level functions below
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
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)


class Tape:
    """Execution-ordered record of primitive applications.

    Use as a context manager around the forward pass, then call
    :meth:`backward` exactly once on a scalar loss.  Records are released
    afterwards; re-running backward without re-recording is a usage error.
    """

    def __init__(self):
        self._records: list[tuple[int, tuple]] = []
        self._leaves: list[Tensor] = []
        self._n_nodes = 0
        self._used = False

    def __enter__(self) -> "Tape":
        if _active_tape() is not None:
            raise UsageError("a tape is already active on this thread")
        _TLS.tape = self
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        _TLS.tape = None

    def _ensure(self, t: Tensor) -> None:
        if t._tape is not self:
            t._tape = self
            t._nid = self._n_nodes
            self._n_nodes += 1
            t._tracked = t.requires_grad
            if t.requires_grad:
                self._leaves.append(t)

    def backward(self, loss: Tensor) -> None:
        """Populate ``grad`` on every requires_grad leaf reachable from loss."""
        if self._used:
            raise UsageError("tape already consumed; re-record before calling backward again")
        if not isinstance(loss, Tensor) or loss.data.size != 1:
            raise UsageError("backward requires a scalar loss tensor")
        if loss._tape is not self:
            raise UsageError("loss was not recorded on this tape")
        self._used = True
        grads: dict[int, np.ndarray] = {loss._nid: np.ones_like(loss.data)}
        for out_id, pairs in reversed(self._records):
            g = grads.pop(out_id, None)
            if g is None:
                continue
            for nid, fn in pairs:
                gi = fn(g)
                acc = grads.get(nid)
                grads[nid] = gi if acc is None else acc + gi
        for leaf in self._leaves:
            g = grads.get(leaf._nid)
            leaf.grad = np.zeros_like(leaf.data) if g is None else g
        self._records.clear()


def _lift(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _any_tensor(*xs) -> bool:
    return any(isinstance(x, Tensor) for x in xs)


def _apply(inputs: tuple[Tensor, ...], out_data: np.ndarray, grad_fns) -> Tensor:
    out = Tensor(out_data)
    tape = _active_tape()
    if tape is None:
        return out
    if tape._used:
        raise UsageError("tape already consumed; open a fresh tape to record")
    pairs = []
    for t, fn in zip(inputs, grad_fns):
        tape._ensure(t)
        if t._tracked:
            pairs.append((t._nid, fn))
    if pairs:
        tape._ensure(out)
        out._tracked = True
        tape._records.append((out._nid, tuple(pairs)))
    return out


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a broadcast gradient back down to ``shape``."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, (gs, ss) in enumerate(zip(g.shape, shape)) if ss == 1 and gs != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


# ---------------------------------------------------------------------------
# elementwise arithmetic


def add(a, b):
    if not _any_tensor(a, b):
        return np.add(a, b)
    ta, tb = _lift(a), _lift(b)
    sa, sb = ta.data.shape, tb.data.shape
    return _apply(
        (ta, tb), ta.data + tb.data,
        (lambda g: _unbroadcast(g, sa), lambda g: _unbroadcast(g, sb)),
    )


def sub(a, b):
    if not _any_tensor(a, b):
        return np.subtract(a, b)
    ta, tb = _lift(a), _lift(b)
    sa, sb = ta.data.shape, tb.data.shape
    return _apply(
        (ta, tb), ta.data - tb.data,
        (lambda g: _unbroadcast(g, sa), lambda g: _unbroadcast(-g, sb)),
    )


def mul(a, b):
    if not _any_tensor(a, b):
        return np.multiply(a, b)
    ta, tb = _lift(a), _lift(b)
    da, db = ta.data, tb.data
    return _apply(
        (ta, tb), da * db,
        (lambda g: _unbroadcast(g * db, da.shape), lambda g: _unbroadcast(g * da, db.shape)),
    )


def div(a, b):
    if not _any_tensor(a, b):
        return np.divide(a, b)
    ta, tb = _lift(a), _lift(b)
    da, db = ta.data, tb.data
    return _apply(
        (ta, tb), da / db,
        (lambda g: _unbroadcast(g / db, da.shape),
         lambda g: _unbroadcast(-g * da / (db * db), db.shape)),
    )


def neg(a):
    if not _any_tensor(a):
        return np.negative(a)
    ta = _lift(a)
    return _apply((ta,), -ta.data, (lambda g: -g,))


# ---------------------------------------------------------------------------
# linear algebra


def matmul(a, b):
    if not _any_tensor(a, b):
        return np.asarray(a) @ np.asarray(b)
    ta, tb = _lift(a), _lift(b)
    da, db = ta.data, tb.data
    if da.ndim != 2 or db.ndim != 2:
        raise DimensionError(f"matmul expects 2-d operands, got {da.shape} @ {db.shape}")
    if da.shape[1] != db.shape[0]:
        raise DimensionError(f"matmul shape mismatch: {da.shape} @ {db.shape}")
    return _apply(
        (ta, tb), da @ db,
        (lambda g: g @ db.T, lambda g: da.T @ g),
    )


def transpose(a):
    if not _any_tensor(a):
        return np.asarray(a).T
    ta = _lift(a)
    return _apply((ta,), ta.data.T.copy(), (lambda g: g.T,))


def spmm(p: sp.spmatrix, x):
    """Sparse constant matrix times dense operand; gradient flows to x only."""
    if not _any_tensor(x):
        return p @ np.asarray(x)
    tx = _lift(x)
    pt = p.T.tocsr()
    return _apply((tx,), p @ tx.data, (lambda g: pt @ g,))


# ---------------------------------------------------------------------------
# reductions


def sum(x, axis=None, keepdims: bool = False):
    if not _any_tensor(x):
        return np.sum(x, axis=axis, keepdims=keepdims)
    tx = _lift(x)
    shape = tx.data.shape

    def grad(g):
        if axis is None:
            return np.broadcast_to(g, shape).copy() if np.ndim(g) == 0 else np.full(shape, g)
        gg = g if keepdims else np.expand_dims(g, axis)
        return np.broadcast_to(gg, shape).copy()

    return _apply((tx,), np.sum(tx.data, axis=axis, keepdims=keepdims), (grad,))


def mean(x, axis=None, keepdims: bool = False):
    if not _any_tensor(x):
        return np.mean(x, axis=axis, keepdims=keepdims)
    tx = _lift(x)
    count = tx.data.size if axis is None else tx.data.shape[axis]
    return div(sum(tx, axis=axis, keepdims=keepdims), float(count))


# ---------------------------------------------------------------------------
# nonlinear scalars


def cosh(x):
    if not _any_tensor(x):
        return np.cosh(x)
    tx = _lift(x)
    d = tx.data
    return _apply((tx,), np.cosh(d), (lambda g: g * np.sinh(d),))


def sinh(x):
    if not _any_tensor(x):
        return np.sinh(x)
    tx = _lift(x)
    d = tx.data

    def grad(g):
        gg = g * np.cosh(d)
        return 2.0 * gg if _CORRUPT_BACKWARD else gg

    return _apply((tx,), np.sinh(d), (grad,))


def arcosh(x):
    """Inverse hyperbolic cosine, total on the reals.

    Inputs below 1 are treated as 1 (callers clamp beforehand); there and
    at the boundary the gradient follows the clamped branch, i.e. zero.
    """
    if not _any_tensor(x):
        return np.arccosh(np.maximum(x, 1.0))
    tx = _lift(x)
    d = tx.data

    def grad(g):
        denom = np.sqrt(np.maximum(d * d - 1.0, _GRAD_FLOOR))
        return g * (d > 1.0) / denom

    return _apply((tx,), np.arccosh(np.maximum(d, 1.0)), (grad,))


def sqrt(x):
    if not _any_tensor(x):
        return np.sqrt(x)
    tx = _lift(x)
    out = np.sqrt(tx.data)
    return _apply((tx,), out, (lambda g: g / (2.0 * np.maximum(out, _GRAD_FLOOR)),))


def clamp(x, lo=None, hi=None):
    """Clip to [lo, hi]; gradient is 1 strictly inside, 0 on clamped values."""
    if not _any_tensor(x):
        return np.clip(x, lo, hi)
    tx = _lift(x)
    d = tx.data
    mask = np.ones_like(d, dtype=bool)
    if lo is not None:
        mask &= d > lo
    if hi is not None:
        mask &= d < hi
    return _apply((tx,), np.clip(d, lo, hi), (lambda g: g * mask,))


def relu(x):
    if not _any_tensor(x):
        return np.maximum(x, 0.0)
    tx = _lift(x)
    mask = tx.data > 0.0
    return _apply((tx,), tx.data * mask, (lambda g: g * mask,))


def where(mask: np.ndarray, a, b):
    """Select a where mask else b; the mask is a constant boolean array."""
    if not _any_tensor(a, b):
        return np.where(mask, a, b)
    ta, tb = _lift(a), _lift(b)
    sa, sb = ta.data.shape, tb.data.shape
    return _apply(
        (ta, tb), np.where(mask, ta.data, tb.data),
        (lambda g: _unbroadcast(g * mask, sa), lambda g: _unbroadcast(g * ~mask, sb)),
    )


# ---------------------------------------------------------------------------
# structural ops


def concat(parts, axis: int = 1):
    if not _any_tensor(*parts):
        return np.concatenate(parts, axis=axis)
    tensors = [_lift(p) for p in parts]
    datas = [t.data for t in tensors]
    widths = [d.shape[axis] for d in datas]
    offsets = np.cumsum([0] + widths)

    def make_grad(i):
        sl = [slice(None)] * datas[0].ndim
        sl[axis] = slice(int(offsets[i]), int(offsets[i + 1]))
        sl = tuple(sl)
        return lambda g: g[sl]

    return _apply(tuple(tensors), np.concatenate(datas, axis=axis),
                  tuple(make_grad(i) for i in range(len(tensors))))


# ---------------------------------------------------------------------------
# classification head


def log_softmax(x):
    """Row-wise log-softmax of a 2-d score matrix."""
    if not _any_tensor(x):
        d = np.asarray(x)
        shifted = d - d.max(axis=1, keepdims=True)
        return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    tx = _lift(x)
    d = tx.data
    if d.ndim != 2:
        raise DimensionError(f"log_softmax expects a 2-d matrix, got shape {d.shape}")
    shifted = d - d.max(axis=1, keepdims=True)
    out = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    probs = np.exp(out)
    return _apply((tx,), out, (lambda g: g - probs * g.sum(axis=1, keepdims=True),))


def nll_loss(log_probs, labels: np.ndarray, idx: np.ndarray):
    """Mean negative log-likelihood of ``labels`` over the rows in ``idx``."""
    labels = np.asarray(labels, dtype=np.int64)
    idx = np.asarray(idx, dtype=np.int64)
    if idx.size == 0:
        raise UsageError("nll_loss needs a non-empty index set")
    if not _any_tensor(log_probs):
        lp = np.asarray(log_probs)
        return -float(np.mean(lp[idx, labels[idx]]))
    tx = _lift(log_probs)
    lp = tx.data
    picked = lp[idx, labels[idx]]
    out = np.asarray(-picked.mean())

    def grad(g):
        gi = np.zeros_like(lp)
        np.add.at(gi, (idx, labels[idx]), -float(g) / idx.size)
        return gi

    return _apply((tx,), out, (grad,))


# ---------------------------------------------------------------------------
# finite-difference verification


@dataclass
class GradCheckResult:
    max_rel_error: float
    checked: int
    skipped_kinks: int
    worst_param: str = ""


def grad_check(f, params, h: float = 1e-5, kink_tol: float = 0.1) -> GradCheckResult:
    """Compare tape gradients of ``f()`` against central differences.

    ``f`` must be a deterministic zero-argument callable (noise disabled)
    that reads the current ``data`` of every tensor in ``params`` and
    returns a scalar.  Relative error uses the denominator
    max(|analytic|, |numeric|, 1e-8).  Coordinates where the left and
    right one-sided differences disagree by more than ``kink_tol``
    (relative) straddle a kink such as a clamp boundary and are excluded
    from the maximum; the subgradient convention at those points is the
    clamped branch.
    """
    for p in params:
        p.grad = None
    with Tape() as tape:
        out = f()
        if not isinstance(out, Tensor):
            raise UsageError("grad_check expects f to return a Tensor under the tape")
        tape.backward(out)
    analytic = [p.grad.copy() for p in params]

    f0 = float(_scalar(f()))
    worst = 0.0
    worst_param = ""
    checked = 0
    skipped = 0
    for p, a in zip(params, analytic):
        flat = p.data.reshape(-1)
        aflat = a.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            fp = float(_scalar(f()))
            flat[i] = orig - h
            fm = float(_scalar(f()))
            flat[i] = orig
            central = (fp - fm) / (2.0 * h)
            right = (fp - f0) / h
            left = (f0 - fm) / h
            if abs(right - left) > kink_tol * max(abs(right), abs(left), 1.0):
                skipped += 1
                continue
            rel = abs(aflat[i] - central) / max(abs(aflat[i]), abs(central), 1e-8)
            checked += 1
            if rel > worst:
                worst = rel
                worst_param = p.name or f"param{params.index(p)}"
    return GradCheckResult(worst, checked, skipped, worst_param)


def _scalar(x) -> float:
    return float(x.data) if isinstance(x, Tensor) else float(x)
