"""Minimal reverse-mode automatic differentiation over dense numpy tensors.

The tape is the operation DAG hanging off each result tensor: every op
records its parents and a closure that routes the upstream gradient to them.
``backward`` walks that DAG once in reverse topological order. Re-running a
forward pass with unchanged inputs reproduces the same values (all ops are
pure), which is what checkpoint evaluation and the tests rely on.

Every op checks its output for NaN/Inf and raises ``NonFiniteError`` rather
than letting a poisoned value propagate through training.

Also here: the Adam optimizer and the central-difference gradient checker
used to validate every primitive and the full model loss.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError, NonFiniteError

_GRAD_TINY = 1e-12


def _check_finite(data: np.ndarray, op: str) -> np.ndarray:
    if not np.all(np.isfinite(data)):
        raise NonFiniteError(f"non-finite values produced by {op}")
    return data


class Tensor:
    """A dense float64 array plus the bookkeeping for reverse-mode autodiff."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward_fn")

    def __init__(self, data, requires_grad: bool = False,
                 _parents=(), _backward_fn=None, _op: str = "tensor"):
        self.data = _check_finite(np.asarray(data, dtype=np.float64), _op)
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self._parents = tuple(_parents)
        self._backward_fn = _backward_fn

    @property
    def shape(self):
        return self.data.shape

    def item(self) -> float:
        return float(self.data)

    def accumulate(self, grad: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += grad

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # Operator sugar; constants are wrapped on the fly.
    def __add__(self, other):
        return add(self, as_tensor(other))

    def __radd__(self, other):
        return add(as_tensor(other), self)

    def __sub__(self, other):
        return sub(self, as_tensor(other))

    def __rsub__(self, other):
        return sub(as_tensor(other), self)

    def __mul__(self, other):
        return mul(self, as_tensor(other))

    def __rmul__(self, other):
        return mul(as_tensor(other), self)

    def __truediv__(self, other):
        return div(self, as_tensor(other))

    def __matmul__(self, other):
        return matmul(self, as_tensor(other))

    def __neg__(self):
        return mul(self, as_tensor(-1.0))


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _result(data, parents, backward_fn, op: str) -> Tensor:
    requires = any(p.requires_grad for p in parents)
    if not requires:
        return Tensor(data, _op=op)
    return Tensor(data, requires_grad=True, _parents=parents,
                  _backward_fn=backward_fn, _op=op)


def backward(loss: Tensor) -> None:
    """Populate .grad on every tensor the scalar loss depends on."""
    if loss.data.shape != ():
        raise InvalidInputError(
            f"backward requires a scalar root, got shape {loss.data.shape}"
        )
    topo: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            topo.append(node)
            continue
        if id(node) in seen or not node.requires_grad:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            stack.append((p, False))
    loss.grad = np.ones((), dtype=np.float64)
    for node in reversed(topo):
        if node._backward_fn is not None and node.grad is not None:
            node._backward_fn(node.grad)


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad.reshape(shape)


# ---------------------------------------------------------------------------
# Elementwise ops (with numpy broadcasting)
# ---------------------------------------------------------------------------

def add(a: Tensor, b: Tensor) -> Tensor:
    def back(g):
        if a.requires_grad:
            a.accumulate(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b.accumulate(_unbroadcast(g, b.shape))
    return _result(a.data + b.data, (a, b), back, "add")


def sub(a: Tensor, b: Tensor) -> Tensor:
    def back(g):
        if a.requires_grad:
            a.accumulate(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b.accumulate(_unbroadcast(-g, b.shape))
    return _result(a.data - b.data, (a, b), back, "sub")


def mul(a: Tensor, b: Tensor) -> Tensor:
    def back(g):
        if a.requires_grad:
            a.accumulate(_unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            b.accumulate(_unbroadcast(g * a.data, b.shape))
    return _result(a.data * b.data, (a, b), back, "mul")


def div(a: Tensor, b: Tensor) -> Tensor:
    def back(g):
        if a.requires_grad:
            a.accumulate(_unbroadcast(g / b.data, a.shape))
        if b.requires_grad:
            b.accumulate(_unbroadcast(-g * a.data / (b.data * b.data), b.shape))
    return _result(a.data / b.data, (a, b), back, "div")


def exp(a: Tensor) -> Tensor:
    out_data = np.exp(a.data)

    def back(g):
        if a.requires_grad:
            a.accumulate(g * out_data)
    return _result(out_data, (a,), back, "exp")


def sqrt(a: Tensor) -> Tensor:
    out_data = np.sqrt(a.data)

    def back(g):
        if a.requires_grad:
            a.accumulate(g * 0.5 / out_data)
    return _result(out_data, (a,), back, "sqrt")


def leaky_relu(a: Tensor, slope: float = 0.2) -> Tensor:
    mask = a.data >= 0

    def back(g):
        if a.requires_grad:
            a.accumulate(g * np.where(mask, 1.0, slope))
    return _result(np.where(mask, a.data, slope * a.data), (a,), back, "leaky_relu")


def softplus(a: Tensor) -> Tensor:
    def back(g):
        if a.requires_grad:
            x = a.data
            sig = np.where(x >= 0, 1.0 / (1.0 + np.exp(-x)),
                           np.exp(x) / (1.0 + np.exp(x)))
            a.accumulate(g * sig)
    return _result(np.logaddexp(0.0, a.data), (a,), back, "softplus")


# ---------------------------------------------------------------------------
# Shape / structure ops
# ---------------------------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim not in (1, 2) or b.data.ndim not in (1, 2):
        raise InvalidInputError(
            f"matmul supports 1D/2D operands, got {a.shape} @ {b.shape}"
        )
    if a.data.shape[-1] != b.data.shape[0]:
        raise InvalidInputError(f"matmul shape mismatch: {a.shape} @ {b.shape}")

    def back(g):
        ad, bd = a.data, b.data
        if ad.ndim == 2 and bd.ndim == 2:
            if a.requires_grad:
                a.accumulate(g @ bd.T)
            if b.requires_grad:
                b.accumulate(ad.T @ g)
        elif ad.ndim == 2 and bd.ndim == 1:
            if a.requires_grad:
                a.accumulate(np.outer(g, bd))
            if b.requires_grad:
                b.accumulate(ad.T @ g)
        elif ad.ndim == 1 and bd.ndim == 2:
            if a.requires_grad:
                a.accumulate(g @ bd.T)
            if b.requires_grad:
                b.accumulate(np.outer(ad, g))
        else:  # 1D @ 1D
            if a.requires_grad:
                a.accumulate(g * bd)
            if b.requires_grad:
                b.accumulate(g * ad)
    return _result(a.data @ b.data, (a, b), back, "matmul")


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def back(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            if t.requires_grad:
                index = [slice(None)] * g.ndim
                index[axis] = slice(lo, hi)
                t.accumulate(g[tuple(index)])
    return _result(np.concatenate([t.data for t in tensors], axis=axis),
                   tuple(tensors), back, "concat")


def gather_rows(a: Tensor, idx) -> Tensor:
    idx = np.asarray(idx, dtype=np.int64)

    def back(g):
        if a.requires_grad:
            acc = np.zeros_like(a.data)
            np.add.at(acc, idx, g)
            a.accumulate(acc)
    return _result(a.data[idx], (a,), back, "gather_rows")


def slice_cols(a: Tensor, start: int, stop: int) -> Tensor:
    def back(g):
        if a.requires_grad:
            acc = np.zeros_like(a.data)
            acc[:, start:stop] = g
            a.accumulate(acc)
    return _result(a.data[:, start:stop], (a,), back, "slice_cols")


def reshape_col(a: Tensor) -> Tensor:
    """View a 1D tensor as a single-column 2D tensor (for row broadcasting)."""
    if a.data.ndim != 1:
        raise InvalidInputError(f"reshape_col expects a 1D tensor, got {a.shape}")

    def back(g):
        if a.requires_grad:
            a.accumulate(g.reshape(a.data.shape))
    return _result(a.data[:, None], (a,), back, "reshape_col")


def tsum(a: Tensor, axis: int | None = None) -> Tensor:
    def back(g):
        if not a.requires_grad:
            return
        if axis is None:
            a.accumulate(np.broadcast_to(g, a.shape).copy())
        else:
            a.accumulate(np.broadcast_to(np.expand_dims(g, axis), a.shape).copy())
    return _result(a.data.sum(axis=axis), (a,), back, "sum")


def tmean(a: Tensor, axis: int | None = None) -> Tensor:
    count = a.data.size if axis is None else a.data.shape[axis]

    def back(g):
        if not a.requires_grad:
            return
        if axis is None:
            a.accumulate(np.broadcast_to(g / count, a.shape).copy())
        else:
            a.accumulate(np.broadcast_to(np.expand_dims(g, axis) / count, a.shape).copy())
    return _result(a.data.mean(axis=axis), (a,), back, "mean")


def row_norms(a: Tensor) -> Tensor:
    """Euclidean norm of each row of a 2D tensor.

    The gradient at an exactly-zero row is taken to be zero (subgradient).
    """
    norms = np.sqrt((a.data * a.data).sum(axis=1))

    def back(g):
        if a.requires_grad:
            denom = np.maximum(norms, _GRAD_TINY)
            a.accumulate((g / denom)[:, None] * a.data)
    return _result(norms, (a,), back, "row_norms")


def rotate_rows(a: Tensor, rotations: np.ndarray) -> Tensor:
    """Apply a per-row 3x3 matrix: out[n] = rotations[n]^T @ a[n] (row form).

    ``rotations`` is a constant (N, 3, 3) array; gradients flow into ``a``.
    """
    rotations = np.asarray(rotations, dtype=np.float64)
    if rotations.shape != (a.data.shape[0], 3, 3):
        raise InvalidInputError(
            f"rotations must have shape ({a.data.shape[0]}, 3, 3), got {rotations.shape}"
        )

    def back(g):
        if a.requires_grad:
            a.accumulate(np.einsum("nj,nkj->nk", g, rotations))
    return _result(np.einsum("nk,nkj->nj", a.data, rotations), (a,), back, "rotate_rows")


# ---------------------------------------------------------------------------
# Segment ops (per-vertex attention over variable-size neighborhoods)
# ---------------------------------------------------------------------------

def segment_softmax(a: Tensor, segment_ids, num_segments: int) -> Tensor:
    """Softmax over the entries of each segment of a 1D tensor."""
    seg = np.asarray(segment_ids, dtype=np.int64)
    if a.data.ndim != 1 or seg.shape != a.data.shape:
        raise InvalidInputError(
            f"segment_softmax expects matching 1D shapes, got {a.shape} and {seg.shape}"
        )
    seg_max = np.full(num_segments, -np.inf)
    np.maximum.at(seg_max, seg, a.data)
    shifted = np.exp(a.data - seg_max[seg])
    denom = np.zeros(num_segments)
    np.add.at(denom, seg, shifted)
    out_data = shifted / denom[seg]

    def back(g):
        if a.requires_grad:
            dots = np.zeros(num_segments)
            np.add.at(dots, seg, g * out_data)
            a.accumulate(out_data * (g - dots[seg]))
    return _result(out_data, (a,), back, "segment_softmax")


def segment_sum(a: Tensor, segment_ids, num_segments: int) -> Tensor:
    """Sum rows of a 2D tensor into per-segment rows."""
    seg = np.asarray(segment_ids, dtype=np.int64)
    out_data = np.zeros((num_segments, a.data.shape[1]))
    np.add.at(out_data, seg, a.data)

    def back(g):
        if a.requires_grad:
            a.accumulate(g[seg])
    return _result(out_data, (a,), back, "segment_sum")


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------

@dataclass
class AdamState:
    """Per-parameter moment estimates plus the shared hyperparameters."""

    alpha: float = 1e-4
    beta1: float = 0.0
    beta2: float = 0.99
    eps: float = 1e-8
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(state: AdamState, params: dict[str, np.ndarray],
              grads: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
    """One Adam update with bias correction; params are updated in place."""
    state.step += 1
    t = state.step
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            continue
        if g.shape != p.shape:
            raise InvalidInputError(
                f"gradient shape {g.shape} does not match parameter {name} {p.shape}"
            )
        m = state.m.setdefault(name, np.zeros_like(p))
        v = state.v.setdefault(name, np.zeros_like(p))
        m *= state.beta1
        m += (1 - state.beta1) * g
        v *= state.beta2
        v += (1 - state.beta2) * (g * g)
        m_hat = m / (1 - state.beta1 ** t) if state.beta1 > 0 else m
        v_hat = v / (1 - state.beta2 ** t)
        p -= state.alpha * m_hat / (np.sqrt(v_hat) + state.eps)
    return params


# ---------------------------------------------------------------------------
# Gradient checking
# ---------------------------------------------------------------------------

def finite_difference_check(fn, params: dict[str, np.ndarray],
                            h: float = 1e-5, zero_tol: float = 1e-9) -> float:
    """Max relative error between backward gradients and central differences.

    ``fn`` maps a dict of Tensors to a scalar Tensor. Relative error per
    coordinate is |analytic - numeric| / (|analytic| + |numeric| + 1e-12).
    Coordinates where both derivatives are below ``zero_tol`` in magnitude
    count as matching: central differences bottom out at roundoff noise of
    roughly |f| * eps / h (~1e-11 at unit scale), so gradients that are
    structurally zero cannot be resolved by the numeric side.
    """
    work = {k: np.array(v, dtype=np.float64) for k, v in params.items()}

    def evaluate(as_params: bool = False):
        tensors = {k: Tensor(v, requires_grad=as_params) for k, v in work.items()}
        out = fn(tensors)
        return out, tensors

    loss, tensors = evaluate(as_params=True)
    backward(loss)
    analytic = {k: (t.grad.copy() if t.grad is not None else np.zeros_like(t.data))
                for k, t in tensors.items()}

    max_err = 0.0
    for name, arr in work.items():
        flat = arr.reshape(-1)
        grad_flat = analytic[name].reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            f_plus = evaluate()[0].item()
            flat[i] = orig - h
            f_minus = evaluate()[0].item()
            flat[i] = orig
            numeric = (f_plus - f_minus) / (2 * h)
            a = grad_flat[i]
            if abs(a) < zero_tol and abs(numeric) < zero_tol:
                continue
            err = abs(a - numeric) / (abs(a) + abs(numeric) + 1e-12)
            max_err = max(max_err, err)
    return max_err
