"""Dense tensors with reverse-mode gradients.

A small tape: every op returns a Tensor that remembers its parents and a
closure that routes the output gradient back to them. Arrays are float64
by default (float32 can be enabled for training runs, never for tests).
Shapes are strict: the only implicit broadcast is adding a 1-D bias row
to a 2-D matrix; everything else requires an explicit reshape.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError, NumericError

# Additive stand-in for -inf in logit masks. Large enough that masked
# softmax entries underflow to exactly 0.0, small enough to stay finite.
MASK_NEG = -1e9

# Floor applied inside cross-entropy's log; keeps the loss finite when a
# target probability underflows.
_CE_FLOOR = 1e-30

_DTYPE = np.float64
_DEBUG_CHECKS = False


def set_default_dtype(dtype) -> None:
    """Switch the array dtype for newly created tensors.

    float32 is permitted for training builds only; all numeric tests
    assume float64.
    """
    global _DTYPE
    if dtype not in (np.float32, np.float64):
        raise DataError(f"unsupported dtype {dtype!r}")
    _DTYPE = dtype


def set_debug_checks(enabled: bool) -> None:
    """Enable NaN/Inf rejection at op boundaries (slower)."""
    global _DEBUG_CHECKS
    _DEBUG_CHECKS = bool(enabled)


def default_dtype():
    return _DTYPE


class Tensor:
    """A node in the computation tape."""

    __slots__ = ("data", "grad", "_parents", "_backward")

    def __init__(self, data, parents=()):
        self.data = np.asarray(data, dtype=_DTYPE)
        if _DEBUG_CHECKS and not np.all(np.isfinite(self.data)):
            raise NumericError("non-finite tensor value")
        self.grad = None
        self._parents = parents
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def item(self) -> float:
        return float(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape})"

    # Small amount of sugar; the module-level functions are the real API.
    def __add__(self, other):
        return add(self, other)

    def __matmul__(self, other):
        return matmul(self, other)

    def backward(self) -> None:
        """Accumulate d(self)/d(leaf) into every reachable tensor's .grad.

        Only defined for scalar outputs (single-element tensors).
        """
        if self.data.size != 1:
            raise DataError("backward requires a scalar loss")
        order = _toposort(self)
        for node in order:
            if node.grad is None:
                node.grad = np.zeros_like(node.data)
        self.grad += np.ones_like(self.data)
        for node in reversed(order):
            if node._backward is not None:
                node._backward(node.grad)


class Parameter(Tensor):
    """A named leaf tensor whose gradient persists across backward calls."""

    __slots__ = ("name",)

    def __init__(self, data, name: str = ""):
        super().__init__(data)
        self.name = name
        self.grad = np.zeros_like(self.data)

    def zero_grad(self) -> None:
        self.grad[...] = 0.0

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.data.shape})"


def _toposort(root: Tensor) -> list[Tensor]:
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
        for parent in node._parents:
            if id(parent) not in seen:
                stack.append((parent, False))
    return order


def _accum(t: Tensor, g: np.ndarray) -> None:
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad += g


def _check(value: np.ndarray) -> np.ndarray:
    if _DEBUG_CHECKS and not np.all(np.isfinite(value)):
        raise NumericError("non-finite intermediate value")
    return value


def _make(value, parents, backward) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.data = _check(np.asarray(value, dtype=_DTYPE))
    out.grad = None
    out._parents = parents
    out._backward = backward
    return out


def constant(data) -> Tensor:
    """A tensor with no parents that never receives gradient."""
    return Tensor(data)


# ---------------------------------------------------------------------------
# elementwise and linear-algebra ops


def add(a: Tensor, b: Tensor) -> Tensor:
    """a + b. Same shape, or (n, d) + (d,) bias-row broadcast."""
    if a.shape == b.shape:
        bias = False
    elif a.ndim == 2 and b.ndim == 1 and a.shape[1] == b.shape[0]:
        bias = True
    else:
        raise DataError(f"add shape mismatch: {a.shape} vs {b.shape}")

    def backward(g):
        _accum(a, g)
        _accum(b, g.sum(axis=0) if bias else g)

    return _make(a.data + b.data, (a, b), backward)


def sub(a: Tensor, b: Tensor) -> Tensor:
    return add(a, scale(b, -1.0))


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise product; shapes must match exactly."""
    if a.shape != b.shape:
        raise DataError(f"mul shape mismatch: {a.shape} vs {b.shape}")

    def backward(g):
        _accum(a, g * b.data)
        _accum(b, g * a.data)

    return _make(a.data * b.data, (a, b), backward)


def scale(a: Tensor, c: float) -> Tensor:
    """Multiply by a python constant."""
    c = float(c)

    def backward(g):
        _accum(a, g * c)

    return _make(a.data * c, (a,), backward)


def mul_const(a: Tensor, c) -> Tensor:
    """Elementwise product with a constant array (broadcasts like numpy).

    Used for zero-masks and fixed per-node weights; no gradient flows
    into the constant.
    """
    c = np.asarray(c, dtype=_DTYPE)
    value = a.data * c

    def backward(g):
        grad = g * c
        if grad.shape != a.shape:
            raise DataError("mul_const constant must not enlarge the tensor")
        _accum(a, grad)

    return _make(value, (a,), backward)


def mul_scalar(a: Tensor, s: Tensor) -> Tensor:
    """Multiply a tensor by a single-element tensor (both receive grads)."""
    if s.data.size != 1:
        raise DataError("mul_scalar expects a single-element tensor")
    sv = s.data.reshape(())

    def backward(g):
        _accum(a, g * sv)
        _accum(s, np.full_like(s.data, np.sum(g * a.data)))

    return _make(a.data * sv, (a, s), backward)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DataError(f"matmul shape mismatch: {a.shape} @ {b.shape}")

    def backward(g):
        _accum(a, g @ b.data.T)
        _accum(b, a.data.T @ g)

    return _make(a.data @ b.data, (a, b), backward)


def transpose(a: Tensor) -> Tensor:
    if a.ndim != 2:
        raise DataError("transpose expects a 2-D tensor")

    def backward(g):
        _accum(a, g.T)

    return _make(a.data.T, (a,), backward)


def reshape(a: Tensor, shape) -> Tensor:
    value = a.data.reshape(shape)

    def backward(g):
        _accum(a, g.reshape(a.shape))

    return _make(value, (a,), backward)


# ---------------------------------------------------------------------------
# nonlinearities


def tanh(a: Tensor) -> Tensor:
    y = np.tanh(a.data)

    def backward(g):
        _accum(a, g * (1.0 - y * y))

    return _make(y, (a,), backward)


def sigmoid(a: Tensor) -> Tensor:
    y = 1.0 / (1.0 + np.exp(-a.data))

    def backward(g):
        _accum(a, g * y * (1.0 - y))

    return _make(y, (a,), backward)


def relu(a: Tensor) -> Tensor:
    y = np.maximum(a.data, 0.0)

    def backward(g):
        _accum(a, g * (a.data > 0.0))

    return _make(y, (a,), backward)


def softplus(a: Tensor) -> Tensor:
    y = np.logaddexp(0.0, a.data)

    def backward(g):
        _accum(a, g / (1.0 + np.exp(-a.data)))

    return _make(y, (a,), backward)


NONLINEARITIES = {"tanh": tanh, "sigmoid": sigmoid, "relu": relu, "softplus": softplus}


# ---------------------------------------------------------------------------
# reductions, normalization, attention pieces


def softmax(a: Tensor, mask=None) -> Tensor:
    """Row-wise softmax over the last axis of a 1-D or 2-D tensor.

    `mask` is an additive logit array (0 keeps, MASK_NEG removes); masked
    entries come out with probability 0 to double precision.
    """
    logits = a.data
    if mask is not None:
        mask_arr = mask.data if isinstance(mask, Tensor) else np.asarray(mask, dtype=_DTYPE)
        logits = logits + mask_arr
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=-1, keepdims=True)

    def backward(g):
        dot = (g * y).sum(axis=-1, keepdims=True)
        _accum(a, (g - dot) * y)

    return _make(y, (a,), backward)


def layer_norm(a: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Per-row normalization followed by an affine map."""
    if a.ndim != 2 or gain.shape != (a.shape[1],) or bias.shape != (a.shape[1],):
        raise DataError("layer_norm expects (n, d) input and (d,) gain/bias")
    mu = a.data.mean(axis=1, keepdims=True)
    var = a.data.var(axis=1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (a.data - mu) * inv
    y = xhat * gain.data + bias.data

    def backward(g):
        _accum(gain, (g * xhat).sum(axis=0))
        _accum(bias, g.sum(axis=0))
        dxhat = g * gain.data
        m1 = dxhat.mean(axis=1, keepdims=True)
        m2 = (dxhat * xhat).mean(axis=1, keepdims=True)
        _accum(a, (dxhat - m1 - xhat * m2) * inv)

    return _make(y, (a, gain, bias), backward)


def gather_rows(a: Tensor, indices) -> Tensor:
    """Select rows by index (embedding lookup / row slicing)."""
    idx = np.asarray(indices, dtype=np.intp)
    if a.ndim != 2:
        raise DataError("gather_rows expects a 2-D tensor")
    if idx.size and (idx.min() < 0 or idx.max() >= a.shape[0]):
        raise DataError("gather_rows index out of range")

    def backward(g):
        if a.grad is None:
            a.grad = np.zeros_like(a.data)
        np.add.at(a.grad, idx, g)

    return _make(a.data[idx], (a,), backward)


# Lookup into a trainable table is the same scatter-gather.
embedding_lookup = gather_rows


def slice_cols(a: Tensor, start: int, stop: int) -> Tensor:
    if a.ndim != 2 or not (0 <= start < stop <= a.shape[1]):
        raise DataError("slice_cols out of range")

    def backward(g):
        if a.grad is None:
            a.grad = np.zeros_like(a.data)
        a.grad[:, start:stop] += g

    return _make(a.data[:, start:stop], (a,), backward)


def mean_pool(a: Tensor, rows=None) -> Tensor:
    """Mean over a row subset (all rows when `rows` is None); returns (1, d)."""
    if a.ndim != 2:
        raise DataError("mean_pool expects a 2-D tensor")
    idx = np.arange(a.shape[0]) if rows is None else np.asarray(rows, dtype=np.intp)
    if idx.size == 0:
        raise DataError("mean_pool over an empty row subset")
    value = a.data[idx].mean(axis=0, keepdims=True)

    def backward(g):
        if a.grad is None:
            a.grad = np.zeros_like(a.data)
        np.add.at(a.grad, idx, np.repeat(g / idx.size, idx.size, axis=0))

    return _make(value, (a,), backward)


def concat_rows(tensors) -> Tensor:
    tensors = list(tensors)
    if not tensors:
        raise DataError("concat_rows of nothing")
    widths = {t.shape[1] for t in tensors if t.ndim == 2}
    if any(t.ndim != 2 for t in tensors) or len(widths) != 1:
        raise DataError("concat_rows expects 2-D tensors of equal width")
    sizes = [t.shape[0] for t in tensors]

    def backward(g):
        offset = 0
        for t, n in zip(tensors, sizes):
            _accum(t, g[offset:offset + n])
            offset += n

    return _make(np.vstack([t.data for t in tensors]), tuple(tensors), backward)


def concat_cols(tensors) -> Tensor:
    tensors = list(tensors)
    heights = {t.shape[0] for t in tensors if t.ndim == 2}
    if not tensors or any(t.ndim != 2 for t in tensors) or len(heights) != 1:
        raise DataError("concat_cols expects 2-D tensors of equal height")
    sizes = [t.shape[1] for t in tensors]

    def backward(g):
        offset = 0
        for t, n in zip(tensors, sizes):
            _accum(t, g[:, offset:offset + n])
            offset += n

    return _make(np.hstack([t.data for t in tensors]), tuple(tensors), backward)


def tsum(a: Tensor) -> Tensor:
    """Sum of all entries, as a scalar tensor."""

    def backward(g):
        _accum(a, np.full_like(a.data, float(g)))

    return _make(a.data.sum(), (a,), backward)


def sum_of_squares(a: Tensor) -> Tensor:
    def backward(g):
        _accum(a, 2.0 * float(g) * a.data)

    return _make(np.sum(a.data * a.data), (a,), backward)


def cross_entropy(probs: Tensor, targets) -> Tensor:
    """Sum over rows of -log p[target]; `probs` are probabilities.

    Target probabilities are floored at 1e-30 so a collapsed prediction
    yields a large finite loss instead of an infinity.
    """
    idx = np.asarray(targets, dtype=np.intp).reshape(-1)
    if probs.ndim != 2 or idx.shape[0] != probs.shape[0]:
        raise DataError("cross_entropy expects (n, c) probs and n targets")
    if idx.size and (idx.min() < 0 or idx.max() >= probs.shape[1]):
        raise DataError("cross_entropy target index out of range")
    rows = np.arange(idx.shape[0])
    pt = np.maximum(probs.data[rows, idx], _CE_FLOOR)
    value = -np.log(pt).sum()

    def backward(g):
        if probs.grad is None:
            probs.grad = np.zeros_like(probs.data)
        probs.grad[rows, idx] += -float(g) / pt

    return _make(value, (probs,), backward)


def scaled_dot_attention(q: Tensor, k: Tensor, v: Tensor, key_mask=None) -> Tensor:
    """softmax(q k^T / sqrt(d)) v for one head.

    `key_mask` is a boolean/0-1 vector over keys; False keys are excluded
    via an additive MASK_NEG logit.
    """
    if q.ndim != 2 or k.ndim != 2 or k.shape[1] != q.shape[1]:
        raise DataError("attention operands must share the key width")
    if v.ndim != 2 or v.shape[0] != k.shape[0]:
        raise DataError("attention values must align with keys")
    logits = scale(matmul(q, transpose(k)), 1.0 / np.sqrt(q.shape[1]))
    mask = None
    if key_mask is not None:
        key_mask = np.asarray(key_mask)
        if key_mask.shape != (k.shape[0],):
            raise DataError("key_mask must have one entry per key")
        if not key_mask.any():
            raise DataError("attention with every key masked")
        mask = np.where(key_mask, 0.0, MASK_NEG)[None, :]
    weights = softmax(logits, mask=mask)
    return matmul(weights, v)


# ---------------------------------------------------------------------------
# gradient checking


@dataclass
class GradCheckEntry:
    name: str
    max_rel_err: float
    passed: bool


@dataclass
class GradCheckReport:
    entries: list[GradCheckEntry]
    tolerance: float

    @property
    def passed(self) -> bool:
        return all(e.passed for e in self.entries)

    @property
    def max_rel_err(self) -> float:
        return max((e.max_rel_err for e in self.entries), default=0.0)

    def __str__(self):
        lines = [
            f"{'PASS' if e.passed else 'FAIL'} {e.name}: max rel err {e.max_rel_err:.3e}"
            for e in self.entries
        ]
        return "\n".join(lines)


def grad_check(f, params, step: float = 1e-5, tolerance: float = 1e-4) -> GradCheckReport:
    """Compare reverse-mode gradients of `f()` against central differences.

    `f` must be a no-argument callable that rebuilds and returns the
    scalar loss from the current parameter values. The error measure is
    |analytic - numeric| / max(1, |analytic|, |numeric|) so gradients
    near zero are judged absolutely.
    """
    if step <= 0:
        raise DataError("grad_check step must be positive")
    params = list(params)
    for p in params:
        p.zero_grad()
    out = f()
    out.backward()
    analytic = [p.grad.copy() for p in params]

    entries = []
    for p, a in zip(params, analytic):
        numeric = np.zeros_like(p.data)
        flat = p.data.reshape(-1)
        nflat = numeric.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            fp = float(f().data)
            flat[i] = orig - step
            fm = float(f().data)
            flat[i] = orig
            nflat[i] = (fp - fm) / (2.0 * step)
        denom = np.maximum(1.0, np.maximum(np.abs(a), np.abs(numeric)))
        err = float(np.max(np.abs(a - numeric) / denom)) if flat.size else 0.0
        entries.append(GradCheckEntry(p.name, err, err < tolerance))
    return GradCheckReport(entries, tolerance)
