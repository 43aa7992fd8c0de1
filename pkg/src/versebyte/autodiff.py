"""Dense tensors with reverse-mode differentiation.

Just enough machinery for a small encoder-decoder transformer: matmul,
broadcasting elementwise ops, softmax, RMS normalization, GELU, embedding
lookup and cross-entropy, plus a finite-difference gradient checker.

Tensors wrap row-major numpy arrays (float32 for training, float64 for
gradient checking). Broadcasting is limited to leading batch axes and
last-axis gain vectors; every backward rule un-broadcasts explicitly so
the chain stays auditable. Values produced by forward ops are immutable
by convention; backward accumulates into per-tensor ``grad`` buffers.
"""

import contextlib
import math

import numpy as np

_GELU_C = math.sqrt(2.0 / math.pi)
_GELU_A = 0.044715

_DEBUG_CHECKS = False
_GRAD_ENABLED = True


class ShapeError(ValueError):
    """Operand shapes do not fit the operation."""


class NonFiniteError(FloatingPointError):
    """A forward op produced NaN or Inf while debug checks were on."""


def set_debug_checks(enabled: bool) -> None:
    """Toggle NaN/Inf assertions after every forward op."""
    global _DEBUG_CHECKS
    _DEBUG_CHECKS = bool(enabled)


@contextlib.contextmanager
def no_grad():
    """Skip tape construction inside the block (inference mode)."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False, dtype=None):
        if isinstance(data, Tensor):
            data = data.data
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float32)
        self.data = arr
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def zero_grad(self):
        self.grad = None

    def accumulate_grad(self, g):
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def item(self) -> float:
        return float(self.data)

    def backward(self):
        """Reverse-mode sweep from a scalar output."""
        if self.data.shape != ():
            raise ShapeError(f"backward() needs a scalar output, got shape {self.data.shape}")
        topo = []
        visited = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in visited:
                    stack.append((parent, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}, requires_grad={self.requires_grad})"


def _make(data, parents, backward):
    """Wrap a forward result, attaching tape info only when needed."""
    if _DEBUG_CHECKS and not np.all(np.isfinite(data)):
        raise NonFiniteError("non-finite value produced by a forward op")
    out = Tensor(data)
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    return out


def _unbroadcast(grad, shape):
    """Sum a broadcast gradient back down to the original shape."""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def _as_tensor(x, like=None):
    if isinstance(x, Tensor):
        return x
    dtype = like.dtype if like is not None else None
    return Tensor(np.asarray(x, dtype=dtype))


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b, like=a)
    out = a.data + b.data

    def backward(g):
        if a.requires_grad:
            a.accumulate_grad(_unbroadcast(g, a.data.shape))
        if b.requires_grad:
            b.accumulate_grad(_unbroadcast(g, b.data.shape))
    return _make(out, (a, b), backward)


def sub(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b, like=a)
    out = a.data - b.data

    def backward(g):
        if a.requires_grad:
            a.accumulate_grad(_unbroadcast(g, a.data.shape))
        if b.requires_grad:
            b.accumulate_grad(_unbroadcast(-g, b.data.shape))
    return _make(out, (a, b), backward)


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b, like=a)
    out = a.data * b.data

    def backward(g):
        if a.requires_grad:
            a.accumulate_grad(_unbroadcast(g * b.data, a.data.shape))
        if b.requires_grad:
            b.accumulate_grad(_unbroadcast(g * a.data, b.data.shape))
    return _make(out, (a, b), backward)


def matmul(a, b) -> Tensor:
    """Matrix product with optional leading batch axes on either operand."""
    a, b = _as_tensor(a), _as_tensor(b)
    if a.data.ndim < 2 or b.data.ndim < 2:
        raise ShapeError(f"matmul needs 2D+ operands, got {a.data.shape} and {b.data.shape}")
    if a.data.shape[-1] != b.data.shape[-2]:
        raise ShapeError(f"matmul inner extents differ: {a.data.shape} vs {b.data.shape}")
    out = a.data @ b.data

    def backward(g):
        if a.requires_grad:
            ga = g @ np.swapaxes(b.data, -1, -2)
            a.accumulate_grad(_unbroadcast(ga, a.data.shape))
        if b.requires_grad:
            gb = np.swapaxes(a.data, -1, -2) @ g
            b.accumulate_grad(_unbroadcast(gb, b.data.shape))
    return _make(out, (a, b), backward)


def reshape(a, shape) -> Tensor:
    a = _as_tensor(a)
    out = a.data.reshape(shape)

    def backward(g):
        if a.requires_grad:
            a.accumulate_grad(g.reshape(a.data.shape))
    return _make(out, (a,), backward)


def swapaxes(a, axis1: int, axis2: int) -> Tensor:
    a = _as_tensor(a)
    out = np.swapaxes(a.data, axis1, axis2)

    def backward(g):
        if a.requires_grad:
            a.accumulate_grad(np.swapaxes(g, axis1, axis2))
    return _make(out, (a,), backward)


def softmax(x) -> Tensor:
    """Softmax over the last axis, computed with max-subtraction."""
    x = _as_tensor(x)
    if x.data.shape[-1] < 1:
        raise ShapeError("softmax needs at least one element on the last axis")
    shifted = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=-1, keepdims=True)

    def backward(g):
        if x.requires_grad:
            inner = (g * y).sum(axis=-1, keepdims=True)
            x.accumulate_grad(y * (g - inner))
    return _make(y, (x,), backward)


def rms_norm(x, gain, eps: float = 1e-6) -> Tensor:
    """T5-family normalization: x / sqrt(mean(x^2) + eps), scaled by gain."""
    x, gain = _as_tensor(x), _as_tensor(gain, like=x)
    d = x.data.shape[-1]
    if gain.data.shape != (d,):
        raise ShapeError(f"gain shape {gain.data.shape} does not match last axis {d}")
    r = 1.0 / np.sqrt((x.data ** 2).mean(axis=-1, keepdims=True) + eps)
    y = x.data * r * gain.data

    def backward(g):
        u = g * gain.data
        if x.requires_grad:
            dot = (u * x.data).sum(axis=-1, keepdims=True)
            x.accumulate_grad(u * r - x.data * (r ** 3 / d) * dot)
        if gain.requires_grad:
            gg = g * x.data * r
            gain.accumulate_grad(_unbroadcast(gg, gain.data.shape))
    return _make(y, (x, gain), backward)


def gelu(x) -> Tensor:
    """GELU, tanh approximation."""
    x = _as_tensor(x)
    inner = _GELU_C * (x.data + _GELU_A * x.data ** 3)
    t = np.tanh(inner)
    y = 0.5 * x.data * (1.0 + t)

    def backward(g):
        if x.requires_grad:
            dinner = _GELU_C * (1.0 + 3.0 * _GELU_A * x.data ** 2)
            dx = 0.5 * (1.0 + t) + 0.5 * x.data * (1.0 - t ** 2) * dinner
            x.accumulate_grad(g * dx)
    return _make(y, (x,), backward)


def embedding(table, ids) -> Tensor:
    """Row lookup: table[ids]. Gradient scatter-adds back into the table."""
    table = _as_tensor(table)
    idx = np.asarray(ids, dtype=np.int64)
    if idx.size and (idx.min() < 0 or idx.max() >= table.data.shape[0]):
        raise IndexError(f"id out of range for table with {table.data.shape[0]} rows")
    out = table.data[idx]

    def backward(g):
        if table.requires_grad:
            acc = np.zeros_like(table.data)
            np.add.at(acc, idx, g)
            table.accumulate_grad(acc)
    return _make(out, (table,), backward)


def cross_entropy(logits, targets, ignore_id: int = -1) -> Tensor:
    """Mean negative log-likelihood over positions whose target is not ignore_id.

    logits has shape [..., v]; targets matches the leading shape. Returns a
    scalar; if every position is ignored the loss is 0 with zero gradient.
    """
    logits = _as_tensor(logits)
    tgt = np.asarray(targets, dtype=np.int64)
    if tgt.shape != logits.data.shape[:-1]:
        raise ShapeError(f"targets shape {tgt.shape} does not match logits {logits.data.shape}")
    v = logits.data.shape[-1]
    mask = tgt != ignore_id
    if np.any(((tgt < 0) | (tgt >= v)) & mask):
        raise IndexError(f"target id out of range 0..{v - 1}")

    shifted = logits.data - logits.data.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    logp = shifted - lse
    safe_tgt = np.where(mask, tgt, 0)
    picked = np.take_along_axis(logp, safe_tgt[..., None], axis=-1)[..., 0]
    count = int(mask.sum())
    if count == 0:
        loss = np.zeros((), dtype=logits.data.dtype)
    else:
        loss = -(picked * mask).sum(dtype=logits.data.dtype) / count

    def backward(g):
        if logits.requires_grad and count > 0:
            probs = np.exp(logp)
            grad = probs.copy()
            np.put_along_axis(
                grad, safe_tgt[..., None],
                np.take_along_axis(grad, safe_tgt[..., None], axis=-1) - 1.0, axis=-1)
            grad *= (mask[..., None] / count)
            logits.accumulate_grad(g * grad.astype(logits.data.dtype))
    return _make(loss, (logits,), backward)


def tsum(x) -> Tensor:
    x = _as_tensor(x)
    out = x.data.sum(dtype=x.data.dtype)

    def backward(g):
        if x.requires_grad:
            x.accumulate_grad(np.broadcast_to(g, x.data.shape).copy())
    return _make(out, (x,), backward)


def tmean(x) -> Tensor:
    x = _as_tensor(x)
    n = x.data.size
    out = x.data.mean(dtype=x.data.dtype)

    def backward(g):
        if x.requires_grad:
            x.accumulate_grad(np.broadcast_to(g / n, x.data.shape).copy())
    return _make(out, (x,), backward)


def dropout(x, rate: float, rng) -> Tensor:
    """Inverted dropout; identity when rate is 0 or rng is None."""
    x = _as_tensor(x)
    if rate <= 0.0 or rng is None:
        return x
    keep = (rng.random(x.data.shape) >= rate).astype(x.data.dtype) / (1.0 - rate)
    return mul(x, Tensor(keep))


def grad_check(f, params, eps: float = 1e-4) -> float:
    """Max relative error between reverse-mode and central-difference gradients.

    ``f`` takes no arguments, reads the given parameter tensors, and returns
    a scalar Tensor. Parameters should be float64 for meaningful results.
    """
    for p in params:
        p.zero_grad()
    out = f()
    if not isinstance(out, Tensor) or out.data.shape != ():
        raise ShapeError("grad_check needs f to return a scalar Tensor")
    out.backward()
    analytic = [np.zeros_like(p.data) if p.grad is None else p.grad.copy() for p in params]

    worst = 0.0
    for p, g_ad in zip(params, analytic):
        flat = p.data.reshape(-1)
        g_flat = g_ad.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            with no_grad():
                f_plus = float(f().data)
            flat[i] = orig - eps
            with no_grad():
                f_minus = float(f().data)
            flat[i] = orig
            g_fd = (f_plus - f_minus) / (2.0 * eps)
            denom = max(1e-8, abs(g_flat[i]) + abs(g_fd))
            worst = max(worst, abs(g_flat[i] - g_fd) / denom)
    return worst
