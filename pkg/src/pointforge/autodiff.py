"""Reverse-mode automatic differentiation over dense numpy arrays.

A ``Tensor`` wraps an ndarray and records the op graph as it is built;
``backward()`` walks the tape in reverse topological order. The op set is
exactly what the point models need: channel-wise affine maps, batch norm,
relu, neighbor gather/max-reduce, concat, dropout, row normalization, and
weighted softmax cross entropy. Training runs in float32; gradient
checking casts everything to float64.
"""

import numpy as np

from .kernels import scatter_add_rows


class Tensor:
    """Dense value in a dynamically recorded computation graph."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        self.data = data if isinstance(data, np.ndarray) else np.asarray(data)
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

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}, grad={self.requires_grad})"

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self):
        self.grad = None

    def _accumulate(self, g):
        self.grad = g if self.grad is None else self.grad + g

    def backward(self, grad=None):
        """Backpropagate from this tensor (defaults to a gradient of ones)."""
        topo = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        if grad is None:
            grad = np.ones_like(self.data)
        self.grad = grad
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    def __add__(self, other):
        return add(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __matmul__(self, other):
        return matmul(self, other)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x))


def _record(out: Tensor, parents, backward) -> Tensor:
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    return out


def _unbroadcast(grad: np.ndarray, shape) -> np.ndarray:
    """Sum a broadcast gradient back down to the original operand shape."""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def add(a, b) -> Tensor:
    if isinstance(b, (int, float)):  # python scalars keep the array dtype
        a = as_tensor(a)
        out = Tensor(a.data + b)

        def backward_scalar(g):
            a._accumulate(g)

        return _record(out, (a,), backward_scalar)
    a, b = as_tensor(a), as_tensor(b)
    out = Tensor(a.data + b.data)

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.data.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g, b.data.shape))

    return _record(out, (a, b), backward)


def mul(a, b) -> Tensor:
    if isinstance(b, (int, float)):
        a = as_tensor(a)
        out = Tensor(a.data * b)

        def backward_scalar(g):
            a._accumulate(g * b)

        return _record(out, (a,), backward_scalar)
    a, b = as_tensor(a), as_tensor(b)
    out = Tensor(a.data * b.data)

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g * b.data, a.data.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g * a.data, b.data.shape))

    return _record(out, (a, b), backward)


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = Tensor(a.data @ b.data)

    def backward(g):
        if a.requires_grad:
            a._accumulate(g @ b.data.T)
        if b.requires_grad:
            b._accumulate(a.data.T @ g)

    return _record(out, (a, b), backward)


def transpose(a) -> Tensor:
    a = as_tensor(a)
    out = Tensor(a.data.T)

    def backward(g):
        a._accumulate(g.T)

    return _record(out, (a,), backward)


def exp(a) -> Tensor:
    a = as_tensor(a)
    out = Tensor(np.exp(a.data))

    def backward(g):
        a._accumulate(g * out.data)

    return _record(out, (a,), backward)


def reciprocal(a) -> Tensor:
    a = as_tensor(a)
    out = Tensor(1.0 / a.data)

    def backward(g):
        a._accumulate(-g * out.data * out.data)

    return _record(out, (a,), backward)


def relu(a) -> Tensor:
    a = as_tensor(a)
    out = Tensor(np.maximum(a.data, 0))

    def backward(g):
        a._accumulate(g * (a.data > 0))

    return _record(out, (a,), backward)


def dense(x, weight, bias=None) -> Tensor:
    """Affine map along the trailing channel axis: y = x @ W (+ b)."""
    x, weight = as_tensor(x), as_tensor(weight)
    cin, cout = weight.data.shape
    if x.data.shape[-1] != cin:
        raise ValueError(f"dense: input channels {x.data.shape[-1]} != weight rows {cin}")
    x2d = x.data.reshape(-1, cin)
    y = x2d @ weight.data
    if bias is not None:
        bias = as_tensor(bias)
        y = y + bias.data
    out = Tensor(y.reshape(x.data.shape[:-1] + (cout,)))
    parents = (x, weight) if bias is None else (x, weight, bias)

    def backward(g):
        g2d = g.reshape(-1, cout)
        if x.requires_grad:
            x._accumulate((g2d @ weight.data.T).reshape(x.data.shape))
        if weight.requires_grad:
            weight._accumulate(x2d.T @ g2d)
        if bias is not None and bias.requires_grad:
            bias._accumulate(g2d.sum(axis=0))

    return _record(out, parents, backward)


def batch_norm(
    x,
    gamma,
    beta,
    running_mean: np.ndarray,
    running_var: np.ndarray,
    training: bool,
    momentum: float = 0.1,
    eps: float = 1e-5,
) -> Tensor:
    """Per-channel normalization over all leading axes (channel axis last).

    Training mode normalizes with batch statistics and updates the running
    buffers in place; eval mode is a pure function of the running stats.
    """
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    c = x.data.shape[-1]
    axes = tuple(range(x.data.ndim - 1))
    if training:
        count = int(np.prod([x.data.shape[i] for i in axes])) if axes else 1
        if count < 2:
            raise ValueError("batch_norm in training mode needs >= 2 samples per channel")
        mean = x.data.mean(axis=axes)
        var = x.data.var(axis=axes)
        running_mean *= 1.0 - momentum
        running_mean += momentum * mean.astype(running_mean.dtype)
        running_var *= 1.0 - momentum
        running_var += momentum * var.astype(running_var.dtype)
    else:
        mean = running_mean.astype(x.data.dtype)
        var = running_var.astype(x.data.dtype)
    invstd = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mean) * invstd
    out = Tensor(gamma.data * xhat + beta.data)

    def backward(g):
        if beta.requires_grad:
            beta._accumulate(g.sum(axis=axes).reshape(beta.data.shape))
        if gamma.requires_grad:
            gamma._accumulate((g * xhat).sum(axis=axes).reshape(gamma.data.shape))
        if x.requires_grad:
            if training:
                gy = g * gamma.data
                mean_gy = gy.mean(axis=axes)
                mean_gy_xhat = (gy * xhat).mean(axis=axes)
                x._accumulate(invstd * (gy - mean_gy - xhat * mean_gy_xhat))
            else:
                x._accumulate(g * gamma.data * invstd)

    return _record(out, (x, gamma, beta), backward)


def max_reduce(x, axis: int):
    """Max over one axis; gradient routes to the (first) argmax positions."""
    x = as_tensor(x)
    axis = axis % x.data.ndim
    arg = x.data.argmax(axis=axis)
    out = Tensor(np.take_along_axis(x.data, np.expand_dims(arg, axis), axis=axis).squeeze(axis))

    def backward(g):
        if x.requires_grad:
            gx = np.zeros_like(x.data)
            np.put_along_axis(
                gx, np.expand_dims(arg, axis), np.expand_dims(g, axis), axis=axis
            )
            x._accumulate(gx)

    return _record(out, (x,), backward), arg


def gather_points(x, idx: np.ndarray) -> Tensor:
    """Batched index select along the point axis.

    ``x`` is (B, n, C); ``idx`` is (B, m) or (B, m, K) of point indices per
    batch element. Output is (B, m, C) or (B, m, K, C). The backward pass
    scatter-adds into the source positions.
    """
    x = as_tensor(x)
    b, n, c = x.data.shape
    batch_idx = np.arange(b, dtype=np.int64).reshape((b,) + (1,) * (idx.ndim - 1))
    out = Tensor(x.data[batch_idx, idx])

    def backward(g):
        if x.requires_grad:
            gx = np.zeros((b * n, c), dtype=x.data.dtype)
            rows = (batch_idx * n + idx).reshape(-1)
            scatter_add_rows(gx, rows, g.reshape(-1, c))
            x._accumulate(gx.reshape(b, n, c))

    return _record(out, (x,), backward)


def concat(tensors, axis: int = -1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    axis = axis % tensors[0].data.ndim
    out = Tensor(np.concatenate([t.data for t in tensors], axis=axis))
    sizes = [t.data.shape[axis] for t in tensors]
    bounds = np.cumsum([0] + sizes)

    def backward(g):
        for t, lo, hi in zip(tensors, bounds[:-1], bounds[1:]):
            if t.requires_grad:
                sl = [slice(None)] * g.ndim
                sl[axis] = slice(lo, hi)
                t._accumulate(g[tuple(sl)])

    return _record(out, tuple(tensors), backward)


def reduce_sum(x, axis=None) -> Tensor:
    x = as_tensor(x)
    out = Tensor(x.data.sum(axis=axis))

    def backward(g):
        if x.requires_grad:
            if axis is None:
                x._accumulate(np.broadcast_to(g, x.data.shape).astype(x.data.dtype))
            else:
                x._accumulate(np.broadcast_to(np.expand_dims(g, axis), x.data.shape))

    return _record(out, (x,), backward)


def reduce_mean(x) -> Tensor:
    x = as_tensor(x)
    out = Tensor(x.data.mean())
    count = x.data.size

    def backward(g):
        if x.requires_grad:
            x._accumulate(np.full_like(x.data, g / count))

    return _record(out, (x,), backward)


def dropout(x, p: float, rng, training: bool) -> Tensor:
    """Inverted dropout; identity in eval mode or at p = 0."""
    x = as_tensor(x)
    if not training or p <= 0:
        return x
    keep = (rng.random(x.data.shape) >= p).astype(x.data.dtype)
    scale = np.asarray(1.0 / (1.0 - p), dtype=x.data.dtype)
    out = Tensor(x.data * keep * scale)

    def backward(g):
        if x.requires_grad:
            x._accumulate(g * keep * scale)

    return _record(out, (x,), backward)


def l2_normalize(x, eps: float = 1e-12) -> Tensor:
    """Row-wise L2 normalization along the trailing axis."""
    x = as_tensor(x)
    norm = np.sqrt((x.data * x.data).sum(axis=-1, keepdims=True))
    norm = np.maximum(norm, eps)
    y = x.data / norm
    out = Tensor(y)

    def backward(g):
        if x.requires_grad:
            dot = (g * y).sum(axis=-1, keepdims=True)
            x._accumulate((g - y * dot) / norm)

    return _record(out, (x,), backward)


def log_softmax(x) -> Tensor:
    x = as_tensor(x)
    shifted = x.data - x.data.max(axis=-1, keepdims=True)
    logz = np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    out = Tensor(shifted - logz)

    def backward(g):
        if x.requires_grad:
            softmax = np.exp(out.data)
            x._accumulate(g - softmax * g.sum(axis=-1, keepdims=True))

    return _record(out, (x,), backward)


def softmax_cross_entropy(
    logits, targets: np.ndarray, class_weights=None, ignore_index=None
) -> Tensor:
    """Weighted mean cross entropy over non-ignored items.

    ``logits`` may be (..., C); targets are integer class indices of the
    matching leading shape. With weights w, the loss is
    sum_i w[t_i] * (-log softmax(logits_i)[t_i]) / sum_i w[t_i] over items
    whose target differs from ``ignore_index``.
    """
    logits = as_tensor(logits)
    c = logits.data.shape[-1]
    flat = logits.data.reshape(-1, c)
    t = np.asarray(targets).reshape(-1)
    if ignore_index is not None:
        valid = t != ignore_index
    else:
        valid = np.ones(t.shape, dtype=bool)
    if not valid.any():
        raise ValueError("softmax_cross_entropy: all items ignored")
    t_safe = np.where(valid, t, 0)
    if (t_safe < 0).any() or (t_safe >= c).any():
        raise ValueError("softmax_cross_entropy: target outside [0, C)")
    shifted = flat - flat.max(axis=1, keepdims=True)
    logz = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    logp = shifted - logz
    rows = np.arange(flat.shape[0])
    nll = -logp[rows, t_safe]
    if class_weights is not None:
        cw = np.asarray(class_weights, dtype=flat.dtype)
        w = cw[t_safe]
    else:
        w = np.ones(flat.shape[0], dtype=flat.dtype)
    w = w * valid
    total_w = w.sum()
    out = Tensor(np.asarray((nll * w).sum() / total_w, dtype=flat.dtype))

    def backward(g):
        if logits.requires_grad:
            softmax = np.exp(logp)
            grad = softmax * w[:, None]
            grad[rows, t_safe] -= w
            grad *= np.asarray(g / total_w, dtype=flat.dtype)
            logits._accumulate(grad.reshape(logits.data.shape))

    return _record(out, (logits,), backward)
