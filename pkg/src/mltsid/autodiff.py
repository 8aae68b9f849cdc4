"""Minimal reverse-mode differentiable tensor kernel.

Tensors wrap numpy arrays and record the computation as they go; calling
:func:`backward` on a scalar result walks the recorded graph in reverse
topological order and accumulates gradients. Only the operations the two
networks need are provided: 1-D strided convolution, 2-D dilated
convolution, dense layers, relu/sigmoid, global average pooling,
elementwise multiply, reshape, and softmax cross-entropy.

Conventions:
  - convolutions use the cross-correlation convention (no kernel flip);
  - "same" padding follows ceil division, split left = total // 2;
  - every op accepts either the documented per-sample shape or the same
    shape with one extra leading batch axis.

A recorded graph is mutable state confined to one execution context;
distinct network instances may run in parallel. All computation is plain
single-threaded-deterministic numpy.
"""

from __future__ import annotations

import numpy as np

from .errors import DivergenceError

__all__ = [
    "Tensor",
    "Parameter",
    "backward",
    "conv1d",
    "conv2d_dilated",
    "dense",
    "global_avg_pool",
    "mul",
    "relu",
    "reshape",
    "sigmoid",
    "softmax",
    "softmax_cross_entropy",
]


class Tensor:
    """A numpy array plus an optional gradient and graph record."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward_fn")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = ()
        self._backward_fn = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype})"


class Parameter(Tensor):
    """A named, trainable tensor. Gradient always mirrors the value shape."""

    __slots__ = ("name",)

    def __init__(self, data, name: str):
        super().__init__(np.asarray(data), requires_grad=True)
        self.name = name
        self.grad = np.zeros_like(self.data)

    def zero_grad(self):
        self.grad = np.zeros_like(self.data)

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.data.shape})"


def _result(data, parents, backward_fn) -> Tensor:
    """Build an op result, recording the graph only where gradients flow."""
    requires = any(p.requires_grad for p in parents)
    out = Tensor(data, requires_grad=requires)
    if requires:
        out._parents = tuple(parents)
        out._backward_fn = backward_fn
    return out


def _accumulate(tensor: Tensor, grad) -> None:
    if not tensor.requires_grad:
        return
    if tensor.grad is None:
        tensor.grad = np.zeros_like(tensor.data)
    tensor.grad += grad


def backward(loss: Tensor, params=None) -> None:
    """Populate gradients of everything reachable from a scalar loss.

    When ``params`` is given, their gradients are zeroed first, so
    parameters that do not participate in the loss end up with exact
    zero gradients.
    """
    if loss._backward_fn is None and not loss._parents:
        raise RuntimeError("backward called on a tensor with no recorded computation")
    if loss.data.ndim != 0:
        raise ValueError("backward expects a scalar loss")
    if params is not None:
        for p in params:
            p.grad = np.zeros_like(p.data)

    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
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
            if parent.requires_grad and id(parent) not in seen:
                stack.append((parent, False))

    loss.grad = np.ones_like(loss.data)
    for node in reversed(order):
        if node._backward_fn is not None:
            node._backward_fn(node.grad)


def _with_batch_axis(x: Tensor, sample_ndim: int):
    """Return (data with a leading batch axis, had_batch flag)."""
    if x.data.ndim == sample_ndim:
        return x.data[None], False
    if x.data.ndim == sample_ndim + 1:
        return x.data, True
    raise ValueError(
        f"expected a {sample_ndim}-D input or {sample_ndim + 1}-D batch, "
        f"got shape {x.data.shape}"
    )


def relu(x: Tensor) -> Tensor:
    """Elementwise max(0, x)."""
    mask = x.data > 0
    out_data = np.where(mask, x.data, 0)

    def backward_fn(grad):
        _accumulate(x, grad * mask)

    return _result(out_data, (x,), backward_fn)


def sigmoid(x: Tensor) -> Tensor:
    """Elementwise logistic function, computed stably for large |x|."""
    d = x.data
    out_data = np.empty_like(d)
    pos = d >= 0
    out_data[pos] = 1.0 / (1.0 + np.exp(-d[pos]))
    ez = np.exp(d[~pos])
    out_data[~pos] = ez / (1.0 + ez)

    def backward_fn(grad):
        _accumulate(x, grad * out_data * (1.0 - out_data))

    return _result(out_data, (x,), backward_fn)


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise product of two same-shaped tensors."""
    if a.data.shape != b.data.shape:
        raise ValueError(f"shape mismatch in mul: {a.data.shape} vs {b.data.shape}")
    out_data = a.data * b.data

    def backward_fn(grad):
        _accumulate(a, grad * b.data)
        _accumulate(b, grad * a.data)

    return _result(out_data, (a, b), backward_fn)


def reshape(x: Tensor, shape) -> Tensor:
    """View the tensor under a new shape (same element count)."""
    old_shape = x.data.shape
    out_data = x.data.reshape(shape)

    def backward_fn(grad):
        _accumulate(x, grad.reshape(old_shape))

    return _result(out_data, (x,), backward_fn)


def _same_pad_1d(length: int, kernel: int, stride: int) -> tuple[int, int, int]:
    out_len = -(-length // stride)
    total = max((out_len - 1) * stride + kernel - length, 0)
    left = total // 2
    return out_len, left, total - left


def _gather_cols_1d(padded_cf, k, stride, out_len):
    """Channel-first im2col: (C, B, Tp) -> (C * k, B * out_len)."""
    in_ch, n_batch, _ = padded_cf.shape
    span = (out_len - 1) * stride + 1
    cols = np.empty((in_ch, k, n_batch * out_len), dtype=padded_cf.dtype)
    for i in range(k):
        view = cols[:, i, :].reshape(in_ch, n_batch, out_len)
        np.copyto(view, padded_cf[:, :, i : i + span : stride])
    return cols.reshape(in_ch * k, -1)


def conv1d(
    x: Tensor,
    weights: Tensor,
    bias: Tensor,
    stride: int = 1,
    padding: str = "same",
) -> Tensor:
    """1-D convolution over (channels_in, T) with kernel (out, in, k).

    With "same" padding the output has ceil(T / stride) steps; "valid"
    keeps only fully covered positions.
    """
    out_ch, in_ch, k = weights.data.shape
    if bias.data.shape != (out_ch,):
        raise ValueError("bias shape must be (channels_out,)")
    if stride < 1 or k < 1:
        raise ValueError("kernel size and stride must be >= 1")
    data, had_batch = _with_batch_axis(x, 2)
    n_batch, channels, length = data.shape
    if channels != in_ch:
        raise ValueError(
            f"input has {channels} channels, weights expect {in_ch}"
        )
    if padding == "same":
        out_len, pad_left, pad_right = _same_pad_1d(length, k, stride)
    elif padding == "valid":
        if length < k:
            raise ValueError("input shorter than the kernel with valid padding")
        out_len, pad_left, pad_right = (length - k) // stride + 1, 0, 0
    else:
        raise ValueError(f"unknown padding {padding!r}")

    # channel-first layout keeps the per-tap gathers contiguous in time
    padded_cf = np.pad(
        np.ascontiguousarray(data.transpose(1, 0, 2)),
        ((0, 0), (0, 0), (pad_left, pad_right)),
    )
    cols = _gather_cols_1d(padded_cf, k, stride, out_len)
    w_flat = weights.data.reshape(out_ch, in_ch * k)
    out_cf = (w_flat @ cols).reshape(out_ch, n_batch, out_len)
    del cols
    out_data = np.ascontiguousarray(out_cf.transpose(1, 0, 2))
    out_data += bias.data[:, None]

    def backward_fn(grad):
        g = grad if had_batch else grad[None]
        if bias.requires_grad:
            _accumulate(bias, g.sum(axis=(0, 2)))
        g_cf = np.ascontiguousarray(g.transpose(1, 0, 2)).reshape(out_ch, -1)
        if weights.requires_grad:
            # rebuilt here so the graph does not retain the column matrix
            cols_b = _gather_cols_1d(padded_cf, k, stride, out_len)
            _accumulate(weights, (g_cf @ cols_b.T).reshape(weights.data.shape))
        if x.requires_grad:
            dcols = (w_flat.T @ g_cf).reshape(in_ch, k, n_batch, out_len)
            dpadded = np.zeros_like(padded_cf)
            span = (out_len - 1) * stride + 1
            for i in range(k):
                dpadded[:, :, i : i + span : stride] += dcols[:, i]
            dx_cf = dpadded[:, :, pad_left : pad_left + length]
            dx = dx_cf.transpose(1, 0, 2)
            _accumulate(x, dx if had_batch else dx[0])

    result = out_data if had_batch else out_data[0]
    return _result(result, (x, weights, bias), backward_fn)


def _gather_cols_2d(padded_cf, k_f, k_t, d_f, d_t, n_f, n_t):
    """Channel-first im2col: (C, B, Fp, Tp) -> (C * kF * kT, B * F * T)."""
    in_ch, n_batch = padded_cf.shape[:2]
    cols = np.empty((in_ch, k_f, k_t, n_batch * n_f * n_t), dtype=padded_cf.dtype)
    for i in range(k_f):
        for j in range(k_t):
            view = cols[:, i, j, :].reshape(in_ch, n_batch, n_f, n_t)
            np.copyto(
                view,
                padded_cf[:, :, i * d_f : i * d_f + n_f, j * d_t : j * d_t + n_t],
            )
    return cols.reshape(in_ch * k_f * k_t, -1)


def conv2d_dilated(
    x: Tensor,
    weights: Tensor,
    bias: Tensor,
    dilation: tuple[int, int] = (1, 1),
) -> Tensor:
    """2-D dilated convolution over (channels_in, F, T), stride 1,
    same padding, so the spatial size is always preserved.

    Weights have shape (out, in, kF, kT); the effective kernel extent is
    (kF - 1) * dF + 1 by (kT - 1) * dT + 1.
    """
    out_ch, in_ch, k_f, k_t = weights.data.shape
    d_f, d_t = dilation
    if d_f < 1 or d_t < 1:
        raise ValueError("dilations must be >= 1")
    if bias.data.shape != (out_ch,):
        raise ValueError("bias shape must be (channels_out,)")
    data, had_batch = _with_batch_axis(x, 3)
    n_batch, channels, n_f, n_t = data.shape
    if channels != in_ch:
        raise ValueError(f"input has {channels} channels, weights expect {in_ch}")

    total_f = (k_f - 1) * d_f
    total_t = (k_t - 1) * d_t
    pad_f, pad_t = total_f // 2, total_t // 2
    padded_cf = np.pad(
        np.ascontiguousarray(data.transpose(1, 0, 2, 3)),
        ((0, 0), (0, 0), (pad_f, total_f - pad_f), (pad_t, total_t - pad_t)),
    )
    cols = _gather_cols_2d(padded_cf, k_f, k_t, d_f, d_t, n_f, n_t)
    w_flat = weights.data.reshape(out_ch, in_ch * k_f * k_t)
    out_cf = (w_flat @ cols).reshape(out_ch, n_batch, n_f, n_t)
    del cols
    out_data = np.ascontiguousarray(out_cf.transpose(1, 0, 2, 3))
    out_data += bias.data[:, None, None]

    def backward_fn(grad):
        g = grad if had_batch else grad[None]
        if bias.requires_grad:
            _accumulate(bias, g.sum(axis=(0, 2, 3)))
        g_cf = np.ascontiguousarray(g.transpose(1, 0, 2, 3)).reshape(out_ch, -1)
        if weights.requires_grad:
            # rebuilt here so the graph does not retain the column matrix
            cols_b = _gather_cols_2d(padded_cf, k_f, k_t, d_f, d_t, n_f, n_t)
            _accumulate(weights, (g_cf @ cols_b.T).reshape(weights.data.shape))
        if x.requires_grad:
            dcols = (w_flat.T @ g_cf).reshape(in_ch, k_f, k_t, n_batch, n_f, n_t)
            dpadded = np.zeros_like(padded_cf)
            for i in range(k_f):
                for j in range(k_t):
                    dpadded[
                        :, :, i * d_f : i * d_f + n_f, j * d_t : j * d_t + n_t
                    ] += dcols[:, i, j]
            dx_cf = dpadded[:, :, pad_f : pad_f + n_f, pad_t : pad_t + n_t]
            dx = dx_cf.transpose(1, 0, 2, 3)
            _accumulate(x, dx if had_batch else dx[0])

    result = out_data if had_batch else out_data[0]
    return _result(result, (x, weights, bias), backward_fn)


def dense(x: Tensor, weights: Tensor, bias: Tensor) -> Tensor:
    """Affine map: weights (out, in) applied to an (in,) vector."""
    out_dim, in_dim = weights.data.shape
    if bias.data.shape != (out_dim,):
        raise ValueError("bias shape must be (d_out,)")
    data, had_batch = _with_batch_axis(x, 1)
    if data.shape[1] != in_dim:
        raise ValueError(f"input dim {data.shape[1]} does not match weights ({in_dim})")
    out_data = data @ weights.data.T + bias.data

    def backward_fn(grad):
        g = grad if had_batch else grad[None]
        if bias.requires_grad:
            _accumulate(bias, g.sum(axis=0))
        if weights.requires_grad:
            _accumulate(weights, g.T @ data)
        if x.requires_grad:
            dx = g @ weights.data
            _accumulate(x, dx if had_batch else dx[0])

    result = out_data if had_batch else out_data[0]
    return _result(result, (x, weights, bias), backward_fn)


def global_avg_pool(x: Tensor) -> Tensor:
    """Per-channel mean over the time axis: (channels, T) -> (channels,)."""
    data, had_batch = _with_batch_axis(x, 2)
    length = data.shape[2]
    out_data = data.mean(axis=2)

    def backward_fn(grad):
        g = grad if had_batch else grad[None]
        dx = np.repeat(g[:, :, None], length, axis=2) / length
        _accumulate(x, dx if had_batch else dx[0])

    result = out_data if had_batch else out_data[0]
    return _result(result, (x,), backward_fn)


def softmax(logits: np.ndarray) -> np.ndarray:
    """Numerically stabilized softmax over the last axis (plain numpy)."""
    z = np.asarray(logits)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_cross_entropy(logits: Tensor, true_label) -> Tensor:
    """Cross-entropy of softmax(logits) against a one-hot ground truth.

    For a (K,) logit vector and an integer label the result is
    -log(softmax(logits)[label]). For a (B, K) batch with (B,) labels the
    per-row losses are averaged. Stabilized by subtracting the max logit.
    """
    data, had_batch = _with_batch_axis(logits, 1)
    n_batch, n_classes = data.shape
    labels = np.atleast_1d(np.asarray(true_label, dtype=np.int64))
    if had_batch and labels.shape != (n_batch,):
        raise ValueError("batched logits need one label per row")
    if labels.min() < 0 or labels.max() >= n_classes:
        raise ValueError(
            f"label out of range: got {true_label!r} for {n_classes} classes"
        )
    shifted = data - data.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1))
    picked = shifted[np.arange(n_batch), labels]
    loss_value = (log_norm - picked).mean()
    if not np.isfinite(loss_value):
        raise DivergenceError("cross-entropy loss is not finite")

    def backward_fn(grad):
        if not logits.requires_grad:
            return
        probs = np.exp(shifted - log_norm[:, None])
        probs[np.arange(n_batch), labels] -= 1.0
        probs *= grad / n_batch
        _accumulate(logits, probs if had_batch else probs[0])

    return _result(
        np.asarray(loss_value, dtype=data.dtype), (logits,), backward_fn
    )
