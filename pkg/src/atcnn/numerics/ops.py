"""Differentiable array operations used by the model graph."""
from __future__ import annotations

import numpy as np

from .tensor import Tensor, as_tensor, check_finite, check_shapes, make_result


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _pair(a, b) -> tuple[Tensor, Tensor]:
    """Lift operands to tensors; plain scalars and arrays take the tensor operand's dtype."""
    if isinstance(a, Tensor) and not isinstance(b, Tensor):
        return a, Tensor(np.asarray(b, dtype=a.dtype))
    if isinstance(b, Tensor) and not isinstance(a, Tensor):
        return Tensor(np.asarray(a, dtype=b.dtype)), b
    return as_tensor(a), as_tensor(b)


def _result_dtype(*ts: Tensor):
    return np.result_type(*(t.dtype for t in ts))


def add(a, b) -> Tensor:
    a, b = _pair(a, b)
    try:
        data = a.data + b.data
    except ValueError:
        check_shapes(False, "add", a.shape, b.shape)

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return make_result(data, (a, b), backward)


def sub(a, b) -> Tensor:
    a, b = _pair(a, b)
    try:
        data = a.data - b.data
    except ValueError:
        check_shapes(False, "sub", a.shape, b.shape)

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return make_result(data, (a, b), backward)


def mul(a, b) -> Tensor:
    a, b = _pair(a, b)
    try:
        data = a.data * b.data
    except ValueError:
        check_shapes(False, "mul", a.shape, b.shape)

    def backward(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return make_result(data, (a, b), backward)


def neg(a) -> Tensor:
    a = as_tensor(a)
    return make_result(-a.data, (a,), lambda g: (-g,))


def matmul(a, b) -> Tensor:
    """Batched matrix product with numpy ``@`` semantics for ndim >= 2."""
    a, b = as_tensor(a), as_tensor(b)
    check_shapes(a.ndim >= 2 and b.ndim >= 2 and a.shape[-1] == b.shape[-2], "matmul", a.shape, b.shape)
    data = a.data @ b.data

    def backward(g):
        ga = g @ np.swapaxes(b.data, -1, -2)
        gb = np.swapaxes(a.data, -1, -2) @ g
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return make_result(data, (a, b), backward)


def matvec(w, x) -> Tensor:
    """``W[r, c] @ x[c] -> y[r]``."""
    w, x = as_tensor(w), as_tensor(x)
    check_shapes(w.ndim == 2 and x.ndim == 1 and w.shape[1] == x.shape[0], "matvec", w.shape, x.shape)
    data = (w.data.astype(np.float64) @ x.data.astype(np.float64)).astype(_result_dtype(w, x))

    def backward(g):
        return np.outer(g, x.data).astype(w.dtype), (w.data.T @ g).astype(x.dtype)

    return make_result(data, (w, x), backward)


def einsum(subscripts: str, a, b) -> Tensor:
    """Two-operand einsum with explicit output, e.g. ``'mzbt,mz->mbt'``."""
    a, b = as_tensor(a), as_tensor(b)
    inputs, out = subscripts.replace(" ", "").split("->")
    sa, sb = inputs.split(",")
    try:
        data = np.einsum(subscripts, a.data, b.data, optimize=True)
    except ValueError:
        check_shapes(False, f"einsum({subscripts})", a.shape, b.shape)

    def grad_for(target: str, target_shape, other: str, other_data, g):
        kept = "".join(c for c in target if c in out or c in other)
        res = np.einsum(f"{out},{other}->{kept}", g, other_data, optimize=True)
        if kept != target:
            # indices summed away inside one operand come back as broadcasts
            res = res.reshape([target_shape[i] if c in kept else 1 for i, c in enumerate(target)])
            res = np.broadcast_to(res, target_shape).copy()
        return res

    def backward(g):
        return (grad_for(sa, a.shape, sb, b.data, g), grad_for(sb, b.shape, sa, a.data, g))

    return make_result(data, (a, b), backward)


def dot(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    check_shapes(a.shape == b.shape and a.ndim == 1, "dot", a.shape, b.shape)
    return einsum("i,i->", a, b)


def tanh(a) -> Tensor:
    a = as_tensor(a)
    check_finite(a, "tanh")
    y = np.tanh(a.data)
    return make_result(y, (a,), lambda g: (g * (1.0 - y * y),))


def relu(a) -> Tensor:
    a = as_tensor(a)
    mask = a.data > 0
    return make_result(np.where(mask, a.data, 0).astype(a.dtype), (a,), lambda g: (g * mask,))


def exp(a) -> Tensor:
    a = as_tensor(a)
    y = np.exp(a.data)
    return make_result(y, (a,), lambda g: (g * y,))


def log(a) -> Tensor:
    a = as_tensor(a)
    return make_result(np.log(a.data), (a,), lambda g: (g / a.data,))


def clip(a, lo: float, hi: float) -> Tensor:
    a = as_tensor(a)
    inside = (a.data >= lo) & (a.data <= hi)
    return make_result(np.clip(a.data, lo, hi), (a,), lambda g: (g * inside,))


def softmax(a, axis: int = -1) -> Tensor:
    """Max-shifted softmax; sums are accumulated in float64."""
    a = as_tensor(a)
    check_finite(a, "softmax")
    check_shapes(a.data.size > 0, "softmax", a.shape)
    x = a.data.astype(np.float64)
    e = np.exp(x - x.max(axis=axis, keepdims=True))
    y64 = e / e.sum(axis=axis, keepdims=True)
    y = y64.astype(a.dtype)

    def backward(g):
        g64 = g.astype(np.float64)
        inner = (g64 * y64).sum(axis=axis, keepdims=True)
        return ((y64 * (g64 - inner)).astype(a.dtype),)

    return make_result(y, (a,), backward)


def tsum(a, axis=None) -> Tensor:
    a = as_tensor(a)
    data = np.asarray(a.data.sum(axis=axis, dtype=np.float64)).astype(a.dtype)

    def backward(g):
        if axis is None:
            return (np.broadcast_to(g, a.shape).astype(a.dtype),)
        return (np.broadcast_to(np.expand_dims(g, axis), a.shape).astype(a.dtype),)

    return make_result(data, (a,), backward)


def mean(a, axis=None) -> Tensor:
    a = as_tensor(a)
    n = a.data.size if axis is None else np.prod([a.shape[i] for i in np.atleast_1d(axis)])
    return mul(tsum(a, axis), np.asarray(1.0 / n, dtype=a.dtype))


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    return make_result(a.data.reshape(shape), (a,), lambda g: (g.reshape(a.shape),))


def transpose(a, axes=None) -> Tensor:
    a = as_tensor(a)
    data = np.transpose(a.data, axes)
    inverse = None if axes is None else np.argsort(axes)
    return make_result(data, (a,), lambda g: (np.transpose(g, inverse),))


def getitem(a, index) -> Tensor:
    a = as_tensor(a)

    def backward(g):
        out = np.zeros_like(a.data)
        np.add.at(out, index, g)
        return (out,)

    return make_result(a.data[index], (a,), backward)


def causal_conv1d(x, w, b=None, dilation: int = 1) -> Tensor:
    """Dilated causal convolution, one independent filter bank per group.

    Shapes: ``x (G, Cin, B, T)``, ``w (G, Cout, Cin, K)``, ``b (G, Cout)``;
    returns ``(G, Cout, B, T)`` with
    ``out[..., n] = sum_i w[..., i] * x[..., n - dilation*i]`` and zero
    padding on the left, so output ``n`` never sees inputs after ``n``.
    """
    x, w = as_tensor(x), as_tensor(w)
    check_shapes(x.ndim == 4 and w.ndim == 4 and x.shape[0] == w.shape[0] and x.shape[1] == w.shape[2],
                 "causal_conv1d", x.shape, w.shape)
    if dilation < 1:
        raise ValueError(f"dilation must be >= 1, got {dilation}")
    G, Cin, B, T = x.shape
    Cout, K = w.shape[1], w.shape[3]
    pad = (K - 1) * dilation
    xp = np.zeros((G, Cin, B, T + pad), dtype=x.dtype)
    xp[..., pad:] = x.data
    cols = np.empty((G, Cin, K, B, T), dtype=x.dtype)
    for i in range(K):
        start = pad - i * dilation
        cols[:, :, i] = xp[..., start:start + T]
    cols = cols.reshape(G, Cin * K, B * T)
    w2 = w.data.reshape(G, Cout, Cin * K)
    out = (w2 @ cols).reshape(G, Cout, B, T)
    parents = [x, w]
    if b is not None:
        b = as_tensor(b)
        check_shapes(b.shape == (G, Cout), "causal_conv1d bias", b.shape, (G, Cout))
        out += b.data[:, :, None, None]
        parents.append(b)

    def backward(g):
        g2 = g.reshape(G, Cout, B * T)
        gw = (g2 @ cols.transpose(0, 2, 1)).reshape(w.shape)
        gx = None
        if x.requires_grad:
            gcols = (w2.transpose(0, 2, 1) @ g2).reshape(G, Cin, K, B, T)
            gxp = np.zeros_like(xp)
            for i in range(K):
                start = pad - i * dilation
                gxp[..., start:start + T] += gcols[:, :, i]
            gx = gxp[..., pad:]
        grads = [gx, gw]
        if b is not None:
            grads.append(g.sum(axis=(2, 3)))
        return grads

    return make_result(out, parents, backward)
