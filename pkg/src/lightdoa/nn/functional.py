"""Forward/backward pairs for the layer set LightDOA needs.

Tensors are plain ``numpy`` arrays in NCHW layout. Every ``*_backward``
takes the upstream gradient plus whatever the forward pass cached and
returns gradients in the same order as the forward's differentiable inputs.
"""

from __future__ import annotations

import numpy as np

from ..errors import InvalidArgument

BN_EPS = 1e-5
BN_MOMENTUM = 0.1


def _conv_out(n: int, stride: int) -> int:
    # kernel 3, padding 1
    return (n - 1) // stride + 1


def depthwise_conv2d(x: np.ndarray, w: np.ndarray, stride: int = 1) -> np.ndarray:
    """Per-channel 3x3 cross-correlation with zero padding 1."""
    if x.ndim != 4:
        raise InvalidArgument(f"expected (B, C, H, W) input, got shape {x.shape}")
    B, C, H, W = x.shape
    if w.shape != (C, 1, 3, 3):
        raise InvalidArgument(f"kernel shape {w.shape} does not match {C} channels")
    if stride not in (1, 2):
        raise InvalidArgument(f"stride must be 1 or 2, got {stride}")
    Ho, Wo = _conv_out(H, stride), _conv_out(W, stride)
    xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    out = np.zeros((B, C, Ho, Wo), dtype=np.result_type(x, w))
    for i in range(3):
        for j in range(3):
            window = xp[:, :, i : i + stride * (Ho - 1) + 1 : stride, j : j + stride * (Wo - 1) + 1 : stride]
            out += w[:, 0, i, j][None, :, None, None] * window
    return out


def depthwise_conv2d_backward(dout: np.ndarray, x: np.ndarray, w: np.ndarray, stride: int = 1):
    B, C, H, W = x.shape
    Ho, Wo = dout.shape[2:]
    xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    dxp = np.zeros_like(xp, dtype=np.result_type(dout, w))
    dw = np.zeros_like(w)
    for i in range(3):
        for j in range(3):
            rows = slice(i, i + stride * (Ho - 1) + 1, stride)
            cols = slice(j, j + stride * (Wo - 1) + 1, stride)
            dw[:, 0, i, j] = np.einsum("bchw,bchw->c", dout, xp[:, :, rows, cols])
            dxp[:, :, rows, cols] += w[:, 0, i, j][None, :, None, None] * dout
    return dxp[:, :, 1:-1, 1:-1], dw


def pointwise_conv2d(x: np.ndarray, w: np.ndarray) -> np.ndarray:
    """1x1 convolution: a per-pixel linear map across channels."""
    if x.ndim != 4 or w.ndim != 4 or w.shape[1:] != (x.shape[1], 1, 1):
        raise InvalidArgument(f"pointwise weights {w.shape} do not fit input {x.shape}")
    B, C, H, W = x.shape
    out = np.matmul(w[:, :, 0, 0], x.reshape(B, C, H * W))
    return out.reshape(B, w.shape[0], H, W)


def pointwise_conv2d_backward(dout: np.ndarray, x: np.ndarray, w: np.ndarray):
    B, C, H, W = x.shape
    O = w.shape[0]
    d3 = dout.reshape(B, O, H * W)
    x3 = x.reshape(B, C, H * W)
    dw = np.tensordot(d3, x3, axes=([0, 2], [0, 2]))[:, :, None, None]
    dx = np.matmul(w[:, :, 0, 0].T, d3).reshape(B, C, H, W)
    return dx, dw


def batch_norm(x, gamma, beta, running_mean, running_var, training: bool, momentum=BN_MOMENTUM, eps=BN_EPS):
    """Per-channel normalization over (B, H, W).

    In training mode the batch statistics are used and the running buffers
    are updated in place (unbiased variance, as is conventional).
    Returns ``(out, cache)``.
    """
    shape = (1, -1, 1, 1)
    if training:
        mean = x.mean(axis=(0, 2, 3))
        var = x.var(axis=(0, 2, 3))
        n = x.size // x.shape[1]
        running_mean *= 1.0 - momentum
        running_mean += momentum * mean
        running_var *= 1.0 - momentum
        running_var += momentum * var * (n / (n - 1) if n > 1 else 1.0)
    else:
        mean, var = running_mean, running_var
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x - mean.reshape(shape)) * inv_std.reshape(shape)
    out = gamma.reshape(shape) * xhat + beta.reshape(shape)
    return out, (xhat, inv_std, gamma, training)


def batch_norm_backward(dout, cache):
    xhat, inv_std, gamma, training = cache
    shape = (1, -1, 1, 1)
    dgamma = np.einsum("bchw,bchw->c", dout, xhat)
    dbeta = dout.sum(axis=(0, 2, 3))
    dxhat = dout * gamma.reshape(shape)
    if not training:
        return dxhat * inv_std.reshape(shape), dgamma, dbeta
    n = xhat.size // xhat.shape[1]
    mean_dxhat = dxhat.sum(axis=(0, 2, 3)).reshape(shape) / n
    mean_dxhat_xhat = np.einsum("bchw,bchw->c", dxhat, xhat).reshape(shape) / n
    dx = inv_std.reshape(shape) * (dxhat - mean_dxhat - xhat * mean_dxhat_xhat)
    return dx, dgamma, dbeta


def relu(x):
    return np.maximum(x, 0)


def relu_backward(dout, x):
    return dout * (x > 0)


def _pool_bounds(n: int, out: int):
    # floor start, ceil end: every cell is non-empty even when n < out
    return [((i * n) // out, -((-(i + 1) * n) // out)) for i in range(out)]


def adaptive_avg_pool2d(x, out_h: int = 2, out_w: int = 2):
    B, C, H, W = x.shape
    out = np.empty((B, C, out_h, out_w), dtype=x.dtype)
    for i, (r0, r1) in enumerate(_pool_bounds(H, out_h)):
        for j, (c0, c1) in enumerate(_pool_bounds(W, out_w)):
            out[:, :, i, j] = x[:, :, r0:r1, c0:c1].mean(axis=(2, 3))
    return out


def adaptive_avg_pool2d_backward(dout, in_shape):
    B, C, H, W = in_shape
    out_h, out_w = dout.shape[2:]
    dx = np.zeros(in_shape, dtype=dout.dtype)
    for i, (r0, r1) in enumerate(_pool_bounds(H, out_h)):
        for j, (c0, c1) in enumerate(_pool_bounds(W, out_w)):
            dx[:, :, r0:r1, c0:c1] += (dout[:, :, i, j] / ((r1 - r0) * (c1 - c0)))[:, :, None, None]
    return dx


def _sigmoid(v):
    return 0.5 * (1.0 + np.tanh(0.5 * v))


def gru_forward(x, w_ih, w_hh, b_ih, b_hh, h0=None):
    """Unidirectional GRU over axis 1 of ``x`` (B, T, F_in).

    Gate rows are ordered reset, update, candidate; the reset gate multiplies
    the hidden-side candidate term (including its bias). Returns
    ``(outputs (B, T, H), cache)``.
    """
    if x.ndim != 3:
        raise InvalidArgument(f"GRU expects (B, T, F) input, got shape {x.shape}")
    B, T, _ = x.shape
    H = w_hh.shape[1]
    h = np.zeros((B, H), dtype=x.dtype) if h0 is None else h0
    gi_all = x @ w_ih.T + b_ih
    outputs = np.empty((B, T, H), dtype=np.result_type(x, w_hh))
    steps = []
    for t in range(T):
        gi = gi_all[:, t]
        gh = h @ w_hh.T + b_hh
        r = _sigmoid(gi[:, :H] + gh[:, :H])
        z = _sigmoid(gi[:, H : 2 * H] + gh[:, H : 2 * H])
        n = np.tanh(gi[:, 2 * H :] + r * gh[:, 2 * H :])
        steps.append((h, r, z, n, gh[:, 2 * H :]))
        h = (1.0 - z) * n + z * h
        outputs[:, t] = h
    return outputs, (x, w_ih, w_hh, steps)


def gru_backward(dout, cache):
    """Returns ``(dx, dw_ih, dw_hh, db_ih, db_hh, dh0)``."""
    x, w_ih, w_hh, steps = cache
    B, T, _ = x.shape
    H = w_hh.shape[1]
    dgi_all = np.empty((B, T, 3 * H), dtype=dout.dtype)
    dw_hh = np.zeros_like(w_hh)
    db_hh = np.zeros(3 * H, dtype=w_hh.dtype)
    dh_next = np.zeros((B, H), dtype=dout.dtype)
    for t in reversed(range(T)):
        h_prev, r, z, n, gh_n = steps[t]
        dh = dout[:, t] + dh_next
        dn = dh * (1.0 - z) * (1.0 - n * n)
        dz = dh * (h_prev - n) * z * (1.0 - z)
        dr = dn * gh_n * r * (1.0 - r)
        dgi = np.concatenate([dr, dz, dn], axis=1)
        dgh = np.concatenate([dr, dz, dn * r], axis=1)
        dgi_all[:, t] = dgi
        dw_hh += dgh.T @ h_prev
        db_hh += dgh.sum(axis=0)
        dh_next = dh * z + dgh @ w_hh
    dw_ih = np.tensordot(dgi_all, x, axes=([0, 1], [0, 1]))
    db_ih = dgi_all.sum(axis=(0, 1))
    dx = dgi_all @ w_ih
    return dx, dw_ih, dw_hh, db_ih, db_hh, dh_next


def linear(x, w, b):
    return x @ w.T + b


def linear_backward(dout, x, w):
    return dout @ w, dout.T @ x, dout.sum(axis=0)


def log_softmax(logits):
    shifted = logits - logits.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def softmax(logits):
    return np.exp(log_softmax(np.asarray(logits)))


def cross_entropy(logits, targets):
    """Mean of ``logsumexp(logits) - logits[y]``; returns ``(loss, dlogits)``."""
    logits = np.atleast_2d(logits)
    targets = np.atleast_1d(np.asarray(targets))
    B, K = logits.shape
    if targets.shape != (B,):
        raise InvalidArgument(f"expected {B} targets, got shape {targets.shape}")
    if np.any(targets < 0) or np.any(targets >= K):
        raise InvalidArgument(f"target class outside [0, {K})")
    logp = log_softmax(logits)
    rows = np.arange(B)
    loss = -logp[rows, targets].mean()
    grad = np.exp(logp)
    grad[rows, targets] -= 1.0
    return float(loss), grad / B
