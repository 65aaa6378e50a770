"""Forward/backward primitives for the CLDNN.

Each ``*_forward`` returns ``(out, cache)``; the matching ``*_backward`` takes
the upstream gradient and the cache and returns the input gradient followed
by parameter gradients. Arrays are channel-first: ``(batch, channels, time)``.
"""

from __future__ import annotations

import numpy as np


# --------------------------------------------------------------- conv1d

def same_padding(kernel: int) -> tuple[int, int]:
    """Left/right zero padding that keeps the sequence length (extra on the right)."""
    return (kernel - 1) // 2, kernel // 2


_COL_BUDGET = 1 << 24  # max elements of one im2col buffer


def _im2col(xp, K, L):
    """(B, C, L+K-1) -> (C*K, B*L) with row index c*K + k."""
    B, C, _ = xp.shape
    win = np.lib.stride_tricks.sliding_window_view(xp, K, axis=2)[:, :, :L]  # (B, C, L, K)
    return win.transpose(1, 3, 0, 2).reshape(C * K, B * L)


def _chunks(B, C, K, L):
    step = max(1, _COL_BUDGET // (C * K * L))
    return [(i, min(B, i + step)) for i in range(0, B, step)]


def conv1d_forward(x, w, b):
    """x: (B, C, L); w: (O, C, K); b: (O,) -> (B, O, L)."""
    B, C, L = x.shape
    O, _, K = w.shape
    left, right = same_padding(K)
    xp = np.pad(x, ((0, 0), (0, 0), (left, right)))
    w2 = w.reshape(O, C * K)
    y = np.empty((B, O, L), dtype=np.result_type(x, w))
    for i, j in _chunks(B, C, K, L):
        cols = _im2col(xp[i:j], K, L)
        y[i:j] = (w2 @ cols).reshape(O, j - i, L).transpose(1, 0, 2)
    y += b[None, :, None]
    return y, (xp, w)


def conv1d_backward(dy, cache):
    xp, w = cache
    B, O, L = dy.shape
    _, C, K = w.shape
    left, _ = same_padding(K)
    w2 = w.reshape(O, C * K)
    dxp = np.zeros_like(xp)
    dw2 = np.zeros((O, C * K), dtype=w.dtype)
    for i, j in _chunks(B, C, K, L):
        dy2 = dy[i:j].transpose(1, 0, 2).reshape(O, (j - i) * L)
        dw2 += dy2 @ _im2col(xp[i:j], K, L).T
        dcols = (w2.T @ dy2).reshape(C, K, j - i, L)
        for k in range(K):
            dxp[i:j, :, k : k + L] += dcols[:, k].transpose(1, 0, 2)
    db = dy.sum(axis=(0, 2))
    return dxp[:, :, left : left + L], dw2.reshape(O, C, K), db


# --------------------------------------------------------------- relu

def relu_forward(x):
    mask = x > 0
    return x * mask, mask


def relu_backward(dy, mask):
    return dy * mask


# --------------------------------------------------------------- batch norm

def _bn_axes(x):
    return (0, 2) if x.ndim == 3 else (0,)


def _bshape(x, v):
    return v[None, :, None] if x.ndim == 3 else v[None, :]


def batchnorm_forward(x, gamma, beta, running_mean, running_var, training: bool,
                      momentum: float = 0.1, eps: float = 1e-5):
    """Batch norm over all axes except channels (axis 1).

    Returns ``(y, cache, (new_running_mean, new_running_var))``. In training the
    running variance is updated with the unbiased batch variance.
    """
    axes = _bn_axes(x)
    if training:
        mean = x.mean(axis=axes)
        var = x.var(axis=axes)
        n = x.size // x.shape[1]
        unbiased = var * (n / max(n - 1, 1))
        new_rm = (1 - momentum) * running_mean + momentum * mean
        new_rv = (1 - momentum) * running_var + momentum * unbiased
    else:
        mean, var = running_mean, running_var
        new_rm, new_rv = running_mean, running_var
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x - _bshape(x, mean)) * _bshape(x, inv_std)
    y = xhat * _bshape(x, gamma) + _bshape(x, beta)
    return y.astype(x.dtype, copy=False), (xhat, inv_std, gamma, training), (new_rm, new_rv)


def batchnorm_backward(dy, cache):
    xhat, inv_std, gamma, training = cache
    axes = _bn_axes(dy)
    dgamma = np.sum(dy * xhat, axis=axes)
    dbeta = np.sum(dy, axis=axes)
    dxhat = dy * _bshape(dy, gamma)
    if not training:
        return dxhat * _bshape(dy, inv_std), dgamma, dbeta
    n = dy.size // dy.shape[1]
    m1 = _bshape(dy, dxhat.sum(axis=axes) / n)
    m2 = _bshape(dy, np.sum(dxhat * xhat, axis=axes) / n)
    dx = (dxhat - m1 - xhat * m2) * _bshape(dy, inv_std)
    return dx, dgamma, dbeta


# --------------------------------------------------------------- LSTM

def _sigmoid(a):
    return 0.5 * (1.0 + np.tanh(0.5 * a))


def lstm_forward(x, w_ih, w_hh, b):
    """Single-layer LSTM with zero initial state, gate order (i, f, g, o).

    x: (B, L, F); w_ih: (F, 4H); w_hh: (H, 4H); b: (4H,) -> h: (B, L, H).
    """
    B, L, _ = x.shape
    H = w_hh.shape[0]
    dt = np.result_type(x, w_ih)
    xt = np.ascontiguousarray(x.transpose(1, 0, 2))  # (L, B, F)
    pre = (xt.reshape(L * B, -1) @ w_ih + b).reshape(L, B, 4 * H)
    gates = np.empty((L, B, 4 * H), dtype=dt)  # activated i, f, g, o
    cs = np.empty((L + 1, B, H), dtype=dt)
    hs = np.empty((L + 1, B, H), dtype=dt)
    tcs = np.empty((L, B, H), dtype=dt)
    cs[0] = 0
    hs[0] = 0
    H2, H3 = 2 * H, 3 * H
    for t in range(L):
        a = pre[t] + hs[t] @ w_hh
        gt = gates[t]
        gt[:] = _sigmoid(a)
        gt[:, H2:H3] = np.tanh(a[:, H2:H3])
        c = gt[:, H:H2] * cs[t] + gt[:, :H] * gt[:, H2:H3]
        cs[t + 1] = c
        tc = np.tanh(c)
        tcs[t] = tc
        hs[t + 1] = gt[:, H3:] * tc
    out = hs[1:].transpose(1, 0, 2)
    return out, (xt, w_ih, w_hh, gates, cs, hs, tcs)


def lstm_backward(dh_seq, cache):
    xt, w_ih, w_hh, gates, cs, hs, tcs = cache
    L, B, _ = xt.shape
    H = w_hh.shape[0]
    H2, H3 = 2 * H, 3 * H
    dh_t = np.ascontiguousarray(dh_seq.transpose(1, 0, 2))
    da = np.empty_like(gates)
    dh_next = np.zeros((B, H), dtype=gates.dtype)
    dc_next = np.zeros((B, H), dtype=gates.dtype)
    w_hh_t = w_hh.T
    for t in range(L - 1, -1, -1):
        g = gates[t]
        i, f, gg, o = g[:, :H], g[:, H:H2], g[:, H2:H3], g[:, H3:]
        tc = tcs[t]
        dh = dh_t[t] + dh_next
        dc = dh * o * (1 - tc * tc) + dc_next
        d = da[t]
        d[:, :H] = dc * gg * i * (1 - i)
        d[:, H:H2] = dc * cs[t] * f * (1 - f)
        d[:, H2:H3] = dc * i * (1 - gg * gg)
        d[:, H3:] = dh * tc * o * (1 - o)
        dc_next = dc * f
        dh_next = d @ w_hh_t
    da2 = da.reshape(L * B, 4 * H)
    dw_ih = xt.reshape(L * B, -1).T @ da2
    dw_hh = hs[:-1].reshape(L * B, H).T @ da2
    db = da2.sum(axis=0)
    dx = (da2 @ w_ih.T).reshape(L, B, -1).transpose(1, 0, 2)
    return dx, dw_ih, dw_hh, db


# --------------------------------------------------------------- dense

def dense_forward(x, w, b):
    """x: (B, F); w: (F, O); b: (O,)."""
    return x @ w + b, (x, w)


def dense_backward(dy, cache):
    x, w = cache
    return dy @ w.T, x.T @ dy, dy.sum(axis=0)


# --------------------------------------------------------------- softmax + CE

def softmax(z):
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def softmax_cross_entropy(logits, labels):
    """Mean negative log-likelihood and its gradient w.r.t. the logits."""
    z = logits - logits.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    B = len(labels)
    loss = -logp[np.arange(B), labels].mean()
    dz = np.exp(logp)
    dz[np.arange(B), labels] -= 1
    return float(loss), dz / B
