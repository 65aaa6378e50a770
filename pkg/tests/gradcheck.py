"""Central finite-difference checks for the CLDNN layers and model."""

import numpy as np

from rfaug.nn import layers as L
from rfaug.nn.cldnn import CldnnSpec, backward, forward, init_params
from rfaug.rng import rng_for

H = 1e-5


def rel_error(a, n):
    """Norm-wise relative error between analytic and numeric gradients."""
    a, n = np.ravel(a), np.ravel(n)
    denom = max(np.linalg.norm(a) + np.linalg.norm(n), 1e-12)
    return float(np.linalg.norm(a - n) / denom)


def numeric_grad(f, x, idx=None, h=H):
    """d f / d x at the flat indices ``idx`` (all entries when None); ``x`` is perturbed in place."""
    flat = x.reshape(-1)
    idx = range(flat.size) if idx is None else idx
    g = np.zeros(flat.size)
    for i in idx:
        old = flat[i]
        flat[i] = old + h
        fp = f()
        flat[i] = old - h
        fm = f()
        flat[i] = old
        g[i] = (fp - fm) / (2 * h)
    return g.reshape(x.shape)


def _rng(*tag):
    return rng_for(0, "gradcheck", *tag)


def check_conv():
    r = _rng("conv")
    x, w, b = r.standard_normal((2, 3, 11)), r.standard_normal((4, 3, 8)), r.standard_normal(4)
    R = r.standard_normal((2, 4, 11))
    f = lambda: float(np.sum(L.conv1d_forward(x, w, b)[0] * R))
    dx, dw, db = L.conv1d_backward(R, L.conv1d_forward(x, w, b)[1])
    return max(rel_error(dx, numeric_grad(f, x)), rel_error(dw, numeric_grad(f, w)),
               rel_error(db, numeric_grad(f, b)))


def check_batchnorm(ndim=3, training=True):
    r = _rng(f"bn{ndim}{training}")
    shape = (4, 3, 6) if ndim == 3 else (5, 3)
    x = r.standard_normal(shape) * 2 + 1
    gamma, beta = r.standard_normal(3), r.standard_normal(3)
    rm, rv = r.standard_normal(3), r.uniform(0.5, 2, 3)
    R = r.standard_normal(shape)
    f = lambda: float(np.sum(L.batchnorm_forward(x, gamma, beta, rm, rv, training)[0] * R))
    dx, dg, dbeta = L.batchnorm_backward(R, L.batchnorm_forward(x, gamma, beta, rm, rv, training)[1])
    return max(rel_error(dx, numeric_grad(f, x)), rel_error(dg, numeric_grad(f, gamma)),
               rel_error(dbeta, numeric_grad(f, beta)))


def check_lstm():
    r = _rng("lstm")
    B, T, F, Hd = 2, 5, 4, 3
    x = r.standard_normal((B, T, F))
    w_ih, w_hh, b = r.standard_normal((F, 4 * Hd)) * 0.5, r.standard_normal((Hd, 4 * Hd)) * 0.5, r.standard_normal(4 * Hd)
    R = r.standard_normal((B, T, Hd))
    f = lambda: float(np.sum(L.lstm_forward(x, w_ih, w_hh, b)[0] * R))
    dx, dwi, dwh, db = L.lstm_backward(R, L.lstm_forward(x, w_ih, w_hh, b)[1])
    return max(rel_error(dx, numeric_grad(f, x)), rel_error(dwi, numeric_grad(f, w_ih)),
               rel_error(dwh, numeric_grad(f, w_hh)), rel_error(db, numeric_grad(f, b)))


def check_dense():
    r = _rng("dense")
    x, w, b = r.standard_normal((3, 5)), r.standard_normal((5, 4)), r.standard_normal(4)
    R = r.standard_normal((3, 4))
    f = lambda: float(np.sum(L.dense_forward(x, w, b)[0] * R))
    dx, dw, db = L.dense_backward(R, L.dense_forward(x, w, b)[1])
    return max(rel_error(dx, numeric_grad(f, x)), rel_error(dw, numeric_grad(f, w)),
               rel_error(db, numeric_grad(f, b)))


def check_relu():
    r = _rng("relu")
    x = r.standard_normal((3, 7))
    x[np.abs(x) < 1e-3] = 0.5  # keep away from the kink
    R = r.standard_normal((3, 7))
    f = lambda: float(np.sum(L.relu_forward(x)[0] * R))
    return rel_error(L.relu_backward(R, L.relu_forward(x)[1]), numeric_grad(f, x))


def check_softmax_ce():
    r = _rng("ce")
    z, y = r.standard_normal((6, 4)) * 3, r.integers(0, 4, 6)
    f = lambda: L.softmax_cross_entropy(z, y)[0]
    return rel_error(L.softmax_cross_entropy(z, y)[1], numeric_grad(f, z))


REDUCED = CldnnSpec(n_classes=3, input_len=32, conv_channels=4, dense_units=16)


KINK_MARGIN = 2e-4  # 20 h


def relu_margin(params, x):
    """Smallest |pre-activation| over every ReLU unit of a training-mode forward pass."""
    _, _, c, _ = forward(params, x, training=True, keep=True)
    spec, W = params.spec, params.weights
    left = (spec.kernel - 1) // 2
    out = []
    for i in range(1, spec.n_conv + 1):
        xp, w = c[f"conv{i}"]
        z, _ = L.conv1d_forward(xp[:, :, left : left + spec.input_len], w, W[f"conv{i}.b"])
        out.append(np.min(np.abs(z)))
    flat, w = c["fc1"]
    out.append(np.min(np.abs(flat @ w + W["fc1.b"])))
    return float(min(out))


def network_point(spec=REDUCED, batch=8):
    """Deterministic (params, x, y) whose ReLU inputs all clear the kink by KINK_MARGIN.

    Central differences assume differentiability; a unit within h of zero
    would measure the kink, not the gradient.
    """
    for attempt in range(100):
        params = init_params(spec, seed=attempt, dtype=np.float64)
        x = _rng("net", attempt).standard_normal((batch, 2, spec.input_len))
        if relu_margin(params, x) >= KINK_MARGIN:
            return params, x, np.arange(batch) % spec.n_classes
    raise RuntimeError("no kink-free point found")


def check_network(spec=REDUCED, per_tensor=None):
    """Worst per-tensor relative error of the full training-mode backward pass.

    ``per_tensor`` limits the number of finite-difference entries per tensor
    (chosen at random); None checks every entry.
    """
    params, x, y = network_point(spec)
    r = _rng("entries")
    _, grads, _ = backward(params, x, y)
    worst = {}
    for name, w in params.weights.items():
        f = lambda: backward(params, x, y)[0]
        idx = None
        if per_tensor is not None and w.size > per_tensor:
            idx = r.choice(w.size, per_tensor, replace=False)
        num = numeric_grad(f, w, idx)
        if idx is None:
            worst[name] = rel_error(grads[name], num)
        else:
            worst[name] = rel_error(grads[name].reshape(-1)[idx], num.reshape(-1)[idx])
    return worst


LAYER_CHECKS = {
    "conv1d": check_conv,
    "batchnorm_train_3d": lambda: check_batchnorm(3, True),
    "batchnorm_train_2d": lambda: check_batchnorm(2, True),
    "batchnorm_eval": lambda: check_batchnorm(3, False),
    "lstm": check_lstm,
    "dense": check_dense,
    "relu": check_relu,
    "softmax_ce": check_softmax_ce,
}
