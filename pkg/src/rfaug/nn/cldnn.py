"""CLDNN: three same-length conv blocks, LSTM over time, dense head.

Layer stack (``C`` conv channels, ``H = n_classes``, ``L = input_len``)::

    (B,2,L) -> [conv k=8 -> ReLU -> BN] x3 -> concat(block1, block3) (B,2C,L)
            -> LSTM(hidden=H) (B,L,H) -> flatten (B,L*H)
            -> dense 256 -> ReLU -> BN -> dense H -> softmax
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from ..rng import rng_for
from . import layers as Lyr


class ShapeError(ValueError):
    pass


class NonFiniteLossError(FloatingPointError):
    def __init__(self, msg: str, batch_id=None):
        super().__init__(msg)
        self.batch_id = batch_id


@dataclass(frozen=True)
class CldnnSpec:
    n_classes: int
    input_len: int = 1024
    conv_channels: int = 50
    kernel: int = 8
    dense_units: int = 256
    bn_momentum: float = 0.1
    bn_eps: float = 1e-5

    n_conv = 3  # not a field: the concat taps blocks 1 and 3

    def __post_init__(self):
        if self.n_classes < 2:
            raise ValueError("n_classes must be >= 2")

    @property
    def hidden(self) -> int:
        return self.n_classes

    @property
    def lstm_features(self) -> int:
        return 2 * self.conv_channels

    def shapes(self) -> dict[str, tuple[int, ...]]:
        C, K, H = self.conv_channels, self.kernel, self.hidden
        s: dict[str, tuple[int, ...]] = {}
        cin = 2
        for i in range(1, self.n_conv + 1):
            s[f"conv{i}.w"] = (C, cin, K)
            s[f"conv{i}.b"] = (C,)
            s[f"bn{i}.gamma"] = (C,)
            s[f"bn{i}.beta"] = (C,)
            cin = C
        s["lstm.w_ih"] = (self.lstm_features, 4 * H)
        s["lstm.w_hh"] = (H, 4 * H)
        s["lstm.b"] = (4 * H,)
        s["fc1.w"] = (self.input_len * H, self.dense_units)
        s["fc1.b"] = (self.dense_units,)
        s["bn_fc.gamma"] = (self.dense_units,)
        s["bn_fc.beta"] = (self.dense_units,)
        s["fc2.w"] = (self.dense_units, self.n_classes)
        s["fc2.b"] = (self.n_classes,)
        return s

    def bn_names(self) -> list[str]:
        return [f"bn{i}" for i in range(1, self.n_conv + 1)] + ["bn_fc"]

    def to_json(self) -> dict:
        return asdict(self)


@dataclass
class ModelParams:
    spec: CldnnSpec
    weights: dict[str, np.ndarray]
    running: dict[str, np.ndarray] = field(default_factory=dict)

    def param_count(self) -> int:
        return int(sum(w.size for w in self.weights.values()))

    def copy(self) -> "ModelParams":
        return ModelParams(self.spec, {k: v.copy() for k, v in self.weights.items()},
                           {k: v.copy() for k, v in self.running.items()})

    def astype(self, dtype) -> "ModelParams":
        return ModelParams(self.spec, {k: v.astype(dtype) for k, v in self.weights.items()},
                           {k: v.astype(dtype) for k, v in self.running.items()})

    @property
    def dtype(self):
        return self.weights["fc2.w"].dtype


def init_params(spec: CldnnSpec, seed: int = 0, dtype=np.float32) -> ModelParams:
    """Uniform fan-in initialization; LSTM weights uniform in +-1/sqrt(hidden)."""
    rng = rng_for(seed, "init")
    w: dict[str, np.ndarray] = {}
    fan_in = {}
    for i in range(1, spec.n_conv + 1):
        cin = 2 if i == 1 else spec.conv_channels
        fan_in[f"conv{i}"] = cin * spec.kernel
    fan_in["fc1"] = spec.input_len * spec.hidden
    fan_in["fc2"] = spec.dense_units
    for name, shape in spec.shapes().items():
        layer, kind = name.split(".")
        if kind == "gamma":
            w[name] = np.ones(shape)
        elif kind == "beta":
            w[name] = np.zeros(shape)
        elif layer == "lstm":
            bound = 1.0 / math.sqrt(spec.hidden)
            w[name] = rng.uniform(-bound, bound, shape)
        else:
            bound = 1.0 / math.sqrt(fan_in[layer])
            w[name] = rng.uniform(-bound, bound, shape)
    running = {}
    for bn in spec.bn_names():
        n = spec.dense_units if bn == "bn_fc" else spec.conv_channels
        running[f"{bn}.mean"] = np.zeros(n)
        running[f"{bn}.var"] = np.ones(n)
    return ModelParams(spec, {k: v.astype(dtype) for k, v in w.items()},
                       {k: v.astype(dtype) for k, v in running.items()})


def _check_input(spec: CldnnSpec, x: np.ndarray) -> None:
    if x.ndim != 3 or x.shape[1] != 2 or x.shape[2] != spec.input_len or x.shape[0] < 1:
        raise ShapeError(f"expected input (B, 2, {spec.input_len}), got {x.shape}")


def forward(params: ModelParams, x: np.ndarray, training: bool = False, keep: bool = False):
    """Class probabilities ``(B, n_classes)``.

    With ``keep=True`` returns ``(probs, logits, caches, new_running)`` for the
    backward pass; ``new_running`` holds updated batch-norm statistics when
    ``training`` is set.
    """
    spec = params.spec
    _check_input(spec, x)
    W = params.weights
    x = x.astype(params.dtype, copy=False)
    caches = {}
    new_running = {}
    h = x
    outs = []
    for i in range(1, spec.n_conv + 1):
        h, caches[f"conv{i}"] = Lyr.conv1d_forward(h, W[f"conv{i}.w"], W[f"conv{i}.b"])
        h, caches[f"relu{i}"] = Lyr.relu_forward(h)
        h, caches[f"bn{i}"], (rm, rv) = Lyr.batchnorm_forward(
            h, W[f"bn{i}.gamma"], W[f"bn{i}.beta"],
            params.running[f"bn{i}.mean"], params.running[f"bn{i}.var"],
            training, spec.bn_momentum, spec.bn_eps)
        new_running[f"bn{i}.mean"], new_running[f"bn{i}.var"] = rm, rv
        outs.append(h)
    cat = np.concatenate([outs[0], outs[2]], axis=1)  # (B, 2C, L)
    seq, caches["lstm"] = Lyr.lstm_forward(cat.transpose(0, 2, 1), W["lstm.w_ih"], W["lstm.w_hh"], W["lstm.b"])
    flat = seq.reshape(len(x), -1)
    z, caches["fc1"] = Lyr.dense_forward(flat, W["fc1.w"], W["fc1.b"])
    z, caches["relu_fc"] = Lyr.relu_forward(z)
    z, caches["bn_fc"], (rm, rv) = Lyr.batchnorm_forward(
        z, W["bn_fc.gamma"], W["bn_fc.beta"], params.running["bn_fc.mean"], params.running["bn_fc.var"],
        training, spec.bn_momentum, spec.bn_eps)
    new_running["bn_fc.mean"], new_running["bn_fc.var"] = rm, rv
    logits, caches["fc2"] = Lyr.dense_forward(z, W["fc2.w"], W["fc2.b"])
    probs = Lyr.softmax(logits)
    if keep:
        return probs, logits, caches, new_running
    return probs


def backward(params: ModelParams, x: np.ndarray, labels: np.ndarray, batch_id=None,
             training: bool = True):
    """Training-mode forward + backward.

    Returns ``(loss, grads, new_running)``; ``loss`` is the mean negative
    log-likelihood of ``labels``.
    """
    spec = params.spec
    labels = np.asarray(labels)
    if labels.min() < 0 or labels.max() >= spec.n_classes:
        raise ValueError("labels out of range")
    _, logits, c, new_running = forward(params, x, training=training, keep=True)
    loss, dz = Lyr.softmax_cross_entropy(logits, labels)
    if not math.isfinite(loss):
        raise NonFiniteLossError(f"non-finite loss in batch {batch_id}", batch_id)
    dz = dz.astype(params.dtype, copy=False)
    g: dict[str, np.ndarray] = {}
    d, g["fc2.w"], g["fc2.b"] = Lyr.dense_backward(dz, c["fc2"])
    d, g["bn_fc.gamma"], g["bn_fc.beta"] = Lyr.batchnorm_backward(d, c["bn_fc"])
    d = Lyr.relu_backward(d, c["relu_fc"])
    d, g["fc1.w"], g["fc1.b"] = Lyr.dense_backward(d, c["fc1"])
    d = d.reshape(len(x), spec.input_len, spec.hidden)
    d, g["lstm.w_ih"], g["lstm.w_hh"], g["lstm.b"] = Lyr.lstm_backward(d, c["lstm"])
    dcat = d.transpose(0, 2, 1)
    C = spec.conv_channels
    d_first = dcat[:, :C]
    d = dcat[:, C:]
    for i in range(spec.n_conv, 0, -1):
        d, g[f"bn{i}.gamma"], g[f"bn{i}.beta"] = Lyr.batchnorm_backward(d, c[f"bn{i}"])
        d = Lyr.relu_backward(d, c[f"relu{i}"])
        d, g[f"conv{i}.w"], g[f"conv{i}.b"] = Lyr.conv1d_backward(d, c[f"conv{i}"])
        if i == 2:
            d = d + d_first  # block 1 also feeds the concat
    return loss, g, new_running
