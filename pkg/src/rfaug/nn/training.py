"""Mini-batch training with early exit on validation loss, and evaluation."""

from __future__ import annotations

import csv
import io
import math
import os
from contextlib import nullcontext
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..dataset import Dataset, WaveformSpace
from ..rng import rng_for
from .cldnn import CldnnSpec, ModelParams, NonFiniteLossError, backward, forward, init_params
from .optim import AdamState, adam_step

HISTORY_FIELDS = ("epoch", "train_loss", "val_loss", "val_acc")


class TrainingDivergedError(FloatingPointError):
    def __init__(self, msg: str, history: "History", batch_id=None):
        super().__init__(msg)
        self.history = history
        self.batch_id = batch_id


@dataclass(frozen=True)
class TrainingConfig:
    batch_size: int = 1500
    max_epochs: int = 50
    patience: int = 4
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    eval_batch_size: int = 1024

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be >= 1")
        if not 0 <= self.patience < self.max_epochs:
            raise ValueError("patience must be in [0, max_epochs)")

    def to_json(self) -> dict:
        return dict(self.__dict__)


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float
    val_acc: float


@dataclass
class History:
    records: list[EpochRecord] = field(default_factory=list)
    best_epoch: int | None = None
    stopped_early: bool = False

    def __len__(self) -> int:
        return len(self.records)

    @property
    def val_losses(self) -> list[float]:
        return [r.val_loss for r in self.records]

    def to_csv(self, path: str | os.PathLike | None = None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(HISTORY_FIELDS)
        for r in self.records:
            w.writerow([r.epoch, repr(r.train_loss), repr(r.val_loss), repr(r.val_acc)])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_csv(cls, text: str) -> "History":
        rows = list(csv.DictReader(io.StringIO(text)))
        recs = [EpochRecord(int(r["epoch"]), float(r["train_loss"]), float(r["val_loss"]),
                            float(r["val_acc"])) for r in rows]
        h = cls(recs)
        if recs:
            h.best_epoch = min(recs, key=lambda r: (r.val_loss, r.epoch)).epoch
        return h


class EarlyStopper:
    """Tracks the best validation loss; "improvement" means strictly lower."""

    def __init__(self, patience: int):
        self.patience = patience
        self.best = math.inf
        self.best_epoch: int | None = None
        self.stale = 0

    def update(self, epoch: int, val_loss: float) -> bool:
        """Record an epoch; returns True when it is the new best."""
        if val_loss < self.best:
            self.best, self.best_epoch, self.stale = val_loss, epoch, 0
            return True
        self.stale += 1
        return False

    @property
    def should_stop(self) -> bool:
        return self.stale >= self.patience


@dataclass(frozen=True)
class EvalResult:
    accuracy: float
    confusion: np.ndarray
    classes: tuple

    @property
    def per_class(self) -> np.ndarray:
        rows = self.confusion.sum(axis=1)
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(rows > 0, np.diag(self.confusion) / np.maximum(rows, 1), np.nan)

    @property
    def total(self) -> int:
        return int(self.confusion.sum())


def network_input(samples: np.ndarray, input_len: int) -> np.ndarray:
    """(N, L) complex -> (N, 2, input_len) float32, each observation scaled to unit RMS.

    Observations longer than ``input_len`` are cropped to their first samples.
    """
    x = np.asarray(samples)[:, :input_len].astype(np.complex128)
    if x.shape[1] != input_len:
        raise ValueError(f"observations have {x.shape[1]} samples, network expects {input_len}")
    rms = np.sqrt(np.mean(np.abs(x) ** 2, axis=1, keepdims=True))
    x = x / np.where(rms > 0, rms, 1.0)
    return np.stack([x.real, x.imag], axis=1).astype(np.float32)


def dataset_labels(ds: Dataset, space: WaveformSpace) -> np.ndarray:
    try:
        return np.array([space.index(e.cls) for e in ds.manifest.entries], dtype=np.int64)
    except (KeyError, ValueError) as exc:
        raise ValueError(f"observation class outside {space.name}: {exc}") from None


def prepare(ds: Dataset, spec: CldnnSpec, space: WaveformSpace) -> tuple[np.ndarray, np.ndarray]:
    if len(space) != spec.n_classes:
        raise ValueError(f"{space.name} has {len(space)} classes, model has {spec.n_classes}")
    return network_input(ds.samples, spec.input_len), dataset_labels(ds, space)


def _single_thread(strict: bool):
    if not strict:
        return nullcontext()
    from threadpoolctl import threadpool_limits
    return threadpool_limits(limits=1)


def predict_proba(params: ModelParams, x: np.ndarray, batch_size: int = 1024) -> np.ndarray:
    out = [forward(params, x[i : i + batch_size], training=False) for i in range(0, len(x), batch_size)]
    return np.concatenate(out) if out else np.zeros((0, params.spec.n_classes))


def _loss_acc(params: ModelParams, x: np.ndarray, y: np.ndarray, batch_size: int) -> tuple[float, float]:
    total, correct = 0.0, 0
    for i in range(0, len(x), batch_size):
        probs = forward(params, x[i : i + batch_size], training=False)
        yb = y[i : i + batch_size]
        total += float(-np.sum(np.log(np.maximum(probs[np.arange(len(yb)), yb].astype(np.float64), 1e-300))))
        correct += int(np.sum(np.argmax(probs, axis=1) == yb))
    return total / len(x), correct / len(x)


def train_arrays(params: ModelParams, config: TrainingConfig, x_train: np.ndarray, y_train: np.ndarray,
                 x_val: np.ndarray, y_val: np.ndarray, strict: bool = True,
                 log=None) -> tuple[ModelParams, History]:
    """Train ``params`` (copied) and return the minimum-validation-loss weights."""
    if len(x_train) == 0 or len(x_val) == 0:
        raise ValueError("training and validation sets must be non-empty")
    params = params.copy()
    state = AdamState()
    stopper = EarlyStopper(config.patience)
    history = History()
    best = params.copy()
    with _single_thread(strict):
        for epoch in range(1, config.max_epochs + 1):
            order = rng_for(config.seed, "shuffle", epoch).permutation(len(x_train))
            seen, run_loss = 0, 0.0
            for b, start in enumerate(range(0, len(order), config.batch_size)):
                idx = order[start : start + config.batch_size]
                try:
                    loss, grads, running = backward(params, x_train[idx], y_train[idx], batch_id=(epoch, b))
                except NonFiniteLossError as exc:
                    raise TrainingDivergedError(str(exc), history, exc.batch_id) from exc
                adam_step(params.weights, grads, state, lr=config.lr, beta1=config.beta1,
                          beta2=config.beta2, eps=config.eps)
                params.running.update(running)
                run_loss += loss * len(idx)
                seen += len(idx)
            val_loss, val_acc = _loss_acc(params, x_val, y_val, config.eval_batch_size)
            if not math.isfinite(val_loss):
                raise TrainingDivergedError(f"non-finite validation loss at epoch {epoch}", history)
            history.records.append(EpochRecord(epoch, run_loss / seen, val_loss, val_acc))
            if stopper.update(epoch, val_loss):
                best = params.copy()
            if log is not None:
                log(f"epoch {epoch:3d} train {run_loss / seen:.4f} val {val_loss:.4f} acc {val_acc:.4f}")
            if stopper.should_stop:
                history.stopped_early = epoch < config.max_epochs
                break
    history.best_epoch = stopper.best_epoch
    return best, history


def train(spec: CldnnSpec, config: TrainingConfig, train_ds: Dataset, val_ds: Dataset,
          space: WaveformSpace, strict: bool = True, log=None,
          init: ModelParams | None = None) -> tuple[ModelParams, History]:
    if len(train_ds) == 0 or len(val_ds) == 0:
        raise ValueError("training and validation sets must be non-empty")
    x_tr, y_tr = prepare(train_ds, spec, space)
    x_va, y_va = prepare(val_ds, spec, space)
    params = init if init is not None else init_params(spec, config.seed)
    return train_arrays(params, config, x_tr, y_tr, x_va, y_va, strict=strict, log=log)


def evaluate_arrays(params: ModelParams, x: np.ndarray, y: np.ndarray, classes: tuple = (),
                    batch_size: int = 1024) -> EvalResult:
    n = params.spec.n_classes
    if len(y) and (y.min() < 0 or y.max() >= n):
        raise ValueError("labels outside the model's classes")
    pred = np.argmax(predict_proba(params, x, batch_size), axis=1)
    conf = np.zeros((n, n), dtype=np.int64)
    np.add.at(conf, (y, pred), 1)
    acc = float(np.trace(conf) / conf.sum()) if len(y) else float("nan")
    return EvalResult(acc, conf, classes)


def evaluate(params: ModelParams, test_ds: Dataset, space: WaveformSpace, strict: bool = True,
             batch_size: int = 1024) -> EvalResult:
    x, y = prepare(test_ds, params.spec, space)
    with _single_thread(strict):
        return evaluate_arrays(params, x, y, tuple(c.value for c in space.classes), batch_size)


__all__ = [
    "EarlyStopper", "EpochRecord", "EvalResult", "History", "TrainingConfig", "TrainingDivergedError",
    "dataset_labels", "evaluate", "evaluate_arrays", "network_input", "predict_proba", "prepare",
    "train", "train_arrays",
]
