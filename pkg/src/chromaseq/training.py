"""Loss, accuracy metric, Adam, and the mini-batch training loop."""

from __future__ import annotations

import csv
import hashlib
import logging
import time
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .color_data import Dataset, split
from .nn.layers import NumericError
from .nn.model import ModelConfig, ModelParams, forward, init_params, loss_and_grads
from .text_codec import Vocabulary, encode_batch

logger = logging.getLogger(__name__)

BETA1 = 0.9
BETA2 = 0.999
EPS = 1e-8
EVAL_BATCH = 1024


@dataclass(frozen=True)
class TrainSchedule:
    epochs: int
    batch_size: int
    val_fraction: float = 0.2
    seed: int = 0
    learning_rate: float = 1e-3

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if not 0.0 < self.val_fraction < 1.0:
            raise ValueError(f"val_fraction must be in (0, 1), got {self.val_fraction}")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")

    @classmethod
    def stage1(cls, seed: int = 0) -> "TrainSchedule":
        return cls(epochs=350, batch_size=512, val_fraction=0.2, seed=seed, learning_rate=1e-3)

    @classmethod
    def stage2(cls, seed: int = 0) -> "TrainSchedule":
        return cls(epochs=15, batch_size=1024, val_fraction=0.2, seed=seed, learning_rate=5e-4)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class EpochMetrics:
    epoch: int
    train_loss: float
    train_acc: float
    val_loss: float
    val_acc: float


@dataclass
class TrainReport:
    """``initial`` holds metrics before the first update; ``epochs`` one row per epoch."""

    initial: EpochMetrics
    epochs: list[EpochMetrics] = field(default_factory=list)
    wall_time: float = 0.0
    params_fingerprint: str = ""
    train_indices: list[int] = field(default_factory=list)
    val_indices: list[int] = field(default_factory=list)

    @property
    def final(self) -> EpochMetrics:
        return self.epochs[-1] if self.epochs else self.initial

    def to_dict(self, timing: bool = False) -> dict:
        """Serializable summary; wall time only on request so reruns compare equal."""
        d = {
            "initial": asdict(self.initial),
            "epochs": [asdict(e) for e in self.epochs],
            "params_fingerprint": self.params_fingerprint,
        }
        if timing:
            d["wall_time"] = self.wall_time
        return d

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["epoch", "train_loss", "train_acc", "val_loss", "val_acc"])
            for e in self.epochs:
                w.writerow([e.epoch, repr(e.train_loss), repr(e.train_acc), repr(e.val_loss), repr(e.val_acc)])


def read_history_csv(path) -> list[EpochMetrics]:
    with open(path, newline="") as fh:
        return [
            EpochMetrics(int(r["epoch"]), float(r["train_loss"]), float(r["train_acc"]),
                         float(r["val_loss"]), float(r["val_acc"]))
            for r in csv.DictReader(fh)
        ]


def mse_loss(pred: Sequence[float], target: Sequence[float]) -> float:
    """Mean over the three channels of the squared error."""
    p = np.asarray(pred, dtype=np.float64)
    t = np.asarray(target, dtype=np.float64)
    return float(np.mean((p - t) ** 2))


def dominant_channel_accuracy(preds, targets) -> float:
    """Fraction of samples whose argmax channel matches; ties go to the lowest index."""
    p = np.asarray(preds, dtype=np.float64).reshape(-1, 3)
    t = np.asarray(targets, dtype=np.float64).reshape(-1, 3)
    if len(p) == 0 or len(p) != len(t):
        raise ValueError(f"need equal non-empty inputs, got {len(p)} and {len(t)}")
    return float(np.mean(np.argmax(p, axis=1) == np.argmax(t, axis=1)))


# -- Adam --------------------------------------------------------------------

@dataclass
class OptimizerState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int = 0

    @classmethod
    def zeros_like(cls, params: ModelParams) -> "OptimizerState":
        return cls({k: np.zeros_like(a) for k, a in params.items()},
                   {k: np.zeros_like(a) for k, a in params.items()}, 0)


def adam_step(params: ModelParams, grads: dict[str, np.ndarray], state: OptimizerState,
              learning_rate: float) -> None:
    """One bias-corrected Adam update, applied in place to ``params`` and ``state``."""
    if not learning_rate > 0:
        raise ValueError("learning_rate must be > 0")
    state.step += 1
    t = state.step
    bc1 = 1.0 - BETA1 ** t
    bc2 = 1.0 - BETA2 ** t
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ValueError(f"{name}: gradient shape {g.shape} != parameter shape {p.shape}")
        m = state.m[name]
        v = state.v[name]
        m *= BETA1
        m += (1.0 - BETA1) * g
        v *= BETA2
        v += (1.0 - BETA2) * (g * g)
        update = (learning_rate / bc1) * m / (np.sqrt(v / bc2) + EPS)
        if not np.all(np.isfinite(update)):
            raise NumericError(f"non-finite Adam update for {name}")
        p -= update.astype(p.dtype, copy=False)


# -- evaluation --------------------------------------------------------------

@dataclass
class EncodedData:
    """A dataset pre-encoded for the network."""

    ids: np.ndarray
    lengths: np.ndarray
    targets: np.ndarray

    @classmethod
    def build(cls, dataset: Dataset, vocab: Vocabulary, max_len: int, dtype=np.float32) -> "EncodedData":
        ids, lengths = encode_batch(dataset.names, vocab, max_len)
        return cls(ids, lengths, dataset.targets(dtype=dtype))


def predict_batch(params: ModelParams, config: ModelConfig, ids: np.ndarray, lengths: np.ndarray,
                  batch_size: int = EVAL_BATCH) -> np.ndarray:
    out = [forward(ids[s : s + batch_size], lengths[s : s + batch_size], params, config)[0]
           for s in range(0, len(ids), batch_size)]
    return np.concatenate(out, axis=0) if out else np.zeros((0, 3), dtype=params.dtype)


def evaluate_encoded(params, config, data: EncodedData, indices) -> tuple[float, float]:
    indices = np.asarray(indices, dtype=np.int64)
    if indices.size == 0:
        raise ValueError("cannot evaluate an empty index set")
    pred = predict_batch(params, config, data.ids[indices], data.lengths[indices]).astype(np.float64)
    target = data.targets[indices].astype(np.float64)
    loss = float(np.mean((pred - target) ** 2))
    return loss, dominant_channel_accuracy(pred, target)


def evaluate(params: ModelParams, config: ModelConfig, vocab: Vocabulary, dataset: Dataset,
             indices=None) -> tuple[float, float]:
    """Mean MSE and dominant-channel accuracy over ``indices`` (default: all records)."""
    data = EncodedData.build(dataset, vocab, config.max_len, params.dtype)
    if indices is None:
        indices = np.arange(len(dataset))
    return evaluate_encoded(params, config, data, indices)


def params_fingerprint(params: ModelParams) -> str:
    h = hashlib.sha256()
    for name, arr in params.items():
        h.update(name.encode())
        h.update(np.ascontiguousarray(arr).tobytes())
    return h.hexdigest()


# -- training loop -----------------------------------------------------------

def _epoch_metrics(epoch, params, config, data, train_idx, val_idx) -> EpochMetrics:
    tl, ta = evaluate_encoded(params, config, data, train_idx)
    vl, va = evaluate_encoded(params, config, data, val_idx)
    return EpochMetrics(epoch, tl, ta, vl, va)


def train(dataset: Dataset, config: ModelConfig, schedule: TrainSchedule, vocab: Vocabulary,
          params: ModelParams | None = None, opt_state: OptimizerState | None = None,
          dtype=np.float32, progress=None) -> tuple[ModelParams, TrainReport, OptimizerState]:
    """Train on the schedule's train split and evaluate both splits every epoch.

    When ``params`` is given training continues from them (a copy is made);
    otherwise weights are initialized from ``schedule.seed``. ``progress`` is an
    optional callable receiving each :class:`EpochMetrics`.
    """
    if len(dataset) < 2:
        raise ValueError("training needs at least 2 records")
    train_idx, val_idx = split(dataset, schedule.val_fraction, schedule.seed)
    if len(val_idx) == 0:
        raise ValueError(f"validation split of {len(dataset)} records at {schedule.val_fraction} is empty")
    if params is None:
        params = init_params(config, seed=schedule.seed, dtype=dtype)
    else:
        params = params.copy()
    params.validate(config)
    if opt_state is None:
        opt_state = OptimizerState.zeros_like(params)
    data = EncodedData.build(dataset, vocab, config.max_len, params.dtype)

    start = time.perf_counter()
    try:
        initial = _epoch_metrics(0, params, config, data, train_idx, val_idx)
    except NumericError as exc:
        raise NumericError(f"non-finite model output before training: {exc}") from exc
    report = TrainReport(initial=initial, train_indices=train_idx.tolist(), val_indices=val_idx.tolist())
    for epoch in range(1, schedule.epochs + 1):
        order = np.random.default_rng([schedule.seed, epoch]).permutation(train_idx)
        for s in range(0, len(order), schedule.batch_size):
            batch = order[s : s + schedule.batch_size]
            try:
                loss, grads = loss_and_grads(data.ids[batch], data.lengths[batch], data.targets[batch],
                                             params, config)
                adam_step(params, grads, opt_state, schedule.learning_rate)
            except NumericError as exc:
                raise NumericError(f"training diverged at epoch {epoch}: {exc}") from exc
        metrics = _epoch_metrics(epoch, params, config, data, train_idx, val_idx)
        if not all(np.isfinite([metrics.train_loss, metrics.train_acc])):
            raise NumericError(f"training diverged at epoch {epoch}: non-finite metrics")
        report.epochs.append(metrics)
        logger.debug("epoch %d: %s", epoch, metrics)
        if progress is not None:
            progress(metrics)
    report.wall_time = time.perf_counter() - start
    report.params_fingerprint = params_fingerprint(params)
    return params, report, opt_state
