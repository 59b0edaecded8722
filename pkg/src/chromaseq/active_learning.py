"""Self-training rounds: label generated names with the model, append, retrain."""

from __future__ import annotations

import csv
import logging
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .color_data import ColorRecord, Dataset, Origin, append_records, denormalize, denormalize_array, split
from .name_gen import DEFAULT_COLORS, filter_fresh, generate_names
from .nn.model import ModelConfig, ModelParams, model_forward
from .text_codec import Vocabulary, encode, encode_batch
from .training import (
    EncodedData,
    EpochMetrics,
    TrainReport,
    TrainSchedule,
    evaluate_encoded,
    predict_batch,
    train,
)

logger = logging.getLogger(__name__)

SUBSETS = ("all", "seed")


def predict_color(params: ModelParams, config: ModelConfig, vocab: Vocabulary, name: str):
    """Returns ``(rgb ints, rgb01 floats)`` for one name."""
    rgb01 = model_forward(encode(name, vocab, config.max_len), params, config)
    rgb01 = tuple(float(v) for v in np.clip(rgb01, 0.0, 1.0))
    return denormalize(rgb01), rgb01


def predict_colors(params: ModelParams, config: ModelConfig, vocab: Vocabulary, names: Sequence[str]) -> np.ndarray:
    """Integer (N, 3) predictions for many names."""
    ids, lengths = encode_batch(names, vocab, config.max_len)
    return denormalize_array(predict_batch(params, config, ids, lengths))


@dataclass
class SplitMetrics:
    train_loss: float
    train_acc: float
    val_loss: float
    val_acc: float


@dataclass
class RoundReport:
    round: int
    names_generated: int
    names_appended: int
    pre: dict[str, SplitMetrics]
    post: dict[str, SplitMetrics]
    stage2: TrainReport | None = None
    dataset_size: int = 0

    def to_dict(self) -> dict:
        return {
            "round": self.round,
            "names_generated": self.names_generated,
            "names_appended": self.names_appended,
            "dataset_size": self.dataset_size,
            "pre": {k: asdict(v) for k, v in self.pre.items()},
            "post": {k: asdict(v) for k, v in self.post.items()},
            "stage2": None if self.stage2 is None else self.stage2.to_dict(),
        }


def _subset_metrics(params, config, data: EncodedData, train_idx, val_idx, seed_mask) -> dict[str, SplitMetrics]:
    out = {}
    for subset in SUBSETS:
        tr, va = train_idx, val_idx
        if subset == "seed":
            tr, va = tr[seed_mask[tr]], va[seed_mask[va]]
        tl, ta = evaluate_encoded(params, config, data, tr)
        vl, vacc = evaluate_encoded(params, config, data, va)
        out[subset] = SplitMetrics(tl, ta, vl, vacc)
    return out


def run_round(dataset: Dataset, params: ModelParams, config: ModelConfig, vocab: Vocabulary,
              stage2: TrainSchedule, adjectives: Sequence[str], colors: Sequence[str] = DEFAULT_COLORS,
              round_index: int = 1, progress=None) -> tuple[Dataset, ModelParams, RoundReport]:
    """Generate, pseudo-label, append, and warm-start retrain.

    Metrics before and after retraining are computed on the same split of the
    augmented dataset, both over all records and over seed records only.
    """
    names = generate_names(adjectives, colors)
    fresh = filter_fresh(names, dataset)
    rgb = predict_colors(params, config, vocab, fresh) if fresh else np.zeros((0, 3), dtype=np.int64)
    new = [ColorRecord(n, tuple(int(c) for c in px), Origin.GENERATED) for n, px in zip(fresh, rgb)]
    augmented, appended = append_records(dataset, new)
    logger.info("round %d: %d generated, %d fresh, %d appended", round_index, len(names), len(fresh), appended)

    train_idx, val_idx = split(augmented, stage2.val_fraction, stage2.seed)
    data = EncodedData.build(augmented, vocab, config.max_len, params.dtype)
    seed_mask = np.array([r.origin == Origin.SEED for r in augmented.records])
    pre = _subset_metrics(params, config, data, train_idx, val_idx, seed_mask)

    stage2_report = None
    if appended:
        params, stage2_report, _ = train(augmented, config, stage2, vocab, params=params, progress=progress)
        post = _subset_metrics(params, config, data, train_idx, val_idx, seed_mask)
    else:
        logger.info("round %d: no fresh names, skipping retrain", round_index)
        post = pre
    report = RoundReport(round_index, len(names), appended, pre, post, stage2_report, len(augmented))
    return augmented, params, report


@dataclass
class ExperimentResult:
    stage1_params: ModelParams
    stage1_report: TrainReport
    dataset: Dataset
    params: ModelParams
    rounds: list[RoundReport] = field(default_factory=list)


def run_rounds(dataset, params, config, vocab, stage2, adjectives, colors=DEFAULT_COLORS, rounds: int = 1,
               progress=None) -> tuple[Dataset, ModelParams, list[RoundReport]]:
    if rounds < 1:
        raise ValueError(f"rounds must be >= 1, got {rounds}")
    reports = []
    for r in range(1, rounds + 1):
        dataset, params, report = run_round(dataset, params, config, vocab, stage2, adjectives, colors, r, progress)
        reports.append(report)
    return dataset, params, reports


def run_experiment(dataset: Dataset, config: ModelConfig, vocab: Vocabulary, stage1: TrainSchedule,
                   stage2: TrainSchedule, adjectives: Sequence[str], colors: Sequence[str] = DEFAULT_COLORS,
                   rounds: int = 1, progress=None) -> ExperimentResult:
    """Stage-1 training followed by ``rounds`` self-training rounds."""
    if rounds < 1:
        raise ValueError(f"rounds must be >= 1, got {rounds}")
    params1, report1, _ = train(dataset, config, stage1, vocab, progress=progress)
    final_ds, final_params, reports = run_rounds(dataset, params1, config, vocab, stage2, adjectives, colors,
                                                 rounds, progress)
    return ExperimentResult(params1, report1, final_ds, final_params, reports)


# -- tabular output ----------------------------------------------------------

_METRIC_COLS = ("train_loss", "train_acc", "val_loss", "val_acc")


def round_rows(reports: Sequence[RoundReport]) -> list[dict]:
    rows = []
    for rep in reports:
        for subset in SUBSETS:
            row = {"round": rep.round, "subset": subset, "names_generated": rep.names_generated,
                   "names_appended": rep.names_appended, "dataset_size": rep.dataset_size}
            for phase in ("pre", "post"):
                m = getattr(rep, phase)[subset]
                for col in _METRIC_COLS:
                    row[f"{phase}_{col}"] = getattr(m, col)
            rows.append(row)
    return rows


def write_rounds_csv(reports: Sequence[RoundReport], path) -> None:
    rows = round_rows(reports)
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        for row in rows:
            w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})


def format_round_table(reports: Sequence[RoundReport], stage1: EpochMetrics | None = None) -> str:
    """Plain-text before/after table; accuracies shown as percentages."""
    lines = []
    if stage1 is not None:
        lines.append(
            f"stage 1 (epoch {stage1.epoch}): train loss {stage1.train_loss:.5f} acc {100 * stage1.train_acc:.1f}%"
            f" | val loss {stage1.val_loss:.5f} acc {100 * stage1.val_acc:.1f}%"
        )
    header = (f"{'round':>5} {'subset':<6} {'added':>6} {'phase':<5} "
              f"{'train_loss':>10} {'train_acc':>9} {'val_loss':>10} {'val_acc':>8}")
    lines += [header, "-" * len(header)]
    for rep in reports:
        for subset in SUBSETS:
            for phase in ("pre", "post"):
                m = getattr(rep, phase)[subset]
                lines.append(
                    f"{rep.round:>5} {subset:<6} {rep.names_appended:>6} {phase:<5} "
                    f"{m.train_loss:>10.5f} {100 * m.train_acc:>8.1f}% {m.val_loss:>10.5f} {100 * m.val_acc:>7.1f}%"
                )
    return "\n".join(lines)
