"""Training loop, cosine-annealing-with-restarts schedule, F1 metrics, and
k-fold cross-validation over both input modes.

Defaults mirror the production configuration: 50 epochs, batch size 16,
Adam, weighted cross-entropy, cosine annealing restarting every 10 epochs
from a 0.05 peak. The schedule advances per optimizer step (epoch fraction),
restarts with constant cycle length, and bottoms out at lr_min = 0.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import nn
from .dataset import LABELS, FoldAssignment, Manifest, SampleRecord, class_weights_from_counts
from .model import ResNet18, build_resnet18
from .nn import Adam, Tensor
from .spectral import load_fused

INPUT_MODES = ("rgb", "rgb_ndvi")


class TrainingError(RuntimeError):
    """Configuration or data-loading failure during training."""


@dataclass
class TrainConfig:
    epochs: int = 50
    batch_size: int = 16
    lr_max: float = 0.05
    lr_min: float = 0.0
    cycle_epochs: int = 10
    optimizer: str = "adam"
    loss: str = "weighted_ce"
    input_mode: str = "rgb_ndvi"
    input_size: int = 256
    seed: int = 0
    precision: str = "float32"

    def __post_init__(self):
        if self.batch_size < 1:
            raise TrainingError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.cycle_epochs < 1:
            raise TrainingError(f"cycle_epochs must be >= 1, got {self.cycle_epochs}")
        if self.optimizer != "adam":
            raise TrainingError(f"unsupported optimizer {self.optimizer!r}")
        if self.loss != "weighted_ce":
            raise TrainingError(f"unsupported loss {self.loss!r}")
        if self.input_mode not in INPUT_MODES:
            raise TrainingError(f"input_mode must be one of {INPUT_MODES}, "
                                f"got {self.input_mode!r}")
        if self.precision not in ("float32", "float64"):
            raise TrainingError(f"precision must be float32 or float64, "
                                f"got {self.precision!r}")

    @property
    def dtype(self):
        return np.float32 if self.precision == "float32" else np.float64

    @property
    def channels(self) -> int:
        return 3 if self.input_mode == "rgb" else 4


def lr_at(step_epoch: float, cfg: TrainConfig) -> float:
    """Cosine annealing with constant-length restarts.

    t = step_epoch mod cycle;  lr = lr_min + (lr_max - lr_min)/2 * (1 + cos(pi*t/cycle))
    """
    if step_epoch < 0:
        raise TrainingError(f"step_epoch must be >= 0, got {step_epoch}")
    t = math.fmod(step_epoch, cfg.cycle_epochs)
    return cfg.lr_min + 0.5 * (cfg.lr_max - cfg.lr_min) * (
        1.0 + math.cos(math.pi * t / cfg.cycle_epochs))


# -- metrics ---------------------------------------------------------------------


@dataclass
class ConfusionMatrix:
    """K x K counts; rows are true classes, columns predictions."""

    counts: np.ndarray

    def total(self) -> int:
        return int(self.counts.sum())


def confusion_from_pairs(labels, predictions, num_classes: int = len(LABELS)
                         ) -> ConfusionMatrix:
    labels = np.asarray(labels)
    predictions = np.asarray(predictions)
    if labels.shape != predictions.shape:
        raise TrainingError(f"labels {labels.shape} vs predictions {predictions.shape}")
    counts = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(counts, (labels, predictions), 1)
    return ConfusionMatrix(counts)


def f1_scores(confusion: ConfusionMatrix) -> tuple[np.ndarray, float]:
    """Per-class F1 (0 where undefined) and their unweighted mean."""
    counts = confusion.counts
    k = counts.shape[0]
    per_class = np.zeros(k)
    for c in range(k):
        tp = counts[c, c]
        fp = counts[:, c].sum() - tp
        fn = counts[c, :].sum() - tp
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        if precision + recall > 0:
            per_class[c] = 2.0 * precision * recall / (precision + recall)
    return per_class, float(per_class.mean())


@dataclass
class EvalResult:
    confusion: ConfusionMatrix
    per_class_f1: np.ndarray
    macro_f1: float


def evaluate_model(model: ResNet18, arrays: np.ndarray, labels: np.ndarray,
                   batch_size: int = 16) -> EvalResult:
    """Argmax predictions over eval-mode softmax outputs."""
    if len(arrays) == 0:
        raise TrainingError("cannot evaluate on an empty sample set")
    if arrays.shape[1] != model.in_channels:
        raise TrainingError(f"samples have {arrays.shape[1]} channels, "
                            f"model expects {model.in_channels}")
    predictions = np.empty(len(arrays), dtype=np.int64)
    with nn.no_grad():
        for start in range(0, len(arrays), batch_size):
            batch = arrays[start:start + batch_size].astype(model.dtype)
            logits = model.forward(Tensor(batch), train=False)
            probs = nn.softmax(logits).data
            predictions[start:start + len(batch)] = probs.argmax(axis=1)
    confusion = confusion_from_pairs(labels, predictions, model.num_classes)
    per_class, macro = f1_scores(confusion)
    return EvalResult(confusion=confusion, per_class_f1=per_class, macro_f1=macro)


# -- data access -------------------------------------------------------------------


class FusedCacheSource:
    """Loads fused (4, H, W) tensors from ``<cache_dir>/<id>.pspec``."""

    def __init__(self, cache_dir):
        self.cache_dir = Path(cache_dir)

    def load(self, record: SampleRecord) -> np.ndarray:
        return load_fused(self.cache_dir / f"{record.id}.pspec")


class InMemorySource:
    """Fused tensors already in memory, keyed by sample id."""

    def __init__(self, arrays: dict[str, np.ndarray]):
        self.arrays = arrays

    def load(self, record: SampleRecord) -> np.ndarray:
        return self.arrays[record.id]


def load_sample_batch(source, records: list[SampleRecord], cfg: TrainConfig) -> np.ndarray:
    rows = []
    for record in records:
        try:
            arr = source.load(record)
        except Exception as exc:
            raise TrainingError(f"failed to load sample {record.id}: {exc}") from exc
        if arr.shape[0] != 4:
            raise TrainingError(f"sample {record.id}: expected 4 fused bands, "
                                f"got {arr.shape[0]}")
        if arr.shape[1:] != (cfg.input_size, cfg.input_size):
            raise TrainingError(
                f"sample {record.id}: plane {arr.shape[1:]} != configured input size "
                f"{cfg.input_size}; regenerate the fused cache")
        rows.append(arr[:cfg.channels])
    return np.stack(rows).astype(cfg.dtype)


# -- training ------------------------------------------------------------------------


@dataclass
class EpochStats:
    epoch: int
    lr: float
    train_loss: float
    val_macro_f1: float
    per_class_f1: tuple[float, float, float]


@dataclass
class RunHistory:
    epochs: list[EpochStats] = field(default_factory=list)
    final_confusion: ConfusionMatrix | None = None


HISTORY_HEADER = ["epoch", "lr", "train_loss", "val_macro_f1",
                  "f1_blast", "f1_spot", "f1_healthy"]


def write_history_csv(history: RunHistory, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(HISTORY_HEADER)
        for row in history.epochs:
            writer.writerow([row.epoch, repr(row.lr), repr(row.train_loss),
                             repr(row.val_macro_f1)]
                            + [repr(v) for v in row.per_class_f1])


@dataclass
class TrainResult:
    model: ResNet18
    history: RunHistory
    val_result: EvalResult | None
    steps_taken: int
    class_weights: np.ndarray


def model_seed(cfg_seed: int, fold_id: int) -> int:
    return int(np.random.SeedSequence([cfg_seed, fold_id]).generate_state(1)[0])


def fit(model: ResNet18, cfg: TrainConfig, arrays: np.ndarray, labels: np.ndarray,
        class_weights: np.ndarray, max_steps: int | None = None,
        shuffle_tag: int = 0, on_epoch=None) -> tuple[list[float], int]:
    """Optimize the model in place; returns per-step losses and step count.

    ``on_epoch(model, steps_so_far)`` runs after each epoch; returning True
    stops training early (convergence probes, overfit checks).
    """
    n = len(arrays)
    optimizer = Adam(model.parameters())
    steps_per_epoch = math.ceil(n / cfg.batch_size)
    weights = np.asarray(class_weights, dtype=cfg.dtype)
    losses: list[float] = []
    step = 0
    epoch = 0
    while True:
        rng = np.random.default_rng([cfg.seed, shuffle_tag, epoch])
        order = rng.permutation(n)
        for i in range(steps_per_epoch):
            idx = order[i * cfg.batch_size:(i + 1) * cfg.batch_size]
            x = Tensor(arrays[idx].astype(cfg.dtype))
            logits = model.forward(x, train=True)
            loss = nn.weighted_cross_entropy(logits, labels[idx], weights)
            optimizer.zero_grad()
            loss.backward()
            lr = lr_at(epoch + i / steps_per_epoch, cfg)
            if lr > 0.0:
                optimizer.step(lr)
            losses.append(loss.item())
            step += 1
            if max_steps is not None and step >= max_steps:
                return losses, step
        epoch += 1
        if on_epoch is not None and on_epoch(model, step):
            return losses, step
        if max_steps is None and epoch >= cfg.epochs:
            return losses, step
        if max_steps is not None and epoch >= 10 * cfg.epochs:
            return losses, step


def train_fold(cfg: TrainConfig, manifest: Manifest, folds: FoldAssignment,
               fold_id: int, source, max_steps: int | None = None) -> TrainResult:
    """Train on k-1 folds and validate on the held-out fold.

    Class weights come from the training folds only; the model seed is
    derived from (cfg.seed, fold_id), making rgb and rgb_ndvi runs a paired
    comparison under identical folds.
    """
    if not 0 <= fold_id < folds.k:
        raise TrainingError(f"fold_id {fold_id} out of range for k={folds.k}")
    train_records = [r for r in manifest.records if folds.fold_of[r.id] != fold_id]
    val_records = [r for r in manifest.records if folds.fold_of[r.id] == fold_id]
    if not train_records or not val_records:
        raise TrainingError(f"fold {fold_id} leaves an empty train or validation set")

    counts = np.array([sum(1 for r in train_records if r.label == label)
                       for label in LABELS])
    weights = class_weights_from_counts(counts)

    train_y = np.array([LABELS.index(r.label) for r in train_records], dtype=np.int64)
    val_y = np.array([LABELS.index(r.label) for r in val_records], dtype=np.int64)
    train_x = load_sample_batch(source, train_records, cfg)
    val_x = load_sample_batch(source, val_records, cfg)

    model = build_resnet18(in_channels=cfg.channels, num_classes=len(LABELS),
                           seed=model_seed(cfg.seed, fold_id), dtype=cfg.dtype)

    n = len(train_x)
    optimizer = Adam(model.parameters())
    steps_per_epoch = math.ceil(n / cfg.batch_size)
    weights_t = weights.astype(cfg.dtype)
    history = RunHistory()
    step = 0
    val_result: EvalResult | None = None
    # an explicit step budget overrides the epoch count
    total_epochs = cfg.epochs if max_steps is None else math.ceil(
        max_steps / steps_per_epoch)
    for epoch in range(total_epochs):
        rng = np.random.default_rng([cfg.seed, fold_id, epoch])
        order = rng.permutation(n)
        epoch_losses = []
        stop = False
        for i in range(steps_per_epoch):
            idx = order[i * cfg.batch_size:(i + 1) * cfg.batch_size]
            logits = model.forward(Tensor(train_x[idx]), train=True)
            loss = nn.weighted_cross_entropy(logits, train_y[idx], weights_t)
            optimizer.zero_grad()
            loss.backward()
            lr = lr_at(epoch + i / steps_per_epoch, cfg)
            if lr > 0.0:
                optimizer.step(lr)
            epoch_losses.append(loss.item())
            step += 1
            if max_steps is not None and step >= max_steps:
                stop = True
                break
        val_result = evaluate_model(model, val_x, val_y, cfg.batch_size)
        history.epochs.append(EpochStats(
            epoch=epoch,
            lr=lr_at(float(epoch), cfg),
            train_loss=float(np.mean(epoch_losses)),
            val_macro_f1=val_result.macro_f1,
            per_class_f1=tuple(float(v) for v in val_result.per_class_f1),
        ))
        if stop:
            break
    history.final_confusion = val_result.confusion if val_result else None
    return TrainResult(model=model, history=history, val_result=val_result,
                       steps_taken=step, class_weights=weights)


# -- cross-validation -----------------------------------------------------------------


@dataclass
class FoldOutcome:
    fold: int
    macro_f1: float
    per_class_f1: tuple[float, float, float]


@dataclass
class CrossValReport:
    k: int
    outcomes: dict[str, list[FoldOutcome]]

    def mean_macro_f1(self, mode: str) -> float:
        return float(np.mean([o.macro_f1 for o in self.outcomes[mode]]))

    def mean_per_class(self, mode: str) -> np.ndarray:
        return np.array([o.per_class_f1 for o in self.outcomes[mode]]).mean(axis=0)


def cross_validate(cfg: TrainConfig, manifest: Manifest, folds: FoldAssignment,
                   source, modes: tuple[str, ...] = INPUT_MODES,
                   max_steps: int | None = None) -> CrossValReport:
    """Run train_fold over every fold for each input mode (paired design)."""
    outcomes: dict[str, list[FoldOutcome]] = {}
    for mode in modes:
        mode_cfg = TrainConfig(**{**cfg.__dict__, "input_mode": mode})
        outcomes[mode] = []
        for fold in range(folds.k):
            result = train_fold(mode_cfg, manifest, folds, fold, source,
                                max_steps=max_steps)
            outcomes[mode].append(FoldOutcome(
                fold=fold,
                macro_f1=result.val_result.macro_f1,
                per_class_f1=tuple(float(v) for v in result.val_result.per_class_f1),
            ))
    return CrossValReport(k=folds.k, outcomes=outcomes)


def render_results_table(report: CrossValReport) -> str:
    """Per-class F1 table, one column per input mode, plus the macro mean."""
    modes = list(report.outcomes)
    lines = ["class        " + "".join(f"{m:>12}" for m in modes)]
    names = ("blast", "spot", "healthy")
    per_mode = {m: report.mean_per_class(m) for m in modes}
    for ci, name in enumerate(names):
        row = f"{name:<13}" + "".join(f"{per_mode[m][ci]:>11.2%} " for m in modes)
        lines.append(row.rstrip())
    lines.append(f"{'macro':<13}"
                 + "".join(f"{report.mean_macro_f1(m):>11.2%} " for m in modes).rstrip())
    return "\n".join(lines) + "\n"
