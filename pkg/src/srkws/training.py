"""Mini-batch SGD training with a one-cycle schedule for both head kinds.

The refinement head is trained with the masked combined loss; the baseline
head with inverse-count-weighted softmax cross-entropy over all N+2 classes.
Model selection keeps the epoch with the lowest validation false-alarm rate
among epochs whose validation accuracy is within one point of the best.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .inference import decide_indices_baseline, decide_indices_sr
from .losses import (
    BatchMask,
    LossConfig,
    class_weights_from_counts,
    combined_loss,
    loss_config_from_labels,
    mask_from_class_indices,
    softmax_ce,
)
from .network import (
    HEAD_SR,
    ModelConfig,
    backward_baseline,
    backward_sr,
    forward_baseline,
    forward_sr,
    init_model,
)
from .nncore import ParamStore


@dataclass(frozen=True)
class OneCycleConfig:
    """Per-step learning rates and momenta of the one-cycle policy."""

    lr_init: float = 0.004
    lr_peak: float = 0.1
    lr_final: float = 4e-6
    warmup_epochs: int = 7
    total_epochs: int = 25
    momentum_low: float = 0.85
    momentum_high: float = 0.95
    steps_per_epoch: Optional[int] = None  # None -> derived from the training set

    def __post_init__(self):
        if not 0 < self.lr_init < self.lr_peak:
            raise ValueError("need 0 < lr_init < lr_peak")
        if not 0 < self.lr_final < self.lr_init:
            raise ValueError("need 0 < lr_final < lr_init")
        if not 0 < self.warmup_epochs < self.total_epochs:
            raise ValueError("need 0 < warmup_epochs < total_epochs")
        if not 0 <= self.momentum_low <= self.momentum_high < 1:
            raise ValueError("need 0 <= momentum_low <= momentum_high < 1")
        if self.steps_per_epoch is not None and self.steps_per_epoch < 1:
            raise ValueError(f"steps_per_epoch must be >= 1, got {self.steps_per_epoch}")

    @property
    def total_steps(self) -> int:
        if self.steps_per_epoch is None:
            raise ValueError("steps_per_epoch has not been set")
        return self.total_epochs * self.steps_per_epoch

    @property
    def warmup_steps(self) -> int:
        if self.steps_per_epoch is None:
            raise ValueError("steps_per_epoch has not been set")
        return self.warmup_epochs * self.steps_per_epoch


def one_cycle(step: int, cfg: OneCycleConfig) -> tuple[float, float]:
    """(learning rate, momentum) at an integer step.

    The rate climbs linearly from lr_init to lr_peak over the warmup steps,
    then follows a half cosine down to lr_final at the final step; momentum
    runs linearly in the opposite direction (high -> low -> high).
    """
    total, warmup = cfg.total_steps, cfg.warmup_steps
    if not 0 <= step < total:
        raise ValueError(f"step {step} outside schedule of {total} steps")
    span = cfg.momentum_high - cfg.momentum_low
    if step <= warmup:
        frac = step / warmup
        lr = cfg.lr_init + (cfg.lr_peak - cfg.lr_init) * frac
        momentum = cfg.momentum_high - span * frac
    else:
        frac = (step - warmup) / (total - 1 - warmup)
        lr = cfg.lr_final + (cfg.lr_peak - cfg.lr_final) * 0.5 * (1.0 + math.cos(math.pi * frac))
        momentum = cfg.momentum_low + span * frac
    return lr, momentum


class TrainingDiverged(RuntimeError):
    """Loss or gradients became non-finite during training."""


class SgdMomentum:
    """SGD with velocity v <- momentum * v + g and update p <- p - lr * v."""

    def __init__(self, store: ParamStore):
        self.velocities = {name: np.zeros_like(p) for name, p in store.params.items()}

    def step(self, store: ParamStore, lr: float, momentum: float) -> None:
        for name, param in store.params.items():
            grad = store.grads[name]
            if not np.all(np.isfinite(grad)):
                raise TrainingDiverged(f"non-finite gradient in {name!r}")
            velocity = self.velocities[name]
            velocity *= momentum
            velocity += grad
            param -= lr * velocity
            grad[...] = 0.0


@dataclass
class EpochLog:
    epoch: int
    train_loss: float
    val_loss: float
    val_accuracy: float
    val_fa: Optional[float]  # None when the validation split has no negatives
    lr_end: float


@dataclass
class TrainResult:
    store: ParamStore
    config: ModelConfig
    loss_config: LossConfig
    log: list[EpochLog]
    best_epoch: int


def _forward_loss(store, cfg, x, y, mask, loss_cfg, flat_weights, with_grads):
    """One forward (and optional backward) pass; returns the batch loss."""
    if cfg.head_kind == HEAD_SR:
        state = forward_sr(store, cfg, x)
        loss, g_cls, g_kw, g_sp = combined_loss(
            state.cls_logits, state.kw_logits, state.sp_logits, mask, loss_cfg
        )
        if with_grads:
            backward_sr(store, cfg, state, g_cls, g_kw, g_sp)
        return loss
    state = forward_baseline(store, cfg, x)
    loss, grad = softmax_ce(state.logits, y, flat_weights)
    if with_grads:
        backward_baseline(store, cfg, state, grad)
    return loss


def _predict_indices(store, cfg, x, batch=512):
    out = np.empty(x.shape[0], dtype=np.int64)
    for start in range(0, x.shape[0], batch):
        part = x[start : start + batch]
        if cfg.head_kind == HEAD_SR:
            state = forward_sr(store, cfg, part)
            out[start : start + batch] = decide_indices_sr(
                state.cls_logits, state.kw_logits, state.sp_logits
            )
        else:
            state = forward_baseline(store, cfg, part)
            out[start : start + batch] = decide_indices_baseline(state.logits)
    return out


def _validation_metrics(y_true, y_pred, n_keywords):
    accuracy = float((y_pred == y_true).mean())
    negatives = y_true >= n_keywords
    if not negatives.any():
        return accuracy, None
    fa = float((y_pred[negatives] < n_keywords).mean())
    return accuracy, fa


def _select_epoch(log: list[EpochLog]) -> int:
    """Lowest-FA epoch among those within one accuracy point of the best."""
    best_acc = max(row.val_accuracy for row in log)
    candidates = [row for row in log if row.val_accuracy >= best_acc - 0.01]
    ranked = sorted(
        candidates,
        key=lambda row: (row.val_fa is None, row.val_fa or 0.0, -row.val_accuracy, row.epoch),
    )
    return ranked[0].epoch


def train(
    model_cfg: ModelConfig,
    x_train,
    y_train,
    x_val,
    y_val,
    loss_cfg: LossConfig | None = None,
    cycle: OneCycleConfig = OneCycleConfig(),
    batch_size: int = 100,
    seed: int = 0,
) -> TrainResult:
    """Train a model of either head kind on flat class-index labels.

    Labels use the class_index layout (keywords 0..N-1, non-keyword speech N,
    non-speech N+1). Shuffling is seeded per run; the returned parameters are
    the snapshot of the selected epoch.
    """
    x_train = np.asarray(x_train, dtype=np.float64)
    y_train = np.asarray(y_train, dtype=np.int64)
    x_val = np.asarray(x_val, dtype=np.float64)
    y_val = np.asarray(y_val, dtype=np.int64)
    n = x_train.shape[0]
    if n == 0:
        raise ValueError("training set is empty")
    if len(y_val) == 0:
        raise ValueError("validation set is empty")
    n_kw = model_cfg.n_keywords
    if not (np.any(y_train < n_kw) and np.any(y_train == n_kw) and np.any(y_train == n_kw + 1)):
        raise ValueError(
            "training set must contain keyword, non-keyword-speech and non-speech samples"
        )

    if model_cfg.head_kind == HEAD_SR:
        if loss_cfg is None or loss_cfg.class_weights_cls is None:
            loss_cfg = loss_config_from_labels(y_train, model_cfg.n_keywords, loss_cfg)
        flat_weights = None
    else:
        loss_cfg = loss_cfg or LossConfig()
        counts = np.bincount(y_train, minlength=model_cfg.n_classes)
        flat_weights = class_weights_from_counts(counts)

    if cycle.steps_per_epoch is None:
        cycle = replace(cycle, steps_per_epoch=math.ceil(n / batch_size))

    store = init_model(model_cfg)
    optimizer = SgdMomentum(store)
    rng = np.random.default_rng(seed)
    val_mask = mask_from_class_indices(y_val, model_cfg.n_keywords)

    log: list[EpochLog] = []
    snapshots: list[ParamStore] = []
    step = 0
    for epoch in range(cycle.total_epochs):
        order = rng.permutation(n)
        seen, loss_sum = 0, 0.0
        lr = cfg_momentum = None
        for start in range(0, n, batch_size):
            rows = order[start : start + batch_size]
            xb, yb = x_train[rows], y_train[rows]
            mask = mask_from_class_indices(yb, model_cfg.n_keywords)
            loss = _forward_loss(store, model_cfg, xb, yb, mask, loss_cfg, flat_weights, True)
            if not np.isfinite(loss):
                raise TrainingDiverged(f"non-finite loss at epoch {epoch}, step {step}")
            lr, cfg_momentum = one_cycle(step, cycle)
            optimizer.step(store, lr, cfg_momentum)
            loss_sum += loss * len(rows)
            seen += len(rows)
            step += 1
        val_loss = _forward_loss(store, model_cfg, x_val, y_val, val_mask, loss_cfg, flat_weights, False)
        val_pred = _predict_indices(store, model_cfg, x_val)
        accuracy, fa = _validation_metrics(y_val, val_pred, model_cfg.n_keywords)
        log.append(EpochLog(epoch, loss_sum / seen, float(val_loss), accuracy, fa, lr))
        snapshots.append(store.copy())

    best = _select_epoch(log)
    return TrainResult(
        store=snapshots[best], config=model_cfg, loss_config=loss_cfg, log=log, best_epoch=best
    )


def write_training_log(log: list[EpochLog], path) -> None:
    """CSV with one row per epoch: losses, validation metrics, end-of-epoch lr."""
    with open(path, "w", encoding="utf-8") as handle:
        handle.write("epoch,train_loss,val_loss,val_accuracy,val_fa,lr_at_epoch_end\n")
        for row in log:
            fa = "nan" if row.val_fa is None else repr(row.val_fa)
            handle.write(
                f"{row.epoch},{row.train_loss!r},{row.val_loss!r},"
                f"{row.val_accuracy!r},{fa},{row.lr_end!r}\n"
            )
