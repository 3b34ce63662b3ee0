"""Losses for the refinement head: masked softmax cross-entropy for keyword
identity, weighted binary focal losses for the keyword-like and speech
branches, and their weighted sum with strict per-branch gradient isolation.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .labels import HierLabel
from .nncore import log_softmax, sigmoid, softmax

PROB_CLAMP = 1e-7


@dataclass
class LossConfig:
    """Branch weighting for the combined objective.

    ``class_weights_cls`` covers the N keyword classes; the binary pairs are
    ordered (negative class, positive class): for the keyword branch
    (non-keyword speech, keyword), for the speech branch (non-speech, speech).
    ``None`` weights mean unit weights.
    """

    lambda_kw: float = 1.0
    lambda_sp: float = 1.0
    gamma: float = 2.0
    class_weights_cls: Optional[np.ndarray] = None
    class_weights_kw: Optional[np.ndarray] = None
    class_weights_sp: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.lambda_kw < 0 or self.lambda_sp < 0:
            raise ValueError("branch loss weights must be non-negative")
        if self.gamma < 0:
            raise ValueError(f"gamma must be >= 0, got {self.gamma}")
        for name in ("class_weights_cls", "class_weights_kw", "class_weights_sp"):
            value = getattr(self, name)
            if value is not None:
                value = np.asarray(value, dtype=np.float64)
                if np.any(value <= 0):
                    raise ValueError(f"{name} must be strictly positive")
                object.__setattr__(self, name, value)
        for name in ("class_weights_kw", "class_weights_sp"):
            value = getattr(self, name)
            if value is not None and value.shape != (2,):
                raise ValueError(f"{name} must be a (negative, positive) pair")


def class_weights_from_counts(counts) -> np.ndarray:
    """Weights proportional to 1/count, normalized to mean 1."""
    counts = np.asarray(counts, dtype=np.float64)
    if counts.ndim != 1 or counts.size == 0:
        raise ValueError("counts must be a non-empty vector")
    if np.any(counts <= 0):
        raise ValueError(f"all class counts must be positive, got {counts}")
    inverse = 1.0 / counts
    return inverse * (counts.size / inverse.sum())


@dataclass(frozen=True)
class BatchMask:
    """Which samples feed which branch, plus keyword targets.

    ``cls_targets`` is aligned with the True positions of ``keyword`` in
    batch order. Keyword samples are the positive class for both binary
    branches; speech samples are the positive class for the speech branch.
    """

    speech: np.ndarray
    keyword: np.ndarray
    cls_targets: np.ndarray

    def __post_init__(self):
        if self.speech.shape != self.keyword.shape:
            raise ValueError("speech and keyword masks must have equal length")
        if np.any(self.keyword & ~self.speech):
            raise ValueError("keyword mask must be a subset of the speech mask")
        if self.cls_targets.shape != (int(self.keyword.sum()),):
            raise ValueError("cls_targets must cover exactly the keyword-masked samples")


def build_mask(labels: Sequence[HierLabel]) -> BatchMask:
    speech = np.array([lab.speech for lab in labels], dtype=bool)
    keyword = np.array([bool(lab.keyword_like) for lab in labels], dtype=bool)
    targets = np.array(
        [lab.keyword_index for lab in labels if lab.keyword_like], dtype=np.int64
    )
    return BatchMask(speech=speech, keyword=keyword, cls_targets=targets)


def mask_from_class_indices(y, n_keywords: int) -> BatchMask:
    """Fast-path mask construction from flat class ids (see HierLabel.class_index)."""
    y = np.asarray(y, dtype=np.int64)
    if np.any((y < 0) | (y >= n_keywords + 2)):
        raise ValueError("class indices out of range")
    speech = y != n_keywords + 1
    keyword = y < n_keywords
    return BatchMask(speech=speech, keyword=keyword, cls_targets=y[keyword])


def softmax_ce(logits, targets, class_weights=None) -> tuple[float, np.ndarray]:
    """Weighted mean of -w[target] * ln softmax(logits)[target] over the batch.

    Returns the loss and its gradient with respect to the logits (the 1/batch
    factor included).
    """
    logits = np.atleast_2d(np.asarray(logits, dtype=np.float64))
    targets = np.atleast_1d(np.asarray(targets, dtype=np.int64))
    n_batch, n_classes = logits.shape
    if targets.shape != (n_batch,):
        raise ValueError(f"{targets.shape[0]} targets for batch of {n_batch}")
    if np.any((targets < 0) | (targets >= n_classes)):
        raise ValueError(f"targets out of range for {n_classes} classes")
    if class_weights is None:
        class_weights = np.ones(n_classes)
    class_weights = np.asarray(class_weights, dtype=np.float64)
    rows = np.arange(n_batch)
    sample_w = class_weights[targets]
    loss = float(-(sample_w * log_softmax(logits)[rows, targets]).mean())
    grad = softmax(logits)
    grad[rows, targets] -= 1.0
    grad *= sample_w[:, None] / n_batch
    return loss, grad


def focal_binary(p, y, gamma: float, class_weights=None):
    """Elementwise focal loss -a_t (1 - p_t)^gamma ln(p_t) and d(loss)/dp.

    ``p`` is the predicted probability of class 1 and is clamped to
    [PROB_CLAMP, 1 - PROB_CLAMP]; where the clamp is active the returned
    derivative is 0 (the loss is locally constant in p there). Scalar inputs
    give scalar outputs.
    """
    p_arr = np.asarray(p, dtype=np.float64)
    y_arr = np.asarray(y)
    scalar = p_arr.ndim == 0
    p_arr, y_arr = np.atleast_1d(p_arr), np.atleast_1d(y_arr)
    if class_weights is None:
        class_weights = np.ones(2)
    class_weights = np.asarray(class_weights, dtype=np.float64)
    positive = y_arr.astype(bool)
    clamped = np.clip(p_arr, PROB_CLAMP, 1.0 - PROB_CLAMP)
    p_t = np.where(positive, clamped, 1.0 - clamped)
    alpha_t = np.where(positive, class_weights[1], class_weights[0])
    one_minus = 1.0 - p_t
    log_pt = np.log(p_t)
    loss = -alpha_t * one_minus**gamma * log_pt
    d_pt = alpha_t * (gamma * one_minus ** (gamma - 1.0) * log_pt - one_minus**gamma / p_t)
    d_p = d_pt * np.where(positive, 1.0, -1.0) * (p_arr == clamped)
    if scalar:
        return float(loss[0]), float(d_p[0])
    return loss, d_p


def _focal_term_from_logits(logits, y, gamma, class_weights):
    """Mean focal loss over a logit vector plus its gradient w.r.t. the logits."""
    prob = sigmoid(logits)
    losses, d_p = focal_binary(prob, y, gamma, class_weights)
    grad = d_p * prob * (1.0 - prob) / logits.shape[0]
    return float(losses.mean()), grad


def combined_loss(cls_logits, kw_logits, sp_logits, mask: BatchMask, cfg: LossConfig):
    """Total objective and per-branch logit gradients.

    total = mean-over-keyword-samples CE
          + lambda_kw * mean-over-speech-samples focal(keyword-like)
          + lambda_sp * mean-over-all focal(speech)

    Terms with an empty mask contribute zero loss and zero gradient, and each
    branch's logits only ever receive gradient from that branch's term.
    """
    cls_logits = np.asarray(cls_logits, dtype=np.float64)
    kw_logits = np.asarray(kw_logits, dtype=np.float64)
    sp_logits = np.asarray(sp_logits, dtype=np.float64)
    n_batch = sp_logits.shape[0]
    if mask.speech.shape != (n_batch,) or cls_logits.shape[0] != n_batch:
        raise ValueError("mask does not match batch size")
    g_cls = np.zeros_like(cls_logits)
    g_kw = np.zeros_like(kw_logits)
    g_sp = np.zeros_like(sp_logits)
    total = 0.0
    if mask.keyword.any():
        loss, grad = softmax_ce(cls_logits[mask.keyword], mask.cls_targets, cfg.class_weights_cls)
        total += loss
        g_cls[mask.keyword] = grad
    if mask.speech.any():
        y_kw = mask.keyword[mask.speech].astype(np.float64)
        loss, grad = _focal_term_from_logits(kw_logits[mask.speech], y_kw, cfg.gamma, cfg.class_weights_kw)
        total += cfg.lambda_kw * loss
        g_kw[mask.speech] = cfg.lambda_kw * grad
    y_sp = mask.speech.astype(np.float64)
    loss, grad = _focal_term_from_logits(sp_logits, y_sp, cfg.gamma, cfg.class_weights_sp)
    total += cfg.lambda_sp * loss
    g_sp[:] = cfg.lambda_sp * grad
    return total, g_cls, g_kw, g_sp


def loss_config_from_labels(y, n_keywords: int, base: LossConfig | None = None) -> LossConfig:
    """Fill per-branch inverse-count class weights from training labels.

    The speech pair is counted over (non-speech, speech); the keyword pair
    over (non-keyword speech, keyword) within speech; the classifier weights
    over the keyword classes. Raises if any required class is absent.
    """
    base = base or LossConfig()
    y = np.asarray(y, dtype=np.int64)
    mask = mask_from_class_indices(y, n_keywords)
    cls_counts = np.bincount(mask.cls_targets, minlength=n_keywords)
    kw_counts = np.array([int((mask.speech & ~mask.keyword).sum()), int(mask.keyword.sum())])
    sp_counts = np.array([int((~mask.speech).sum()), int(mask.speech.sum())])
    return LossConfig(
        lambda_kw=base.lambda_kw,
        lambda_sp=base.lambda_sp,
        gamma=base.gamma,
        class_weights_cls=class_weights_from_counts(cls_counts),
        class_weights_kw=class_weights_from_counts(kw_counts),
        class_weights_sp=class_weights_from_counts(sp_counts),
    )
