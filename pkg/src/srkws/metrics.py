"""Metrics over the (N+2)-class task plus the keyword-mass tail analysis.

The false-alarm rate is the fraction of negative samples (non-keyword speech
and non-speech) decided as any keyword. The tail analysis looks at the
per-sample maximum achievable keyword probability ("KS score"): for the
refinement head that is p(keyword-like|speech) * p(speech); for the baseline
it is the total probability mass on the keyword classes. Its inverse CDF over
negatives characterizes the worst-case FA behaviour.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .inference import Decision, argmax_last, combine_probs
from .labels import HierLabel, labels_to_class_indices
from .network import HEAD_SR, ModelConfig, ParamStore, forward_baseline, forward_sr
from .nncore import sigmoid, softmax


def confusion_from_indices(y_true, y_pred, n_classes: int) -> np.ndarray:
    y_true = np.asarray(y_true, dtype=np.int64)
    y_pred = np.asarray(y_pred, dtype=np.int64)
    if y_true.shape != y_pred.shape:
        raise ValueError(f"{y_true.shape[0]} truths vs {y_pred.shape[0]} predictions")
    if np.any((y_true < 0) | (y_true >= n_classes) | (y_pred < 0) | (y_pred >= n_classes)):
        raise ValueError(f"class indices out of range for {n_classes} classes")
    matrix = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(matrix, (y_true, y_pred), 1)
    return matrix


def confusion(truths: list[HierLabel], decisions: list[Decision], n_keywords: int) -> np.ndarray:
    """Counts with rows = truth, cols = prediction, over N+2 classes."""
    y_true = labels_to_class_indices(truths, n_keywords)
    y_pred = np.array([d.class_index for d in decisions], dtype=np.int64)
    return confusion_from_indices(y_true, y_pred, n_keywords + 2)


def false_alarm_rate(matrix: np.ndarray, n_keywords: int) -> float:
    """Fraction of negative-class samples predicted as any keyword."""
    negatives = matrix[n_keywords:, :]
    total = negatives.sum()
    if total == 0:
        raise ValueError("false-alarm rate is undefined without negative samples")
    return float(negatives[:, :n_keywords].sum() / total)


def weighted_f1_score(matrix: np.ndarray) -> float:
    """Support-weighted mean of per-class F1; undefined per-class F1 counts as 0."""
    matrix = np.asarray(matrix, dtype=np.float64)
    support = matrix.sum(axis=1)
    total = matrix.sum()
    score = 0.0
    for c in range(matrix.shape[0]):
        tp = matrix[c, c]
        predicted = matrix[:, c].sum()
        precision = tp / predicted if predicted else 0.0
        recall = tp / support[c] if support[c] else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
        score += support[c] / total * f1
    return float(score)


@dataclass(frozen=True)
class MetricsReport:
    accuracy: float
    weighted_f1: float
    fa: Optional[float]  # None when the data has no negatives
    class_counts: np.ndarray


def metrics_from_confusion(matrix: np.ndarray, n_keywords: int) -> MetricsReport:
    matrix = np.asarray(matrix)
    total = matrix.sum()
    if total == 0:
        raise ValueError("empty confusion matrix")
    try:
        fa = false_alarm_rate(matrix, n_keywords)
    except ValueError:
        fa = None
    return MetricsReport(
        accuracy=float(np.trace(matrix) / total),
        weighted_f1=weighted_f1_score(matrix),
        fa=fa,
        class_counts=matrix.sum(axis=1),
    )


def ks_scores_sr(p_keyword_like, p_speech) -> np.ndarray:
    """Per-sample cap on any keyword's combined probability."""
    return np.asarray(p_keyword_like, dtype=np.float64) * np.asarray(p_speech, dtype=np.float64)


def ks_scores_baseline(dists, n_keywords: int) -> np.ndarray:
    """Total keyword probability mass of flat (N+2)-way distributions."""
    dists = np.asarray(dists, dtype=np.float64)
    if dists.ndim != 2 or dists.shape[1] != n_keywords + 2:
        raise ValueError(f"expected (samples, {n_keywords + 2}) distributions, got {dists.shape}")
    if np.any(dists < -1e-12) or np.any(np.abs(dists.sum(axis=1) - 1.0) > 1e-9):
        raise ValueError("rows must be probability simplexes")
    return dists[:, :n_keywords].sum(axis=1)


@dataclass(frozen=True)
class KsCurve:
    """fraction(score >= alpha) sampled on an ascending alpha grid in [0, 1]."""

    alphas: np.ndarray
    values: np.ndarray

    def at(self, alpha: float) -> float:
        index = int(np.argmin(np.abs(self.alphas - alpha)))
        return float(self.values[index])


def inverse_cdf(scores, grid_size: int = 101) -> KsCurve:
    scores = np.asarray(scores, dtype=np.float64)
    if scores.size == 0:
        raise ValueError("cannot build a curve from no scores")
    if grid_size < 2:
        raise ValueError(f"grid_size must be >= 2, got {grid_size}")
    alphas = np.arange(grid_size) / (grid_size - 1)
    values = (scores[None, :] >= alphas[:, None]).mean(axis=1)
    return KsCurve(alphas=alphas, values=values)


@dataclass
class EvalResult:
    report: MetricsReport
    ks_curve: KsCurve
    fa_ood: Optional[float]
    y_pred: np.ndarray
    n_params: int


def _forward_dists(store, cfg, x, batch):
    """Combined (or flat softmax) distributions plus per-sample KS scores."""
    dists = np.empty((x.shape[0], cfg.n_classes))
    ks = np.empty(x.shape[0])
    for start in range(0, x.shape[0], batch):
        part = x[start : start + batch]
        stop = start + part.shape[0]
        if cfg.head_kind == HEAD_SR:
            state = forward_sr(store, cfg, part)
            p_k = sigmoid(state.kw_logits)
            p_s = sigmoid(state.sp_logits)
            dists[start:stop] = combine_probs(softmax(state.cls_logits), p_k, p_s)
            ks[start:stop] = ks_scores_sr(p_k, p_s)
        else:
            state = forward_baseline(store, cfg, part)
            dists[start:stop] = softmax(state.logits)
            ks[start:stop] = ks_scores_baseline(dists[start:stop], cfg.n_keywords)
    return dists, ks


def evaluate_model(
    store: ParamStore,
    cfg: ModelConfig,
    x,
    y,
    x_ood=None,
    batch: int = 256,
    grid_size: int = 101,
) -> EvalResult:
    """Decisions, metrics, and the negative-sample KS curve for one model.

    ``x_ood``, when given, is a set of out-of-domain negative clips; its FA is
    the fraction of them decided as any keyword.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    dists, ks = _forward_dists(store, cfg, x, batch)
    y_pred = argmax_last(dists)
    report = metrics_from_confusion(confusion_from_indices(y, y_pred, cfg.n_classes), cfg.n_keywords)
    negatives = y >= cfg.n_keywords
    ks_curve = inverse_cdf(ks[negatives], grid_size) if negatives.any() else None
    fa_ood = None
    if x_ood is not None and len(x_ood):
        ood_dists, _ = _forward_dists(store, cfg, np.asarray(x_ood, dtype=np.float64), batch)
        fa_ood = float((argmax_last(ood_dists) < cfg.n_keywords).mean())
    return EvalResult(
        report=report,
        ks_curve=ks_curve,
        fa_ood=fa_ood,
        y_pred=y_pred,
        n_params=store.n_params,
    )


def write_metrics_csv(path, model_kind: str, result: EvalResult) -> None:
    report = result.report
    fa = "" if report.fa is None else repr(report.fa)
    fa_ood = "" if result.fa_ood is None else repr(result.fa_ood)
    with open(path, "w", encoding="utf-8") as handle:
        handle.write("model_kind,accuracy,weighted_f1,fa,fa_ood,n_params\n")
        handle.write(
            f"{model_kind},{report.accuracy!r},{report.weighted_f1!r},{fa},{fa_ood},{result.n_params}\n"
        )


def write_ks_csv(path, curve_sr: KsCurve | None = None, curve_baseline: KsCurve | None = None) -> None:
    """Shared alpha grid with one column per head kind; absent columns stay empty."""
    if curve_sr is None and curve_baseline is None:
        raise ValueError("at least one curve is required")
    alphas = (curve_sr or curve_baseline).alphas
    for curve in (curve_sr, curve_baseline):
        if curve is not None and not np.array_equal(curve.alphas, alphas):
            raise ValueError("curves must share one alpha grid")
    with open(path, "w", encoding="utf-8") as handle:
        handle.write("alpha,fraction_ge_alpha_sr,fraction_ge_alpha_baseline\n")
        for i, alpha in enumerate(alphas):
            sr = repr(float(curve_sr.values[i])) if curve_sr is not None else ""
            baseline = repr(float(curve_baseline.values[i])) if curve_baseline is not None else ""
            handle.write(f"{alpha!r},{sr},{baseline}\n")
