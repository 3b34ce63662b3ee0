"""sklearn-style classifier facade over the training and inference pipeline.

``KeywordSpotter`` consumes log-mel feature maps of shape (clips, frames,
mels) — see :class:`srkws.features.LogMelExtractor` — and flat class labels
in the combined layout (keywords 0..N-1, non-keyword speech N, non-speech
N+1). ``predict_proba`` returns the combined (N+2)-way distribution for the
refinement head and the flat softmax for the baseline head.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.exceptions import NotFittedError

from .inference import argmax_last, combine_probs
from .losses import LossConfig
from .metrics import EvalResult, evaluate_model
from .network import (
    DEFAULT_INPUT_SCALE,
    DEFAULT_INPUT_SHIFT,
    HEAD_SR,
    ModelConfig,
    forward_baseline,
    forward_sr,
)
from .nncore import sigmoid, softmax
from .training import OneCycleConfig, train


def check_feature_array(X) -> np.ndarray:
    """Validate a (clips, frames, mels) float feature array."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 3:
        raise ValueError(f"expected feature maps of shape (clips, frames, mels), got {X.shape}")
    if X.shape[0] == 0:
        raise ValueError("empty feature array")
    if not np.all(np.isfinite(X)):
        raise ValueError("feature maps contain non-finite values")
    return X


def check_class_labels(y, n_classes: int, n_samples: int) -> np.ndarray:
    y = np.asarray(y, dtype=np.int64)
    if y.shape != (n_samples,):
        raise ValueError(f"expected {n_samples} labels, got shape {y.shape}")
    if np.any((y < 0) | (y >= n_classes)):
        raise ValueError(f"labels must lie in [0, {n_classes - 1}]")
    return y


class KeywordSpotter(ClassifierMixin, BaseEstimator):
    """Keyword-spotting classifier with either head kind on a small backbone.

    Parameters mirror the model, loss, and one-cycle schedule settings; the
    feature map shape is taken from ``X`` at fit time.
    """

    def __init__(
        self,
        n_keywords: int = 3,
        head: str = HEAD_SR,
        conv_kernel: int = 5,
        channels: int = 16,
        embed_dim: int = 32,
        hidden_cls: int = 32,
        hidden_kw: int = 32,
        hidden_sp: int = 32,
        hidden_baseline: int | None = None,
        branch_depth: int = 2,
        lambda_kw: float = 1.0,
        lambda_sp: float = 1.0,
        focal_gamma: float = 2.0,
        lr_init: float = 0.004,
        lr_peak: float = 0.1,
        lr_final: float = 4e-6,
        warmup_epochs: int = 7,
        epochs: int = 25,
        momentum_low: float = 0.85,
        momentum_high: float = 0.95,
        batch_size: int = 100,
        input_shift: float = DEFAULT_INPUT_SHIFT,
        input_scale: float = DEFAULT_INPUT_SCALE,
        random_state: int = 0,
    ):
        self.n_keywords = n_keywords
        self.head = head
        self.conv_kernel = conv_kernel
        self.channels = channels
        self.embed_dim = embed_dim
        self.hidden_cls = hidden_cls
        self.hidden_kw = hidden_kw
        self.hidden_sp = hidden_sp
        self.hidden_baseline = hidden_baseline
        self.branch_depth = branch_depth
        self.lambda_kw = lambda_kw
        self.lambda_sp = lambda_sp
        self.focal_gamma = focal_gamma
        self.lr_init = lr_init
        self.lr_peak = lr_peak
        self.lr_final = lr_final
        self.warmup_epochs = warmup_epochs
        self.epochs = epochs
        self.momentum_low = momentum_low
        self.momentum_high = momentum_high
        self.batch_size = batch_size
        self.input_shift = input_shift
        self.input_scale = input_scale
        self.random_state = random_state

    def _model_config(self, n_frames: int, n_mels: int) -> ModelConfig:
        return ModelConfig(
            n_keywords=self.n_keywords,
            n_frames=n_frames,
            n_mels=n_mels,
            conv_kernel=self.conv_kernel,
            channels=self.channels,
            embed_dim=self.embed_dim,
            hidden_cls=self.hidden_cls,
            hidden_kw=self.hidden_kw,
            hidden_sp=self.hidden_sp,
            hidden_baseline=self.hidden_baseline,
            branch_depth=self.branch_depth,
            head_kind=self.head,
            input_shift=self.input_shift,
            input_scale=self.input_scale,
            seed=self.random_state,
        )

    def fit(self, X, y, X_val=None, y_val=None):
        """Train with one-cycle SGD; returns self.

        When no validation data is supplied the training data doubles as the
        per-epoch validation set used for checkpoint selection.
        """
        X = check_feature_array(X)
        n_classes = self.n_keywords + 2
        y = check_class_labels(y, n_classes, X.shape[0])
        if (X_val is None) != (y_val is None):
            raise ValueError("X_val and y_val must be given together")
        if X_val is None:
            X_val, y_val = X, y
        else:
            X_val = check_feature_array(X_val)
            y_val = check_class_labels(y_val, n_classes, X_val.shape[0])
        cfg = self._model_config(X.shape[1], X.shape[2])
        loss_cfg = LossConfig(
            lambda_kw=self.lambda_kw, lambda_sp=self.lambda_sp, gamma=self.focal_gamma
        )
        cycle = OneCycleConfig(
            lr_init=self.lr_init,
            lr_peak=self.lr_peak,
            lr_final=self.lr_final,
            warmup_epochs=self.warmup_epochs,
            total_epochs=self.epochs,
            momentum_low=self.momentum_low,
            momentum_high=self.momentum_high,
        )
        result = train(
            cfg,
            X,
            y,
            X_val,
            y_val,
            loss_cfg=loss_cfg,
            cycle=cycle,
            batch_size=self.batch_size,
            seed=self.random_state,
        )
        self.params_ = result.store
        self.model_config_ = cfg
        self.loss_config_ = result.loss_config
        self.train_log_ = result.log
        self.best_epoch_ = result.best_epoch
        self.classes_ = np.arange(n_classes)
        return self

    def _require_fitted(self):
        if not hasattr(self, "params_"):
            raise NotFittedError("this KeywordSpotter has not been fitted yet")

    def predict_proba(self, X, batch: int = 512) -> np.ndarray:
        self._require_fitted()
        X = check_feature_array(X)
        cfg = self.model_config_
        out = np.empty((X.shape[0], cfg.n_classes))
        for start in range(0, X.shape[0], batch):
            part = X[start : start + batch]
            if cfg.head_kind == HEAD_SR:
                state = forward_sr(self.params_, cfg, part)
                dists = combine_probs(
                    softmax(state.cls_logits), sigmoid(state.kw_logits), sigmoid(state.sp_logits)
                )
            else:
                state = forward_baseline(self.params_, cfg, part)
                dists = softmax(state.logits)
            out[start : start + part.shape[0]] = dists
        return out

    def predict(self, X) -> np.ndarray:
        return argmax_last(self.predict_proba(X))

    def evaluate(self, X, y, X_ood=None) -> EvalResult:
        """Full metrics report plus the negative-sample KS curve."""
        self._require_fitted()
        return evaluate_model(self.params_, self.model_config_, check_feature_array(X), y, X_ood)
