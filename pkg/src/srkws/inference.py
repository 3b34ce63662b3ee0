"""From branch logits to a combined (N+2)-way distribution, argmax decisions,
and the sliding-window stream detector with false-alarm-per-hour accounting.

Combined layout: [keyword 1..N, non-keyword speech, non-speech], so the
entries are [p_c1*pK*pS, ..., p_cN*pK*pS, (1-pK)*pS, 1-pS], which always sums
to one. Exact probability ties resolve toward the largest index, i.e. away
from keyword decisions.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .features import FeatureConfig, compute_features_batch, frame_count
from .labels import KEYWORD, NON_KEYWORD_SPEECH, NON_SPEECH
from .network import HEAD_SR, ModelConfig, ParamStore, forward_baseline, forward_sr
from .nncore import sigmoid, softmax


@dataclass(frozen=True)
class BranchProbs:
    """Per-branch probabilities for one sample."""

    p_keywords: np.ndarray  # p(c_n | keyword-like, speech, x), simplex over N keywords
    p_keyword_like: float  # p(keyword-like | speech, x)
    p_speech: float  # p(speech | x)

    def __post_init__(self):
        p = np.asarray(self.p_keywords, dtype=np.float64)
        object.__setattr__(self, "p_keywords", p)
        if p.ndim != 1 or p.size < 1:
            raise ValueError("p_keywords must be a non-empty vector")
        if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-9:
            raise ValueError("p_keywords must be a probability simplex")
        for name in ("p_keyword_like", "p_speech"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {value}")


@dataclass(frozen=True)
class StreamConfig:
    window_len: float = 1.0
    hop_len: float = 0.1

    def __post_init__(self):
        if not 0 < self.hop_len <= self.window_len:
            raise ValueError("need 0 < hop_len <= window_len")


@dataclass(frozen=True)
class Decision:
    """Argmax outcome; ``label`` is the 1-based rank in the combined layout."""

    label: int
    kind: str
    keyword_index: Optional[int] = None

    @property
    def class_index(self) -> int:
        return self.label - 1


def branch_probs(cls_logits, kw_logit, sp_logit) -> BranchProbs:
    """Activation of one sample's branch logits: softmax / sigmoid / sigmoid."""
    return BranchProbs(
        p_keywords=softmax(np.asarray(cls_logits, dtype=np.float64)),
        p_keyword_like=float(sigmoid(np.array([kw_logit]))[0]),
        p_speech=float(sigmoid(np.array([sp_logit]))[0]),
    )


def combine_probs(p_keywords, p_keyword_like, p_speech) -> np.ndarray:
    """Batched product rule; broadcasts (..., N) keyword simplexes with (...)
    scalar branch probabilities into (..., N+2) combined distributions."""
    p_c = np.asarray(p_keywords, dtype=np.float64)
    p_k = np.asarray(p_keyword_like, dtype=np.float64)[..., None]
    p_s = np.asarray(p_speech, dtype=np.float64)[..., None]
    return np.concatenate([p_c * p_k * p_s, (1.0 - p_k) * p_s, 1.0 - p_s], axis=-1)


def combine(bp: BranchProbs) -> np.ndarray:
    return combine_probs(bp.p_keywords, bp.p_keyword_like, bp.p_speech)


def argmax_last(values) -> np.ndarray:
    """Row-wise argmax that resolves exact ties toward the largest index."""
    values = np.asarray(values)
    flipped = values.shape[-1] - 1 - np.argmax(values[..., ::-1], axis=-1)
    return flipped


def _decision_from_index(index: int, n_keywords: int) -> Decision:
    if index < n_keywords:
        return Decision(label=index + 1, kind=KEYWORD, keyword_index=index)
    if index == n_keywords:
        return Decision(label=index + 1, kind=NON_KEYWORD_SPEECH)
    return Decision(label=index + 1, kind=NON_SPEECH)


def decide(dist) -> Decision:
    """Argmax over one combined distribution."""
    dist = np.asarray(dist, dtype=np.float64)
    if dist.ndim != 1 or dist.size < 3:
        raise ValueError("expected one length-(N+2) distribution")
    return _decision_from_index(int(argmax_last(dist)), dist.size - 2)


def decide_baseline(logits) -> Decision:
    """Argmax of the flat-head softmax, same layout and tie rule."""
    logits = np.asarray(logits, dtype=np.float64)
    if logits.ndim != 1 or logits.size < 3:
        raise ValueError("expected one length-(N+2) logit vector")
    return _decision_from_index(int(argmax_last(softmax(logits))), logits.size - 2)


def decide_indices_sr(cls_logits, kw_logits, sp_logits) -> np.ndarray:
    """Batched 0-based decisions from refinement-head logits."""
    dists = combine_probs(softmax(cls_logits), sigmoid(kw_logits), sigmoid(sp_logits))
    return argmax_last(dists)


def decide_indices_baseline(logits) -> np.ndarray:
    return argmax_last(softmax(logits))


def fa_per_hour(fa_rate: float, hop_s: float) -> float:
    """False alarms per hour implied by a per-window FA rate at a given hop."""
    if hop_s <= 0:
        raise ValueError(f"hop must be positive, got {hop_s}")
    if not 0.0 <= fa_rate <= 1.0:
        raise ValueError(f"fa_rate must lie in [0, 1], got {fa_rate}")
    return fa_rate * 3600.0 / hop_s


def window_starts(n_samples: int, sample_rate: int, cfg: StreamConfig) -> np.ndarray:
    """Sample offsets of every full window: 0, hop, 2*hop, ... (integer math)."""
    window = int(round(cfg.window_len * sample_rate))
    hop = int(round(cfg.hop_len * sample_rate))
    if n_samples < window:
        raise ValueError(f"stream of {n_samples} samples is shorter than one window ({window})")
    return np.arange((n_samples - window) // hop + 1) * hop


@dataclass(frozen=True)
class StreamEvent:
    start_s: float
    decision: Decision
    dist: np.ndarray


def stream_detect(
    signal,
    sample_rate: int,
    store: ParamStore,
    model_cfg: ModelConfig,
    feature_cfg: FeatureConfig,
    stream_cfg: StreamConfig = StreamConfig(),
    batch: int = 256,
) -> list[StreamEvent]:
    """Independent per-window decisions over a long signal (no smoothing)."""
    signal = np.asarray(signal, dtype=np.float64)
    starts = window_starts(signal.shape[0], sample_rate, stream_cfg)
    window = int(round(stream_cfg.window_len * sample_rate))
    if frame_count(window, feature_cfg) != model_cfg.n_frames:
        raise ValueError("stream window does not produce the configured number of frames")
    events: list[StreamEvent] = []
    for chunk_start in range(0, starts.size, batch):
        chunk = starts[chunk_start : chunk_start + batch]
        clips = np.stack([signal[s : s + window] for s in chunk])
        feats = compute_features_batch(clips, feature_cfg)
        if model_cfg.head_kind == HEAD_SR:
            state = forward_sr(store, model_cfg, feats)
            dists = combine_probs(
                softmax(state.cls_logits), sigmoid(state.kw_logits), sigmoid(state.sp_logits)
            )
        else:
            state = forward_baseline(store, model_cfg, feats)
            dists = softmax(state.logits)
        indices = argmax_last(dists)
        for row, start in enumerate(chunk):
            events.append(
                StreamEvent(
                    start_s=float(start / sample_rate),
                    decision=_decision_from_index(int(indices[row]), model_cfg.n_keywords),
                    dist=dists[row],
                )
            )
    return events


def write_stream_report(events: list[StreamEvent], path) -> None:
    """CSV rows: start_time_s, decision_kind, keyword_index (-1 if none), distribution."""
    with open(path, "w", encoding="utf-8") as handle:
        for event in events:
            index = event.decision.keyword_index
            cells = [
                repr(event.start_s),
                event.decision.kind,
                str(index if index is not None else -1),
            ]
            cells.extend(repr(float(v)) for v in event.dist)
            handle.write(",".join(cells) + "\n")
