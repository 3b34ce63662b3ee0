"""Log-mel time-frequency features for 1 s clips.

Hann-windowed short-time power spectra are projected onto a triangular mel
filterbank and compressed with a natural log: ``ln(mel_power + log_floor)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin


@dataclass(frozen=True)
class FeatureConfig:
    sample_rate: int = 16000
    window_len: float = 0.030
    hop_len: float = 0.010
    n_mels: int = 40
    fmin: float = 20.0
    fmax: float = 8000.0
    log_floor: float = 1e-6

    def __post_init__(self):
        if not self.window_len > self.hop_len > 0:
            raise ValueError("need window_len > hop_len > 0")
        if not 0 <= self.fmin < self.fmax <= self.sample_rate / 2:
            raise ValueError("need fmin < fmax <= sample_rate / 2")
        if self.n_mels < 1:
            raise ValueError(f"n_mels must be >= 1, got {self.n_mels}")
        if self.log_floor <= 0:
            raise ValueError(f"log_floor must be positive, got {self.log_floor}")

    @property
    def window_samples(self) -> int:
        return int(round(self.window_len * self.sample_rate))

    @property
    def hop_samples(self) -> int:
        return int(round(self.hop_len * self.sample_rate))


def _hz_to_mel(freq):
    return 2595.0 * np.log10(1.0 + np.asarray(freq) / 700.0)


def _mel_to_hz(mel):
    return 700.0 * (10.0 ** (np.asarray(mel) / 2595.0) - 1.0)


def mel_filterbank(cfg: FeatureConfig, n_fft: int) -> np.ndarray:
    """Triangular filters as a non-negative (n_fft//2 + 1, n_mels) matrix."""
    bin_freqs = np.arange(n_fft // 2 + 1) * cfg.sample_rate / n_fft
    edges = _mel_to_hz(np.linspace(_hz_to_mel(cfg.fmin), _hz_to_mel(cfg.fmax), cfg.n_mels + 2))
    bank = np.zeros((bin_freqs.size, cfg.n_mels))
    for m in range(cfg.n_mels):
        low, mid, high = edges[m], edges[m + 1], edges[m + 2]
        rising = (bin_freqs - low) / (mid - low)
        falling = (high - bin_freqs) / (high - mid)
        bank[:, m] = np.clip(np.minimum(rising, falling), 0.0, None)
    return bank


def frame_count(n_samples: int, cfg: FeatureConfig) -> int:
    if n_samples < cfg.window_samples:
        raise ValueError(
            f"signal of {n_samples} samples is shorter than one {cfg.window_samples}-sample window"
        )
    return (n_samples - cfg.window_samples) // cfg.hop_samples + 1


def compute_features(signal, cfg: FeatureConfig) -> np.ndarray:
    """Log-mel map of shape (frames, n_mels) for one clip."""
    return compute_features_batch(np.asarray(signal, dtype=np.float64)[None, :], cfg)[0]


def compute_features_batch(signals, cfg: FeatureConfig, chunk: int = 256) -> np.ndarray:
    """Vectorized :func:`compute_features` over a (clips, samples) array."""
    signals = np.asarray(signals, dtype=np.float64)
    if signals.ndim != 2:
        raise ValueError(f"expected (clips, samples), got shape {signals.shape}")
    win = cfg.window_samples
    n_frames = frame_count(signals.shape[1], cfg)
    window = np.hanning(win)
    bank = mel_filterbank(cfg, win)
    out = np.empty((signals.shape[0], n_frames, cfg.n_mels))
    for start in range(0, signals.shape[0], chunk):
        part = signals[start : start + chunk]
        frames = np.lib.stride_tricks.sliding_window_view(part, win, axis=1)[:, :: cfg.hop_samples]
        spectra = np.abs(np.fft.rfft(frames * window, axis=-1)) ** 2
        out[start : start + chunk] = np.log(spectra @ bank + cfg.log_floor)
    return out


class LogMelExtractor(TransformerMixin, BaseEstimator):
    """Stateless sklearn-style transformer from raw clips to log-mel maps."""

    def __init__(
        self,
        sample_rate: int = 16000,
        window_len: float = 0.030,
        hop_len: float = 0.010,
        n_mels: int = 40,
        fmin: float = 20.0,
        fmax: float = 8000.0,
        log_floor: float = 1e-6,
    ):
        self.sample_rate = sample_rate
        self.window_len = window_len
        self.hop_len = hop_len
        self.n_mels = n_mels
        self.fmin = fmin
        self.fmax = fmax
        self.log_floor = log_floor

    def _config(self) -> FeatureConfig:
        return FeatureConfig(
            sample_rate=self.sample_rate,
            window_len=self.window_len,
            hop_len=self.hop_len,
            n_mels=self.n_mels,
            fmin=self.fmin,
            fmax=self.fmax,
            log_floor=self.log_floor,
        )

    def fit(self, X, y=None):
        self._config()  # validate parameters
        return self

    def transform(self, X):
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X[None, :]
        return compute_features_batch(X, self._config())
