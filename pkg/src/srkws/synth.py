"""Synthetic desk-scale corpus mimicking the keyword / speech / noise hierarchy.

Keyword clips are distinct two-tone glide patterns under a rise-fall energy
envelope that peaks in the middle third of the clip. Non-keyword "speech"
clips are harmonic tones with vibrato and syllabic amplitude modulation,
giving a near-flat long-term energy profile whose carrier range overlaps the
keywords (so class identity hinges on the temporal envelope, not frequency
alone). The non-speech class is spectrally shaped noise. Everything is
deterministic given the config seed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .labels import HierLabel

# (frequency multiplier, glide ratio) cycled per keyword id
_KEYWORD_PATTERNS = ((1.00, 1.50), (1.60, 0.67), (2.20, 1.00), (2.80, 1.30), (3.40, 0.75))
_KEYWORD_BASE_HZ = 300.0


@dataclass(frozen=True)
class SynthConfig:
    n_keywords: int = 3
    samples_per_class: int = 500
    sample_rate: int = 16000
    duration: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.n_keywords < 1:
            raise ValueError(f"n_keywords must be >= 1, got {self.n_keywords}")
        if self.samples_per_class < 1:
            raise ValueError(f"samples_per_class must be >= 1, got {self.samples_per_class}")
        if self.sample_rate <= 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")
        if self.duration <= 0:
            raise ValueError(f"duration must be positive, got {self.duration}")

    @property
    def n_samples(self) -> int:
        return int(round(self.sample_rate * self.duration))


def _harmonic_tone(freqs: np.ndarray, sample_rate: int) -> np.ndarray:
    """Fundamental plus a weak second harmonic for an instantaneous-frequency track."""
    phase = 2.0 * np.pi * np.cumsum(freqs) / sample_rate
    return np.sin(phase) + 0.4 * np.sin(2.0 * phase)


def _edge_taper(n: int, sample_rate: int, ramp_s: float = 0.01) -> np.ndarray:
    ramp = min(max(int(ramp_s * sample_rate), 1), n // 2)
    taper = np.ones(n)
    fade = 0.5 - 0.5 * np.cos(np.pi * np.arange(ramp) / ramp)
    taper[:ramp] = fade
    taper[-ramp:] = fade[::-1]
    return taper


def keyword_clip(rng: np.random.Generator, keyword: int, cfg: SynthConfig) -> np.ndarray:
    """One keyword utterance: a glide tone under a centered rise-fall envelope."""
    n = cfg.n_samples
    t = np.arange(n) / cfg.sample_rate
    mult, ratio = _KEYWORD_PATTERNS[keyword % len(_KEYWORD_PATTERNS)]
    f0 = _KEYWORD_BASE_HZ * mult * (1.0 + 0.04 * rng.uniform(-1.0, 1.0))
    freqs = f0 * (1.0 + (ratio - 1.0) * t / cfg.duration)
    # Gaussian envelope with its peak inside the middle third of the clip
    peak = rng.uniform(0.42, 0.58) * cfg.duration
    width = rng.uniform(0.10, 0.16) * cfg.duration
    envelope = np.exp(-0.5 * ((t - peak) / width) ** 2)
    amp = rng.uniform(0.25, 0.60)
    floor = rng.uniform(0.002, 0.008)
    return amp * envelope * _harmonic_tone(freqs, cfg.sample_rate) + floor * rng.standard_normal(n)


def speech_clip(rng: np.random.Generator, cfg: SynthConfig) -> np.ndarray:
    """Non-keyword speech stand-in: vibrato tone with syllabic amplitude modulation."""
    n = cfg.n_samples
    t = np.arange(n) / cfg.sample_rate
    carrier = rng.uniform(250.0, 900.0)
    vib_rate = rng.uniform(2.0, 5.0)
    freqs = carrier * (1.0 + 0.02 * np.sin(2.0 * np.pi * vib_rate * t + rng.uniform(0, 2 * np.pi)))
    depth = rng.uniform(0.15, 0.85)
    am_rate = rng.uniform(2.5, 8.0)
    modulation = (1.0 - depth) + depth * (
        0.5 + 0.5 * np.sin(2.0 * np.pi * am_rate * t + rng.uniform(0, 2 * np.pi))
    )
    amp = rng.uniform(0.20, 0.55)
    floor = rng.uniform(0.002, 0.008)
    tone = amp * modulation * _harmonic_tone(freqs, cfg.sample_rate)
    return tone * _edge_taper(n, cfg.sample_rate) + floor * rng.standard_normal(n)


def _shaped_noise(rng: np.random.Generator, n: int, response: np.ndarray) -> np.ndarray:
    spectrum = np.fft.rfft(rng.standard_normal(n))
    shaped = np.fft.irfft(spectrum * response, n)
    rms = np.sqrt(np.mean(shaped**2))
    return shaped / max(rms, 1e-12)


def noise_clip(rng: np.random.Generator, cfg: SynthConfig) -> np.ndarray:
    """Non-speech stand-in: low-pass shaped noise with a random cutoff."""
    n = cfg.n_samples
    freqs = np.fft.rfftfreq(n, 1.0 / cfg.sample_rate)
    cutoff = np.exp(rng.uniform(np.log(200.0), np.log(4000.0)))
    response = 1.0 / np.sqrt(1.0 + (freqs / cutoff) ** 2)
    level = rng.uniform(0.02, 0.20)
    return level * _shaped_noise(rng, n, response)


def synth_generate(cfg: SynthConfig) -> list[tuple[np.ndarray, HierLabel]]:
    """Generate ``samples_per_class`` clips for each keyword plus both negative classes."""
    rng = np.random.default_rng(cfg.seed)
    items: list[tuple[np.ndarray, HierLabel]] = []
    for keyword in range(cfg.n_keywords):
        for _ in range(cfg.samples_per_class):
            items.append((keyword_clip(rng, keyword, cfg), HierLabel.keyword(keyword)))
    for _ in range(cfg.samples_per_class):
        items.append((speech_clip(rng, cfg), HierLabel.non_keyword_speech()))
    for _ in range(cfg.samples_per_class):
        items.append((noise_clip(rng, cfg), HierLabel.non_speech()))
    return items


def _ood_speech_clip(rng: np.random.Generator, cfg: SynthConfig) -> np.ndarray:
    n = cfg.n_samples
    t = np.arange(n) / cfg.sample_rate
    carrier = rng.uniform(900.0, 1400.0)
    freqs = carrier * (1.0 + 0.03 * np.sin(2.0 * np.pi * rng.uniform(4.0, 7.0) * t))
    depth = rng.uniform(0.30, 0.95)
    am_rate = rng.uniform(8.0, 14.0)
    modulation = (1.0 - depth) + depth * (
        0.5 + 0.5 * np.sin(2.0 * np.pi * am_rate * t + rng.uniform(0, 2 * np.pi))
    )
    amp = rng.uniform(0.20, 0.55)
    tone = amp * modulation * _harmonic_tone(freqs, cfg.sample_rate)
    return tone * _edge_taper(n, cfg.sample_rate) + 0.005 * rng.standard_normal(n)


def _ood_noise_clip(rng: np.random.Generator, cfg: SynthConfig) -> np.ndarray:
    n = cfg.n_samples
    freqs = np.fft.rfftfreq(n, 1.0 / cfg.sample_rate)
    center = rng.uniform(2000.0, 6000.0)
    bandwidth = rng.uniform(500.0, 1500.0)
    response = np.exp(-0.5 * ((freqs - center) / bandwidth) ** 2)
    level = rng.uniform(0.02, 0.20)
    return level * _shaped_noise(rng, n, response)


def synth_generate_ood(cfg: SynthConfig) -> list[tuple[np.ndarray, HierLabel]]:
    """Negative-only clips from acoustic ranges unseen in :func:`synth_generate`.

    Used to probe false-alarm robustness on out-of-domain negatives; drawn
    from an independent seed stream so it never overlaps the main corpus.
    """
    rng = np.random.default_rng([cfg.seed, 1])
    items: list[tuple[np.ndarray, HierLabel]] = []
    for _ in range(cfg.samples_per_class):
        items.append((_ood_speech_clip(rng, cfg), HierLabel.non_keyword_speech()))
    for _ in range(cfg.samples_per_class):
        items.append((_ood_noise_clip(rng, cfg), HierLabel.non_speech()))
    return items


def short_time_energy(signal: np.ndarray, frame: int, hop: int) -> np.ndarray:
    """Per-frame signal energy; the oracle used to check keyword envelopes."""
    n_frames = (len(signal) - frame) // hop + 1
    return np.array(
        [float(np.sum(signal[i * hop : i * hop + frame] ** 2)) for i in range(n_frames)]
    )
