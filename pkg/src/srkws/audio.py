"""Reading and writing 16-bit PCM mono WAV files."""

from __future__ import annotations

import wave

import numpy as np

INT16_SCALE = 32768.0


class WavFormatError(ValueError):
    """File exists but is not readable 16-bit PCM mono WAV."""


def read_wav(path) -> tuple[int, np.ndarray]:
    """Return ``(sample_rate, signal)`` with amplitudes in [-1, 1).

    16-bit samples are mapped to floats by division by 32768. Raises
    FileNotFoundError for a missing file and :class:`WavFormatError` for
    multi-channel, non-16-bit, or compressed input.
    """
    try:
        handle = wave.open(str(path), "rb")
    except wave.Error as exc:
        raise WavFormatError(f"{path}: not a readable PCM WAV ({exc})") from exc
    with handle:
        n_channels = handle.getnchannels()
        if n_channels != 1:
            raise WavFormatError(f"{path}: expected mono audio, got {n_channels} channels")
        if handle.getsampwidth() != 2:
            raise WavFormatError(
                f"{path}: expected 16-bit samples, got {8 * handle.getsampwidth()}-bit"
            )
        if handle.getcomptype() != "NONE":
            raise WavFormatError(f"{path}: expected PCM encoding, got {handle.getcomptype()}")
        sample_rate = handle.getframerate()
        raw = handle.readframes(handle.getnframes())
    signal = np.frombuffer(raw, dtype="<i2").astype(np.float64) / INT16_SCALE
    return sample_rate, signal


def write_wav(path, signal, sample_rate: int) -> None:
    """Write a float signal in [-1, 1) as 16-bit PCM mono WAV."""
    values = np.rint(np.asarray(signal, dtype=np.float64) * INT16_SCALE)
    values = np.clip(values, -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as handle:
        handle.setnchannels(1)
        handle.setsampwidth(2)
        handle.setframerate(int(sample_rate))
        handle.writeframes(values.tobytes())
