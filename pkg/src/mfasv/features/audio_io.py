"""Waveform container and 16-bit PCM mono WAV I/O."""

from __future__ import annotations

import wave
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import InputError

__all__ = ["Waveform", "read_wav", "write_wav"]


@dataclass
class Waveform:
    """Mono audio in [-1, 1] float32 with its sample rate."""

    samples: np.ndarray
    sample_rate: int = 16000

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float32)
        if self.samples.ndim != 1:
            raise InputError(f"waveforms are mono 1-D, got shape {self.samples.shape}")
        if self.sample_rate <= 0:
            raise InputError("sample_rate must be positive")

    @property
    def duration_s(self) -> float:
        return self.samples.size / self.sample_rate

    def clipped(self) -> "Waveform":
        return Waveform(np.clip(self.samples, -1.0, 1.0), self.sample_rate)


def write_wav(path: str | Path, wav: Waveform) -> None:
    pcm = np.clip(np.round(wav.samples * 32767.0), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as fh:
        fh.setnchannels(1)
        fh.setsampwidth(2)
        fh.setframerate(wav.sample_rate)
        fh.writeframes(pcm.tobytes())


def read_wav(path: str | Path) -> Waveform:
    with wave.open(str(path), "rb") as fh:
        if fh.getnchannels() != 1:
            raise InputError(f"{path}: expected mono audio, got {fh.getnchannels()} channels")
        if fh.getsampwidth() != 2:
            raise InputError(f"{path}: expected 16-bit PCM, got {8 * fh.getsampwidth()} bits")
        raw = fh.readframes(fh.getnframes())
        rate = fh.getframerate()
    pcm = np.frombuffer(raw, dtype="<i2")
    return Waveform(pcm.astype(np.float32) / 32767.0, rate)
