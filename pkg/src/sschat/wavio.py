"""Mono 16-bit PCM WAV round trip for tone recordings."""

import wave
from pathlib import Path

import numpy as np

from .sampling import SampleBuffer

_FULL_SCALE = 32767


class WavFormatError(ValueError):
    pass


def write_wav(path: str | Path, buf: SampleBuffer) -> None:
    samples = np.clip(buf.samples, -1.0, 1.0)
    pcm = np.round(samples * _FULL_SCALE).astype("<i2")
    with wave.open(str(path), "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(2)
        w.setframerate(round(buf.sample_rate))
        w.writeframes(pcm.tobytes())


def read_wav(path: str | Path) -> SampleBuffer:
    with wave.open(str(path), "rb") as w:
        if w.getnchannels() != 1:
            raise WavFormatError(f"expected mono, got {w.getnchannels()} channels")
        if w.getsampwidth() != 2:
            raise WavFormatError(
                f"expected 16-bit samples, got {8 * w.getsampwidth()}-bit")
        rate = w.getframerate()
        raw = w.readframes(w.getnframes())
    samples = np.frombuffer(raw, dtype="<i2").astype(float) / _FULL_SCALE
    return SampleBuffer(samples, float(rate))
