"""Discrete-time sample buffers and the dBm power convention shared by all layers.

Power convention: 0 dBm is the power of a unit-amplitude sinusoid, so a tone
at P dBm has amplitude 10^(P/20) and mean-square power 0.5 * 10^(P/10).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


@dataclass
class SampleBuffer:
    """Real-valued discrete-time signal with an explicit sample rate in Hz."""

    samples: np.ndarray
    sample_rate: float

    def __post_init__(self) -> None:
        self.samples = np.asarray(self.samples, dtype=float)
        if self.sample_rate <= 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def duration(self) -> float:
        """Length of the buffer in seconds."""
        return len(self.samples) / self.sample_rate

    def concat(self, other: "SampleBuffer") -> "SampleBuffer":
        if other.sample_rate != self.sample_rate:
            raise ValueError("cannot concatenate buffers with different sample rates")
        return SampleBuffer(np.concatenate([self.samples, other.samples]), self.sample_rate)


def silence(n_samples: int, sample_rate: float) -> SampleBuffer:
    return SampleBuffer(np.zeros(n_samples), sample_rate)


def dbm_to_amplitude(power_dbm: float) -> float:
    """Peak amplitude of a sinusoid at the given power (0 dBm == amplitude 1)."""
    return 10.0 ** (power_dbm / 20.0)


def dbm_to_mean_square(power_dbm: float) -> float:
    return 0.5 * 10.0 ** (power_dbm / 10.0)


def amplitude_to_dbm(amplitude: float) -> float:
    if amplitude <= 0:
        raise ValueError("amplitude must be positive")
    return 20.0 * math.log10(amplitude)


def awgn(rng: np.random.Generator, n: int, power_dbm: float | None) -> np.ndarray:
    """White Gaussian noise at the given power; None means a noiseless channel."""
    if power_dbm is None:
        return np.zeros(n)
    sigma = math.sqrt(dbm_to_mean_square(power_dbm))
    return rng.normal(0.0, sigma, n)
