"""Handshake code and pulse-interval codec.

A 14-bit handshake code (start bit, two 6-bit addresses, ack bit) travels as
a square-wave train where each bit occupies one full period: 800 us for a 1,
600 us for a 0, at 50% duty cycle. The receiver hard-limits the waveform with
a midpoint comparator and measures the time between consecutive negative
edges; intervals near the 700 us decision threshold surface as erasures.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .sampling import SampleBuffer

PRT_ONE_US = 800.0
PRT_ZERO_US = 600.0
THRESHOLD_US = 700.0
GUARD_US = 10.0
PULSE_SAMPLE_RATE = 100_000
PULSE_AMPLITUDE = 0.020
# Constant high run before the first cell and low run after the last, so the
# comparator sees a negative edge at both the first and last bit boundary.
LEAD_IN_US = 200.0
TAIL_US = 200.0

CODE_BITS = 14
ADDRESS_BITS = 6
MAX_ADDRESS = (1 << ADDRESS_BITS) - 1


class PulseError(Exception):
    pass


class InvalidAddressError(PulseError):
    pass


class NonIntegralPrtError(PulseError):
    pass


class NoEdgesError(PulseError):
    pass


class BadStartBitError(PulseError):
    pass


class ErasurePresentError(PulseError):
    pass


class CodeLengthError(PulseError):
    pass


@dataclass(frozen=True)
class HandshakeCode:
    src: int
    dst: int
    ack: int
    start: int = 1


@dataclass(frozen=True)
class PrtMeasurement:
    period_us: float
    bit: int | None  # None marks an erasure


@dataclass(frozen=True)
class PulseTrain:
    samples: SampleBuffer
    amplitude: float


def build_code(src: int, dst: int, ack: int) -> HandshakeCode:
    """Handshake code with the start bit forced to 1. Address 0 is reserved."""
    for name, addr in (("src", src), ("dst", dst)):
        if not 1 <= addr <= MAX_ADDRESS:
            raise InvalidAddressError(
                f"{name} address {addr} outside 1..{MAX_ADDRESS}")
    if ack not in (0, 1):
        raise PulseError(f"ack must be 0 or 1, got {ack}")
    return HandshakeCode(src=src, dst=dst, ack=ack, start=1)


def serialize_bits(code: HandshakeCode) -> list[int]:
    """[start][src MSB-first][dst MSB-first][ack], start bit transmitted first."""
    bits = [code.start]
    for addr in (code.src, code.dst):
        bits.extend((addr >> i) & 1 for i in range(ADDRESS_BITS - 1, -1, -1))
    bits.append(code.ack)
    return bits


def parse_bits(bits: list[int]) -> HandshakeCode:
    if len(bits) != CODE_BITS:
        raise CodeLengthError(f"expected {CODE_BITS} bits, got {len(bits)}")
    if any(b is None for b in bits):
        raise ErasurePresentError("code contains erased bits")
    if bits[0] != 1:
        raise BadStartBitError("start bit is 0; transmission not enabled")
    src = int("".join(map(str, bits[1:7])), 2)
    dst = int("".join(map(str, bits[7:13])), 2)
    if src == 0 or dst == 0:
        raise InvalidAddressError("address 0 is reserved")
    return HandshakeCode(src=src, dst=dst, ack=bits[13], start=1)


def _us_to_samples(us: float, sample_rate: float) -> int:
    exact = us * sample_rate / 1e6
    n = round(exact)
    if abs(exact - n) > 1e-9:
        raise NonIntegralPrtError(
            f"{us} us is not a whole number of samples at {sample_rate} Hz")
    return n


def encode_pulses(
    bits: list[int],
    sample_rate: float = PULSE_SAMPLE_RATE,
    amplitude: float = PULSE_AMPLITUDE,
) -> PulseTrain:
    """Render bits as a 50% duty square train, one full PRT per bit.

    Each cell runs low for PRT/2 then high for PRT/2, so the high-to-low
    transition into the next cell lands exactly on the bit boundary and
    consecutive negative edges are spaced by whole PRTs. A high lead-in and
    low tail bracket the train so every boundary produces an edge.
    """
    if not bits:
        return PulseTrain(SampleBuffer(np.zeros(0), sample_rate), amplitude)
    halves = {
        1: _us_to_samples(PRT_ONE_US / 2, sample_rate),
        0: _us_to_samples(PRT_ZERO_US / 2, sample_rate),
    }
    parts = [np.full(_us_to_samples(LEAD_IN_US, sample_rate), amplitude)]
    for b in bits:
        if b not in halves:
            raise PulseError(f"bit values must be 0 or 1, got {b!r}")
        half = halves[b]
        parts.append(np.zeros(half))
        parts.append(np.full(half, amplitude))
    parts.append(np.zeros(_us_to_samples(TAIL_US, sample_rate)))
    return PulseTrain(SampleBuffer(np.concatenate(parts), sample_rate), amplitude)


def _classify(period_us: float) -> int | None:
    if abs(period_us - THRESHOLD_US) <= GUARD_US:
        return None
    return 1 if period_us > THRESHOLD_US else 0


def measure_intervals(analog: SampleBuffer) -> list[PrtMeasurement]:
    """Negative-edge intervals of the hard-limited waveform, classified.

    The comparator threshold is the midpoint of the buffer's min and max, a
    sign detector that shrugs off DC offset and amplitude scaling.
    """
    s = analog.samples
    if len(s) < 2:
        raise NoEdgesError("buffer too short to contain an edge")
    mid = (s.min() + s.max()) / 2.0
    high = s > mid
    edges = np.nonzero(high[:-1] & ~high[1:])[0] + 1
    if len(edges) < 2:
        raise NoEdgesError(f"found {len(edges)} negative edge(s), need at least 2")
    periods_us = np.diff(edges) * 1e6 / analog.sample_rate
    return [PrtMeasurement(float(p), _classify(float(p))) for p in periods_us]


def recover_pulses(analog: SampleBuffer) -> list[int | None]:
    """Bit sequence carried by a pulse train; None marks an erased interval."""
    return [m.bit for m in measure_intervals(analog)]


def load_golden_vectors(path: str | Path) -> list[tuple[HandshakeCode, list[int]]]:
    """Conformance vectors: lines of `<src> <dst> <ack> <14 bits>`."""
    out = []
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        src, dst, ack, bits = line.split()
        out.append((build_code(int(src), int(dst), int(ack)),
                    [int(b) for b in bits]))
    return out
