"""Simulated physical layer.

Bits are spread by a +/-1 m-sequence, the chips ride a continuous-phase FSK
waveform at a low intermediate frequency, and the waveform crosses a channel
that adds white noise and, when a sweep jammer's current channel coincides
with the active one, a jamming tone. Radio channels are modeled by index
only; carrier frequencies exist for bookkeeping, never for sampling.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .sampling import SampleBuffer, dbm_to_amplitude

# Maximal-length LFSR tap pairs; degree 7 gives the default 127-chip code.
M_SEQUENCE_TAPS = {5: (5, 3), 6: (6, 5), 7: (7, 6)}
DEFAULT_PN_DEGREE = 7

MARK_FREQ = 2400.0
SPACE_FREQ = 1200.0
CHIP_RATE = 1250.0
PHY_SAMPLE_RATE = 100_000

JAM_MARGIN_THRESHOLD = 0.35
JAM_MARGIN_RUN = 8

CHANNEL_BASE_MHZ = 902.0
CHANNEL_TOP_MHZ = 928.0
CHANNEL_SPACING_MHZ = 1.0
CHANNEL_COUNT = 26

DEFAULT_JAM_TONE_HZ = 1300.0


class PhyError(Exception):
    pass


class AliasingError(PhyError):
    pass


class ChipAlignmentError(PhyError):
    pass


class NoFreeChannelError(PhyError):
    pass


def m_sequence(degree: int) -> np.ndarray:
    """Maximal-length +/-1 sequence of length 2**degree - 1 from an LFSR."""
    try:
        taps = M_SEQUENCE_TAPS[degree]
    except KeyError:
        raise PhyError(f"no tap table for degree {degree}") from None
    state = [1] * degree
    chips = []
    for _ in range((1 << degree) - 1):
        out = state[-1]
        chips.append(1.0 if out else -1.0)
        fb = 0
        for t in taps:
            fb ^= state[t - 1]
        state = [fb] + state[:-1]
    return np.array(chips)


@dataclass(frozen=True)
class PnSequence:
    chips: np.ndarray

    @classmethod
    def m_sequence(cls, degree: int = DEFAULT_PN_DEGREE) -> "PnSequence":
        return cls(m_sequence(degree))

    @property
    def length(self) -> int:
        return len(self.chips)

    def periodic_autocorrelation(self) -> np.ndarray:
        n = self.length
        return np.array([
            float(np.dot(self.chips, np.roll(self.chips, k))) for k in range(n)])


def processing_gain_db(n: int) -> float:
    return 10.0 * np.log10(n)


def spread(bits: list[int], pn: PnSequence) -> np.ndarray:
    """Each bit, mapped to +/-1, multiplies one full period of the code."""
    if len(bits) == 0:
        return np.zeros(0)
    levels = 2.0 * np.asarray(bits, dtype=float) - 1.0
    return np.repeat(levels, pn.length) * np.tile(pn.chips, len(bits))


def despread(chips: np.ndarray, pn: PnSequence) -> tuple[list[int], np.ndarray]:
    """Correlate N-chip blocks against the code.

    Accepts hard +/-1 chips or soft demodulator metrics. Returns the bit
    decisions and the per-bit correlation margin |sum(c * pn)| / N, which is
    exactly 1.0 for clean hard chips and collapses under in-channel jamming.
    """
    chips = np.asarray(chips, dtype=float)
    n = pn.length
    if len(chips) % n != 0:
        raise ChipAlignmentError(
            f"chip count {len(chips)} is not a multiple of the code length {n}")
    blocks = chips.reshape(-1, n)
    corr = blocks @ pn.chips / n
    bits = [1 if c > 0 else 0 for c in corr]
    return bits, np.abs(corr)


def fsk_modulate(
    bits: list[int],
    mark_freq: float = MARK_FREQ,
    space_freq: float = SPACE_FREQ,
    bit_rate: float = CHIP_RATE,
    sample_rate: float = PHY_SAMPLE_RATE,
    amplitude: float = 1.0,
) -> SampleBuffer:
    """Continuous-phase FSK: bit 1 rides the mark tone, bit 0 the space tone."""
    for f in (mark_freq, space_freq):
        if f >= sample_rate / 2:
            raise AliasingError(f"{f} Hz is not below half of {sample_rate} Hz")
    if mark_freq == space_freq:
        raise PhyError("mark and space frequencies must differ")
    n_bit = sample_rate / bit_rate
    if abs(n_bit - round(n_bit)) > 1e-9:
        raise PhyError(
            f"bit period is not a whole sample count at {sample_rate} Hz")
    n_bit = round(n_bit)
    if not bits:
        return SampleBuffer(np.zeros(0), sample_rate)
    freqs = np.where(np.repeat(np.asarray(bits, dtype=int), n_bit) == 1,
                     mark_freq, space_freq)
    # Cumulative phase keeps the waveform continuous across bit boundaries.
    phase = 2 * np.pi * np.cumsum(freqs) / sample_rate
    return SampleBuffer(amplitude * np.sin(phase), sample_rate)


def fsk_demodulate(
    buf: SampleBuffer,
    mark_freq: float = MARK_FREQ,
    space_freq: float = SPACE_FREQ,
    bit_rate: float = CHIP_RATE,
) -> tuple[list[int | None], np.ndarray]:
    """Quadrature correlator per bit window.

    Confidence is the normalized energy contrast (E_mark - E_space) over
    (E_mark + E_space), in [-1, 1]; its sign is the bit decision. A window
    with no energy at all decodes as None with confidence 0.
    """
    n_bit = round(buf.sample_rate / bit_rate)
    n = (len(buf) // n_bit) * n_bit
    if n == 0:
        return [], np.zeros(0)
    windows = buf.samples[:n].reshape(-1, n_bit)
    t = np.arange(n_bit) / buf.sample_rate
    metrics = np.zeros(len(windows))
    energies = {}
    for f in (mark_freq, space_freq):
        c = windows @ np.cos(2 * np.pi * f * t)
        s = windows @ np.sin(2 * np.pi * f * t)
        energies[f] = c * c + s * s
    total = energies[mark_freq] + energies[space_freq]
    nonzero = total > 0
    metrics[nonzero] = (energies[mark_freq][nonzero]
                        - energies[space_freq][nonzero]) / total[nonzero]
    bits: list[int | None] = [
        None if total[i] == 0 else (1 if metrics[i] > 0 else 0)
        for i in range(len(windows))]
    return bits, metrics


@dataclass(frozen=True)
class ChannelPlan:
    base_mhz: float = CHANNEL_BASE_MHZ
    top_mhz: float = CHANNEL_TOP_MHZ
    spacing_mhz: float = CHANNEL_SPACING_MHZ
    channel_count: int = CHANNEL_COUNT

    def carrier_mhz(self, index: int) -> float:
        if not 0 <= index < self.channel_count:
            raise PhyError(f"channel index {index} outside the plan")
        f = self.base_mhz + index * self.spacing_mhz + self.spacing_mhz / 2
        assert f < self.top_mhz
        return f


@dataclass
class SweepJammer:
    dwell_time: float
    power_dbm: float
    sweep_order: tuple[int, ...] = tuple(range(CHANNEL_COUNT))
    enabled: bool = True
    tone_hz: float = DEFAULT_JAM_TONE_HZ
    origin_s: float = 0.0  # dwell grid reference; slot 0 starts here

    def __post_init__(self):
        if self.dwell_time <= 0:
            raise ValueError("dwell_time must be positive")
        if len(self.sweep_order) == 0:
            raise ValueError("sweep order is empty")

    def channel_at(self, t: float) -> int:
        return self.sweep_order[int(np.floor((t - self.origin_s) / self.dwell_time))
                                % len(self.sweep_order)]

    def occupancy(self, channel: int, t0: float, t1: float) -> list[tuple[float, float]]:
        """Intervals within [t0, t1) during which the jammer sits on channel."""
        if not self.enabled or t1 <= t0:
            return []
        out = []
        k = int(np.floor((t0 - self.origin_s) / self.dwell_time))
        while self.origin_s + k * self.dwell_time < t1:
            a = self.origin_s + k * self.dwell_time
            b = a + self.dwell_time
            if self.sweep_order[k % len(self.sweep_order)] == channel:
                lo, hi = max(a, t0), min(b, t1)
                if hi > lo:
                    out.append((lo, hi))
            k += 1
        return out


@dataclass
class ChannelState:
    active_channel: int = 0
    noise_power_dbm: float | None = None
    jammer: SweepJammer | None = None
    plan: ChannelPlan = field(default_factory=ChannelPlan)

    def __post_init__(self):
        if not 0 <= self.active_channel < self.plan.channel_count:
            raise PhyError(f"channel {self.active_channel} outside the plan")


def channel_transmit(
    buf: SampleBuffer,
    state: ChannelState,
    t: float,
    rng: np.random.Generator | None = None,
) -> SampleBuffer:
    """Propagate a waveform starting at absolute time t on the active channel.

    Adds white noise at the configured power, then a jamming tone over every
    sub-interval where the sweep jammer occupies the active channel. With no
    noise and no overlap this is the identity.
    """
    out = buf.samples.copy()
    if state.noise_power_dbm is not None:
        if rng is None:
            raise PhyError("noise power set but no rng supplied")
        sigma = np.sqrt(0.5) * dbm_to_amplitude(state.noise_power_dbm)
        out += rng.normal(0.0, sigma, len(out))
    jam = state.jammer
    if jam is not None and jam.enabled:
        duration = len(buf) / buf.sample_rate
        amp = dbm_to_amplitude(jam.power_dbm)
        for a, b in jam.occupancy(state.active_channel, t, t + duration):
            i0 = int(np.ceil((a - t) * buf.sample_rate))
            i1 = min(int(np.ceil((b - t) * buf.sample_rate)), len(out))
            if i1 <= i0:
                continue
            # Tone phase runs on the global clock so overlap segments join up.
            ts = t + np.arange(i0, i1) / buf.sample_rate
            out[i0:i1] += amp * np.sin(2 * np.pi * jam.tone_hz * ts)
    return SampleBuffer(out, buf.sample_rate)


def next_free_channel(state: ChannelState, t: float) -> int:
    """Next cyclically ascending index not currently occupied by the jammer.

    This is the genie view used by the simulator and tests; link-layer code
    never calls it, because real nodes cannot see the jammer's schedule.
    """
    count = state.plan.channel_count
    occupied = None
    if state.jammer is not None and state.jammer.enabled:
        occupied = state.jammer.channel_at(t)
    for step in range(1, count + 1):
        i = (state.active_channel + step) % count
        if i != occupied:
            return i
    raise NoFreeChannelError("jammer occupies every channel")
