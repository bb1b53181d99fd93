"""Per-node link controller.

Pure state machines, no waveforms: the session driver owns time, the radio
legs, and frame delivery. Each node tracks its connection phase, arbitrates
data over voice, runs stop-and-wait ARQ with an alternating sequence bit,
watches despread margins for jamming, and walks a shared hop schedule when
the channel goes bad.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np

from .phy import CHANNEL_COUNT, JAM_MARGIN_RUN, JAM_MARGIN_THRESHOLD
from .pulse import HandshakeCode, build_code

ARQ_TIMEOUT_FACTOR = 4.0
TIMEOUTS_AS_JAM = 3
HANDSHAKE_MAX_RETRIES = 5

SYNC_BITS = (1, 0, 1, 1)
HEADER_BITS = 8


class LinkError(Exception):
    pass


class BusyError(LinkError):
    pass


class SelfAddressError(LinkError):
    pass


class NotConnectedError(LinkError):
    pass


class Phase(enum.Enum):
    IDLE = "IDLE"
    HANDSHAKING = "HANDSHAKING"
    CONNECTED = "CONNECTED"
    DIVERTING = "DIVERTING"


class FrameKind(enum.Enum):
    HANDSHAKE = 0
    DATA = 1
    ACK = 2
    VOICE = 3


@dataclass
class Frame:
    kind: FrameKind
    seq: int = 0
    payload: Any = None  # str for DATA, PCM chunk for VOICE, HandshakeCode for HANDSHAKE


def build_header_bits(kind: FrameKind, seq: int) -> list[int]:
    """[sync 1011][kind, 2 bits MSB first][seq][even parity over the first 7]."""
    bits = list(SYNC_BITS) + [(kind.value >> 1) & 1, kind.value & 1, seq & 1]
    bits.append(sum(bits) % 2)
    return bits


def parse_header_bits(bits: list[int]) -> tuple[FrameKind, int] | None:
    """Header fields, or None when sync or parity says the frame is garbage."""
    if len(bits) != HEADER_BITS or any(b not in (0, 1) for b in bits):
        return None
    if tuple(bits[:4]) != SYNC_BITS:
        return None
    if sum(bits[:7]) % 2 != bits[7]:
        return None
    return FrameKind((bits[4] << 1) | bits[5]), bits[6]


class HopSchedule:
    """Channel sequence both peers derive independently after the handshake.

    Seeded from the session seed plus the unordered address pair, so the two
    nodes build identical lists without exchanging them. Advancing always
    lands on a different channel than the current one.
    """

    _TAG = 0x486F70  # domain separator for the seed material

    def __init__(self, seed: int, addr_a: int, addr_b: int,
                 start_channel: int, channel_count: int = CHANNEL_COUNT):
        lo, hi = sorted((addr_a, addr_b))
        self._rng = np.random.default_rng(
            np.random.SeedSequence([self._TAG, seed, lo, hi]))
        self._channel_count = channel_count
        self._list = [start_channel]
        self._pos = 0

    @property
    def current(self) -> int:
        return self._list[self._pos]

    def _extend(self) -> None:
        for c in self._rng.permutation(self._channel_count):
            c = int(c)
            if c != self._list[-1]:
                self._list.append(c)

    def advance(self) -> int:
        self._pos += 1
        while self._pos >= len(self._list):
            self._extend()
        return self._list[self._pos]


@dataclass
class TxQueues:
    data_queue: list[str] = field(default_factory=list)
    voice_queue: list[Any] = field(default_factory=list)

    def offer_data(self, payload: str) -> None:
        if payload:
            self.data_queue.append(payload)

    def offer_voice(self, chunk: Any) -> None:
        self.voice_queue.append(chunk)


class LinkNode:
    """One endpoint's link state machine.

    All mutating entry points take the current simulated time so transitions
    land in the trace log as `<time> <node> <event> <old-phase> <new-phase>
    <channel>` lines.
    """

    def __init__(self, address: int, start_channel: int = 0,
                 tracer: Callable[[str], None] | None = None):
        if not 1 <= address <= 63:
            raise LinkError(f"address {address} outside 1..63")
        self.address = address
        self.phase = Phase.IDLE
        self.peer: int | None = None
        self.active_channel = start_channel
        self.tx_seq = 0
        self.rx_seq = 0
        self.queues = TxQueues()
        self.outstanding: Frame | None = None
        self.timeout_count = 0
        self.handshake_attempts = 0
        self.hop: HopSchedule | None = None
        self._pending_code: HandshakeCode | None = None
        self._margin_run = 0
        self._tracer = tracer
        self.trace_lines: list[str] = []

    def _trace(self, t: float, event: str, old_phase: Phase) -> None:
        line = (f"{t:.6f} {self.address} {event} "
                f"{old_phase.value} {self.phase.value} {self.active_channel}")
        self.trace_lines.append(line)
        if self._tracer:
            self._tracer(line)

    def _set_phase(self, t: float, event: str, new_phase: Phase) -> None:
        old = self.phase
        self.phase = new_phase
        self._trace(t, event, old)

    # Handshake

    def initiate(self, dst: int, t: float = 0.0) -> Frame:
        if self.phase is not Phase.IDLE:
            raise BusyError(f"cannot initiate while {self.phase.value}")
        if dst == self.address:
            raise SelfAddressError("refusing to chat with myself")
        code = build_code(self.address, dst, ack=0)
        self.peer = None
        self.handshake_attempts = 1
        self._set_phase(t, "initiate", Phase.HANDSHAKING)
        self._pending_code = code
        return Frame(FrameKind.HANDSHAKE, payload=code)

    def retry_handshake(self, t: float) -> Frame | None:
        """Resend the pending request, or give up after the retry budget."""
        if self.phase is not Phase.HANDSHAKING:
            return None
        if self.handshake_attempts >= HANDSHAKE_MAX_RETRIES:
            self.peer = None
            self._set_phase(t, "handshake_failed", Phase.IDLE)
            return None
        self.handshake_attempts += 1
        self._trace(t, "handshake_retry", self.phase)
        return Frame(FrameKind.HANDSHAKE, payload=self._pending_code)

    def on_handshake(self, code: HandshakeCode, t: float = 0.0) -> Frame | None:
        if code.dst != self.address:
            return None  # someone else's traffic; never change state
        if code.ack == 0:
            reply = build_code(self.address, code.src, ack=1)
            self.peer = code.src
            self._set_phase(t, "handshake_accept", Phase.CONNECTED)
            return Frame(FrameKind.HANDSHAKE, payload=reply)
        if (self.phase is Phase.HANDSHAKING
                and self._pending_code is not None
                and code.src == self._pending_code.dst):
            self.peer = code.src
            self._set_phase(t, "handshake_complete", Phase.CONNECTED)
        return None

    # Transmit arbitration

    def next_frame(self, t: float = 0.0) -> Frame | None:
        """Data strictly before voice; stop-and-wait blocks new data frames."""
        if self.phase not in (Phase.CONNECTED, Phase.DIVERTING):
            raise NotConnectedError(f"phase is {self.phase.value}")
        q = self.queues
        if q.data_queue:
            if self.outstanding is not None:
                return None  # waiting on the ack; voice must not jump the queue
            frame = Frame(FrameKind.DATA, seq=self.tx_seq,
                          payload=q.data_queue.pop(0))
            self.outstanding = frame
            self.timeout_count = 0
            self._trace(t, "data_tx", self.phase)
            return frame
        if q.voice_queue:
            self._trace(t, "voice_tx", self.phase)
            return Frame(FrameKind.VOICE, seq=self.tx_seq,
                         payload=q.voice_queue.pop(0))
        return None

    # ARQ

    def on_ack(self, seq: int, t: float = 0.0) -> None:
        if self.outstanding is not None and seq == self.tx_seq:
            self.outstanding = None
            self.tx_seq ^= 1
            self.timeout_count = 0
            if self.phase is Phase.DIVERTING:
                self._set_phase(t, "ack_rx", Phase.CONNECTED)
            else:
                self._trace(t, "ack_rx", self.phase)

    def on_timeout(self, t: float = 0.0) -> Frame | None:
        """Retransmit the outstanding frame; repeated silence smells like jam."""
        if self.outstanding is None:
            return None
        self.timeout_count += 1
        self._trace(t, "timeout", self.phase)
        if self.timeout_count >= TIMEOUTS_AS_JAM:
            self.timeout_count = 0
            self.on_jam_detected(t)
        self._trace(t, "retransmit", self.phase)
        return self.outstanding

    # Receive side

    def on_data(self, frame: Frame, t: float = 0.0) -> tuple[str | None, Frame]:
        """Returns (payload to deliver or None for a duplicate, ack frame)."""
        if self.phase is Phase.DIVERTING:
            self._set_phase(t, "traffic_resumed", Phase.CONNECTED)
        ack = Frame(FrameKind.ACK, seq=frame.seq)
        if frame.seq == self.rx_seq:
            self.rx_seq ^= 1
            self._trace(t, "data_rx", self.phase)
            return frame.payload, ack
        self._trace(t, "data_dup", self.phase)
        return None, ack

    def on_voice(self, frame: Frame, t: float = 0.0) -> Any:
        self._trace(t, "voice_rx", self.phase)
        return frame.payload

    # Jam detection and diversion

    def feed_margins(self, margins, t: float = 0.0) -> bool:
        """Despread margins from received frames; True when jamming detected.

        The alarm fires on JAM_MARGIN_RUN consecutive bits below the margin
        threshold; the run survives frame boundaries until a good bit resets
        it. Detection also triggers the diversion response.
        """
        for m in margins:
            if m < JAM_MARGIN_THRESHOLD:
                self._margin_run += 1
                if self._margin_run >= JAM_MARGIN_RUN:
                    self._margin_run = 0
                    self.on_jam_detected(t)
                    return True
            else:
                self._margin_run = 0
        return False

    def note_clean_frame(self) -> None:
        """An intact frame proves the channel still works; clear the alarm run."""
        self._margin_run = 0

    def on_jam_detected(self, t: float = 0.0) -> int | None:
        """Hop to the next channel in the shared schedule; None while idle."""
        if self.phase not in (Phase.CONNECTED, Phase.DIVERTING) or self.hop is None:
            return None
        self._set_phase(t, "jam_detected", Phase.DIVERTING)
        old_phase = self.phase
        self.active_channel = self.hop.advance()
        self._trace(t, "hop", old_phase)
        return self.active_channel

    def attach_hop_schedule(self, hop: HopSchedule) -> None:
        self.hop = hop
        self.active_channel = hop.current
