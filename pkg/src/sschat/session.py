"""Two-node chat session over the simulated radio channel.

Hosts both endpoints of a link on one virtual clock: handshake frames ride
the pulse-coded 14-bit codes, every frame header and handshake payload is
spread and FSK-modulated, chat text travels as dual-tone audio inside DATA
frames, and the whole thing passes through the jammable channel model.
Everything is event-driven off a single heap, so a seeded config replays
bit for bit.
"""

import heapq
import itertools
from dataclasses import dataclass
from typing import Any, Callable

import numpy as np

from . import dtmf
from .config import SessionConfig
from .link import (
    ARQ_TIMEOUT_FACTOR,
    Frame,
    FrameKind,
    HopSchedule,
    LinkNode,
    Phase,
    build_header_bits,
    parse_header_bits,
)
from .phy import (
    ChannelPlan,
    ChannelState,
    PnSequence,
    SweepJammer,
    channel_transmit,
    despread,
    fsk_demodulate,
    fsk_modulate,
    spread,
)
from .pulse import (
    HandshakeCode,
    PulseError,
    encode_pulses,
    parse_bits,
    recover_pulses,
    serialize_bits,
)
from .sampling import SampleBuffer

TURNAROUND_S = 0.02  # half-duplex settle time between receive and transmit
VOICE_CHUNK_SAMPLES = 800
VOICE_TONE_HZ = 440.0
_SESSION_SEED_TAG = 0x53657373


class SessionError(Exception):
    pass


@dataclass(frozen=True)
class Delivery:
    """One payload that made it to the far side."""

    t: float
    src: int
    dst: int
    kind: str  # "text" or "voice"
    text: str | None = None
    chunk: int | None = None


@dataclass
class _AirFrame:
    frame: Frame
    tx_addr: int
    channel: int
    legs: list[SampleBuffer]
    airtime: float


def _check_char(text: str, alphabet: str) -> str:
    """Tiny integrity check so a corrupted frame is dropped, not delivered.

    The 14-bit headers survive jamming long after the audio payload has
    degraded, so the receiver needs its own way to tell a damaged DATA frame
    from a clean one before acknowledging it.
    """
    return alphabet[sum(ord(c) for c in text) % len(alphabet)]


class ChatSession:
    """Both ends of a chat link plus the channel between them."""

    def __init__(self, cfg: SessionConfig,
                 events_hook: Callable[[str, dict], None] | None = None):
        self.cfg = cfg
        self.t = 0.0
        self.events_hook = events_hook
        self._heap: list = []
        self._counter = itertools.count()

        self.trace: list[str] = []
        self.node_a = LinkNode(cfg.node_a, cfg.start_channel, tracer=self._on_trace)
        self.node_b = LinkNode(cfg.node_b, cfg.start_channel, tracer=self._on_trace)
        for node in (self.node_a, self.node_b):
            node.attach_hop_schedule(HopSchedule(
                cfg.seed, cfg.node_a, cfg.node_b,
                cfg.start_channel, cfg.channel_count))

        self.pn = PnSequence.m_sequence(cfg.pn_degree)
        self.plan = ChannelPlan(channel_count=cfg.channel_count)
        # The sweep begins on the link's starting channel, the worst case
        # for the link and the interesting one to watch.
        self.jammer = SweepJammer(
            dwell_time=cfg.jam_dwell_s,
            power_dbm=cfg.jam_power_dbm,
            sweep_order=self._sweep_from(cfg.start_channel),
            enabled=cfg.jammer_enabled,
            tone_hz=cfg.jam_tone_hz)

        ss = np.random.SeedSequence([_SESSION_SEED_TAG, cfg.seed])
        streams = ss.spawn(2)
        self._noise_rng = {
            cfg.node_a: np.random.default_rng(streams[0]),
            cfg.node_b: np.random.default_rng(streams[1]),
        }

        self._alphabet = dtmf.default_table().characters
        self._busy_until = {cfg.node_a: 0.0, cfg.node_b: 0.0}
        self._arq_token = {cfg.node_a: 0, cfg.node_b: 0}
        self._hs_token = {cfg.node_a: 0, cfg.node_b: 0}
        self._voice_counter = {cfg.node_a: 0, cfg.node_b: 0}
        self.transcript: list[Delivery] = []
        self.handshake_failed = False
        self.last_leg: SampleBuffer | None = None

    # Public driving surface

    def node(self, addr: int) -> LinkNode:
        for n in (self.node_a, self.node_b):
            if n.address == addr:
                return n
        raise SessionError(f"no node with address {addr}")

    def peer_of(self, addr: int) -> LinkNode:
        return self.node_b if addr == self.node_a.address else self.node_a

    def connect(self, t: float | None = None) -> None:
        """Start the handshake from node_a; completion shows up in the trace."""
        t = self.t if t is None else t
        frame = self.node_a.initiate(self.node_b.address, t)
        self._send_at(self.node_a, frame, max(t, self._busy_until[self.node_a.address]))

    def submit_text(self, addr: int, text: str) -> None:
        """Queue chat text, split into frame-sized chunks."""
        table = dtmf.default_table()
        unknown = "".join(sorted({c for c in text if c not in table}))
        if unknown:
            raise dtmf.UnknownCharacterError(unknown)
        node = self.node(addr)
        k = self.cfg.chars_per_frame
        for i in range(0, len(text), k):
            node.queues.offer_data(text[i:i + k])
        self._kick(node, self.t)

    def submit_voice(self, addr: int, chunks: int = 1) -> None:
        node = self.node(addr)
        for _ in range(chunks):
            node.queues.offer_voice(self._voice_counter[addr])
            self._voice_counter[addr] += 1
        self._kick(node, self.t)

    def _sweep_from(self, channel: int) -> tuple[int, ...]:
        n = self.cfg.channel_count
        return tuple((channel + i) % n for i in range(n))

    def set_jammer(self, enabled: bool, dwell_s: float | None = None,
                   power_dbm: float | None = None) -> None:
        if dwell_s is not None:
            if dwell_s <= 0:
                raise ValueError("dwell must be positive")
            self.jammer.dwell_time = dwell_s
        if power_dbm is not None:
            self.jammer.power_dbm = power_dbm
        if enabled and not self.jammer.enabled:
            # Re-aim the sweep at the link so turning the source on has an
            # effect this dwell, not 25 dwells from now.
            self.jammer.sweep_order = self._sweep_from(self.node_a.active_channel)
            self.jammer.origin_s = self.t
        self.jammer.enabled = enabled

    def run(self, until: float) -> None:
        """Process every event with timestamp <= until."""
        while self._heap and self._heap[0][0] <= until:
            self.t, _, fn, args = heapq.heappop(self._heap)
            fn(self.t, *args)
        self.t = max(self.t, until)

    def run_until_idle(self, limit: float = 36000.0) -> bool:
        """Drain the event queue; False if the time limit cut it short."""
        while self._heap:
            if self._heap[0][0] > limit:
                return False
            self.t, _, fn, args = heapq.heappop(self._heap)
            fn(self.t, *args)
        return True

    @property
    def connected(self) -> bool:
        return (self.node_a.phase in (Phase.CONNECTED, Phase.DIVERTING)
                and self.node_b.phase in (Phase.CONNECTED, Phase.DIVERTING))

    def received_text(self, addr: int) -> str:
        return "".join(d.text for d in self.transcript
                       if d.dst == addr and d.kind == "text")

    # Event plumbing

    def _schedule(self, t: float, fn, *args) -> None:
        heapq.heappush(self._heap, (t, next(self._counter), fn, args))

    def _emit(self, kind: str, body: dict) -> None:
        if self.events_hook:
            self.events_hook(kind, body)

    def _on_trace(self, line: str) -> None:
        self.trace.append(line)
        t, node, event, old, new, channel = line.split()
        self._emit("link_event", {
            "ts": float(t), "node": int(node), "event": event,
            "old_phase": old, "new_phase": new, "channel": int(channel)})

    # Transmit path

    def _kick(self, node: LinkNode, t: float) -> None:
        self._schedule(max(t, self._busy_until[node.address]), self._try_send, node)

    def _try_send(self, t: float, node: LinkNode) -> None:
        if node.phase not in (Phase.CONNECTED, Phase.DIVERTING):
            return
        if t < self._busy_until[node.address]:
            self._schedule(self._busy_until[node.address], self._try_send, node)
            return
        frame = node.next_frame(t)
        if frame is not None:
            self._transmit(node, frame, t)
            if frame.kind is FrameKind.VOICE:
                self._kick(node, t)  # voice does not wait for an ack

    def _send_at(self, node: LinkNode, frame: Frame, t: float) -> None:
        self._schedule(t, self._do_send, node, frame)

    def _do_send(self, t: float, node: LinkNode, frame: Frame) -> None:
        if t < self._busy_until[node.address]:
            self._schedule(self._busy_until[node.address], self._do_send, node, frame)
            return
        self._transmit(node, frame, t)

    def _spread_fsk(self, bits: list[int]) -> SampleBuffer:
        chips = spread(bits, self.pn)
        chip_bits = ((chips + 1) // 2).astype(int).tolist()
        return fsk_modulate(chip_bits, self.cfg.fsk_mark_hz, self.cfg.fsk_space_hz)

    def _data_waveform(self, text: str) -> SampleBuffer:
        return dtmf.encode_text(text + _check_char(text, self._alphabet))

    def _voice_waveform(self, chunk: int) -> SampleBuffer:
        t = np.arange(VOICE_CHUNK_SAMPLES) / dtmf.DEFAULT_SAMPLE_RATE
        phase = 2 * np.pi * (VOICE_TONE_HZ * t + 0.1 * chunk)
        return SampleBuffer(0.3 * np.sin(phase), dtmf.DEFAULT_SAMPLE_RATE)

    def _transmit(self, node: LinkNode, frame: Frame, t: float) -> None:
        header = self._spread_fsk(build_header_bits(frame.kind, frame.seq))
        legs = [header]
        if frame.kind is FrameKind.HANDSHAKE:
            # The controller hands the code to the radio as a pulse train;
            # running the round trip here keeps that interface honest.
            bits = serialize_bits(frame.payload)
            recovered = recover_pulses(encode_pulses(bits).samples)
            if recovered != bits:
                raise SessionError("pulse interface corrupted a clean code")
            legs.append(self._spread_fsk(bits))
        elif frame.kind is FrameKind.DATA:
            legs.append(self._data_waveform(frame.payload))
        elif frame.kind is FrameKind.VOICE:
            legs.append(self._voice_waveform(frame.payload))

        channel = node.active_channel
        state = ChannelState(active_channel=channel,
                             noise_power_dbm=self.cfg.noise_dbm,
                             jammer=self.jammer, plan=self.plan)
        rng = self._noise_rng[node.address] if self.cfg.noise_dbm is not None else None
        t_leg = t
        passed = []
        for leg in legs:
            passed.append(channel_transmit(leg, state, t_leg, rng))
            t_leg += leg.duration
        airtime = t_leg - t

        air = _AirFrame(frame, node.address, channel, passed, airtime)
        self._busy_until[node.address] = t + airtime + TURNAROUND_S
        self._schedule(t + airtime, self._deliver, air)

        if frame.kind is FrameKind.DATA:
            self._arq_token[node.address] += 1
            self._schedule(t + ARQ_TIMEOUT_FACTOR * airtime, self._arq_timeout,
                           node, self._arq_token[node.address])
        elif frame.kind is FrameKind.HANDSHAKE and node.phase is Phase.HANDSHAKING:
            self._hs_token[node.address] += 1
            self._schedule(t + ARQ_TIMEOUT_FACTOR * airtime, self._hs_timeout,
                           node, self._hs_token[node.address])

    # Timers

    def _arq_timeout(self, t: float, node: LinkNode, token: int) -> None:
        if token != self._arq_token[node.address] or node.outstanding is None:
            return
        frame = node.on_timeout(t)
        if frame is not None:
            self._schedule(max(t, self._busy_until[node.address]),
                           self._do_send, node, frame)

    def _hs_timeout(self, t: float, node: LinkNode, token: int) -> None:
        if token != self._hs_token[node.address] or node.phase is not Phase.HANDSHAKING:
            return
        frame = node.retry_handshake(t)
        if frame is not None:
            self._schedule(max(t, self._busy_until[node.address]),
                           self._do_send, node, frame)
        else:
            self.handshake_failed = True
            self._emit("handshake_failed", {"ts": t, "node": node.address})

    # Receive path

    def _despread_leg(self, leg: SampleBuffer) -> tuple[list[int], np.ndarray]:
        # Soft chip metrics into the correlator, not hard decisions: the
        # processing gain lives in the correlation, and slicing chips first
        # would throw it away the moment a jammer captures the discriminator.
        _, metrics = fsk_demodulate(leg, self.cfg.fsk_mark_hz, self.cfg.fsk_space_hz)
        usable = (len(metrics) // self.pn.length) * self.pn.length
        return despread(metrics[:usable], self.pn)

    def _recover_code(self, leg: SampleBuffer) -> tuple[HandshakeCode | None, np.ndarray]:
        bits, margins = self._despread_leg(leg)
        prt_bits = recover_pulses(encode_pulses(bits).samples)
        try:
            if any(b is None for b in prt_bits):
                raise PulseError("erasure on the recovered pulse train")
            return parse_bits([b for b in prt_bits if b is not None]), margins
        except PulseError:
            return None, margins

    def _decode_data(self, leg: SampleBuffer) -> str | None:
        period = dtmf.SYMBOL_SAMPLES + dtmf.GAP_SAMPLES
        n = len(leg) // period
        chars = []
        for i in range(n):
            seg = SampleBuffer(leg.samples[i * period:i * period + dtmf.SYMBOL_SAMPLES],
                               leg.sample_rate)
            try:
                chars.append(dtmf.decode_symbol(seg))
            except dtmf.SymbolDecodeError:
                return None
        if not chars:
            return None
        text, check = "".join(chars[:-1]), chars[-1]
        if check != _check_char(text, self._alphabet):
            return None
        return text

    def _feed_failed_leg(self, rx: LinkNode, margins: np.ndarray, t: float) -> None:
        """Jam evidence counts only against legs that actually failed.

        A frame that still parses proves the channel works, however ugly the
        margins, so it resets the alarm instead; and a node with a frame
        outstanding leaves detection to its own timeout heuristic, because a
        failed leg on its side may have been the ack it is waiting for.
        """
        if rx.outstanding is None:
            rx.feed_margins(margins, t)

    def _deliver(self, t: float, air: _AirFrame) -> None:
        rx = self.peer_of(air.tx_addr)
        if rx.active_channel != air.channel:
            return  # tuned elsewhere; the waveform goes unheard
        self.last_leg = air.legs[0]

        header_bits, h_margins = self._despread_leg(air.legs[0])
        parsed = parse_header_bits(header_bits)
        if parsed is None:
            self._feed_failed_leg(rx, h_margins, t)
            return
        kind, seq = parsed

        if kind is FrameKind.ACK:
            rx.on_ack(seq, t)
            self._kick(rx, t)
            return

        if kind is FrameKind.HANDSHAKE:
            code, p_margins = self._recover_code(air.legs[1])
            if code is None:
                self._feed_failed_leg(rx, np.concatenate([h_margins, p_margins]), t)
                return
            rx.note_clean_frame()
            reply = rx.on_handshake(code, t)
            if reply is not None:
                self._send_at(rx, reply, max(t + TURNAROUND_S,
                                             self._busy_until[rx.address]))
            if rx.phase is Phase.CONNECTED:
                self._hs_token[rx.address] += 1  # cancel any pending retry
                # Queued traffic starts after the reply (if any) is on the
                # air; the earlier-scheduled send wins the same-time tie.
                self._schedule(max(t + TURNAROUND_S, self._busy_until[rx.address]),
                               self._try_send, rx)
            return

        if rx.phase not in (Phase.CONNECTED, Phase.DIVERTING):
            return  # traffic for a link this node has not established

        if kind is FrameKind.DATA:
            text = self._decode_data(air.legs[1])
            if text is None:
                self._feed_failed_leg(rx, h_margins, t)
                return
            rx.note_clean_frame()
            delivered, ack = rx.on_data(Frame(FrameKind.DATA, seq=seq, payload=text), t)
            if delivered is not None:
                d = Delivery(t, air.tx_addr, rx.address, "text", text=delivered)
                self.transcript.append(d)
                self._emit("chat_text", {
                    "ts": t, "src": d.src, "dst": d.dst, "text": delivered})
            self._send_at(rx, ack, max(t + TURNAROUND_S, self._busy_until[rx.address]))
            self._schedule(max(t + TURNAROUND_S, self._busy_until[rx.address]),
                           self._try_send, rx)
            return

        if kind is FrameKind.VOICE:
            rx.note_clean_frame()
            chunk = rx.on_voice(air.frame, t)
            d = Delivery(t, air.tx_addr, rx.address, "voice", chunk=chunk)
            self.transcript.append(d)
            self._emit("voice_marker", {
                "ts": t, "src": d.src, "dst": d.dst, "chunk": chunk})


def run_chat(cfg: SessionConfig, script: list[tuple[int, str]],
             voice_chunks: int = 0,
             events_hook: Callable[[str, dict], None] | None = None,
             limit: float = 36000.0) -> ChatSession:
    """Convenience driver: connect, queue the scripted lines, run to quiet.

    `script` is a list of (sender address, text) pairs queued up front;
    `voice_chunks` adds that many voice offers on node_a to exercise the
    data-over-voice rule.
    """
    session = ChatSession(cfg, events_hook=events_hook)
    session.connect()
    for addr, text in script:
        session.submit_text(addr, text)
    if voice_chunks:
        session.submit_voice(cfg.node_a, voice_chunks)
    session.run_until_idle(limit)
    return session
