"""Link controller tests: handshake machine, ARQ, arbitration, hopping."""

import itertools

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sschat.link import (
    HANDSHAKE_MAX_RETRIES,
    BusyError,
    Frame,
    FrameKind,
    HopSchedule,
    LinkNode,
    NotConnectedError,
    Phase,
    SelfAddressError,
    build_header_bits,
    parse_header_bits,
)
from sschat.phy import CHANNEL_COUNT, JAM_MARGIN_THRESHOLD


def connected_pair(a_addr=8, b_addr=1, seed=0):
    a = LinkNode(a_addr)
    b = LinkNode(b_addr)
    req = a.initiate(b_addr)
    reply = b.on_handshake(req.payload)
    assert reply is not None
    a.on_handshake(reply.payload)
    assert a.phase is Phase.CONNECTED and b.phase is Phase.CONNECTED
    for node in (a, b):
        node.attach_hop_schedule(HopSchedule(seed, a_addr, b_addr, start_channel=0))
    return a, b


class TestHeaderBits:
    @pytest.mark.parametrize("kind", list(FrameKind))
    @pytest.mark.parametrize("seq", [0, 1])
    def test_roundtrip(self, kind, seq):
        assert parse_header_bits(build_header_bits(kind, seq)) == (kind, seq)

    def test_bad_sync_rejected(self):
        bits = build_header_bits(FrameKind.DATA, 0)
        bits[0] ^= 1
        assert parse_header_bits(bits) is None

    def test_bad_parity_rejected(self):
        bits = build_header_bits(FrameKind.DATA, 1)
        bits[5] ^= 1
        assert parse_header_bits(bits) is None

    def test_bad_length_rejected(self):
        assert parse_header_bits([1, 0, 1, 1, 0, 0, 1]) is None

    def test_erasure_rejected(self):
        bits = build_header_bits(FrameKind.ACK, 0)
        bits[6] = None
        assert parse_header_bits(bits) is None


class TestHandshake:
    def test_initiate_builds_paper_code(self):
        frame = LinkNode(8).initiate(1)
        assert frame.kind is FrameKind.HANDSHAKE
        code = frame.payload
        assert (code.src, code.dst, code.ack, code.start) == (8, 1, 0, 1)

    def test_responder_swaps_addresses(self):
        b = LinkNode(1)
        reply = b.on_handshake(LinkNode(8).initiate(1).payload)
        code = reply.payload
        assert (code.src, code.dst, code.ack) == (1, 8, 1)
        assert b.phase is Phase.CONNECTED and b.peer == 8

    def test_wrong_destination_ignored(self):
        bystander = LinkNode(5)
        before = (bystander.phase, bystander.peer)
        assert bystander.on_handshake(LinkNode(8).initiate(1).payload) is None
        assert (bystander.phase, bystander.peer) == before
        assert bystander.trace_lines == []

    def test_initiator_completes_on_ack(self):
        a = LinkNode(8)
        b = LinkNode(1)
        reply = b.on_handshake(a.initiate(1).payload)
        assert a.phase is Phase.HANDSHAKING
        assert a.on_handshake(reply.payload) is None
        assert a.phase is Phase.CONNECTED and a.peer == 1

    def test_initiate_while_busy(self):
        a, _ = connected_pair()
        with pytest.raises(BusyError):
            a.initiate(5)

    def test_initiate_to_self(self):
        with pytest.raises(SelfAddressError):
            LinkNode(8).initiate(8)

    def test_retry_budget(self):
        a = LinkNode(8)
        a.initiate(1)
        frames = []
        for _ in range(HANDSHAKE_MAX_RETRIES + 2):
            f = a.retry_handshake(t=1.0)
            if f is None:
                break
            frames.append(f)
        assert len(frames) == HANDSHAKE_MAX_RETRIES - 1
        assert a.phase is Phase.IDLE
        assert any("handshake_failed" in line for line in a.trace_lines)

    def test_stray_ack_while_idle(self):
        idle = LinkNode(3)
        from sschat.pulse import build_code
        assert idle.on_handshake(build_code(9, 3, 1)) is None
        assert idle.phase is Phase.IDLE


class TestArbitration:
    def test_data_beats_voice(self):
        a, _ = connected_pair()
        a.queues.offer_data("hi")
        a.queues.offer_voice("chunk")
        frame = a.next_frame()
        assert frame.kind is FrameKind.DATA and frame.payload == "hi"

    def test_voice_when_no_data(self):
        a, _ = connected_pair()
        a.queues.offer_voice("chunk")
        frame = a.next_frame()
        assert frame.kind is FrameKind.VOICE and frame.payload == "chunk"

    def test_both_empty(self):
        a, _ = connected_pair()
        assert a.next_frame() is None

    def test_stop_and_wait_blocks_second_data(self):
        a, _ = connected_pair()
        a.queues.offer_data("one")
        a.queues.offer_data("two")
        assert a.next_frame().payload == "one"
        assert a.next_frame() is None  # waiting for the ack
        a.on_ack(0)
        assert a.next_frame().payload == "two"

    def test_not_connected(self):
        with pytest.raises(NotConnectedError):
            LinkNode(8).next_frame()

    def test_priority_property_randomized(self):
        # 10^4 arbitration steps with random offers and acks: voice never
        # goes out while data is waiting.
        import random
        rnd = random.Random(123)
        a, _ = connected_pair()
        for step in range(10_000):
            action = rnd.random()
            if action < 0.3:
                a.queues.offer_data(f"d{step}")
            elif action < 0.6:
                a.queues.offer_voice(f"v{step}")
            elif action < 0.8 and a.outstanding is not None:
                a.on_ack(a.tx_seq)
            data_waiting = bool(a.queues.data_queue)
            frame = a.next_frame()
            if frame is not None and frame.kind is FrameKind.VOICE:
                assert not data_waiting


class TestArq:
    def drive(self, payloads, losses):
        """One-way exchange with a scripted loss pattern.

        Each transmission (data attempt, then ack attempt if the data got
        through) consumes one loss bit; exhausted patterns lose nothing.
        """
        a, b = connected_pair()
        for p in payloads:
            a.queues.offer_data(p)
        delivered = []
        it = iter(losses)

        def lost():
            return next(it, 0) == 1

        for _ in range(200):
            frame = a.next_frame()
            if frame is None:
                frame = a.on_timeout()
            if frame is None:
                break
            if lost():
                continue
            payload, ack = b.on_data(frame)
            if payload is not None:
                delivered.append(payload)
            if lost():
                continue
            a.on_ack(ack.seq)
        return a, b, delivered

    def test_clean_exchange(self):
        _, _, delivered = self.drive(["p0", "p1", "p2"], [])
        assert delivered == ["p0", "p1", "p2"]

    def test_lost_data_recovered(self):
        _, _, delivered = self.drive(["p0", "p1"], [1, 0, 0, 0, 0])
        assert delivered == ["p0", "p1"]

    def test_lost_ack_no_duplicate_delivery(self):
        _, _, delivered = self.drive(["p0", "p1"], [0, 1])
        assert delivered == ["p0", "p1"]

    def test_ack_flips_sequence(self):
        a, b = connected_pair()
        a.queues.offer_data("x")
        frame = a.next_frame()
        assert frame.seq == 0
        _, ack = b.on_data(frame)
        a.on_ack(ack.seq)
        assert a.tx_seq == 1 and a.outstanding is None

    def test_duplicate_data_reacked_not_redelivered(self):
        a, b = connected_pair()
        a.queues.offer_data("x")
        frame = a.next_frame()
        p1, ack1 = b.on_data(frame)
        p2, ack2 = b.on_data(frame)  # retransmission of the same frame
        assert p1 == "x" and p2 is None
        assert ack1.seq == ack2.seq == frame.seq

    def test_exactly_once_all_loss_patterns(self):
        # Model check: every loss pattern of length 10 over a 5-frame
        # exchange still delivers each payload exactly once, in order.
        payloads = [f"m{i}" for i in range(5)]
        for pattern in itertools.product((0, 1), repeat=10):
            _, _, delivered = self.drive(payloads, pattern)
            assert delivered == payloads, pattern

    def test_third_timeout_triggers_hop(self):
        a, _ = connected_pair()
        start = a.active_channel
        a.queues.offer_data("x")
        a.next_frame()
        for _ in range(2):
            assert a.on_timeout() is not None
        assert a.active_channel == start and a.phase is Phase.CONNECTED
        retx = a.on_timeout()  # third consecutive timeout
        assert retx is not None and retx.payload == "x"
        assert a.active_channel != start
        assert a.phase is Phase.DIVERTING


class TestJamDiversion:
    def test_margin_run_triggers_hop(self):
        a, _ = connected_pair()
        start = a.active_channel
        low = [JAM_MARGIN_THRESHOLD / 2] * 8
        assert a.feed_margins(low, t=1.0) is True
        assert a.phase is Phase.DIVERTING
        assert a.active_channel != start
        assert any(" hop " in line for line in a.trace_lines)

    def test_good_bit_resets_run(self):
        a, _ = connected_pair()
        low = [JAM_MARGIN_THRESHOLD / 2] * 7
        assert a.feed_margins(low) is False
        assert a.feed_margins([0.9]) is False
        assert a.feed_margins(low) is False  # run restarted, still short
        assert a.phase is Phase.CONNECTED

    def test_run_survives_frame_boundary(self):
        a, _ = connected_pair()
        assert a.feed_margins([0.1] * 5) is False
        assert a.feed_margins([0.1] * 3) is True

    def test_jam_while_idle_no_action(self):
        node = LinkNode(9)
        assert node.on_jam_detected() is None
        assert node.phase is Phase.IDLE

    def test_second_jam_second_hop(self):
        a, _ = connected_pair()
        first = a.on_jam_detected(t=1.0)
        second = a.on_jam_detected(t=2.0)
        assert first is not None and second is not None and first != second

    def test_reconnects_on_traffic(self):
        a, b = connected_pair()
        a.on_jam_detected()
        assert a.phase is Phase.DIVERTING
        _, ack = a.on_data(Frame(FrameKind.DATA, seq=0, payload="x"))
        assert a.phase is Phase.CONNECTED


class TestHopSchedule:
    def test_peers_derive_identical_sequences(self):
        h1 = HopSchedule(77, 8, 1, start_channel=3)
        h2 = HopSchedule(77, 1, 8, start_channel=3)
        assert [h1.advance() for _ in range(60)] == [h2.advance() for _ in range(60)]

    def test_different_seed_different_sequence(self):
        h1 = HopSchedule(77, 8, 1, start_channel=3)
        h2 = HopSchedule(78, 8, 1, start_channel=3)
        assert [h1.advance() for _ in range(30)] != [h2.advance() for _ in range(30)]

    def test_starts_at_start_channel(self):
        assert HopSchedule(0, 2, 3, start_channel=13).current == 13

    def test_advance_always_changes_channel(self):
        h = HopSchedule(5, 2, 3, start_channel=0)
        prev = h.current
        for _ in range(200):
            nxt = h.advance()
            assert nxt != prev
            assert 0 <= nxt < CHANNEL_COUNT
            prev = nxt

    def test_covers_all_channels(self):
        h = HopSchedule(5, 2, 3, start_channel=0)
        seen = {h.current} | {h.advance() for _ in range(100)}
        assert seen == set(range(CHANNEL_COUNT))


class TestTraceFormat:
    def test_line_fields(self):
        a, b = connected_pair()
        a.queues.offer_data("x")
        a.next_frame(t=1.25)
        line = a.trace_lines[-1]
        parts = line.split()
        assert len(parts) == 6
        t, node, event, old, new, chan = parts
        assert float(t) == 1.25
        assert int(node) == 8
        assert event == "data_tx"
        assert old in Phase.__members__ and new in Phase.__members__
        assert 0 <= int(chan) < CHANNEL_COUNT

    @settings(max_examples=20, deadline=None)
    @given(st.integers(1, 63), st.integers(1, 63))
    def test_handshake_safety_property(self, x, y):
        # Whenever two nodes both reach CONNECTED, the reply carried the
        # interchanged addresses with ack=1.
        if x == y:
            return
        a = LinkNode(x)
        b = LinkNode(y)
        req = a.initiate(y)
        reply = b.on_handshake(req.payload)
        assert reply.payload.src == req.payload.dst
        assert reply.payload.dst == req.payload.src
        assert reply.payload.ack == 1
        a.on_handshake(reply.payload)
        assert a.phase is b.phase is Phase.CONNECTED
        assert a.peer == y and b.peer == x
