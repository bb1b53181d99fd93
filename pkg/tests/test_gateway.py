"""Websocket gateway tests, driven entirely through the wire protocol."""

import json

import pytest
from fastapi.testclient import TestClient

from sschat.config import SessionConfig
from sschat.gateway import SPECTRUM_BINS, create_app

SYNC = json.dumps({"kind": "__sync__"})


def make_client(**cfg_kw) -> TestClient:
    app = create_app(SessionConfig(**cfg_kw), manual_clock=True)
    return TestClient(app)


def send(ws, **msg) -> None:
    ws.send_text(json.dumps(msg))


def drain(ws) -> list[dict]:
    """Collect everything queued on this socket, using an error echo as fence."""
    ws.send_text(SYNC)
    out = []
    while True:
        msg = json.loads(ws.receive_text())
        if msg["kind"] == "error" and "__sync__" in msg["message"]:
            return out
        out.append(msg)


def of_kind(msgs: list[dict], kind: str) -> list[dict]:
    return [m for m in msgs if m["kind"] == kind]


class TestHello:
    def test_hello_fields_and_order(self):
        with make_client() as client:
            with client.websocket_connect("/ws/8") as ws:
                msg = json.loads(ws.receive_text())
                assert list(msg)[:2] == ["kind", "ts"]
                assert list(msg) == ["kind", "ts", "protocol", "node",
                                     "peer", "channel"]
                assert msg["kind"] == "hello"
                assert msg["protocol"] == 1
                assert msg["node"] == 8 and msg["peer"] == 1
                assert msg["channel"] == 0

    def test_peer_side_hello(self):
        with make_client() as client:
            with client.websocket_connect("/ws/1") as ws:
                msg = json.loads(ws.receive_text())
                assert msg["node"] == 1 and msg["peer"] == 8

    def test_unknown_address_rejected(self):
        with make_client() as client:
            with client.websocket_connect("/ws/5") as ws:
                msg = json.loads(ws.receive_text())
                assert msg["kind"] == "error"
                assert "5" in msg["message"]


class TestChat:
    def test_text_relayed_to_both_consoles(self):
        with make_client() as client:
            with client.websocket_connect("/ws/8") as a, \
                    client.websocket_connect("/ws/1") as b:
                a.receive_text()
                b.receive_text()
                send(a, kind="chat_text", text="hi bob")
                send(a, kind="advance", seconds=30)
                seen_a = drain(a)
                seen_b = drain(b)
                for seen in (seen_a, seen_b):
                    # one chat_text per delivered frame, 4 characters each
                    texts = of_kind(seen, "chat_text")
                    assert "".join(t["text"] for t in texts) == "hi bob"
                    assert all(t["src"] == 8 and t["dst"] == 1 for t in texts)
                events = {m["event"] for m in of_kind(seen_a, "link_event")}
                assert "handshake_accept" in events
                assert "ack_rx" in events

    def test_link_event_field_order(self):
        with make_client() as client:
            with client.websocket_connect("/ws/8") as ws:
                ws.receive_text()
                send(ws, kind="advance", seconds=10)
                ev = of_kind(drain(ws), "link_event")[0]
                assert list(ev) == ["kind", "ts", "node", "event",
                                    "old_phase", "new_phase", "channel"]

    def test_voice_markers(self):
        with make_client() as client:
            with client.websocket_connect("/ws/8") as ws:
                ws.receive_text()
                send(ws, kind="voice", chunks=2)
                send(ws, kind="advance", seconds=30)
                marks = of_kind(drain(ws), "voice_marker")
                assert [m["chunk"] for m in marks] == [0, 1]
                assert all(m["src"] == 8 and m["dst"] == 1 for m in marks)

    def test_spectrum_snapshot_shape(self):
        with make_client() as client:
            with client.websocket_connect("/ws/8") as ws:
                ws.receive_text()
                send(ws, kind="chat_text", text="scan")
                send(ws, kind="advance", seconds=30)
                snaps = of_kind(drain(ws), "spectrum_snapshot")
                assert snaps, "no spectrum after 30 simulated seconds"
                bins = snaps[-1]["bins"]
                assert len(bins) == SPECTRUM_BINS
                assert max(bins) == pytest.approx(1.0)
                assert min(bins) >= 0.0


class TestErrors:
    def test_malformed_line_keeps_socket_alive(self):
        with make_client() as client:
            with client.websocket_connect("/ws/8") as ws:
                ws.receive_text()
                ws.send_text("this is not json")
                err = json.loads(ws.receive_text())
                assert err["kind"] == "error"
                send(ws, kind="chat_text", text="ok")
                send(ws, kind="advance", seconds=30)
                texts = of_kind(drain(ws), "chat_text")
                assert [t["text"] for t in texts] == ["ok"]

    def test_unknown_kind_reported(self):
        with make_client() as client:
            with client.websocket_connect("/ws/8") as ws:
                ws.receive_text()
                send(ws, kind="bogus")
                err = json.loads(ws.receive_text())
                assert err["kind"] == "error"
                assert "bogus" in err["message"]

    def test_missing_field_reported(self):
        with make_client() as client:
            with client.websocket_connect("/ws/8") as ws:
                ws.receive_text()
                send(ws, kind="chat_text")  # no text
                err = json.loads(ws.receive_text())
                assert err["kind"] == "error"

    def test_advance_rejected_on_free_running_clock(self):
        app = create_app(SessionConfig(), manual_clock=False)
        with TestClient(app) as client:
            with client.websocket_connect("/ws/8") as ws:
                ws.receive_text()
                send(ws, kind="advance", seconds=1)
                while True:
                    msg = json.loads(ws.receive_text())
                    if msg["kind"] == "error":
                        assert "manual clock" in msg["message"]
                        break


class TestJammer:
    def test_command_echoes_state(self):
        with make_client() as client:
            with client.websocket_connect("/ws/8") as ws:
                ws.receive_text()
                send(ws, kind="advance", seconds=10)
                drain(ws)
                send(ws, kind="jammer_command", enabled=True,
                     dwell_s=20.0, power_dbm=10.0)
                state = of_kind(drain(ws), "jammer_state")[0]
                assert list(state) == ["kind", "ts", "enabled", "dwell_s",
                                       "power_dbm"]
                assert state["enabled"] is True
                assert state["dwell_s"] == 20.0
                assert state["power_dbm"] == 10.0

    def test_bad_dwell_rejected(self):
        with make_client() as client:
            with client.websocket_connect("/ws/8") as ws:
                ws.receive_text()
                send(ws, kind="jammer_command", enabled=True, dwell_s=0)
                err = json.loads(ws.receive_text())
                assert err["kind"] == "error"
                assert "dwell" in err["message"]

    def test_jam_hop_and_exactly_once_delivery(self):
        text = "the quick brown fox jumps over the lazy dog"
        with make_client() as client:
            with client.websocket_connect("/ws/8") as ws:
                ws.receive_text()
                send(ws, kind="advance", seconds=10)  # handshake in the clear
                drain(ws)
                send(ws, kind="jammer_command", enabled=True,
                     dwell_s=20.0, power_dbm=10.0)
                send(ws, kind="chat_text", text=text)
                send(ws, kind="advance", seconds=120)
                seen = drain(ws)
                events = [m["event"] for m in of_kind(seen, "link_event")]
                assert "jam_detected" in events
                assert "hop" in events
                got = "".join(t["text"] for t in of_kind(seen, "chat_text")
                              if t["dst"] == 1)
                assert got == text


class TestStatic:
    def test_serves_console_files(self, tmp_path):
        (tmp_path / "index.html").write_text("<html>console</html>")
        app = create_app(SessionConfig(), manual_clock=True,
                         static_dir=str(tmp_path))
        with TestClient(app) as client:
            r = client.get("/")
            assert r.status_code == 200
            assert "console" in r.text

    def test_default_config(self):
        app = create_app()
        assert app.state.gateway.session is not None
