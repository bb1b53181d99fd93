"""Websocket gateway: the live simulation behind a line-oriented protocol.

Each connected console speaks newline-delimited JSON (one object per line)
as documented in docs/protocol.md. All simulation mutation happens on the
server's event loop, so concurrent consoles cannot race the session state.
"""

import asyncio
import contextlib
import json
from pathlib import Path

import numpy as np
from fastapi import FastAPI, WebSocket, WebSocketDisconnect
from fastapi.staticfiles import StaticFiles

from .config import SessionConfig
from .session import ChatSession

PROTOCOL_VERSION = 1
TICK_WALL_S = 0.05
SPECTRUM_EVERY_S = 1.0  # simulated seconds between snapshots
SPECTRUM_BINS = 48


def _line(kind: str, ts: float, **body) -> str:
    msg = {"kind": kind, "ts": round(ts, 6)}
    msg.update(body)
    return json.dumps(msg)


class Gateway:
    def __init__(self, cfg: SessionConfig, time_scale: float = 25.0,
                 manual_clock: bool = False):
        self.cfg = cfg
        self.time_scale = time_scale
        self.manual_clock = manual_clock
        self.session = ChatSession(cfg, events_hook=self._on_event)
        self.pending: list[str] = []
        self.sockets: list[WebSocket] = []
        self._last_spectrum = -SPECTRUM_EVERY_S
        self._task: asyncio.Task | None = None

    # Session events -> protocol lines

    def _on_event(self, kind: str, body: dict) -> None:
        ts = body.pop("ts", self.session.t)
        self.pending.append(_line(kind, ts, **body))

    def _spectrum_line(self) -> str:
        leg = self.session.last_leg
        if leg is None or len(leg) == 0:
            bins = [0.0] * SPECTRUM_BINS
        else:
            mags = np.abs(np.fft.rfft(leg.samples))
            chunks = np.array_split(mags, SPECTRUM_BINS)
            peak = max(float(np.max(mags)), 1e-12)
            bins = [round(float(np.max(c)) / peak, 4) for c in chunks]
        return _line("spectrum_snapshot", self.session.t,
                     channel=self.session.node_a.active_channel, bins=bins)

    def _jammer_line(self) -> str:
        j = self.session.jammer
        return _line("jammer_state", self.session.t, enabled=j.enabled,
                     dwell_s=j.dwell_time, power_dbm=j.power_dbm)

    # Clock

    def advance(self, sim_seconds: float) -> None:
        self.session.run(self.session.t + sim_seconds)
        if self.session.t - self._last_spectrum >= SPECTRUM_EVERY_S:
            self._last_spectrum = self.session.t
            self.pending.append(self._spectrum_line())

    async def _flush(self) -> None:
        lines, self.pending = self.pending, []
        for line in lines:
            for ws in list(self.sockets):
                try:
                    await ws.send_text(line)
                except Exception:
                    with contextlib.suppress(ValueError):
                        self.sockets.remove(ws)

    async def _pacing_loop(self) -> None:
        while True:
            await asyncio.sleep(TICK_WALL_S)
            self.advance(self.time_scale * TICK_WALL_S)
            await self._flush()

    # Console messages

    async def handle(self, ws: WebSocket, addr: int, raw: str) -> None:
        try:
            msg = json.loads(raw)
            if not isinstance(msg, dict):
                raise ValueError("expected a JSON object")
            kind = msg["kind"]
            if kind == "chat_text":
                self.session.submit_text(addr, str(msg["text"]))
            elif kind == "voice":
                self.session.submit_voice(addr, int(msg.get("chunks", 1)))
            elif kind == "jammer_command":
                self.session.set_jammer(
                    bool(msg["enabled"]),
                    dwell_s=msg.get("dwell_s"),
                    power_dbm=msg.get("power_dbm"))
                self.pending.append(self._jammer_line())
            elif kind == "advance":
                if not self.manual_clock:
                    raise ValueError("advance is only valid on a manual clock")
                self.advance(float(msg["seconds"]))
            else:
                raise ValueError(f"unknown kind {kind!r}")
        except (KeyError, ValueError, TypeError) as exc:
            await ws.send_text(_line("error", self.session.t, message=str(exc)))
        await self._flush()


def create_app(cfg: SessionConfig | None = None, time_scale: float = 25.0,
               static_dir: str | None = None,
               manual_clock: bool = False) -> FastAPI:
    cfg = cfg or SessionConfig()
    gw = Gateway(cfg, time_scale=time_scale, manual_clock=manual_clock)

    @contextlib.asynccontextmanager
    async def lifespan(app: FastAPI):
        gw.session.connect()
        if not gw.manual_clock:
            gw._task = asyncio.create_task(gw._pacing_loop())
        yield
        if gw._task:
            gw._task.cancel()
            with contextlib.suppress(asyncio.CancelledError):
                await gw._task

    app = FastAPI(lifespan=lifespan)
    app.state.gateway = gw

    @app.websocket("/ws/{addr}")
    async def ws_endpoint(ws: WebSocket, addr: int):
        await ws.accept()
        if addr not in (cfg.node_a, cfg.node_b):
            await ws.send_text(_line(
                "error", gw.session.t,
                message=f"no node {addr} in this session"))
            await ws.close()
            return
        node = gw.session.node(addr)
        gw.sockets.append(ws)
        await ws.send_text(_line(
            "hello", gw.session.t, protocol=PROTOCOL_VERSION, node=addr,
            peer=gw.session.peer_of(addr).address,
            channel=node.active_channel))
        try:
            while True:
                raw = await ws.receive_text()
                await gw.handle(ws, addr, raw)
        except WebSocketDisconnect:
            with contextlib.suppress(ValueError):
                gw.sockets.remove(ws)

    if static_dir:
        app.mount("/", StaticFiles(directory=static_dir, html=True),
                  name="console")
    return app
