"""Command-line front end: chat sessions, codec utilities, experiments, gateway.

Exit codes: 0 success, 2 usage or bad input, 3 handshake failure, 4 I/O.
"""

import argparse
import sys
from pathlib import Path

from . import dtmf, wavio
from .config import ConfigError, SessionConfig, load_config
from .jam import (
    ExperimentConfig,
    FitDivergenceError,
    FitPreconditionError,
    JamAnalysisError,
    NonConvergenceError,
    fit_measurements,
    measure_dwell,
    JamMeasurement,
    read_sweep_csv,
    reference_sweep_path,
    write_sweep_csv,
)
from .session import ChatSession

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_HANDSHAKE = 3
EXIT_IO = 4

DEFAULT_DWELLS = (0.1, 0.2, 0.3, 0.5, 0.7, 1.0)


def _session_config(args) -> SessionConfig:
    cfg = load_config(args.config) if args.config else SessionConfig()
    overrides = {}
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    if getattr(args, "jam", False):
        overrides["jammer_enabled"] = True
    if overrides:
        cfg = SessionConfig(**{**cfg.__dict__, **overrides})
    return cfg


def _read_text(path: str) -> str:
    if path == "-":
        return sys.stdin.read()
    return Path(path).read_text()


# chat


def cmd_chat(args) -> int:
    cfg = _session_config(args)
    out = sys.stdout

    def hook(kind, body):
        ts = body.get("ts", 0.0)
        if kind == "chat_text":
            out.write(f"[{ts:9.3f}] {body['src']} -> {body['dst']}  {body['text']}\n")
        elif kind == "voice_marker":
            out.write(f"[{ts:9.3f}] {body['src']} -> {body['dst']}  "
                      f"(voice chunk {body['chunk']})\n")
        elif kind == "link_event":
            out.write(f"[{ts:9.3f}] node {body['node']}: {body['event']} "
                      f"{body['old_phase']}->{body['new_phase']} "
                      f"ch {body['channel']}\n")

    session = ChatSession(cfg, events_hook=hook)
    session.connect()
    session.run_until_idle()
    if session.handshake_failed:
        print("handshake failed: retry budget exhausted", file=sys.stderr)
        return EXIT_HANDSHAKE

    for raw in sys.stdin:
        line = raw.rstrip("\n")
        if not line:
            continue
        addr, text = cfg.node_a, line
        head, _, rest = line.partition(" ")
        if head.isdigit() and rest:
            maybe = int(head)
            if maybe in (cfg.node_a, cfg.node_b):
                addr, text = maybe, rest
        try:
            session.submit_text(addr, text)
        except dtmf.UnknownCharacterError as exc:
            print(f"cannot encode: {exc}", file=sys.stderr)
            continue
        session.run_until_idle()
    session.run_until_idle()

    if args.out:
        Path(args.out).write_text("\n".join(session.trace) + "\n")
    return EXIT_OK


# encode / decode


def cmd_encode(args) -> int:
    text = _read_text(args.input)
    if text.endswith("\n"):
        text = text[:-1]
    try:
        buf = dtmf.encode_text(text, sample_rate=args.sample_rate)
    except dtmf.UnknownCharacterError as exc:
        print(f"unknown characters: {exc}", file=sys.stderr)
        return EXIT_USAGE
    wavio.write_wav(args.out, buf)
    return EXIT_OK


def cmd_decode(args) -> int:
    buf = wavio.read_wav(args.input)
    text = dtmf.decode_stream(buf).text
    if args.out:
        Path(args.out).write_text(text + "\n")
    else:
        print(text)
    return EXIT_OK


# experiment


def _write_fit_outputs(out_dir: Path, measurements) -> None:
    from . import report

    inc = [m for m in measurements if m.direction == "increasing"]
    try:
        result = fit_measurements(measurements, "increasing")
    except (FitPreconditionError, FitDivergenceError) as exc:
        print(f"fit skipped: {exc}", file=sys.stderr)
        report.render_sweep_figure(out_dir / "sweep.png", measurements)
        return
    (out_dir / "fit_report.txt").write_text(
        report.fit_report_text(measurements, result, "increasing"))
    lo = min(m.dwell_time for m in inc)
    hi = max(m.dwell_time for m in inc)
    report.write_plot_data_csv(out_dir / "fit_curve.csv",
                               report.plot_data_rows(result, lo, hi))
    report.render_sweep_figure(out_dir / "sweep.png", measurements, result)
    print(f"fit rms residual: {result.rms_residual:.4f} dBm "
          f"({result.iterations} iterations)")


def cmd_experiment(args) -> int:
    out_dir = Path(args.out or "experiment_out")
    out_dir.mkdir(parents=True, exist_ok=True)

    if args.fit_only:
        path = Path(args.fit_only)
        measurements = read_sweep_csv(path)
        _write_fit_outputs(out_dir, measurements)
        return EXIT_OK

    try:
        dwells = [float(d) for d in args.dwell.split(",") if d.strip()]
    except ValueError:
        print(f"bad dwell list: {args.dwell!r}", file=sys.stderr)
        return EXIT_USAGE
    if not dwells or any(d <= 0 for d in dwells):
        print("dwell list must be positive seconds", file=sys.stderr)
        return EXIT_USAGE

    cfg = ExperimentConfig(seed=args.seed or 0, power_step_db=args.power_step)
    measurements = []
    for dwell in dwells:
        try:
            inc, dec = measure_dwell(cfg, dwell)
        except NonConvergenceError as exc:
            print(f"dwell {dwell}: {exc}", file=sys.stderr)
            continue
        measurements.append(JamMeasurement(dwell, inc, "increasing"))
        measurements.append(JamMeasurement(dwell, dec, "decreasing"))
        print(f"dwell {dwell:.3f} s: breaks at {inc:+.1f} dBm rising, "
              f"{dec:+.1f} dBm falling")
    if not measurements:
        print("no dwell point converged", file=sys.stderr)
        return EXIT_IO
    write_sweep_csv(out_dir / "sweep.csv", measurements)
    _write_fit_outputs(out_dir, measurements)
    return EXIT_OK


# serve


def cmd_serve(args) -> int:
    import uvicorn

    from .gateway import create_app

    cfg = _session_config(args)
    app = create_app(cfg, time_scale=args.time_scale, static_dir=args.static)
    try:
        uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    except OSError as exc:
        print(f"cannot bind {args.host}:{args.port}: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="sschat",
        description="Spread-spectrum chat link simulator and tools")
    sub = p.add_subparsers(dest="command", required=True)

    chat = sub.add_parser("chat", help="run a two-node chat session")
    chat.add_argument("--config", help="session config file (key = value lines)")
    chat.add_argument("--seed", type=int, help="override the session seed")
    chat.add_argument("--jam", action="store_true", help="enable the sweep jammer")
    chat.add_argument("--out", help="write the event trace log here")
    chat.set_defaults(fn=cmd_chat)

    enc = sub.add_parser("encode", help="text file to tone WAV")
    enc.add_argument("input", help="text file, or - for stdin")
    enc.add_argument("--out", "-o", required=True, help="output WAV path")
    enc.add_argument("--sample-rate", type=float, default=dtmf.DEFAULT_SAMPLE_RATE)
    enc.set_defaults(fn=cmd_encode)

    dec = sub.add_parser("decode", help="tone WAV back to text")
    dec.add_argument("input", help="input WAV path")
    dec.add_argument("--out", help="write text here instead of stdout")
    dec.set_defaults(fn=cmd_decode)

    exp = sub.add_parser("experiment", help="dwell-time vs jamming-power sweep")
    exp.add_argument("--dwell", default=",".join(str(d) for d in DEFAULT_DWELLS),
                     help="comma-separated dwell times in seconds")
    exp.add_argument("--seed", type=int, help="experiment seed")
    exp.add_argument("--power-step", type=float, default=1.0)
    exp.add_argument("--out", help="output directory (default experiment_out)")
    exp.add_argument("--fit-only", metavar="CSV",
                     help="skip the simulation; fit an existing sweep CSV "
                          f"(bundled reference: {reference_sweep_path().name})")
    exp.set_defaults(fn=cmd_experiment)

    srv = sub.add_parser("serve", help="websocket gateway for browser consoles")
    srv.add_argument("--config", help="session config file")
    srv.add_argument("--seed", type=int)
    srv.add_argument("--host", default="127.0.0.1")
    srv.add_argument("--port", type=int, default=8765)
    srv.add_argument("--time-scale", type=float, default=25.0,
                     help="simulated seconds per wall second")
    srv.add_argument("--static", help="directory of console assets to serve")
    srv.set_defaults(fn=cmd_serve)

    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except JamAnalysisError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except wavio.WavFormatError as exc:
        print(f"bad WAV: {exc}", file=sys.stderr)
        return EXIT_IO
    except FileNotFoundError as exc:
        print(f"cannot open {exc.filename}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
