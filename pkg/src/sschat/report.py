"""Render sweep results: fit report text, plot-data CSV, and a figure."""

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402  (backend must be pinned first)

import numpy as np  # noqa: E402

from .jam import FitResult, JamMeasurement, evaluate_fit  # noqa: E402

PLOT_CSV_HEADER = ("x", "y_fit")


def fit_report_text(measurements: list[JamMeasurement], result: FitResult,
                    direction: str) -> str:
    """Human-readable block: coefficients, per-point residuals, RMS."""
    c = result.coefficients
    used = [m for m in measurements if m.direction == direction]
    lines = [
        f"double-exponential fit, {direction} column",
        f"  y0 = {c.y0:+.4f} dBm",
        f"  x0 = {c.x0:+.4f} s (pinned)",
        f"  A1 = {c.a1:+.4f} dBm   t1 = {c.t1:.4f} s",
        f"  A2 = {c.a2:+.4f} dBm   t2 = {c.t2:.4f} s",
        f"  iterations = {result.iterations}",
        "",
        "  dwell_s   measured   fitted   residual",
    ]
    for m, r in zip(used, result.residuals):
        fitted = evaluate_fit(c, m.dwell_time)
        lines.append(f"  {m.dwell_time:7.3f}   {m.jam_power_dbm:+8.3f} "
                     f"{fitted:+8.3f}   {r:+8.4f}")
    lines.append("")
    lines.append(f"  rms residual = {result.rms_residual:.4f} dBm")
    return "\n".join(lines) + "\n"


def plot_data_rows(result: FitResult, x_min: float, x_max: float,
                   step: float = 0.01) -> list[tuple[float, float]]:
    xs = np.arange(x_min, x_max + step / 2, step)
    ys = evaluate_fit(result.coefficients, xs)
    return [(float(x), float(y)) for x, y in zip(xs, ys)]


def write_plot_data_csv(path: str | Path,
                        rows: list[tuple[float, float]]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(PLOT_CSV_HEADER)
        for x, y in rows:
            writer.writerow([f"{x:.4f}", f"{y:.4f}"])


def render_sweep_figure(path: str | Path, measurements: list[JamMeasurement],
                        result: FitResult | None = None) -> None:
    """Dwell time vs. required jamming power, with the fitted decay curve."""
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    for direction, marker in (("increasing", "o"), ("decreasing", "s")):
        pts = [(m.dwell_time, m.jam_power_dbm) for m in measurements
               if m.direction == direction]
        if pts:
            xs, ys = zip(*pts)
            ax.plot(xs, ys, marker, label=f"{direction} power search",
                    fillstyle="none" if direction == "decreasing" else "full")
    if result is not None:
        lo = min(m.dwell_time for m in measurements)
        hi = max(m.dwell_time for m in measurements)
        xs = np.linspace(lo, hi, 200)
        ax.plot(xs, evaluate_fit(result.coefficients, xs), "-",
                label="double-exponential fit")
    ax.set_xlabel("dwell time (s)")
    ax.set_ylabel("jamming power to break link (dBm)")
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
