"""Sweep report output: delimited text, JSON, and a rendered figure.

The long-format CSV has one row per (grid point, method, cost function);
the figure plots recovery accuracy against the noise parameter with one
series per method, matching the CSV series exactly.
"""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path

from .noise_lab import SweepReport

SWEEP_CSV_HEADER = ("p_a", "method", "cost_function", "accuracy", "traces", "events", "failures")


def _series_name(method: str, cost_function: str) -> str:
    return f"{method}:{cost_function}" if cost_function else method


def sweep_csv(report: SweepReport) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(SWEEP_CSV_HEADER)
    for row in report.rows:
        writer.writerow([
            f"{row.p_a:g}",
            row.method,
            row.cost_function,
            f"{row.accuracy:.6f}",
            row.traces,
            row.events,
            row.failures,
        ])
    return buf.getvalue()


def sweep_json(report: SweepReport) -> dict:
    return {
        "metadata": report.metadata,
        "grid": [
            {
                "p_a": row.p_a,
                "method": row.method,
                "cost_function": row.cost_function,
                "accuracy": row.accuracy,
                "traces": row.traces,
                "events": row.events,
                "failures": row.failures,
            }
            for row in report.rows
        ],
    }


def render_sweep_figure(report: SweepReport, path: str | Path) -> Path:
    """Render accuracy-vs-noise curves to an image file (no GUI backend)."""
    from matplotlib.figure import Figure

    series: dict[str, tuple[list[float], list[float]]] = {}
    for row in report.rows:
        xs, ys = series.setdefault(_series_name(row.method, row.cost_function), ([], []))
        xs.append(row.p_a)
        ys.append(row.accuracy)

    fig = Figure(figsize=(7.0, 4.5))
    ax = fig.add_subplot(111)
    for name in sorted(series):
        xs, ys = series[name]
        ax.plot(xs, ys, marker="o", markersize=3.5, linewidth=1.4, label=name)
    ax.set_xlabel("probability that the true label has the highest mass")
    ax.set_ylabel("recovery accuracy")
    ax.set_ylim(-0.02, 1.02)
    ax.grid(True, alpha=0.3)
    ax.legend(loc="lower right", fontsize=8)
    title = report.metadata.get("model")
    if title:
        ax.set_title(f"trace recovery on {title}")
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=150)
    return path


def write_sweep_report(
    report: SweepReport, out_dir: str | Path, stem: str = "sweep", figure: bool = True
) -> dict[str, Path]:
    """Write CSV + JSON (+ PNG figure) into ``out_dir``; returns the paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths: dict[str, Path] = {}
    csv_path = out_dir / f"{stem}.csv"
    csv_path.write_text(sweep_csv(report), encoding="utf-8")
    paths["csv"] = csv_path
    json_path = out_dir / f"{stem}.json"
    json_path.write_text(json.dumps(sweep_json(report), indent=2) + "\n", encoding="utf-8")
    paths["json"] = json_path
    if figure:
        paths["figure"] = render_sweep_figure(report, out_dir / f"{stem}.png")
    return paths
