"""Deterministic report artifacts: metric tables and comparison line charts.

The SVG is emitted directly from grouped distributions with a fixed layout:
one panel per method, group categories on the x axis, response shares (in
percent) on the y axis, one line per response option, and the real survey
overlaid in grey in every panel. No timestamps or random ids are embedded, so
re-rendering the same inputs is byte-identical.
"""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Sequence

from .ingest import GroupedDistribution
from .evaluate import MetricReport, MetricRow

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e",
           "#8c564b", "#e377c2", "#17becf")
GREY = "#b0b0b0"

_PANEL_W = 320
_PANEL_H = 230
_MARGIN_L = 46
_MARGIN_R = 12
_MARGIN_T = 30
_MARGIN_B = 58
_COLS = 3
_LEGEND_H = 26

METRIC_COLUMNS = (
    "method", "question", "mae_pp", "rmse_pp", "js_distance",
    "entropy_bits", "conditional_entropy_gap_bits", "cramers_v",
)


def write_metrics_csv(path: str | Path, reports: Sequence[MetricReport],
                      include_pooled: bool = False) -> None:
    """One row per (method, question), mirroring the summary-table layout."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(METRIC_COLUMNS)
        for report in reports:
            rows = list(report.rows)
            if include_pooled and len(report.rows) > 1:
                rows.append(report.pooled)
            for row in rows:
                writer.writerow([
                    report.method,
                    row.question_id,
                    f"{row.mae_pp:.6f}",
                    f"{row.rmse_pp:.6f}",
                    f"{row.js_distance:.6f}",
                    f"{row.entropy_bits:.6f}",
                    f"{row.conditional_entropy_gap_bits:.6f}",
                    f"{row.cramers_v:.6f}",
                ])


def metrics_text(reports: Sequence[MetricReport], include_pooled: bool = False) -> str:
    header = (
        f"{'method':<20} {'question':<12} {'MAE':>8} {'RMSE':>8} {'JS':>8} "
        f"{'H':>8} {'|dH|':>8} {'V':>8}"
    )
    lines = [header, "-" * len(header)]

    def fmt(method: str, row: MetricRow) -> str:
        return (
            f"{method:<20} {row.question_id:<12} {row.mae_pp:>8.3f} "
            f"{row.rmse_pp:>8.3f} {row.js_distance:>8.4f} {row.entropy_bits:>8.3f} "
            f"{row.conditional_entropy_gap_bits:>8.4f} {row.cramers_v:>8.3f}"
        )

    for report in reports:
        for row in report.rows:
            lines.append(fmt(report.method, row))
        if include_pooled and len(report.rows) > 1:
            lines.append(fmt(report.method, report.pooled))
    return "\n".join(lines) + "\n"


def write_metrics_text(path: str | Path, reports: Sequence[MetricReport],
                       include_pooled: bool = False) -> None:
    Path(path).write_text(metrics_text(reports, include_pooled), encoding="utf-8")


def _polyline(points: list[tuple[float, float]], color: str, dashed: bool = False,
              width: float = 1.6) -> str:
    coords = " ".join(f"{x:.2f},{y:.2f}" for x, y in points)
    dash = ' stroke-dasharray="5,3"' if dashed else ""
    return (
        f'<polyline fill="none" stroke="{color}" stroke-width="{width}"{dash} '
        f'points="{coords}"/>'
    )


def _text(x: float, y: float, content: str, size: int = 10, anchor: str = "middle",
          color: str = "#333333", rotate: float | None = None) -> str:
    transform = f' transform="rotate({rotate:.0f} {x:.2f} {y:.2f})"' if rotate else ""
    content = (content.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;"))
    return (
        f'<text x="{x:.2f}" y="{y:.2f}" font-size="{size}" font-family="sans-serif" '
        f'fill="{color}" text-anchor="{anchor}"{transform}>{content}</text>'
    )


def _panel(origin_x: float, origin_y: float, title: str,
           dist: GroupedDistribution, overlay: GroupedDistribution | None) -> list[str]:
    x0 = origin_x + _MARGIN_L
    y0 = origin_y + _MARGIN_T
    plot_w = _PANEL_W - _MARGIN_L - _MARGIN_R
    plot_h = _PANEL_H - _MARGIN_T - _MARGIN_B
    n_groups = len(dist.groups)
    xs = [
        x0 + (plot_w * i / (n_groups - 1) if n_groups > 1 else plot_w / 2)
        for i in range(n_groups)
    ]

    def y_of(share: float) -> float:
        return y0 + plot_h * (1.0 - share)  # y axis: 0..100%

    parts = [_text(origin_x + _PANEL_W / 2, origin_y + 18, title, size=11)]
    parts.append(
        f'<rect x="{x0:.2f}" y="{y0:.2f}" width="{plot_w:.2f}" height="{plot_h:.2f}" '
        f'fill="none" stroke="#888888" stroke-width="0.8"/>'
    )
    for tick in (0, 20, 40, 60, 80, 100):
        y = y_of(tick / 100.0)
        parts.append(
            f'<line x1="{x0:.2f}" y1="{y:.2f}" x2="{x0 + plot_w:.2f}" y2="{y:.2f}" '
            f'stroke="#dddddd" stroke-width="0.5"/>'
        )
        parts.append(_text(x0 - 6, y + 3, f"{tick}", size=8, anchor="end"))
    for x, label in zip(xs, dist.groups):
        parts.append(
            _text(x, y0 + plot_h + 10, label, size=7, anchor="end", rotate=-45.0)
        )
    if overlay is not None:
        for j in range(len(overlay.responses)):
            pts = [(x, y_of(float(overlay.shares[i, j]))) for i, x in enumerate(xs)]
            parts.append(_polyline(pts, GREY, dashed=True, width=1.2))
    for j in range(len(dist.responses)):
        color = PALETTE[j % len(PALETTE)]
        pts = [(x, y_of(float(dist.shares[i, j]))) for i, x in enumerate(xs)]
        parts.append(_polyline(pts, color))
    return parts


def render_comparison_svg(
    panels: Sequence[tuple[str, GroupedDistribution]],
    real: GroupedDistribution | None = None,
    title: str | None = None,
) -> str:
    """Line-chart panels for each (label, distribution) pair.

    The ``real`` distribution is overlaid in grey on every panel whose
    distribution is not itself ``real``.
    """
    if not panels:
        raise ValueError("no panels to render")
    cols = min(_COLS, len(panels))
    rows = (len(panels) + cols - 1) // cols
    legend_labels = list(panels[0][1].responses) + (
        ["real survey"] if real is not None else []
    )
    legend_w = 8 + sum(24 + 5.2 * len(label) for label in legend_labels) + 16
    width = max(cols * _PANEL_W, int(legend_w))
    height = rows * _PANEL_H + _LEGEND_H + (20 if title else 0)
    top = 20 if title else 0

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
    ]
    if title:
        parts.append(_text(width / 2, 14, title, size=12))

    responses = panels[0][1].responses
    x = 8.0
    y = top + _LEGEND_H / 2 + 3
    for j, label in enumerate(responses):
        color = PALETTE[j % len(PALETTE)]
        parts.append(
            f'<line x1="{x:.2f}" y1="{y - 3:.2f}" x2="{x + 16:.2f}" y2="{y - 3:.2f}" '
            f'stroke="{color}" stroke-width="2"/>'
        )
        parts.append(_text(x + 20, y, label, size=8, anchor="start"))
        x += 24 + 5.2 * len(label)
    if real is not None:
        parts.append(
            f'<line x1="{x:.2f}" y1="{y - 3:.2f}" x2="{x + 16:.2f}" y2="{y - 3:.2f}" '
            f'stroke="{GREY}" stroke-width="2" stroke-dasharray="5,3"/>'
        )
        parts.append(_text(x + 20, y, "real survey", size=8, anchor="start"))

    for i, (label, dist) in enumerate(panels):
        r, c = divmod(i, cols)
        overlay = real if real is not None and dist is not real else None
        parts.extend(
            _panel(c * _PANEL_W, top + _LEGEND_H + r * _PANEL_H, label, dist, overlay)
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
