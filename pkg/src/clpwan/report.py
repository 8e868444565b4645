"""Comparison-table CSV and static SVG charts (metric vs data-volume bucket, one line per mode)."""

from __future__ import annotations

import csv
import io
import math
from html import escape
from typing import Sequence

from .simulator import ModeSummary

PALETTE = ["#E24A33", "#348ABD", "#988ED5", "#777777", "#FBC15E", "#8EBA42", "#FFB5B8", "#1B9E77"]


def _num(v) -> str:
    return "" if v is None else repr(float(v))


def comparison_csv(summaries: Sequence[ModeSummary]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    labels = [b.label for b in summaries[0].buckets] if summaries else []
    header = ["mode", "requests", "feasible", "infeasible", "mean_delay_s", "p95_delay_s", "total_energy_j"]
    for lab in labels:
        header += [f"mean_delay_s[{lab}]", f"total_energy_j[{lab}]"]
    w.writerow(header)
    for s in summaries:
        row = [s.mode, s.requests, s.feasible, s.infeasible, _num(s.mean_delay_s), _num(s.p95_delay_s),
               _num(s.total_energy_j)]
        for b in s.buckets:
            row += [_num(b.mean_delay_s), _num(b.total_energy_j if b.feasible else None)]
        w.writerow(row)
    return buf.getvalue()


def line_chart_svg(title: str, ylabel: str, x_labels: Sequence[str], series: dict[str, Sequence[float | None]]) -> str:
    """Log-scale line chart; ``None`` points (no feasible request in a bucket) are skipped."""
    width, height = 720, 440
    left, right, top, bottom = 90, 170, 50, 70
    plot_w, plot_h = width - left - right, height - top - bottom
    values = [v for vs in series.values() for v in vs if v is not None and v > 0]
    if values:
        lo, hi = math.floor(math.log10(min(values))), math.ceil(math.log10(max(values)))
    else:
        lo, hi = 0, 1
    hi = max(hi, lo + 1)

    def x_at(i):
        return left + (i + 0.5) * plot_w / max(len(x_labels), 1)

    def y_at(v):
        return top + plot_h * (1 - (math.log10(v) - lo) / (hi - lo))

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{left + plot_w / 2}" y="28" text-anchor="middle" font-size="16" font-weight="bold">{escape(title)}</text>',
        f'<text transform="translate(22,{top + plot_h / 2}) rotate(-90)" text-anchor="middle" font-size="13">{escape(ylabel)}</text>',
        f'<text x="{left + plot_w / 2}" y="{height - 18}" text-anchor="middle" font-size="13">data volume per request</text>',
    ]
    for e in range(lo, hi + 1):
        y = y_at(10.0 ** e)
        out.append(f'<line x1="{left}" y1="{y:.1f}" x2="{left + plot_w}" y2="{y:.1f}" stroke="#e5e5e5"/>')
        out.append(f'<text x="{left - 8}" y="{y + 4:.1f}" text-anchor="end" font-size="11">1e{e}</text>')
    out.append(f'<line x1="{left}" y1="{top}" x2="{left}" y2="{top + plot_h}" stroke="#333"/>')
    out.append(f'<line x1="{left}" y1="{top + plot_h}" x2="{left + plot_w}" y2="{top + plot_h}" stroke="#333"/>')
    for i, lab in enumerate(x_labels):
        out.append(f'<text x="{x_at(i):.1f}" y="{top + plot_h + 18}" text-anchor="middle" font-size="11">{escape(lab)}</text>')

    for n, (mode, vs) in enumerate(series.items()):
        color = PALETTE[n % len(PALETTE)]
        pts = [(x_at(i), y_at(v)) for i, v in enumerate(vs) if v is not None and v > 0]
        if len(pts) > 1:
            path = " ".join(f"{x:.1f},{y:.1f}" for x, y in pts)
            out.append(f'<polyline points="{path}" fill="none" stroke="{color}" stroke-width="2"/>')
        for x, y in pts:
            out.append(f'<circle cx="{x:.1f}" cy="{y:.1f}" r="3.5" fill="{color}"/>')
        ly = top + 10 + 20 * n
        out.append(f'<rect x="{left + plot_w + 15}" y="{ly - 9}" width="12" height="12" fill="{color}"/>')
        out.append(f'<text x="{left + plot_w + 33}" y="{ly + 1}" font-size="12">{escape(mode)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def delay_chart(summaries: Sequence[ModeSummary]) -> str:
    labels = [b.label for b in summaries[0].buckets]
    return line_chart_svg("Transmission delay vs data volume", "mean delay (s)", labels,
                          {s.mode: [b.mean_delay_s for b in s.buckets] for s in summaries})


def energy_chart(summaries: Sequence[ModeSummary]) -> str:
    labels = [b.label for b in summaries[0].buckets]
    return line_chart_svg("Energy consumption vs data volume", "total energy (J)", labels,
                          {s.mode: [b.total_energy_j if b.feasible else None for b in s.buckets] for s in summaries})
