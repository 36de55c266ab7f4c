"""Static report pieces: hourly CSV tables and plain SVG line charts."""

from __future__ import annotations

import csv
import io
from datetime import datetime, timezone
from typing import Mapping, Sequence

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def iso_hour(t: int) -> str:
    return datetime.fromtimestamp(t, tz=timezone.utc).strftime("%Y-%m-%dT%H:00Z")


def series_csv(series: Mapping[str, Mapping[int, float]], value_name: str) -> str:
    """Long-format CSV: ``hour,series,value`` sorted by hour then series."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["hour", "hour_start", "series", value_name])
    rows = sorted((h, name, v) for name, pts in series.items() for h, v in pts.items())
    for h, name, v in rows:
        w.writerow([iso_hour(h), h, name, f"{v:.4f}"])
    return buf.getvalue()


def line_chart(
    series: Mapping[str, Mapping[int, float]],
    title: str,
    y_label: str,
    width: int = 900,
    height: int = 360,
    bands: Sequence[float] = (),
) -> str:
    """One polyline per series over a shared hourly x axis.

    ``bands`` draws dashed horizontal guide lines (e.g. a ratio envelope).
    """
    left, right, top, bottom = 60, 140, 30, 40
    xs = sorted({h for pts in series.values() for h in pts})
    ys = [v for pts in series.values() for v in pts.values()] + list(bands)
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'font-family="sans-serif" font-size="11">',
           f'<text x="{width / 2:.1f}" y="18" text-anchor="middle" font-size="14">{title}</text>']
    pw, ph = width - left - right, height - top - bottom
    out.append(f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="#999"/>')
    if not xs:
        out.append(f'<text x="{left + pw / 2:.1f}" y="{top + ph / 2:.1f}" text-anchor="middle">no data</text>')
        out.append("</svg>")
        return "\n".join(out) + "\n"
    x0, x1 = xs[0], max(xs[-1], xs[0] + 3600)
    y1 = max(max(ys), 1e-9) * 1.05

    def px(h: int) -> float:
        return left + pw * (h - x0) / (x1 - x0)

    def py(v: float) -> float:
        return top + ph * (1 - v / y1)

    for k in range(5):
        v = y1 * k / 4
        out.append(f'<text x="{left - 6}" y="{py(v) + 4:.1f}" text-anchor="end">{v:.2f}</text>')
    step = max(1, len(xs) // 12)
    for h in xs[::step]:
        out.append(f'<text x="{px(h):.1f}" y="{top + ph + 16}" text-anchor="middle">{iso_hour(h)[5:13]}</text>')
    out.append(f'<text x="14" y="{top + ph / 2:.1f}" transform="rotate(-90 14 {top + ph / 2:.1f})" '
               f'text-anchor="middle">{y_label}</text>')
    for b in bands:
        out.append(f'<line x1="{left}" x2="{left + pw}" y1="{py(b):.1f}" y2="{py(b):.1f}" '
                   f'stroke="#bbb" stroke-dasharray="4 3"/>')
    for i, name in enumerate(sorted(series)):
        pts = series[name]
        colour = PALETTE[i % len(PALETTE)]
        path = " ".join(f"{px(h):.1f},{py(pts[h]):.1f}" for h in sorted(pts))
        out.append(f'<polyline fill="none" stroke="{colour}" stroke-width="1.5" points="{path}"/>')
        out.append(f'<text x="{left + pw + 10}" y="{top + 14 * (i + 1)}" fill="{colour}">{name}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
