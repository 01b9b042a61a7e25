"""Self-contained SVG renderings of attack results.

SVG is hand-written so that plots are diffable, dependency-free, and
invertible: the root element carries the linear axis transform
(data-axis-min, data-axis-max, data-plot-top, data-plot-bottom), and
pixel_y = bottom - (value - axis_min) / (axis_max - axis_min) * (bottom - top).
"""

from __future__ import annotations

from .metrics import BoxStats

PLOT_TOP = 40.0
PLOT_BOTTOM = 320.0
GROUP_WIDTH = 70.0
MARGIN_LEFT = 60.0


def _axis_range(lo: float, hi: float) -> tuple[float, float]:
    if hi <= lo:
        pad = max(1.0, abs(lo)) * 0.05
        return lo - pad, hi + pad
    pad = (hi - lo) * 0.05
    return lo - pad, hi + pad


def _to_pixel(value: float, lo: float, hi: float) -> float:
    return PLOT_BOTTOM - (value - lo) / (hi - lo) * (PLOT_BOTTOM - PLOT_TOP)


def render_box_svg(groups: list[tuple[str, BoxStats]], title: str, ylabel: str) -> str:
    """One box per group: IQR box, median line, whiskers over the full range."""
    if not groups:
        raise ValueError("nothing to plot")
    lo = min(s.min for _, s in groups)
    hi = max(s.max for _, s in groups)
    lo, hi = _axis_range(lo, hi)
    width = MARGIN_LEFT + GROUP_WIDTH * len(groups) + 20.0
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width:g}" height="360" '
        f'data-axis-min="{lo!r}" data-axis-max="{hi!r}" '
        f'data-plot-top="{PLOT_TOP:g}" data-plot-bottom="{PLOT_BOTTOM:g}">',
        f'<text x="{width / 2:g}" y="20" text-anchor="middle" font-size="14">{title}</text>',
        f'<text x="15" y="{(PLOT_TOP + PLOT_BOTTOM) / 2:g}" font-size="11" '
        f'transform="rotate(-90 15 {(PLOT_TOP + PLOT_BOTTOM) / 2:g})" '
        f'text-anchor="middle">{ylabel}</text>',
        f'<line x1="{MARGIN_LEFT:g}" y1="{PLOT_TOP:g}" x2="{MARGIN_LEFT:g}" '
        f'y2="{PLOT_BOTTOM:g}" stroke="black"/>',
        f'<line x1="{MARGIN_LEFT:g}" y1="{PLOT_BOTTOM:g}" x2="{width - 10:g}" '
        f'y2="{PLOT_BOTTOM:g}" stroke="black"/>',
    ]
    box_w = 30.0
    for k, (label, s) in enumerate(groups):
        cx = MARGIN_LEFT + GROUP_WIDTH * (k + 0.5)
        y_min = _to_pixel(s.min, lo, hi)
        y_max = _to_pixel(s.max, lo, hi)
        y_q1 = _to_pixel(s.q1, lo, hi)
        y_q3 = _to_pixel(s.q3, lo, hi)
        y_med = _to_pixel(s.median, lo, hi)
        out.append(f'<g class="box-group" data-label="{label}">')
        out.append(
            f'<line class="whisker" x1="{cx:g}" y1="{y_max!r}" x2="{cx:g}" '
            f'y2="{y_min!r}" stroke="black"/>'
        )
        for y in (y_min, y_max):
            out.append(
                f'<line class="whisker-cap" x1="{cx - box_w / 4:g}" y1="{y!r}" '
                f'x2="{cx + box_w / 4:g}" y2="{y!r}" stroke="black"/>'
            )
        out.append(
            f'<rect class="iqr-box" x="{cx - box_w / 2:g}" y="{y_q3!r}" '
            f'width="{box_w:g}" height="{y_q1 - y_q3!r}" fill="none" stroke="steelblue"/>'
        )
        out.append(
            f'<line class="median" x1="{cx - box_w / 2:g}" y1="{y_med!r}" '
            f'x2="{cx + box_w / 2:g}" y2="{y_med!r}" stroke="darkorange"/>'
        )
        out.append(
            f'<text x="{cx:g}" y="{PLOT_BOTTOM + 18:g}" text-anchor="middle" '
            f'font-size="11">{label}</text>'
        )
        out.append("</g>")
    out.append("</svg>")
    return "\n".join(out) + "\n"


def render_histogram_svg(counts: dict[int, int], title: str, xlabel: str) -> str:
    """Bar chart of integer-valued observations (missing-feature counts)."""
    keys = sorted(counts)
    total = max(1, sum(counts.values()))
    peak = max(counts.values()) if counts else 1
    lo, hi = 0.0, float(peak)
    width = MARGIN_LEFT + GROUP_WIDTH * len(keys) + 20.0
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width:g}" height="360" '
        f'data-axis-min="{lo!r}" data-axis-max="{hi!r}" '
        f'data-plot-top="{PLOT_TOP:g}" data-plot-bottom="{PLOT_BOTTOM:g}">',
        f'<text x="{width / 2:g}" y="20" text-anchor="middle" font-size="14">{title}</text>',
        f'<line x1="{MARGIN_LEFT:g}" y1="{PLOT_BOTTOM:g}" x2="{width - 10:g}" '
        f'y2="{PLOT_BOTTOM:g}" stroke="black"/>',
    ]
    bar_w = 40.0
    for k, key in enumerate(keys):
        cx = MARGIN_LEFT + GROUP_WIDTH * (k + 0.5)
        value = counts[key]
        y = _to_pixel(float(value), lo, hi)
        out.append(
            f'<rect class="bar" data-count="{value}" data-bin="{key}" '
            f'x="{cx - bar_w / 2:g}" y="{y!r}" width="{bar_w:g}" '
            f'height="{PLOT_BOTTOM - y!r}" fill="steelblue"/>'
        )
        out.append(
            f'<text x="{cx:g}" y="{PLOT_BOTTOM + 18:g}" text-anchor="middle" '
            f'font-size="11">{key}</text>'
        )
        out.append(
            f'<text x="{cx:g}" y="{y - 5!r}" text-anchor="middle" font-size="10">'
            f"{100.0 * value / total:.1f}%</text>"
        )
    out.append(f'<text x="{width / 2:g}" y="350" text-anchor="middle" font-size="11">{xlabel}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def render_mape_table(rows: list[tuple[str, float]]) -> str:
    """Plain-text two-column table of model label vs clean-test MAPE."""
    label_w = max(len(r[0]) for r in rows)
    lines = [f"{'model':<{label_w}}  test MAPE (%)"]
    lines.append("-" * (label_w + 15))
    for label, value in rows:
        lines.append(f"{label:<{label_w}}  {value:.4f}")
    return "\n".join(lines) + "\n"
