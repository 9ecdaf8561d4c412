"""Minimal deterministic SVG line charts.

Hand-rolled rather than pulling in a plotting stack: the harness only needs
median lines with interquartile bands, and byte-stable output keeps runs
reproducible.
"""

from __future__ import annotations

_PALETTE = ("#1f6feb", "#d1242f", "#1a7f37", "#9a6700", "#8250df", "#bf3989")

_W, _H = 640, 400
_ML, _MR, _MT, _MB = 60, 20, 30, 45


def _x(v, lo, hi):
    span = hi - lo if hi > lo else 1.0
    return _ML + (v - lo) / span * (_W - _ML - _MR)


def _y(v, lo, hi):
    span = hi - lo if hi > lo else 1.0
    return _H - _MB - (v - lo) / span * (_H - _MT - _MB)


def _fmt(v: float) -> str:
    return f"{v:.2f}".rstrip("0").rstrip(".")


def line_chart(
    series: list[dict],
    *,
    title: str,
    x_label: str,
    y_label: str,
    y_range: tuple[float, float] | None = None,
) -> str:
    """Render line series with optional shaded bands to an SVG string.

    Each series is a dict with keys ``label``, ``x``, ``y`` and optionally
    ``lo``/``hi`` band arrays of the same length.
    """
    xs = [float(v) for s in series for v in s["x"]]
    ys = [float(v) for s in series for v in s["y"]]
    for s in series:
        ys.extend(float(v) for v in s.get("lo", ()))
        ys.extend(float(v) for v in s.get("hi", ()))
    if not xs:
        xs, ys = [0.0, 1.0], [0.0, 1.0]
    x_lo, x_hi = min(xs), max(xs)
    if y_range is not None:
        y_lo, y_hi = y_range
    else:
        y_lo, y_hi = min(ys), max(ys)
        if y_lo == y_hi:
            y_lo, y_hi = y_lo - 0.5, y_hi + 0.5

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
        f'viewBox="0 0 {_W} {_H}" font-family="sans-serif" font-size="12">',
        f'<rect width="{_W}" height="{_H}" fill="white"/>',
        f'<text x="{_W / 2:.0f}" y="18" text-anchor="middle" font-size="14">{title}</text>',
    ]
    # axes with 5 ticks each
    for k in range(6):
        fx = x_lo + (x_hi - x_lo) * k / 5
        px = _x(fx, x_lo, x_hi)
        parts.append(
            f'<line x1="{px:.1f}" y1="{_H - _MB}" x2="{px:.1f}" y2="{_MT}" '
            f'stroke="#dddddd" stroke-width="1"/>'
        )
        parts.append(
            f'<text x="{px:.1f}" y="{_H - _MB + 16}" text-anchor="middle">{_fmt(fx)}</text>'
        )
        fy = y_lo + (y_hi - y_lo) * k / 5
        py = _y(fy, y_lo, y_hi)
        parts.append(
            f'<line x1="{_ML}" y1="{py:.1f}" x2="{_W - _MR}" y2="{py:.1f}" '
            f'stroke="#dddddd" stroke-width="1"/>'
        )
        parts.append(
            f'<text x="{_ML - 8}" y="{py + 4:.1f}" text-anchor="end">{_fmt(fy)}</text>'
        )
    parts.append(
        f'<text x="{(_ML + _W - _MR) / 2:.0f}" y="{_H - 10}" text-anchor="middle">{x_label}</text>'
    )
    parts.append(
        f'<text x="16" y="{(_MT + _H - _MB) / 2:.0f}" text-anchor="middle" '
        f'transform="rotate(-90 16 {(_MT + _H - _MB) / 2:.0f})">{y_label}</text>'
    )

    for idx, s in enumerate(series):
        color = _PALETTE[idx % len(_PALETTE)]
        px = [_x(float(v), x_lo, x_hi) for v in s["x"]]
        if "lo" in s and "hi" in s and len(s["lo"]):
            lo = [_y(float(v), y_lo, y_hi) for v in s["lo"]]
            hi = [_y(float(v), y_lo, y_hi) for v in s["hi"]]
            band = " ".join(f"{a:.1f},{b:.1f}" for a, b in zip(px, hi))
            band += " " + " ".join(
                f"{a:.1f},{b:.1f}" for a, b in zip(reversed(px), reversed(lo))
            )
            parts.append(f'<polygon points="{band}" fill="{color}" opacity="0.15"/>')
        pts = " ".join(
            f"{a:.1f},{_y(float(v), y_lo, y_hi):.1f}" for a, v in zip(px, s["y"])
        )
        parts.append(
            f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="2"/>'
        )
        parts.append(
            f'<text x="{_W - _MR - 6}" y="{_MT + 16 + 16 * idx}" text-anchor="end" '
            f'fill="{color}">{s["label"]}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts)
