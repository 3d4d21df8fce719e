"""Standalone SVG plots of bound traces (no plotting dependency)."""

from __future__ import annotations

from xml.sax.saxutils import escape

import numpy as np

from .data import atomic_write_text

WIDTH, HEIGHT = 720, 420
MARGIN = dict(left=80, right=20, top=36, bottom=48)
COLORS = {"cache": "#2b8cbe", "move_making": "#e6550d", "exact": "#31a354", "o_W": "#222222"}


def _rows(trace) -> list:
    """Accept a BoundTrace or rows from ``read_trace_csv``."""
    out = []
    for r in trace:
        if isinstance(r, dict):
            out.append((r["iteration"], r["tier"], r["o_W"], r["o_I"]))
        else:
            out.append((r.iteration, r.tier, r.o_W, r.o_I))
    return out


def _ticks(lo: float, hi: float, n: int = 5) -> np.ndarray:
    if hi <= lo:
        return np.array([lo])
    step = 10 ** np.floor(np.log10((hi - lo) / n))
    for m in (1, 2, 5, 10):
        if (hi - lo) / (m * step) <= n:
            step *= m
            break
    return np.arange(np.ceil(lo / step) * step, hi + 1e-9 * step, step)


def trace_svg(trace, title: str = "") -> str:
    """o_W as a line; oracle estimates o_I as dots, large for full-oracle
    iterations and small for cache iterations.

    The y-range is clipped to the o_W span widened by half, so the early huge
    o_I values at small iterations do not flatten the interesting region; dots
    outside the range are pinned to the top edge.
    """
    rows = _rows(trace)
    if not rows:
        raise ValueError("empty trace")
    it = np.array([r[0] for r in rows], dtype=float)
    ow = np.array([r[2] for r in rows], dtype=float)
    oi = np.array([r[3] for r in rows], dtype=float)
    lo = float(ow.min())
    span = float(ow.max() - lo) or max(abs(lo), 1.0)
    hi = float(min(np.nanmax(oi[np.isfinite(oi)], initial=ow.max()), ow.max() + 0.5 * span))
    hi = max(hi, float(ow.max()) + 1e-12)
    x0, x1 = MARGIN["left"], WIDTH - MARGIN["right"]
    y0, y1 = HEIGHT - MARGIN["bottom"], MARGIN["top"]
    xmax = max(it.max(), it.min() + 1)

    def X(v):
        return x0 + (v - it.min()) / (xmax - it.min()) * (x1 - x0)

    def Y(v):
        return y0 - (min(v, hi) - lo) / (hi - lo) * (y0 - y1)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">',
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{WIDTH / 2}" y="20" text-anchor="middle" font-size="14">{escape(title)}</text>',
        f'<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/>',
        f'<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>',
    ]
    for t in _ticks(lo, hi):
        parts.append(f'<line x1="{x0 - 4}" y1="{Y(t):.2f}" x2="{x0}" y2="{Y(t):.2f}" stroke="black"/>')
        parts.append(f'<text x="{x0 - 6}" y="{Y(t) + 4:.2f}" text-anchor="end">{t:.6g}</text>')
    for t in _ticks(it.min(), xmax):
        parts.append(f'<line x1="{X(t):.2f}" y1="{y0}" x2="{X(t):.2f}" y2="{y0 + 4}" stroke="black"/>')
        parts.append(f'<text x="{X(t):.2f}" y="{y0 + 18}" text-anchor="middle">{t:.0f}</text>')
    parts.append(f'<text x="{(x0 + x1) / 2}" y="{HEIGHT - 8}" text-anchor="middle">iteration</text>')
    parts.append(
        f'<text transform="translate(16 {(y0 + y1) / 2}) rotate(-90)" text-anchor="middle">objective</text>'
    )
    pts = " ".join(f"{X(a):.2f},{Y(b):.2f}" for a, b in zip(it, ow))
    parts.append(f'<polyline fill="none" stroke="{COLORS["o_W"]}" stroke-width="1.5" points="{pts}"/>')
    for i, tier, _, v in rows:
        if not np.isfinite(v):
            continue
        big = tier != "cache"
        parts.append(
            f'<circle class="{"full" if big else "cache"}" cx="{X(i):.2f}" cy="{Y(v):.2f}" '
            f'r="{4.5 if big else 1.8}" fill="{COLORS.get(tier, "#888888")}" fill-opacity="0.8"/>'
        )
    legend = [("o_W", COLORS["o_W"], None), ("cache o_I", COLORS["cache"], 1.8),
              ("move-making o_I", COLORS["move_making"], 4.5), ("exact o_I", COLORS["exact"], 4.5)]
    lx, ly = x1 - 150, y1 + 10
    for k, (name, col, r) in enumerate(legend):
        yy = ly + 16 * k
        if r is None:
            parts.append(f'<line x1="{lx}" y1="{yy}" x2="{lx + 16}" y2="{yy}" stroke="{col}" stroke-width="1.5"/>')
        else:
            parts.append(f'<circle cx="{lx + 8}" cy="{yy}" r="{r}" fill="{col}"/>')
        parts.append(f'<text x="{lx + 22}" y="{yy + 4}">{escape(name)}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def write_trace_svg(trace, path, title: str = "") -> None:
    atomic_write_text(path, trace_svg(trace, title))
