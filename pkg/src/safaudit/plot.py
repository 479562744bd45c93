"""Self-contained SVG plot of a hit-rate curve, truncated at t'."""
from __future__ import annotations

from pathlib import Path

import numpy as np

W, H = 480, 320
LEFT, RIGHT, TOP, BOTTOM = 56, 16, 20, 44


def _px(t, q):
    x = LEFT + float(t) * (W - LEFT - RIGHT)
    y = TOP + (1.0 - float(np.clip(q, 0.0, 1.0))) * (H - TOP - BOTTOM)
    return f"{x:.2f}", f"{y:.2f}"


def render_svg(curve, t_prime: float, title: str = "") -> str:
    """SVG text: Wilson band, curve points up to ``t_prime`` and a marker line at ``t_prime``."""
    grid = np.asarray(curve.grid, dtype=float)
    q = np.clip(np.asarray(curve.estimates, dtype=float), 0.0, 1.0)
    lo, hi = curve.wilson()
    keep = grid <= t_prime + 1e-12
    if not keep.any():
        keep[0] = True
    g, q, lo, hi = grid[keep], q[keep], lo[keep], hi[keep]

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" '
           f'viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="11">',
           f'<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>']
    x0, y0 = _px(0, 0)
    x1, y1 = _px(1, 1)
    out.append(f'<rect x="{x0}" y="{y1}" width="{float(x1) - float(x0):.2f}" '
               f'height="{float(y0) - float(y1):.2f}" fill="none" stroke="black"/>')
    for v in (0.0, 0.25, 0.5, 0.75, 1.0):
        tx, ty = _px(v, 0)
        out.append(f'<text x="{tx}" y="{float(ty) + 16:.2f}" text-anchor="middle">{v:g}</text>')
        qx, qy = _px(0, v)
        out.append(f'<text x="{float(qx) - 6:.2f}" y="{float(qy) + 4:.2f}" text-anchor="end">{v:g}</text>')
    out.append(f'<text x="{(LEFT + W - RIGHT) / 2:.2f}" y="{H - 8}" text-anchor="middle">t</text>')
    out.append(f'<text x="14" y="{(TOP + H - BOTTOM) / 2:.2f}" text-anchor="middle" '
               f'transform="rotate(-90 14 {(TOP + H - BOTTOM) / 2:.2f})">q_M</text>')
    if title:
        out.append(f'<text x="{W / 2:.2f}" y="14" text-anchor="middle">{title}</text>')

    if len(g) > 1:
        band = [_px(t, v) for t, v in zip(g, hi)] + [_px(t, v) for t, v in zip(g[::-1], lo[::-1])]
        pts = " ".join(f"{a},{b}" for a, b in band)
        out.append(f'<polygon points="{pts}" fill="#9ecae1" fill-opacity="0.5" stroke="none"/>')
        line = " ".join(",".join(_px(t, v)) for t, v in zip(g, q))
        out.append(f'<polyline points="{line}" fill="none" stroke="#08519c" stroke-width="1.5"/>')
    for t, v in zip(g, q):
        cx, cy = _px(t, v)
        out.append(f'<circle cx="{cx}" cy="{cy}" r="2.5" fill="#08519c"/>')
    mx, _ = _px(t_prime, 0)
    out.append(f'<line x1="{mx}" y1="{y1}" x2="{mx}" y2="{y0}" stroke="#cb181d" stroke-dasharray="4 3"/>')
    out.append(f'<text x="{float(mx) + 4:.2f}" y="{float(y1) + 12:.2f}" fill="#cb181d">'
               f"t'={t_prime:.3f}</text>")
    out.append("</svg>")
    return "\n".join(out) + "\n"


def emit_plot(curve, t_prime: float, path, title: str = "") -> Path:
    path = Path(path)
    path.write_text(render_svg(curve, t_prime, title))
    return path
