"""Static SVG scatter + Bland-Altman figure, written without a plotting backend
so the output is byte-stable."""

from __future__ import annotations

import numpy as np

W, H = 420, 360
MARGIN = 50


def _scale(lo, hi, a, b):
    span = (hi - lo) or 1.0
    return lambda v: a + (v - lo) / span * (b - a)


def _panel(x0, title, xs, ys, xlabel, ylabel, hlines=(), identity=False):
    lo_x, hi_x = float(np.min(xs)), float(np.max(xs))
    lo_y, hi_y = float(np.min(ys)), float(np.max(ys))
    for v in hlines:
        lo_y, hi_y = min(lo_y, v), max(hi_y, v)
    if identity:
        lo_x = lo_y = min(lo_x, lo_y)
        hi_x = hi_y = max(hi_x, hi_y)
    pad_x, pad_y = 0.05 * ((hi_x - lo_x) or 1), 0.05 * ((hi_y - lo_y) or 1)
    sx = _scale(lo_x - pad_x, hi_x + pad_x, x0 + MARGIN, x0 + W - 10)
    sy = _scale(lo_y - pad_y, hi_y + pad_y, H - MARGIN, 30)
    out = [
        f'<text x="{x0 + W / 2:.1f}" y="18" text-anchor="middle" font-size="14">{title}</text>',
        f'<rect x="{x0 + MARGIN}" y="30" width="{W - MARGIN - 10}" height="{H - MARGIN - 30}" '
        'fill="none" stroke="black"/>',
        f'<text x="{x0 + W / 2:.1f}" y="{H - 12}" text-anchor="middle" font-size="12">{xlabel}</text>',
        f'<text x="{x0 + 14}" y="{H / 2:.1f}" text-anchor="middle" font-size="12" '
        f'transform="rotate(-90 {x0 + 14} {H / 2:.1f})">{ylabel}</text>',
    ]
    for v, lab in ((lo_x, f"{lo_x:.0f}"), (hi_x, f"{hi_x:.0f}")):
        out.append(f'<text x="{sx(v):.1f}" y="{H - MARGIN + 14}" text-anchor="middle" font-size="10">{lab}</text>')
    for v, lab in ((lo_y, f"{lo_y:.0f}"), (hi_y, f"{hi_y:.0f}")):
        out.append(f'<text x="{x0 + MARGIN - 4}" y="{sy(v) + 3:.1f}" text-anchor="end" font-size="10">{lab}</text>')
    if identity:
        out.append(f'<line x1="{sx(lo_x):.1f}" y1="{sy(lo_y):.1f}" x2="{sx(hi_x):.1f}" y2="{sy(hi_y):.1f}" '
                   'stroke="gray" stroke-dasharray="4 3"/>')
    for i, v in enumerate(hlines):
        dash = "" if i == 0 else ' stroke-dasharray="4 3"'
        out.append(f'<line x1="{x0 + MARGIN}" y1="{sy(v):.1f}" x2="{x0 + W - 10}" y2="{sy(v):.1f}" '
                   f'stroke="firebrick"{dash}/>')
    for x, y in zip(xs, ys):
        out.append(f'<circle cx="{sx(x):.2f}" cy="{sy(y):.2f}" r="2.5" fill="steelblue" fill-opacity="0.7"/>')
    return out


def agreement_svg(pred, truth, bias, loa_low, loa_high, label="SBP") -> str:
    """Prediction-vs-reference scatter beside a Bland-Altman plot."""
    pred = np.asarray(pred, dtype=float)
    truth = np.asarray(truth, dtype=float)
    body = _panel(0, f"{label}: predicted vs cuff", truth, pred, "cuff (mm Hg)", "predicted (mm Hg)",
                  identity=True)
    body += _panel(W, f"{label}: Bland-Altman", (pred + truth) / 2, pred - truth, "mean (mm Hg)",
                   "difference (mm Hg)", hlines=(bias, loa_low, loa_high))
    return ('<?xml version="1.0" encoding="UTF-8"?>\n'
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{2 * W}" height="{H}" font-family="sans-serif">\n'
            + "\n".join(body) + "\n</svg>\n")
