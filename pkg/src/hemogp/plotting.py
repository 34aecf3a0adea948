"""Hand-rolled SVG output for posterior traces: mean, a +-2 std band, and an
optional truth overlay. No plotting dependencies; output is byte-deterministic
for identical inputs (no timestamps, no random ids)."""

import numpy as np

from .errors import ConfigError

_W, _H = 720, 420
_ML, _MR, _MT, _MB = 64, 16, 28, 44


def _fmt(v):
    return f"{v:.6g}"


def _ticks(lo, hi, n=6):
    if hi <= lo:
        hi = lo + 1.0
    raw = (hi - lo) / max(n - 1, 1)
    mag = 10.0 ** np.floor(np.log10(raw))
    for mult in (1.0, 2.0, 2.5, 5.0, 10.0):
        if raw <= mult * mag:
            step = mult * mag
            break
    start = np.ceil(lo / step) * step
    return np.arange(start, hi + 0.5 * step, step)


class _Axes:
    def __init__(self, xlim, ylim):
        self.x0, self.x1 = xlim
        self.y0, self.y1 = ylim

    def px(self, x):
        return _ML + (x - self.x0) / (self.x1 - self.x0) * (_W - _ML - _MR)

    def py(self, y):
        return _H - _MB - (y - self.y0) / (self.y1 - self.y0) * (_H - _MT - _MB)

    def path(self, xs, ys):
        pts = " ".join(
            f"{self.px(x):.2f},{self.py(y):.2f}" for x, y in zip(xs, ys)
        )
        return pts


def posterior_svg(t, mean, std, truth_t=None, truth_u=None, title="",
                  measurements=None):
    """Render one posterior trace to an SVG string."""
    t = np.asarray(t, dtype=float)
    mean = np.asarray(mean, dtype=float)
    std = np.asarray(std, dtype=float)
    if not (len(t) == len(mean) == len(std)) or len(t) < 2:
        raise ConfigError("plot needs at least two aligned (t, mean, std) rows")
    order = np.argsort(t)
    t, mean, std = t[order], mean[order], std[order]
    lo_band = mean - 2.0 * std
    hi_band = mean + 2.0 * std
    ys = [lo_band.min(), hi_band.max()]
    if truth_u is not None and len(truth_u):
        ys += [np.min(truth_u), np.max(truth_u)]
    if measurements is not None and len(measurements[1]):
        ys += [np.min(measurements[1]), np.max(measurements[1])]
    y0, y1 = float(min(ys)), float(max(ys))
    pad = 0.05 * max(y1 - y0, 1e-12)
    ax = _Axes((float(t[0]), float(t[-1])), (y0 - pad, y1 + pad))

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
        f'viewBox="0 0 {_W} {_H}">',
        f'<rect width="{_W}" height="{_H}" fill="white"/>',
    ]
    for tx in _ticks(ax.x0, ax.x1):
        px = ax.px(tx)
        parts.append(
            f'<line x1="{px:.2f}" y1="{_MT}" x2="{px:.2f}" y2="{_H - _MB}" '
            f'stroke="#dddddd" stroke-width="1"/>'
        )
        parts.append(
            f'<text x="{px:.2f}" y="{_H - _MB + 16}" font-size="11" '
            f'text-anchor="middle" font-family="sans-serif">{_fmt(tx)}</text>'
        )
    for ty in _ticks(ax.y0, ax.y1):
        py = ax.py(ty)
        parts.append(
            f'<line x1="{_ML}" y1="{py:.2f}" x2="{_W - _MR}" y2="{py:.2f}" '
            f'stroke="#dddddd" stroke-width="1"/>'
        )
        parts.append(
            f'<text x="{_ML - 6}" y="{py + 4:.2f}" font-size="11" '
            f'text-anchor="end" font-family="sans-serif">{_fmt(ty)}</text>'
        )

    band_pts = ax.path(np.concatenate([t, t[::-1]]),
                       np.concatenate([hi_band, lo_band[::-1]]))
    parts.append(f'<polygon points="{band_pts}" fill="#aac8e8" fill-opacity="0.55"/>')
    if truth_t is not None and truth_u is not None and len(truth_t):
        ot = np.argsort(truth_t)
        parts.append(
            f'<polyline points="{ax.path(np.asarray(truth_t)[ot], np.asarray(truth_u)[ot])}" '
            f'fill="none" stroke="#333333" stroke-width="1.5" stroke-dasharray="5,3"/>'
        )
    parts.append(
        f'<polyline points="{ax.path(t, mean)}" fill="none" stroke="#1f5fa8" '
        f'stroke-width="2"/>'
    )
    if measurements is not None:
        mt, mu = measurements
        for xm, ym in zip(mt, mu):
            parts.append(
                f'<circle cx="{ax.px(xm):.2f}" cy="{ax.py(ym):.2f}" r="2.5" '
                f'fill="#c23b22"/>'
            )
    parts.append(
        f'<rect x="{_ML}" y="{_MT}" width="{_W - _ML - _MR}" '
        f'height="{_H - _MT - _MB}" fill="none" stroke="#444444"/>'
    )
    if title:
        parts.append(
            f'<text x="{_W / 2}" y="{_MT - 9}" font-size="13" text-anchor="middle" '
            f'font-family="sans-serif">{title}</text>'
        )
    parts.append(
        f'<text x="{(_ML + _W - _MR) / 2}" y="{_H - 10}" font-size="12" '
        f'text-anchor="middle" font-family="sans-serif">t (s)</text>'
    )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
