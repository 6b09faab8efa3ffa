"""Tiny deterministic SVG charts (lines and box plots).

Hand-rolled so output bytes depend only on the data: no timestamps, no
hashed element ids, no font probing.  These figures are companions to the
CSV files that carry the actual numbers.
"""

from __future__ import annotations

import math

_W, _H = 640, 440
_ML, _MR, _MT, _MB = 70, 20, 36, 56
_PALETTE = ("#000000", "#1f6fb4", "#c23b22", "#2e8b57", "#8a2be2", "#b8860b")


def _fmt(v: float) -> str:
    return f"{v:.6g}"


def _ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    if hi <= lo:
        hi = lo + 1.0
    raw = (hi - lo) / n
    mag = 10.0 ** math.floor(math.log10(raw))
    for mult in (1.0, 2.0, 2.5, 5.0, 10.0):
        if raw <= mult * mag:
            step = mult * mag
            break
    start = math.ceil(lo / step) * step
    out = []
    t = start
    while t <= hi + 1e-9 * step:
        out.append(0.0 if abs(t) < 1e-12 else t)
        t += step
    return out


class _Canvas:
    def __init__(self, title: str, xlabel: str, ylabel: str,
                 xlim: tuple[float, float], ylim: tuple[float, float]):
        self.parts: list[str] = []
        self.xlim, self.ylim = xlim, ylim
        self.parts.append(
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
            f'viewBox="0 0 {_W} {_H}" font-family="sans-serif" font-size="12">'
        )
        self.parts.append(f'<rect width="{_W}" height="{_H}" fill="#ffffff"/>')
        self.parts.append(
            f'<text x="{_W / 2}" y="20" text-anchor="middle" font-size="14">{title}</text>'
        )
        self.parts.append(
            f'<text x="{(_ML + _W - _MR) / 2}" y="{_H - 12}" text-anchor="middle">{xlabel}</text>'
        )
        self.parts.append(
            f'<text x="16" y="{(_MT + _H - _MB) / 2}" text-anchor="middle" '
            f'transform="rotate(-90 16 {(_MT + _H - _MB) / 2})">{ylabel}</text>'
        )
        self.parts.append(
            f'<rect x="{_ML}" y="{_MT}" width="{_W - _ML - _MR}" '
            f'height="{_H - _MT - _MB}" fill="none" stroke="#333333"/>'
        )
        for t in _ticks(*xlim):
            px = self.x(t)
            self.parts.append(
                f'<line x1="{_fmt(px)}" y1="{_H - _MB}" x2="{_fmt(px)}" '
                f'y2="{_H - _MB + 4}" stroke="#333333"/>'
            )
            self.parts.append(
                f'<text x="{_fmt(px)}" y="{_H - _MB + 17}" text-anchor="middle">{_fmt(t)}</text>'
            )
        for t in _ticks(*ylim):
            py = self.y(t)
            self.parts.append(
                f'<line x1="{_ML - 4}" y1="{_fmt(py)}" x2="{_ML}" y2="{_fmt(py)}" stroke="#333333"/>'
            )
            self.parts.append(
                f'<text x="{_ML - 7}" y="{_fmt(py + 4)}" text-anchor="end">{_fmt(t)}</text>'
            )

    def x(self, v: float) -> float:
        lo, hi = self.xlim
        return _ML + (v - lo) / (hi - lo) * (_W - _ML - _MR)

    def y(self, v: float) -> float:
        lo, hi = self.ylim
        return _H - _MB - (v - lo) / (hi - lo) * (_H - _MT - _MB)

    def polyline(self, xs, ys, color: str, label: str | None = None, idx: int = 0):
        pts = " ".join(f"{_fmt(self.x(a))},{_fmt(self.y(b))}" for a, b in zip(xs, ys))
        self.parts.append(
            f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.5"/>'
        )
        if label:
            ly = _MT + 16 + 16 * idx
            self.parts.append(
                f'<line x1="{_W - _MR - 110}" y1="{ly - 4}" x2="{_W - _MR - 86}" '
                f'y2="{ly - 4}" stroke="{color}" stroke-width="1.5"/>'
            )
            self.parts.append(f'<text x="{_W - _MR - 80}" y="{ly}">{label}</text>')

    def render(self) -> str:
        return "\n".join(self.parts) + "\n</svg>\n"


def _span(values) -> tuple[float, float]:
    lo = min(values)
    hi = max(values)
    if hi == lo:
        lo, hi = lo - 0.5, hi + 0.5
    pad = 0.05 * (hi - lo)
    return lo - pad, hi + pad


def line_plot(path, series, title: str, xlabel: str, ylabel: str) -> None:
    """series: list of (label, xs, ys)."""
    all_x = [v for _, xs, _ in series for v in xs]
    all_y = [v for _, _, ys in series for v in ys if math.isfinite(v)]
    canvas = _Canvas(title, xlabel, ylabel, _span(all_x), _span(all_y or [0.0]))
    for i, (label, xs, ys) in enumerate(series):
        canvas.polyline(xs, ys, _PALETTE[i % len(_PALETTE)], label, i)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(canvas.render())


def _quartiles(values) -> tuple[float, float, float, float, float]:
    vs = sorted(values)
    n = len(vs)

    def q(frac):
        pos = frac * (n - 1)
        i = int(pos)
        f = pos - i
        return vs[i] * (1 - f) + vs[min(i + 1, n - 1)] * f

    return vs[0], q(0.25), q(0.5), q(0.75), vs[-1]


def box_plot(path, groups, title: str, xlabel: str, ylabel: str) -> None:
    """groups: list of (label, values); one box per group, min/max whiskers."""
    finite = [
        [v for v in values if math.isfinite(v)] or [0.0] for _, values in groups
    ]
    lo, hi = _span([v for vals in finite for v in vals])
    canvas = _Canvas(title, xlabel, ylabel, (0.0, float(len(groups))), (lo, hi))
    # Group tick labels replace numeric x ticks visually; numeric ones are cheap to keep.
    for i, ((label, _), values) in enumerate(zip(groups, finite)):
        vmin, q1, q2, q3, vmax = _quartiles(values)
        cx = canvas.x(i + 0.5)
        half = 0.3 * (canvas.x(1) - canvas.x(0))
        parts = canvas.parts
        parts.append(
            f'<line x1="{_fmt(cx)}" y1="{_fmt(canvas.y(vmin))}" x2="{_fmt(cx)}" '
            f'y2="{_fmt(canvas.y(vmax))}" stroke="#333333"/>'
        )
        parts.append(
            f'<rect x="{_fmt(cx - half)}" y="{_fmt(canvas.y(q3))}" width="{_fmt(2 * half)}" '
            f'height="{_fmt(canvas.y(q1) - canvas.y(q3))}" fill="#cfe2f3" stroke="#333333"/>'
        )
        parts.append(
            f'<line x1="{_fmt(cx - half)}" y1="{_fmt(canvas.y(q2))}" x2="{_fmt(cx + half)}" '
            f'y2="{_fmt(canvas.y(q2))}" stroke="#333333" stroke-width="2"/>'
        )
        parts.append(
            f'<text x="{_fmt(cx)}" y="{_H - _MB + 32}" text-anchor="middle">{label}</text>'
        )
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(canvas.render())


def gaussian_kde_curve(values, n_grid: int = 256) -> tuple[list[float], list[float]]:
    """Gaussian KDE with Silverman bandwidth on an extended uniform grid."""
    import numpy as np

    v = np.asarray(values, dtype=float)
    n = v.size
    sd = float(np.std(v))
    iqr = float(np.subtract(*np.percentile(v, [75, 25])))
    h = 0.9 * min(sd if sd > 0 else 1.0, iqr / 1.34 if iqr > 0 else sd or 1.0) * n ** (-0.2)
    if h <= 0:
        h = 1.0
    grid = np.linspace(v.min() - 3 * h, v.max() + 3 * h, n_grid)
    dens = np.zeros_like(grid)
    chunk = 4096
    for i in range(0, n, chunk):
        z = (grid[:, None] - v[None, i : i + chunk]) / h
        dens += np.exp(-0.5 * z * z).sum(axis=1)
    dens /= n * h * math.sqrt(2 * math.pi)
    return grid.tolist(), dens.tolist()
