"""Chart emission for metric logs.

Two render paths with different contracts:

  * render_series_svg: hand-rolled SVG 1.1 line chart, one <polyline>
    per series. Output bytes are a pure function of the inputs, so
    charts can be diffed and regression-tested.
  * render_run_figure: matplotlib PNG rendered next to a run's CSV as
    the human-facing report; no byte-stability promise.
"""

from __future__ import annotations

import numpy as np

_PALETTE = (
    "#1f77b4",
    "#d62728",
    "#2ca02c",
    "#9467bd",
    "#ff7f0e",
    "#8c564b",
    "#17becf",
    "#7f7f7f",
)

_WIDTH, _HEIGHT = 800, 500
_LEFT, _RIGHT, _TOP, _BOTTOM = 80, 620, 40, 440


def _ticks(lo: float, hi: float, count: int = 5) -> list[float]:
    if hi <= lo:
        return [lo]
    return [lo + (hi - lo) * i / (count - 1) for i in range(count)]


def _esc(text: str) -> str:
    return text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def render_series_svg(series, xlabel: str, ylabel: str) -> str:
    """Deterministic SVG line chart.

    ``series`` is a list of (name, x, y) with equal-length 1-D arrays.
    """
    xs = np.concatenate([np.asarray(x, dtype=float) for _, x, _ in series])
    ys = np.concatenate([np.asarray(y, dtype=float) for _, _, y in series])
    x_lo, x_hi = float(xs.min()), float(xs.max())
    y_lo, y_hi = float(ys.min()), float(ys.max())
    x_span = (x_hi - x_lo) or 1.0
    y_span = (y_hi - y_lo) or 1.0

    def px(v: float) -> float:
        return _LEFT + (v - x_lo) / x_span * (_RIGHT - _LEFT)

    def py(v: float) -> float:
        return _BOTTOM - (v - y_lo) / y_span * (_BOTTOM - _TOP)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" '
        f'width="{_WIDTH}" height="{_HEIGHT}" viewBox="0 0 {_WIDTH} {_HEIGHT}">',
        f'<rect x="0" y="0" width="{_WIDTH}" height="{_HEIGHT}" fill="white"/>',
        f'<line x1="{_LEFT}" y1="{_BOTTOM}" x2="{_RIGHT}" y2="{_BOTTOM}" stroke="black"/>',
        f'<line x1="{_LEFT}" y1="{_TOP}" x2="{_LEFT}" y2="{_BOTTOM}" stroke="black"/>',
    ]
    for tick in _ticks(x_lo, x_hi):
        x = px(tick)
        parts.append(f'<line x1="{x:.2f}" y1="{_BOTTOM}" x2="{x:.2f}" y2="{_BOTTOM + 6}" stroke="black"/>')
        parts.append(
            f'<text x="{x:.2f}" y="{_BOTTOM + 22}" font-size="12" text-anchor="middle">{tick:.6g}</text>'
        )
    for tick in _ticks(y_lo, y_hi):
        y = py(tick)
        parts.append(f'<line x1="{_LEFT - 6}" y1="{y:.2f}" x2="{_LEFT}" y2="{y:.2f}" stroke="black"/>')
        parts.append(
            f'<text x="{_LEFT - 10}" y="{y + 4:.2f}" font-size="12" text-anchor="end">{tick:.6g}</text>'
        )
    parts.append(
        f'<text x="{(_LEFT + _RIGHT) / 2:.2f}" y="{_BOTTOM + 45}" font-size="14" '
        f'text-anchor="middle">{_esc(xlabel)}</text>'
    )
    parts.append(
        f'<text x="22" y="{(_TOP + _BOTTOM) / 2:.2f}" font-size="14" text-anchor="middle" '
        f'transform="rotate(-90 22 {(_TOP + _BOTTOM) / 2:.2f})">{_esc(ylabel)}</text>'
    )
    for k, (name, x, y) in enumerate(series):
        color = _PALETTE[k % len(_PALETTE)]
        pts = " ".join(f"{px(float(a)):.2f},{py(float(b)):.2f}" for a, b in zip(x, y))
        parts.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{pts}"/>')
        ly = _TOP + 10 + 18 * k
        parts.append(
            f'<line x1="{_RIGHT + 12}" y1="{ly}" x2="{_RIGHT + 40}" y2="{ly}" '
            f'stroke="{color}" stroke-width="1.5"/>'
        )
        parts.append(f'<text x="{_RIGHT + 46}" y="{ly + 4}" font-size="12">{_esc(name)}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def write_series_svg(series, xlabel: str, ylabel: str, path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(render_series_svg(series, xlabel, ylabel))


def render_run_figure(rows, path: str, title: str = "") -> None:
    """Matplotlib convergence report for one run's metric rows."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    rounds = [r.round for r in rows]
    fig, (ax_ap, ax_surr) = plt.subplots(1, 2, figsize=(10, 4))
    ax_ap.plot(rounds, [r.test_ap for r in rows], color=_PALETTE[0])
    ax_ap.set_xlabel("round")
    ax_ap.set_ylabel("test AP")
    ax_surr.plot(rounds, [r.mean_train_surrogate for r in rows], color=_PALETTE[1])
    ax_surr.set_xlabel("round")
    ax_surr.set_ylabel("train surrogate AP")
    if title:
        fig.suptitle(title)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
