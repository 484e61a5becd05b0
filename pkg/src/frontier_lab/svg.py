"""Deterministic SVG rendering of experiment reports.

Pure string assembly: fixed 640x480 canvas, axis ranges derived from the
data with 5% padding, a fixed palette, and fixed-precision coordinate
formatting, so rendering the same report twice yields identical bytes.
"""

from __future__ import annotations

import math
from html import escape

from .errors import DataFormatError
from .reporting import ExperimentReport, Table

WIDTH, HEIGHT = 640, 480
MARGIN_LEFT, MARGIN_RIGHT, MARGIN_TOP, MARGIN_BOTTOM = 64, 18, 40, 48
PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2")
GRID = "#d9d9d9"
AXIS = "#444444"

PLOT_KINDS = (
    "attenuation",
    "cancellation",
    "calibration-scatter",
    "calibration-sharpe",
    "nonlinear-weights",
    "nonlinear-frontier",
    "alignment-frontiers",
    "alignment-sharpe",
    "real-data-scatter",
    "real-data-frontier",
)


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def _nice_ticks(lo: float, hi: float, target: int = 5) -> list[float]:
    span = hi - lo
    if span <= 0:
        return [lo]
    raw = span / target
    mag = 10.0 ** math.floor(math.log10(raw))
    norm = raw / mag
    if norm < 1.5:
        step = mag
    elif norm < 3.5:
        step = 2.0 * mag
    elif norm < 7.5:
        step = 5.0 * mag
    else:
        step = 10.0 * mag
    first = math.ceil(lo / step) * step
    ticks = []
    v = first
    while v <= hi + 1e-9 * span:
        ticks.append(0.0 if v == 0 else v)
        v += step
    return ticks


class _Frame:
    """Linear data-to-pixel mapping with 5% padding on each side."""

    def __init__(self, xs, ys):
        xs = [float(x) for x in xs]
        ys = [float(y) for y in ys]
        if not xs or not ys:
            raise DataFormatError("cannot render an empty data series")
        self.x_lo, self.x_hi = self._padded(min(xs), max(xs))
        self.y_lo, self.y_hi = self._padded(min(ys), max(ys))

    @staticmethod
    def _padded(lo: float, hi: float) -> tuple[float, float]:
        span = hi - lo
        pad = 0.05 * span if span > 0 else max(abs(hi), 1.0) * 0.05
        return lo - pad, hi + pad

    def px(self, x: float) -> float:
        frac = (float(x) - self.x_lo) / (self.x_hi - self.x_lo)
        return MARGIN_LEFT + frac * (WIDTH - MARGIN_LEFT - MARGIN_RIGHT)

    def py(self, y: float) -> float:
        frac = (float(y) - self.y_lo) / (self.y_hi - self.y_lo)
        return HEIGHT - MARGIN_BOTTOM - frac * (HEIGHT - MARGIN_TOP - MARGIN_BOTTOM)


class _Chart:
    def __init__(self, frame: _Frame, title: str, x_label: str, y_label: str, stamp: str):
        self.frame = frame
        self.parts: list[str] = [
            '<svg xmlns="http://www.w3.org/2000/svg" '
            f'width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">',
            f"<!-- config {escape(stamp)} -->",
            f'<rect width="{WIDTH}" height="{HEIGHT}" fill="#ffffff"/>',
        ]
        self._axes(title, x_label, y_label)

    def _axes(self, title: str, x_label: str, y_label: str) -> None:
        f = self.frame
        x0, x1 = MARGIN_LEFT, WIDTH - MARGIN_RIGHT
        y0, y1 = HEIGHT - MARGIN_BOTTOM, MARGIN_TOP
        for tx in _nice_ticks(f.x_lo, f.x_hi):
            px = f.px(tx)
            self.parts.append(
                f'<line x1="{_fmt(px)}" y1="{y0}" x2="{_fmt(px)}" y2="{y1}" '
                f'stroke="{GRID}" stroke-width="1"/>'
            )
            self.parts.append(
                f'<text x="{_fmt(px)}" y="{y0 + 16}" font-size="11" text-anchor="middle" '
                f'fill="{AXIS}" font-family="monospace">{tx:.6g}</text>'
            )
        for ty in _nice_ticks(f.y_lo, f.y_hi):
            py = f.py(ty)
            self.parts.append(
                f'<line x1="{x0}" y1="{_fmt(py)}" x2="{x1}" y2="{_fmt(py)}" '
                f'stroke="{GRID}" stroke-width="1"/>'
            )
            self.parts.append(
                f'<text x="{x0 - 6}" y="{_fmt(py + 4)}" font-size="11" text-anchor="end" '
                f'fill="{AXIS}" font-family="monospace">{ty:.6g}</text>'
            )
        self.parts.append(
            f'<rect x="{x0}" y="{y1}" width="{x1 - x0}" height="{y0 - y1}" '
            f'fill="none" stroke="{AXIS}" stroke-width="1"/>'
        )
        self.parts.append(
            f'<text x="{(x0 + x1) // 2}" y="22" font-size="14" text-anchor="middle" '
            f'fill="#000000" font-family="sans-serif">{escape(title)}</text>'
        )
        self.parts.append(
            f'<text x="{(x0 + x1) // 2}" y="{HEIGHT - 12}" font-size="12" text-anchor="middle" '
            f'fill="{AXIS}" font-family="sans-serif">{escape(x_label)}</text>'
        )
        self.parts.append(
            f'<text x="16" y="{(y0 + y1) // 2}" font-size="12" text-anchor="middle" '
            f'fill="{AXIS}" font-family="sans-serif" '
            f'transform="rotate(-90 16 {(y0 + y1) // 2})">{escape(y_label)}</text>'
        )

    def dots(self, points, color: str, radius: float = 2.5, opacity: float = 0.65) -> None:
        f = self.frame
        for x, y in points:
            self.parts.append(
                f'<circle cx="{_fmt(f.px(x))}" cy="{_fmt(f.py(y))}" r="{radius:g}" '
                f'fill="{color}" fill-opacity="{opacity:g}"/>'
            )

    def polyline(self, points, color: str, width: float = 1.8, dash: str | None = None) -> None:
        f = self.frame
        coords = " ".join(f"{_fmt(f.px(x))},{_fmt(f.py(y))}" for x, y in points)
        dash_attr = f' stroke-dasharray="{dash}"' if dash else ""
        self.parts.append(
            f'<polyline points="{coords}" fill="none" stroke="{color}" '
            f'stroke-width="{width:g}"{dash_attr}/>'
        )

    def label(self, x: float, y: float, text: str, color: str = AXIS, size: int = 11) -> None:
        f = self.frame
        self.parts.append(
            f'<text x="{_fmt(f.px(x) + 4)}" y="{_fmt(f.py(y) - 4)}" font-size="{size}" '
            f'fill="{color}" font-family="sans-serif">{escape(text)}</text>'
        )

    def legend(self, entries) -> None:
        x = WIDTH - MARGIN_RIGHT - 150
        y = MARGIN_TOP + 14
        for i, (name, color) in enumerate(entries):
            yy = y + 16 * i
            self.parts.append(
                f'<rect x="{x}" y="{yy - 9}" width="10" height="10" fill="{color}"/>'
            )
            self.parts.append(
                f'<text x="{x + 15}" y="{yy}" font-size="11" fill="{AXIS}" '
                f'font-family="sans-serif">{escape(name)}</text>'
            )

    def render(self) -> str:
        return "\n".join(self.parts + ["</svg>"]) + "\n"


def _table(report: ExperimentReport, name: str) -> Table:
    table = report.tables.get(name)
    if table is None or not table.rows:
        raise DataFormatError(f"report has no data in table {name!r}")
    return table


def _solved_rows(table: Table) -> list[tuple]:
    if "skipped" in table.columns:
        idx = table.columns.index("skipped")
        return [r for r in table.rows if not r[idx]]
    return list(table.rows)


def _scatter_pair(report, table_name, x_col, y_col, title, x_label, y_label, diagonal=False):
    table = _table(report, table_name)
    xs, ys = table.column(x_col), table.column(y_col)
    frame = _Frame(xs + ys, xs + ys) if diagonal else _Frame(xs, ys)
    chart = _Chart(frame, title, x_label, y_label, report.config.config_hash())
    if diagonal:
        lo = max(frame.x_lo, frame.y_lo)
        hi = min(frame.x_hi, frame.y_hi)
        chart.polyline([(lo, lo), (hi, hi)], "#999999", width=1.0, dash="4,3")
    chart.dots(list(zip(xs, ys)), PALETTE[0])
    return chart.render()


def _frontier_curve(report, title):
    rows = _solved_rows(_table(report, "frontier"))
    cols = report.tables["frontier"].columns
    vol_i, tgt_i = cols.index("volatility"), cols.index("target_return")
    pts = sorted((r[vol_i], r[tgt_i]) for r in rows)
    frame = _Frame([p[0] for p in pts], [p[1] for p in pts])
    chart = _Chart(frame, title, "portfolio volatility", "expected portfolio return",
                   report.config.config_hash())
    curve = [(r[vol_i], r[tgt_i]) for r in rows]
    chart.polyline(curve, PALETTE[0])
    chart.dots(curve, PALETTE[0], radius=1.8, opacity=0.9)
    return chart.render()


def _render_attenuation(report: ExperimentReport) -> str:
    table = _table(report, "table")
    xs = table.column("sigma_zeta")
    mc = table.column("mc_slope")
    theory = table.column("theory_slope")
    frame = _Frame(xs, mc + theory)
    chart = _Chart(frame, "OLS slope vs. confounder noise", "sigma_zeta", "slope",
                   report.config.config_hash())
    chart.polyline(list(zip(xs, theory)), PALETTE[1], dash="6,4")
    chart.dots(list(zip(xs, mc)), PALETTE[0], radius=3.5, opacity=0.9)
    chart.legend([("Monte Carlo", PALETTE[0]), ("closed form", PALETTE[1])])
    return chart.render()


def _render_cancellation(report: ExperimentReport) -> str:
    table = _table(report, "weights")
    rep_i = table.columns.index("rep")
    first_rep = min(r[rep_i] for r in table.rows)
    wt_i, wp_i = table.columns.index("omega_true"), table.columns.index("omega_pred")
    pts = [(r[wt_i], r[wp_i]) for r in table.rows if r[rep_i] == first_rep]
    frame = _Frame([p[0] for p in pts] + [p[1] for p in pts],
                   [p[0] for p in pts] + [p[1] for p in pts])
    chart = _Chart(frame, "True vs. misspecified weights", "true weight", "predicted weight",
                   report.config.config_hash())
    chart.polyline([(frame.x_lo, 0.0), (frame.x_hi, 0.0)], "#999999", width=0.8)
    chart.polyline([(0.0, frame.y_lo), (0.0, frame.y_hi)], "#999999", width=0.8)
    chart.dots(pts, PALETTE[0])
    return chart.render()


def _render_calibration_scatter(report: ExperimentReport) -> str:
    table = _table(report, "scatter")
    exps = sorted(set(table.column("exponent")))
    chosen = sorted({exps[0], exps[len(exps) // 2], exps[-1]})
    mu_i = table.columns.index("mu_value")
    t_i = table.columns.index("surrogate_value")
    e_i = table.columns.index("exponent")
    frame = _Frame(table.column("mu_value"), table.column("surrogate_value"))
    chart = _Chart(frame, "Surrogates from signed power maps", "signal value",
                   "surrogate value", report.config.config_hash())
    legend = []
    for k, e in enumerate(chosen):
        pts = [(r[mu_i], r[t_i]) for r in table.rows if r[e_i] == e]
        chart.dots(pts, PALETTE[k % len(PALETTE)])
        legend.append((f"p={e:g}", PALETTE[k % len(PALETTE)]))
    chart.legend(legend)
    return chart.render()


def _render_calibration_sharpe(report: ExperimentReport) -> str:
    table = _table(report, "sharpe")
    xs, ys = table.column("exponent"), table.column("relative_sharpe")
    frame = _Frame(xs, ys)
    chart = _Chart(frame, "Relative Sharpe vs. power-map exponent", "exponent p",
                   "relative Sharpe", report.config.config_hash())
    pts = sorted(zip(xs, ys))
    chart.polyline(pts, PALETTE[0])
    chart.dots(pts, PALETTE[0], radius=3.5, opacity=0.9)
    return chart.render()


def _render_alignment_sharpe(report: ExperimentReport) -> str:
    table = _table(report, "sharpe")
    xs, ys = table.column("cos_theta"), table.column("sharpe_ratio")
    frame = _Frame(xs, ys)
    chart = _Chart(frame, "Sharpe contraction vs. alignment", "cos(theta)",
                   "Sharpe relative to aligned signal", report.config.config_hash())
    lo, hi = max(frame.x_lo, frame.y_lo), min(frame.x_hi, frame.y_hi)
    chart.polyline([(lo, lo), (hi, hi)], PALETTE[1], width=1.0, dash="6,4")
    chart.dots(sorted(zip(xs, ys)), PALETTE[0], radius=3.5, opacity=0.9)
    chart.legend([("measured", PALETTE[0]), ("identity", PALETTE[1])])
    return chart.render()


def _render_alignment_frontiers(report: ExperimentReport) -> str:
    table = _table(report, "frontiers")
    rows = _solved_rows(table)
    cols = table.columns
    th_i = cols.index("theta")
    vol_i, rr_i = cols.index("volatility"), cols.index("realized_return")
    thetas = sorted(set(r[th_i] for r in rows))
    # At most six curves keeps the figure readable; evenly indexed subset.
    if len(thetas) > 6:
        idx = [round(i * (len(thetas) - 1) / 5) for i in range(6)]
        thetas = [thetas[i] for i in sorted(set(idx))]
    frame = _Frame([r[vol_i] for r in rows], [r[rr_i] for r in rows])
    chart = _Chart(frame, "Realized frontiers as alignment degrades", "portfolio volatility",
                   "realized return", report.config.config_hash())
    legend = []
    for k, theta in enumerate(thetas):
        pts = [(r[vol_i], r[rr_i]) for r in rows if r[th_i] == theta]
        color = PALETTE[k % len(PALETTE)]
        chart.polyline(pts, color, width=1.4)
        legend.append((f"cos={math.cos(theta):.2f}", color))
    chart.legend(legend)
    return chart.render()


def _render_real_data_scatter(report: ExperimentReport) -> str:
    table = _table(report, "assets")
    vol, mean = table.column("volatility"), table.column("mean_return")
    frame = _Frame(vol, mean)
    chart = _Chart(frame, "Assets by mean and volatility", "volatility", "mean return",
                   report.config.config_hash())
    chart.dots(list(zip(vol, mean)), PALETTE[0], radius=4.0, opacity=0.9)
    t_i = table.columns.index("ticker")
    for row in table.rows:
        chart.label(row[table.columns.index("volatility")],
                    row[table.columns.index("mean_return")], str(row[t_i]))
    return chart.render()


_RENDERERS = {
    "attenuation": _render_attenuation,
    "cancellation": _render_cancellation,
    "calibration-scatter": _render_calibration_scatter,
    "calibration-sharpe": _render_calibration_sharpe,
    "nonlinear-weights": lambda r: _scatter_pair(
        r, "weights", "omega_true", "omega_pred",
        "True vs. surrogate weights (nonlinear model)", "true weight", "predicted weight",
        diagonal=True),
    "nonlinear-frontier": lambda r: _frontier_curve(r, "Frontier from surrogate signals"),
    "alignment-frontiers": _render_alignment_frontiers,
    "alignment-sharpe": _render_alignment_sharpe,
    "real-data-scatter": _render_real_data_scatter,
    "real-data-frontier": lambda r: _frontier_curve(r, "Empirical frontier"),
}


def render_plot(report: ExperimentReport, kind: str) -> str:
    """Render one figure kind for a report as a standalone SVG document."""
    if kind not in _RENDERERS:
        raise DataFormatError(f"unknown plot kind {kind!r}; choose from {PLOT_KINDS}")
    return _RENDERERS[kind](report)
