"""Deterministic CSV and SVG reporting for sweep and ablation results.

Floats are serialised with ``repr`` (shortest round-trip form), so identical
runs produce byte-identical files and readers recover exact values.
"""

from __future__ import annotations

import math
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .budget import BudgetAllocation
from .pipeline import AblationRow, SweepRow

SWEEP_HEADER = "mode,tau,rho,sparsity,e_cam,e_pc,seed"
ABLATION_HEADER = "lambda,tau,rho,sparsity,e_cam,e_pc,seed"
ALLOCATION_HEADER = "layer,head,hess,baseline,ideal,final"


def _fmt(value: float) -> str:
    return repr(float(value))


def sweep_rows_to_csv(rows: Sequence[SweepRow]) -> str:
    lines = [SWEEP_HEADER]
    for r in rows:
        lines.append(",".join([r.mode, _fmt(r.tau), _fmt(r.rho), _fmt(r.sparsity),
                               _fmt(r.e_cam), _fmt(r.e_pc), str(r.seed)]))
    return "\n".join(lines) + "\n"


def sweep_rows_from_csv(text: str) -> list[SweepRow]:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0] != SWEEP_HEADER:
        raise ValueError(f"expected header {SWEEP_HEADER!r}")
    rows = []
    for ln in lines[1:]:
        mode, tau, rho, sparsity, e_cam, e_pc, seed = ln.split(",")
        rows.append(SweepRow(mode=mode, tau=float(tau), rho=float(rho),
                             sparsity=float(sparsity), e_cam=float(e_cam),
                             e_pc=float(e_pc), seed=int(seed)))
    return rows


def write_sweep_csv(rows: Sequence[SweepRow], path) -> None:
    Path(path).write_text(sweep_rows_to_csv(rows))


def read_sweep_csv(path) -> list[SweepRow]:
    return sweep_rows_from_csv(Path(path).read_text())


def ablation_rows_to_csv(rows: Sequence[AblationRow]) -> str:
    lines = [ABLATION_HEADER]
    for r in rows:
        lines.append(",".join([_fmt(r.lam), _fmt(r.tau), _fmt(r.rho), _fmt(r.sparsity),
                               _fmt(r.e_cam), _fmt(r.e_pc), str(r.seed)]))
    return "\n".join(lines) + "\n"


def write_ablation_csv(rows: Sequence[AblationRow], path) -> None:
    Path(path).write_text(ablation_rows_to_csv(rows))


def allocations_to_csv(allocations: Mapping[int, BudgetAllocation]) -> str:
    """Per-head allocation dump; one line per (layer, head)."""
    lines = [ALLOCATION_HEADER]
    for layer in sorted(allocations):
        alloc = allocations[layer]
        for head in range(alloc.n_heads):
            weight = alloc.weights[head] if alloc.weights is not None else ""
            baseline = alloc.baselines[head] if alloc.baselines is not None else ""
            lines.append(",".join([
                str(layer), str(head),
                _fmt(weight) if weight != "" else "",
                str(baseline),
                _fmt(alloc.ideal[head]),
                str(alloc.final[head]),
            ]))
    return "\n".join(lines) + "\n"


def write_allocations_csv(allocations: Mapping[int, BudgetAllocation], path) -> None:
    Path(path).write_text(allocations_to_csv(allocations))


# ---------------------------------------------------------------------------
# SVG: error vs. sparsity, one polyline per mode.  Hand-emitted on purpose --
# a chart dependency would be heavier than the chart.
# ---------------------------------------------------------------------------

_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#8c564b", "#e377c2")


def error_chart_svg(rows: Sequence[SweepRow], *, metric: str = "e_cam",
                    width: int = 640, height: int = 420) -> str:
    """Line chart of ``metric`` against achieved sparsity, grouped by mode."""
    if metric not in ("e_cam", "e_pc"):
        raise ValueError(f"metric must be e_cam or e_pc, got {metric!r}")
    series: dict[str, list[tuple[float, float]]] = {}
    for r in rows:
        y = getattr(r, metric)
        if math.isfinite(y) and math.isfinite(r.sparsity):
            series.setdefault(r.mode, []).append((r.sparsity, y))
    if not series:
        raise ValueError("no finite data points to chart")
    xs = [p[0] for pts in series.values() for p in pts]
    ys = [p[1] for pts in series.values() for p in pts]
    x_lo, x_hi = min(xs), max(xs)
    y_lo, y_hi = min(ys), max(ys)
    if x_hi - x_lo < 1e-12:
        x_hi = x_lo + 1.0
    if y_hi - y_lo < 1e-12:
        y_hi = y_lo + 1.0
    margin = 56
    plot_w, plot_h = width - 2 * margin, height - 2 * margin

    def sx(x: float) -> float:
        return margin + plot_w * (x - x_lo) / (x_hi - x_lo)

    def sy(y: float) -> float:
        return height - margin - plot_h * (y - y_lo) / (y_hi - y_lo)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<line x1="{margin}" y1="{height - margin}" x2="{width - margin}" '
        f'y2="{height - margin}" stroke="black"/>',
        f'<line x1="{margin}" y1="{margin}" x2="{margin}" '
        f'y2="{height - margin}" stroke="black"/>',
        f'<text x="{width / 2:.1f}" y="{height - 12}" text-anchor="middle" '
        f'font-size="13">achieved sparsity</text>',
        f'<text x="16" y="{height / 2:.1f}" text-anchor="middle" font-size="13" '
        f'transform="rotate(-90 16 {height / 2:.1f})">{metric}</text>',
        f'<text x="{margin}" y="{height - margin + 16}" text-anchor="middle" '
        f'font-size="11">{x_lo:.3g}</text>',
        f'<text x="{width - margin}" y="{height - margin + 16}" text-anchor="middle" '
        f'font-size="11">{x_hi:.3g}</text>',
        f'<text x="{margin - 6}" y="{height - margin + 4}" text-anchor="end" '
        f'font-size="11">{y_lo:.3g}</text>',
        f'<text x="{margin - 6}" y="{margin + 4}" text-anchor="end" '
        f'font-size="11">{y_hi:.3g}</text>',
    ]
    for i, (mode, pts) in enumerate(sorted(series.items())):
        color = _COLORS[i % len(_COLORS)]
        pts = sorted(pts)
        coords = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in pts)
        parts.append(f'<polyline points="{coords}" fill="none" stroke="{color}" '
                     f'stroke-width="1.5"/>')
        for x, y in pts:
            parts.append(f'<circle cx="{sx(x):.2f}" cy="{sy(y):.2f}" r="2.5" '
                         f'fill="{color}"/>')
        legend_y = margin + 16 * i
        parts.append(f'<line x1="{width - margin - 110}" y1="{legend_y}" '
                     f'x2="{width - margin - 86}" y2="{legend_y}" stroke="{color}" '
                     f'stroke-width="2"/>')
        parts.append(f'<text x="{width - margin - 80}" y="{legend_y + 4}" '
                     f'font-size="12">{mode}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def write_error_chart_svg(rows: Sequence[SweepRow], path, *,
                          metric: str = "e_cam") -> None:
    Path(path).write_text(error_chart_svg(rows, metric=metric))
