"""The three figure kinds: timeplot, boxplot, density.

Every renderer writes both a PNG and an SVG next to each other and returns
the written paths.  Rendering is backend-free (``matplotlib.figure.Figure``
directly, no pyplot), so nothing here touches a display.

Box statistics are taken from summary.csv whenever one is available so the
drawn boxes are the exported numbers, not a second opinion.  The fallback
recomputation (cycles.csv only) uses the same nearest-rank quantiles and
1.5x-IQR fences as the exporter.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from matplotlib.figure import Figure

from cyclefigs import FigureError
from cyclefigs.csvio import (
    CycleRow,
    SummaryRow,
    load_cycles,
    load_summary,
    segment_order,
)

_SHADE = ("#f0f0f0", "#d8e4f0")


def _out_paths(out: str | Path) -> tuple[Path, Path]:
    p = Path(out)
    if p.suffix.lower() in (".png", ".svg"):
        p = p.with_suffix("")
    return p.with_suffix(".png"), p.with_suffix(".svg")


def _save(fig: Figure, out: str | Path) -> tuple[Path, Path]:
    png, svg = _out_paths(out)
    try:
        png.parent.mkdir(parents=True, exist_ok=True)
        fig.savefig(png, dpi=150)
        fig.savefig(svg)
    except OSError as e:
        raise FigureError(f"cannot write {png.parent}: {e.strerror or e}")
    return png, svg


def _by_segment(rows: list[CycleRow]) -> dict[str, list[int]]:
    groups: dict[str, list[int]] = {}
    for r in rows:
        groups.setdefault(r.segment, []).append(r.total_us)
    return groups


# ---------------------------------------------------------------------------
# timeplot
# ---------------------------------------------------------------------------


def render_timeplot(cycles_path: str | Path, out: str | Path) -> tuple[Path, Path]:
    """Cycle total over run time, with alternating segment shading."""
    rows = load_cycles(cycles_path)
    fig = Figure(figsize=(9, 4))
    ax = fig.add_subplot()

    order = segment_order(rows)
    bounds: dict[str, tuple[int, int]] = {}
    for r in rows:
        lo, hi = bounds.get(r.segment, (r.start_us, r.start_us + r.total_us))
        bounds[r.segment] = (min(lo, r.start_us),
                             max(hi, r.start_us + r.total_us))
    for i, seg in enumerate(order):
        lo, hi = bounds[seg]
        ax.axvspan(lo / 1e6, hi / 1e6, color=_SHADE[i % 2], zorder=0)
        ax.text((lo + hi) / 2e6, 0.97, seg, transform=ax.get_xaxis_transform(),
                ha="center", va="top", fontsize=8, color="#555555")

    xs = [r.start_us / 1e6 for r in rows]
    ys = [r.total_us for r in rows]
    marker = "o" if len(rows) == 1 else None
    ax.plot(xs, ys, lw=0.6, marker=marker, color="#1f3b73", zorder=2)
    ax.set_xlabel("run time [s]")
    ax.set_ylabel("cycle time [µs]")
    ax.set_title("cycle time over the run")
    fig.tight_layout()
    return _save(fig, out)


# ---------------------------------------------------------------------------
# boxplot
# ---------------------------------------------------------------------------


def _nearest_rank(sorted_vals: list[int], p_num: int, p_den: int) -> int:
    """p-quantile by nearest rank: value at ceil(p * n) (1-based)."""
    n = len(sorted_vals)
    rank = -(-(p_num * n) // p_den)
    return sorted_vals[max(rank, 1) - 1]


def box_from_values(segment: str, values: list[int]) -> dict:
    """bxp stats dict from raw totals, matching the exporter's rules."""
    vs = sorted(values)
    q1 = _nearest_rank(vs, 1, 4)
    med = _nearest_rank(vs, 1, 2)
    q3 = _nearest_rank(vs, 3, 4)
    iqr = q3 - q1
    lo_fence = q1 - (3 * iqr) // 2
    hi_fence = q3 + (3 * iqr) // 2
    inside = [v for v in vs if lo_fence <= v <= hi_fence]
    return {
        "label": segment, "med": med, "q1": q1, "q3": q3,
        "whislo": min(inside), "whishi": max(inside), "fliers": [],
    }


def box_from_summary(s: SummaryRow) -> dict:
    return {
        "label": s.segment, "med": s.median_us, "q1": s.q1_us, "q3": s.q3_us,
        "whislo": s.whisker_low_us, "whishi": s.whisker_high_us, "fliers": [],
    }


@dataclass(frozen=True, slots=True)
class BoxplotResult:
    paths: tuple[Path, Path]
    stats: tuple[dict, ...]
    drawn_medians: tuple[float, ...]
    source: str                      # "summary" or "recomputed"


def render_boxplot(cycles_path: str | Path, out: str | Path,
                   summary_path: str | Path | None = None) -> BoxplotResult:
    """One box per segment.  Statistics come straight from summary.csv when
    present (given explicitly or found next to cycles.csv); otherwise they
    are recomputed from the cycles."""
    cycles_p = Path(cycles_path)
    rows = load_cycles(cycles_p)
    groups = _by_segment(rows)
    order = segment_order(rows)

    if summary_path is None:
        sibling = cycles_p.parent / "summary.csv"
        summary_path = sibling if sibling.is_file() else None

    if summary_path is not None:
        by_seg = {s.segment: s for s in load_summary(summary_path)}
        stats = []
        for seg in order:
            if seg not in by_seg:
                raise FigureError(
                    f"{summary_path}: no row for segment {seg!r} "
                    f"present in {cycles_p}")
            if by_seg[seg].count != len(groups[seg]):
                raise FigureError(
                    f"{summary_path}: segment {seg!r} counts {by_seg[seg].count} "
                    f"cycles but {cycles_p} has {len(groups[seg])}")
            stats.append(box_from_summary(by_seg[seg]))
        source = "summary"
    else:
        stats = [box_from_values(seg, groups[seg]) for seg in order]
        source = "recomputed"

    fig = Figure(figsize=(1.8 + 1.4 * len(stats), 4.5))
    ax = fig.add_subplot()
    artists = ax.bxp(stats, showfliers=False, patch_artist=True,
                     boxprops={"facecolor": "#d8e4f0"},
                     medianprops={"color": "#1f3b73", "lw": 1.5})
    drawn = tuple(float(line.get_ydata()[0]) for line in artists["medians"])
    ax.set_ylabel("cycle time [µs]")
    ax.set_title("cycle time by segment")
    ax.yaxis.grid(True, lw=0.3)
    fig.tight_layout()
    paths = _save(fig, out)
    return BoxplotResult(paths=paths, stats=tuple(stats),
                         drawn_medians=drawn, source=source)


# ---------------------------------------------------------------------------
# density
# ---------------------------------------------------------------------------


def _nominal_from_manifest(cycles_p: Path) -> int | None:
    manifest = cycles_p.parent / "run-manifest.json"
    if not manifest.is_file():
        return None
    try:
        doc = json.loads(manifest.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError):
        return None
    nominal = doc.get("nominal_us")
    return nominal if isinstance(nominal, int) and nominal > 0 else None


def render_density(cycles_path: str | Path, out: str | Path,
                   nominal_us: int | None = None) -> tuple[Path, Path]:
    """Normalized cycle-time histogram per segment, shared bin grid.

    The bin width is nominal/100 (the exporter's rule); nominal falls back
    to the run manifest and then to the overall median."""
    cycles_p = Path(cycles_path)
    rows = load_cycles(cycles_p)
    groups = _by_segment(rows)

    if nominal_us is None:
        nominal_us = _nominal_from_manifest(cycles_p)
    if nominal_us is None:
        totals = sorted(r.total_us for r in rows)
        nominal_us = totals[len(totals) // 2]
    if nominal_us <= 0:
        raise FigureError("nominal cycle time must be positive")

    width = max(1, nominal_us // 100)
    lo = min(r.total_us for r in rows) // width * width
    hi = max(r.total_us for r in rows) // width * width + width
    edges = list(range(lo, hi + width, width))
    if len(edges) < 2:
        edges = [lo, lo + width]

    fig = Figure(figsize=(9, 4))
    ax = fig.add_subplot()
    for seg in segment_order(rows):
        ax.hist(groups[seg], bins=edges, density=True, histtype="stepfilled",
                alpha=0.45, label=seg)
    ax.set_xlabel("cycle time [µs]")
    ax.set_ylabel("density")
    ax.set_title("cycle time distribution by segment")
    ax.legend(loc="upper right", fontsize=8)
    fig.tight_layout()
    return _save(fig, out)
