"""Per-cycle records, jitter statistics and the CSV export contract.

The CSV files are the stable interface between the simulator and anything
downstream (reports, plotting, external analysis).  Durations are exported as
exact integers; statistics that are genuinely ratios (mean, jitter percent)
are the only floating-point columns.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Iterable, Sequence

COMM_RESULTS = ("ok", "timeout", "rejected")

CYCLES_HEADER = ("index", "segment", "start_us", "read_us", "comm_us",
                 "calc_us", "delay_us", "write_us", "total_us",
                 "comm_result", "overrun")

SUMMARY_HEADER = ("segment", "count", "min_us", "max_us", "mean_us",
                  "median_us", "q1_us", "q3_us", "whisker_low_us",
                  "whisker_high_us", "jitter_abs_us", "jitter_pct",
                  "histogram")


class MetricsError(ValueError):
    pass


@dataclass(slots=True)
class CycleRecord:
    """One completed controller cycle."""

    index: int
    segment: str
    start_us: int
    read_us: int
    comm_us: int
    calc_us: int
    delay_us: int
    write_us: int
    total_us: int
    comm_result: str
    overrun: bool

    def check(self) -> None:
        parts = (self.read_us + self.comm_us + self.calc_us
                 + self.delay_us + self.write_us)
        if parts != self.total_us:
            raise MetricsError(
                f"cycle {self.index}: phase sum {parts} != total {self.total_us}")
        if self.comm_result not in COMM_RESULTS:
            raise MetricsError(
                f"cycle {self.index}: bad comm_result {self.comm_result!r}")


@dataclass(slots=True)
class JitterSummary:
    """Distribution summary of cycle totals within one segment."""

    segment: str
    count: int
    min_us: int
    max_us: int
    mean_us: float
    median_us: int
    q1_us: int
    q3_us: int
    whisker_low_us: int
    whisker_high_us: int
    jitter_abs_us: int
    jitter_pct: float
    histogram: dict[int, int] = field(default_factory=dict)


def nearest_rank(sorted_values: Sequence[int], fraction: float) -> int:
    """Nearest-rank quantile: the ceil(fraction * n)-th smallest value."""
    n = len(sorted_values)
    if n == 0:
        raise MetricsError("quantile of empty data")
    rank = -(-int(fraction * n * 1_000_000) // 1_000_000)  # ceil without float fuzz
    rank = max(1, min(n, rank))
    return sorted_values[rank - 1]


def summarize_values(segment: str, values: Sequence[int], nominal_us: int) -> JitterSummary:
    if not values:
        raise MetricsError(f"segment {segment!r}: no cycles to summarize")
    if nominal_us <= 0:
        raise MetricsError("nominal cycle time must be > 0")
    vals = sorted(values)
    n = len(vals)
    q1 = nearest_rank(vals, 0.25)
    med = nearest_rank(vals, 0.50)
    q3 = nearest_rank(vals, 0.75)
    iqr = q3 - q1
    lo_fence = q1 - (3 * iqr) // 2
    hi_fence = q3 + (3 * iqr) // 2
    whisker_low = next(v for v in vals if v >= lo_fence)
    whisker_high = next(v for v in reversed(vals) if v <= hi_fence)
    width = max(1, nominal_us // 100)
    hist: dict[int, int] = {}
    for v in vals:
        b = (v // width) * width
        hist[b] = hist.get(b, 0) + 1
    spread = vals[-1] - vals[0]
    return JitterSummary(
        segment=segment,
        count=n,
        min_us=vals[0],
        max_us=vals[-1],
        mean_us=sum(vals) / n,
        median_us=med,
        q1_us=q1,
        q3_us=q3,
        whisker_low_us=whisker_low,
        whisker_high_us=whisker_high,
        jitter_abs_us=spread,
        jitter_pct=100.0 * spread / nominal_us,
        histogram=hist,
    )


def summarize(records: Sequence[CycleRecord], nominal_us: int,
              labels: Sequence[str] | None = None) -> list[JitterSummary]:
    """Per-segment summaries, in first-appearance order.

    When ``labels`` is given, every requested segment must be present and
    non-empty; asking for a segment with no cycles is an error rather than a
    silently empty row.
    """
    groups: dict[str, list[int]] = {}
    order: list[str] = []
    for rec in records:
        if rec.segment not in groups:
            groups[rec.segment] = []
            order.append(rec.segment)
        groups[rec.segment].append(rec.total_us)
    wanted = list(labels) if labels is not None else order
    out = []
    for label in wanted:
        if label not in groups:
            raise MetricsError(f"segment {label!r}: no cycles to summarize")
        out.append(summarize_values(label, groups[label], nominal_us))
    return out


# ===================================================================
# CSV export / import
# ===================================================================


def export_cycles_csv(records: Iterable[CycleRecord], path: str) -> None:
    """Write cycles.csv; validates the per-row phase-sum identity on the way out."""
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write(",".join(CYCLES_HEADER) + "\n")
        for rec in records:
            rec.check()
            fh.write(f"{rec.index},{rec.segment},{rec.start_us},{rec.read_us},"
                     f"{rec.comm_us},{rec.calc_us},{rec.delay_us},{rec.write_us},"
                     f"{rec.total_us},{rec.comm_result},{1 if rec.overrun else 0}\n")


def _fmt_hist(hist: dict[int, int]) -> str:
    return "|".join(f"{b}:{c}" for b, c in sorted(hist.items()))


def _parse_hist(text: str, row: int) -> dict[int, int]:
    if not text:
        return {}
    out: dict[int, int] = {}
    for part in text.split("|"):
        try:
            b, c = part.split(":")
            out[int(b)] = int(c)
        except ValueError as exc:
            raise MetricsError(f"summary row {row}: bad histogram entry {part!r}") from exc
    return out


def export_summary_csv(summaries: Iterable[JitterSummary], path: str) -> None:
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write(",".join(SUMMARY_HEADER) + "\n")
        for s in summaries:
            fh.write(f"{s.segment},{s.count},{s.min_us},{s.max_us},"
                     f"{s.mean_us:.3f},{s.median_us},{s.q1_us},{s.q3_us},"
                     f"{s.whisker_low_us},{s.whisker_high_us},"
                     f"{s.jitter_abs_us},{s.jitter_pct:.4f},{_fmt_hist(s.histogram)}\n")


def load_cycles(path: str) -> list[CycleRecord]:
    """Read cycles.csv back, strictly: exact header, integer fields, identity."""
    records: list[CycleRecord] = []
    with open(path, "r", encoding="ascii", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise MetricsError(f"{path}: empty file")
        if tuple(header) != CYCLES_HEADER:
            raise MetricsError(f"{path}: unexpected header {header}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(CYCLES_HEADER):
                raise MetricsError(f"{path} row {lineno}: expected "
                                   f"{len(CYCLES_HEADER)} fields, got {len(row)}")
            try:
                rec = CycleRecord(
                    index=int(row[0]), segment=row[1], start_us=int(row[2]),
                    read_us=int(row[3]), comm_us=int(row[4]), calc_us=int(row[5]),
                    delay_us=int(row[6]), write_us=int(row[7]), total_us=int(row[8]),
                    comm_result=row[9], overrun=_parse_bool(row[10]),
                )
            except ValueError as exc:
                raise MetricsError(f"{path} row {lineno}: {exc}") from exc
            try:
                rec.check()
            except MetricsError as exc:
                raise MetricsError(f"{path} row {lineno}: {exc}") from exc
            records.append(rec)
    return records


def load_summary(path: str) -> list[JitterSummary]:
    out: list[JitterSummary] = []
    with open(path, "r", encoding="ascii", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise MetricsError(f"{path}: empty file")
        if tuple(header) != SUMMARY_HEADER:
            raise MetricsError(f"{path}: unexpected header {header}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(SUMMARY_HEADER):
                raise MetricsError(f"{path} row {lineno}: expected "
                                   f"{len(SUMMARY_HEADER)} fields, got {len(row)}")
            try:
                out.append(JitterSummary(
                    segment=row[0], count=int(row[1]), min_us=int(row[2]),
                    max_us=int(row[3]), mean_us=float(row[4]), median_us=int(row[5]),
                    q1_us=int(row[6]), q3_us=int(row[7]), whisker_low_us=int(row[8]),
                    whisker_high_us=int(row[9]), jitter_abs_us=int(row[10]),
                    jitter_pct=float(row[11]), histogram=_parse_hist(row[12], lineno),
                ))
            except ValueError as exc:
                raise MetricsError(f"{path} row {lineno}: {exc}") from exc
    return out


def _parse_bool(text: str) -> bool:
    if text == "0":
        return False
    if text == "1":
        return True
    raise ValueError(f"overrun flag must be 0 or 1, got {text!r}")
