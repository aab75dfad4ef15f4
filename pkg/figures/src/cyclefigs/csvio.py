"""Strict readers for the run-artifact CSV contract.

The column sets are pinned: a file with extra, missing, or reordered
columns is rejected outright, and every data problem is reported with its
row number.  This is an independent implementation of the contract on
purpose — the plotting side must catch producer drift, not inherit it.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

from cyclefigs import FigureError

CYCLES_HEADER = (
    "index", "segment", "start_us", "read_us", "comm_us", "calc_us",
    "delay_us", "write_us", "total_us", "comm_result", "overrun",
)

SUMMARY_HEADER = (
    "segment", "count", "min_us", "max_us", "mean_us", "median_us",
    "q1_us", "q3_us", "whisker_low_us", "whisker_high_us",
    "jitter_abs_us", "jitter_pct", "histogram",
)

_RESULTS = ("ok", "timeout", "rejected")


@dataclass(frozen=True, slots=True)
class CycleRow:
    index: int
    segment: str
    start_us: int
    total_us: int


@dataclass(frozen=True, slots=True)
class SummaryRow:
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
    histogram: dict[int, int]


def _int(text: str, path: Path, row: int, col: str) -> int:
    try:
        return int(text)
    except ValueError:
        raise FigureError(f"{path} row {row}: {col} is not an integer: {text!r}")


def _float(text: str, path: Path, row: int, col: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise FigureError(f"{path} row {row}: {col} is not a number: {text!r}")


def _rows(path: Path, expected: tuple[str, ...]):
    try:
        with path.open(newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            try:
                header = next(reader)
            except StopIteration:
                raise FigureError(f"{path}: empty file")
            if tuple(header) != expected:
                raise FigureError(
                    f"{path}: header mismatch, expected {','.join(expected)}")
            yielded = False
            for lineno, row in enumerate(reader, start=1):
                if len(row) != len(expected):
                    raise FigureError(
                        f"{path} row {lineno}: expected {len(expected)} "
                        f"fields, got {len(row)}")
                yielded = True
                yield lineno, row
            if not yielded:
                raise FigureError(f"{path}: no data rows")
    except OSError as e:
        raise FigureError(f"{path}: {e.strerror or e}")


def load_cycles(path: str | Path) -> list[CycleRow]:
    p = Path(path)
    out: list[CycleRow] = []
    for n, row in _rows(p, CYCLES_HEADER):
        vals = {col: row[i] for i, col in enumerate(CYCLES_HEADER)}
        ints = {col: _int(vals[col], p, n, col)
                for col in CYCLES_HEADER if col not in ("segment", "comm_result")}
        if vals["comm_result"] not in _RESULTS:
            raise FigureError(
                f"{p} row {n}: comm_result must be one of {_RESULTS}")
        if ints["overrun"] not in (0, 1):
            raise FigureError(f"{p} row {n}: overrun must be 0 or 1")
        phase_sum = (ints["read_us"] + ints["comm_us"] + ints["calc_us"]
                     + ints["delay_us"] + ints["write_us"])
        if phase_sum != ints["total_us"]:
            raise FigureError(
                f"{p} row {n}: phases sum to {phase_sum}, "
                f"total_us says {ints['total_us']}")
        out.append(CycleRow(index=ints["index"], segment=vals["segment"],
                            start_us=ints["start_us"],
                            total_us=ints["total_us"]))
    return out


def _histogram(text: str, path: Path, row: int) -> dict[int, int]:
    if text == "":
        return {}
    hist: dict[int, int] = {}
    for part in text.split("|"):
        bin_text, _, count_text = part.partition(":")
        if not count_text:
            raise FigureError(f"{path} row {row}: bad histogram entry {part!r}")
        hist[_int(bin_text, path, row, "histogram bin")] = _int(
            count_text, path, row, "histogram count")
    return hist


def load_summary(path: str | Path) -> list[SummaryRow]:
    p = Path(path)
    out: list[SummaryRow] = []
    for n, row in _rows(p, SUMMARY_HEADER):
        vals = {col: row[i] for i, col in enumerate(SUMMARY_HEADER)}
        s = SummaryRow(
            segment=vals["segment"],
            count=_int(vals["count"], p, n, "count"),
            min_us=_int(vals["min_us"], p, n, "min_us"),
            max_us=_int(vals["max_us"], p, n, "max_us"),
            mean_us=_float(vals["mean_us"], p, n, "mean_us"),
            median_us=_int(vals["median_us"], p, n, "median_us"),
            q1_us=_int(vals["q1_us"], p, n, "q1_us"),
            q3_us=_int(vals["q3_us"], p, n, "q3_us"),
            whisker_low_us=_int(vals["whisker_low_us"], p, n, "whisker_low_us"),
            whisker_high_us=_int(vals["whisker_high_us"], p, n,
                                 "whisker_high_us"),
            jitter_abs_us=_int(vals["jitter_abs_us"], p, n, "jitter_abs_us"),
            jitter_pct=_float(vals["jitter_pct"], p, n, "jitter_pct"),
            histogram=_histogram(vals["histogram"], p, n),
        )
        if s.count < 1:
            raise FigureError(f"{p} row {n}: count must be positive")
        if not (s.min_us <= s.q1_us <= s.median_us <= s.q3_us <= s.max_us):
            raise FigureError(f"{p} row {n}: box statistics out of order")
        out.append(s)
    return out


def segment_order(rows: list[CycleRow]) -> list[str]:
    """Segment labels in first-appearance order."""
    seen: list[str] = []
    for r in rows:
        if r.segment not in seen:
            seen.append(r.segment)
    return seen
