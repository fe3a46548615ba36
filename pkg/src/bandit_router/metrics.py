"""Run metrics (hit/recall/delay, hit-regret vs oracle) and trace files.

Traces are JSONL: a schema-versioned header line followed by one record per
step. Floats inside records are already rounded to 6 significant digits at
creation, so serialize/parse round-trips exactly. Aggregation over seeds
reports mean +/- sample standard deviation (n-1 denominator).
"""

from __future__ import annotations

import csv
import io
import json
import statistics
from dataclasses import dataclass

from .loop import StepRecord

TRACE_SCHEMA_VERSION = "bandit-router-trace-v1"

METRIC_COLUMNS = ("hit", "recall", "delay", "regret")
TABLE_COLUMNS = ("policy", "scenario", "hit", "recall", "delay", "regret", "seeds")


@dataclass
class MetricWindow:
    """Metrics over a step window [start, end) of one trace."""

    start: int
    end: int
    hit_rate: float
    mean_recall: float
    mean_delay: float
    regret: float

    @property
    def n(self) -> int:
        return self.end - self.start


def resolve_window(n_records: int, window) -> tuple:
    """Window spec -> (start, end). Accepts "full", ("last", n) or (start, end)."""
    if window == "full":
        return 0, n_records
    kind_or_start, value = window
    if kind_or_start == "last":
        return max(0, n_records - int(value)), n_records
    return int(kind_or_start), int(value)


def compute_window(records, window="full") -> MetricWindow:
    """Mean hit/recall/delay plus cumulative hit-regret vs the oracle.

    Recall is averaged from the environment-logged ground truth in the
    trace, which is present even where online feedback withheld it."""
    start, end = resolve_window(len(records), window)
    if not 0 <= start < end <= len(records):
        raise ValueError(f"window [{start}, {end}) is empty or outside the trace of {len(records)}")
    span = records[start:end]
    n = len(span)
    return MetricWindow(
        start=start,
        end=end,
        hit_rate=sum(r.hit for r in span) / n,
        mean_recall=sum(r.recall for r in span) / n,
        mean_delay=sum(r.delay for r in span) / n,
        regret=float(sum(r.oracle_hit - r.hit for r in span)),
    )


def regret_series(records) -> list:
    """Cumulative hit-regret after each step (monotone non-decreasing in
    expectation is not guaranteed per-draw, but the sum is exact)."""
    total, series = 0.0, []
    for r in records:
        total += r.oracle_hit - r.hit
        series.append(total)
    return series


@dataclass
class AggregateCell:
    mean: float
    std: float
    n: int


def aggregate_seeds(windows) -> dict:
    """Per-metric mean and n-1 std over >= 2 per-seed windows."""
    if len(windows) < 2:
        raise ValueError(f"need >= 2 runs to aggregate, got {len(windows)}")
    values = {
        "hit": [w.hit_rate for w in windows],
        "recall": [w.mean_recall for w in windows],
        "delay": [w.mean_delay for w in windows],
        "regret": [w.regret for w in windows],
    }
    return {
        m: AggregateCell(statistics.mean(v), statistics.stdev(v), len(v))
        for m, v in values.items()
    }


@dataclass
class ReportRow:
    policy: str
    scenario: str
    cells: dict  # metric -> AggregateCell


def _fmt(x: float) -> str:
    return f"{x:.6g}"


def emit_table(rows, fmt: str = "csv") -> str:
    """Deterministic table text; columns policy, scenario, hit, recall,
    delay, regret, seeds; values as mean+/-std at 6 significant digits."""
    if fmt not in ("csv", "markdown"):
        raise ValueError(f"format must be csv or markdown, got {fmt!r}")
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        header = ["policy", "scenario"]
        for m in METRIC_COLUMNS:
            header += [f"{m}_mean", f"{m}_std"]
        header.append("seeds")
        writer.writerow(header)
        for row in rows:
            line = [row.policy, row.scenario]
            for m in METRIC_COLUMNS:
                cell = row.cells[m]
                line += [_fmt(cell.mean), _fmt(cell.std)]
            line.append(str(row.cells["hit"].n))
            writer.writerow(line)
        return buf.getvalue()
    lines = ["| " + " | ".join(TABLE_COLUMNS) + " |",
             "|" + "|".join(["---"] * len(TABLE_COLUMNS)) + "|"]
    for row in rows:
        cells = [row.policy, row.scenario]
        for m in METRIC_COLUMNS:
            cell = row.cells[m]
            cells.append(f"{_fmt(cell.mean)} ± {_fmt(cell.std)}")
        cells.append(str(row.cells["hit"].n))
        lines.append("| " + " | ".join(cells) + " |")
    return "\n".join(lines) + "\n"


def write_table(rows, fmt: str, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(emit_table(rows, fmt))


def parse_csv_table(text: str) -> list:
    """Round-trip reader for emit_table(..., "csv")."""
    reader = csv.DictReader(io.StringIO(text))
    rows = []
    for raw in reader:
        cells = {
            m: AggregateCell(float(raw[f"{m}_mean"]), float(raw[f"{m}_std"]), int(raw["seeds"]))
            for m in METRIC_COLUMNS
        }
        rows.append(ReportRow(raw["policy"], raw["scenario"], cells))
    return rows


# --- trace persistence ------------------------------------------------------


def trace_header(scenario: str, policy: str, seed: int, phase: str, stream_hash: str) -> dict:
    return {
        "schema_version": TRACE_SCHEMA_VERSION,
        "scenario": scenario,
        "policy": policy,
        "seed": seed,
        "phase": phase,
        "stream_hash": stream_hash,
    }


def write_trace(path: str, header: dict, records) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for r in records:
            fh.write(json.dumps(r.to_dict(), sort_keys=True) + "\n")


def read_trace(path: str) -> tuple:
    """(header, records); tolerates any object with a schema_version header."""
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise ValueError(f"trace file {path} is empty")
    header = json.loads(lines[0])
    if "schema_version" not in header:
        raise ValueError(f"trace file {path} has no schema_version header")
    records = [StepRecord.from_dict(json.loads(line)) for line in lines[1:]]
    return header, records
