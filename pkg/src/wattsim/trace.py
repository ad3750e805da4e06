"""Simulation traces, derived metrics and CSV/summary export."""

from __future__ import annotations

import csv
import math
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InputError
from .power import integrate_energy


@dataclass(slots=True)
class QueryRecord:
    """One simulated query (or one group of ``weight`` identical queries).

    ``complete`` is ``None`` for queries still running at the horizon;
    failed queries complete at their failure time with ``failed`` set.
    """

    submit: float
    start: float
    complete: float | None
    cls: str
    deadline_s: float
    weight: int = 1
    failed: bool = False
    energy_share_j: float = 0.0

    @property
    def response_s(self) -> float:
        if self.complete is None or self.failed:
            return math.nan
        return self.complete - self.submit

    @property
    def deadline_met(self) -> bool:
        return not self.failed and self.complete is not None and self.complete - self.submit <= self.deadline_s


@dataclass(slots=True)
class MigrationRecord:
    partition: int
    source: int
    target: int
    size_gb: float
    start: float
    end: float
    energy_j: float

    @property
    def duration_s(self) -> float:
        return self.end - self.start

    @property
    def target_mean_w(self) -> float:
        return self.energy_j / self.duration_s if self.duration_s > 0 else 0.0


@dataclass
class SimTrace:
    name: str
    mode: str
    horizon_s: float
    measure_start: float
    meter_t: np.ndarray
    meter_w: np.ndarray
    queries: list[QueryRecord]
    actions: list[tuple[float, str, str]]
    node_counts: list[tuple[float, int]]
    migrations: list[MigrationRecord] = field(default_factory=list)
    splits: int = 0
    exact_energy_j: float = 0.0
    energy_marks: list[tuple[float, float]] = field(default_factory=list)
    phase_bounds: list[tuple[float, float]] = field(default_factory=list)
    data_gb_before: float = 0.0
    data_gb_after: float = 0.0
    failures: int = 0

    @property
    def meter(self) -> list[tuple[float, float]]:
        return list(zip(self.meter_t.tolist(), self.meter_w.tolist()))

    @property
    def migrated_gb(self) -> float:
        return sum(m.size_gb for m in self.migrations)

    @property
    def saturated(self) -> bool:
        return self.failures > 0 or any(a == "saturation" for _, a, _ in self.actions)


# -- metrics -------------------------------------------------------------------


def window_energy(trace: SimTrace, start: float, end: float) -> float:
    """Metered joules in ``[start, end]``; edges are interpolated linearly."""
    if end <= start:
        raise InputError("window end must be after its start")
    t, w = trace.meter_t, trace.meter_w
    inside = (t > start) & (t < end)
    ts = np.concatenate(([start], t[inside], [end]))
    ws = np.concatenate(([np.interp(start, t, w)], w[inside], [np.interp(end, t, w)]))
    return integrate_energy(zip(ts, ws))


def completed_in(trace: SimTrace, start: float, end: float) -> list[QueryRecord]:
    return [q for q in trace.queries
            if q.complete is not None and not q.failed and start <= q.complete < end]


def energy_per_query(trace: SimTrace, window: tuple[float, float] | None = None) -> float | None:
    """Joules per completed query in the window (all system power counted).

    Returns ``None`` when no query completed, an absent datapoint.
    """
    start, end = window if window is not None else (trace.measure_start, trace.horizon_s)
    n = sum(q.weight for q in completed_in(trace, start, end))
    if n == 0:
        return None
    return window_energy(trace, start, end) / n


def avg_active_nodes(trace: SimTrace, start: float, end: float) -> float:
    """Time-average of the Active node count (a step function) over the window."""
    total = 0.0
    counts = trace.node_counts
    for i, (t, n) in enumerate(counts):
        t_next = counts[i + 1][0] if i + 1 < len(counts) else end
        a, b = max(t, start), min(t_next, end)
        if b > a:
            total += n * (b - a)
    return total / (end - start)


def deadline_misses(trace: SimTrace, start: float, end: float) -> tuple[int, int]:
    """``(misses, judged)`` over queries resolved in the window.

    Failed queries are misses.  Queries still running at the horizon are
    judged too: they miss once older than their deadline.
    """
    misses = judged = 0
    for q in trace.queries:
        if q.complete is None:
            if q.submit >= start and end >= trace.horizon_s and trace.horizon_s - q.submit > q.deadline_s:
                misses += q.weight
                judged += q.weight
            continue
        if not start <= q.complete < end:
            continue
        judged += q.weight
        if not q.deadline_met:
            misses += q.weight
    return misses, judged


SUMMARY_KEYS = ("total_wh", "queries_completed", "avg_j_per_query", "deadline_miss_rate",
                "avg_active_nodes", "migrated_gb")


def summarize(trace: SimTrace, window: tuple[float, float] | None = None) -> dict[str, float]:
    """Headline figures of a run (or of one window of it)."""
    start, end = window if window is not None else (trace.measure_start, trace.horizon_s)
    done = completed_in(trace, start, end)
    n = sum(q.weight for q in done)
    joules = window_energy(trace, start, end)
    misses, judged = deadline_misses(trace, start, end)
    responses = np.array([q.response_s for q in done]) if done else np.array([math.nan])
    weights = np.array([q.weight for q in done]) if done else np.array([1])
    failed = sum(q.weight for q in trace.queries if q.failed and q.complete is not None
                 and start <= q.complete < end)
    return {
        "total_wh": joules / 3600.0,
        "queries_completed": n,
        "avg_j_per_query": joules / n if n else math.nan,
        "deadline_miss_rate": misses / judged if judged else 0.0,
        "avg_active_nodes": avg_active_nodes(trace, start, end),
        "migrated_gb": sum(m.size_gb for m in trace.migrations if start <= m.end < end),
        "throughput_qps": n / (end - start),
        "failed_queries": failed,
        "response_p50_s": weighted_quantile(responses, weights, 0.5),
        "response_p95_s": weighted_quantile(responses, weights, 0.95),
    }


def weighted_quantile(values: np.ndarray, weights: np.ndarray, q: float) -> float:
    """Quantile of a weighted sample (lower interpolation)."""
    values = np.asarray(values, dtype=float)
    if values.size == 0 or np.all(np.isnan(values)):
        return math.nan
    order = np.argsort(values, kind="stable")
    v, w = values[order], np.asarray(weights, dtype=float)[order]
    cum = np.cumsum(w)
    idx = int(np.searchsorted(cum, q * cum[-1], side="left"))
    return float(v[min(idx, v.size - 1)])


def phase_summaries(trace: SimTrace) -> list[dict[str, float]]:
    return [summarize(trace, (a, b)) | {"start_s": a, "end_s": b} for a, b in trace.phase_bounds if b > a]


# -- export --------------------------------------------------------------------


def _fmt(x) -> str:
    if isinstance(x, bool):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return ""
    return f"{x:.6f}"


def _atomic_write(path: Path, text: str) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    with os.fdopen(fd, "w", newline="") as f:
        f.write(text)
    os.replace(tmp, path)


def _csv(header: list[str], rows) -> str:
    import io

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(x) if not isinstance(x, str) else x for x in r])
    return buf.getvalue()


def write_trace(trace: SimTrace, out_dir: str | Path) -> list[Path]:
    """Write meter.csv, queries.csv, actions.csv and nodes.csv."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = {
        "meter.csv": _csv(["t_s", "watts"], zip(trace.meter_t.tolist(), trace.meter_w.tolist())),
        "queries.csv": _csv(
            ["submit_s", "start_s", "complete_s", "class", "response_s", "deadline_met"],
            ((q.submit, q.start, q.complete, q.cls, q.response_s, q.deadline_met) for q in trace.queries)),
        "actions.csv": _csv(["t_s", "action", "detail"], trace.actions),
        "nodes.csv": _csv(["t_s", "active_count"], trace.node_counts),
    }
    paths = []
    for name, text in files.items():
        p = out / name
        _atomic_write(p, text)
        paths.append(p)
    return paths


def format_summary(summary: dict[str, float]) -> str:
    keys = list(SUMMARY_KEYS) + [k for k in summary if k not in SUMMARY_KEYS]
    return "".join(f"{k} = {_fmt(summary[k])}\n" for k in keys)


def write_summary(summary: dict[str, float], path: str | Path) -> Path:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    _atomic_write(p, format_summary(summary))
    return p


def read_summary(path: str | Path) -> dict[str, float]:
    out = {}
    for line in Path(path).read_text().splitlines():
        k, _, v = line.partition(" = ")
        out[k] = float(v) if v else math.nan
    return out
