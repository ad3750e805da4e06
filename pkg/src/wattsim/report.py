"""Running scenarios, client sweeps and the curve shapes read off them."""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np

from .engine import run
from .errors import InputError, ScenarioError
from .scenario import Scenario, bundled, load
from .trace import SimTrace, _atomic_write, _fmt, summarize, write_summary, write_trace

SWEEP_HEADER = ["value", "response_p50_s", "response_p95_s", "j_per_query", "wh"]
SUITE_KEYS = ["name", "mode", "total_wh", "queries_completed", "throughput_qps", "avg_j_per_query",
              "deadline_miss_rate", "avg_active_nodes", "migrated_gb"]


def resolve(scenario: str | Path) -> Path:
    """A scenario file path, or the bundled scenario of that name."""
    p = Path(scenario)
    if p.is_file():
        return p
    return bundled(str(scenario))


@dataclass
class RunResult:
    scenario: Scenario
    trace: SimTrace
    summary: dict[str, float]


def run_one(scenario: Scenario, seed: int | None = None) -> RunResult:
    trace = run(scenario, seed)
    return RunResult(scenario, trace, summarize(trace))


def run_scenario(path: str | Path, overrides: Mapping[str, Any] | None = None,
                 out_dir: str | Path | None = None) -> list[RunResult]:
    """Run a scenario (or every member of a suite) and write its artifacts.

    A single run writes the trace CSVs and ``summary.txt`` into ``out_dir``.
    A suite writes one sub-directory per member plus ``summary.csv``.
    """
    path = resolve(path)
    sc = load(path, overrides)
    if not sc.suite:
        res = run_one(sc)
        if out_dir is not None:
            write_trace(res.trace, out_dir)
            write_summary(res.summary, Path(out_dir) / "summary.txt")
        return [res]
    results = []
    for member in sc.suite:
        sub = resolve(member) if not (path.parent / member).is_file() else path.parent / member
        child = load(sub, overrides)
        if child.suite:
            raise ScenarioError("suites cannot nest", "suite")
        res = run_one(child)
        results.append(res)
        if out_dir is not None:
            d = Path(out_dir) / child.name
            write_trace(res.trace, d)
            write_summary(res.summary, d / "summary.txt")
    if out_dir is not None:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        _atomic_write(Path(out_dir) / "summary.csv", suite_csv(results))
    return results


def suite_csv(results: Sequence[RunResult]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SUITE_KEYS)
    for r in results:
        w.writerow([r.scenario.name, r.scenario.mode] + [_fmt(r.summary[k]) for k in SUITE_KEYS[2:]])
    return buf.getvalue()


def _sweep_point(args) -> dict[str, float]:
    path, overrides = args
    sc = load(path, overrides)
    return summarize(run(sc))


def sweep(path: str | Path, key: str, values: Sequence[Any],
          overrides: Mapping[str, Any] | None = None, jobs: int = 1) -> list[tuple[Any, dict[str, float]]]:
    """One run per value of ``key`` with a shared seed.

    Raises:
        InputError: empty value list, or a non-numeric value.
    """
    if not values:
        raise InputError("sweep needs at least one value")
    for v in values:
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise InputError(f"sweep value {v!r} is not numeric")
    path = resolve(path)
    points = [(path, {**(overrides or {}), key: v}) for v in values]
    for _, ov in points:
        load(path, ov)  # validate every point before running any
    if jobs > 1 and len(points) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            summaries = list(ex.map(_sweep_point, points))
    else:
        summaries = [_sweep_point(p) for p in points]
    return list(zip(values, summaries))


def sweep_csv(rows: Sequence[tuple[Any, dict[str, float]]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SWEEP_HEADER)
    for v, s in rows:
        w.writerow([_fmt(v), _fmt(s["response_p50_s"]), _fmt(s["response_p95_s"]),
                    _fmt(s["avg_j_per_query"]), _fmt(s["total_wh"])])
    return buf.getvalue()


# -- curve shapes ---------------------------------------------------------------


def hinge_knee(x: Sequence[float], y: Sequence[float], grid: int = 200) -> float:
    """Knee of a flat-then-rising curve.

    Fits ``y = a + b * max(0, x - k)`` by least squares for ``k`` on a grid
    spanning the data and returns the best ``k``.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    ok = np.isfinite(x) & np.isfinite(y)
    x, y = x[ok], y[ok]
    if x.size < 3:
        raise InputError("need at least three points to locate a knee")
    best_k, best_sse = float(x[0]), math.inf
    for k in np.linspace(x.min(), x.max(), grid):
        A = np.column_stack([np.ones_like(x), np.maximum(0.0, x - k)])
        coef, *_ = np.linalg.lstsq(A, y, rcond=None)
        if coef[1] < 0:
            continue
        sse = float(np.sum((A @ coef - y) ** 2))
        if sse < best_sse:
            best_k, best_sse = float(k), sse
    return best_k


def jump_knee(x: Sequence[float], y: Sequence[float]) -> float:
    """Last ``x`` before the largest relative rise of ``y`` between neighbours.

    Suits closed-loop sweeps, where response time stays nearly flat and then
    jumps by orders of magnitude once the system saturates.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    ok = np.isfinite(x) & np.isfinite(y) & (y > 0)
    x, y = x[ok], y[ok]
    if x.size < 2:
        raise InputError("need at least two points to locate a knee")
    order = np.argsort(x)
    x, y = x[order], y[order]
    return float(x[int(np.argmax(y[1:] / y[:-1]))])


def sign_changes(x: Sequence[float], diff: Sequence[float]) -> list[float]:
    """Midpoints of ``x`` where ``diff`` changes sign (absent points skipped)."""
    pts = [(a, d) for a, d in zip(x, diff) if d is not None and math.isfinite(d) and d != 0]
    return [(a0 + a1) / 2 for (a0, d0), (a1, d1) in zip(pts, pts[1:]) if (d0 < 0) != (d1 < 0)]
