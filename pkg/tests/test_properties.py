"""Randomized invariants across the modules."""

import heapq
import math

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from wattsim.cluster import Cluster, make_nodes
from wattsim.controller import MigrationPlan, amortization_check, estimate_migration
from wattsim.cost import olap_response, oltp_response, plan_query
from wattsim.errors import DomainError, PlacementError, ProtocolError
from wattsim.power import ACTIVE, OFF, STANDBY, PowerProfile, cluster_power, integrate_energy, node_power, server_power
from wattsim.resources import ProcessorSharingCpu
from wattsim.workload import OLAP, OLTP, ClientSpec, QueryClass, constant_schedule, emit_arrivals, next_submit

from . import oracles

PROFILE = PowerProfile()
unit = st.floats(0.0, 1.0)
times = st.lists(st.floats(0.0, 1e4, allow_nan=False), min_size=2, max_size=40, unique=True)
watts = st.floats(0.0, 1e4, allow_nan=False)


# -- power ----------------------------------------------------------------------


@given(unit, unit)
def test_power_is_monotone_in_utilization(a, b):
    lo, hi = sorted((a, b))
    assert node_power(PROFILE, ACTIVE, lo) <= node_power(PROFILE, ACTIVE, hi)
    assert server_power(PROFILE, lo) <= server_power(PROFILE, hi)


@given(unit)
def test_power_stays_within_device_bounds(u):
    assert 22.0 <= node_power(PROFILE, ACTIVE, u) <= 26.0
    assert 200.0 <= server_power(PROFILE, u) <= 430.0
    assert node_power(PROFILE, STANDBY, u) == 2.5
    assert node_power(PROFILE, OFF, u) == 0.0


@given(st.lists(st.tuples(st.sampled_from([ACTIVE, STANDBY, OFF]), unit), min_size=1, max_size=12),
       st.integers(0, 12))
def test_cluster_power_is_switch_plus_parts(nodes, disks):
    expected = 20.0 + 2.0 * disks + sum(node_power(PROFILE, s, u) for s, u in nodes)
    assert cluster_power(PROFILE, nodes, disks) == pytest.approx(expected)


@given(times, st.data())
def test_energy_is_additive_at_any_split(ts, data):
    ts = sorted(ts)
    assume(len(ts) >= 3)
    ws = data.draw(st.lists(watts, min_size=len(ts), max_size=len(ts)))
    samples = list(zip(ts, ws))
    k = data.draw(st.integers(1, len(ts) - 2))
    whole = integrate_energy(samples)
    parts = integrate_energy(samples[:k + 1]) + integrate_energy(samples[k:])
    assert parts == pytest.approx(whole, rel=1e-9, abs=1e-6)
    assert whole == pytest.approx(oracles.trapezoid(samples), rel=1e-9, abs=1e-6)


@given(st.floats(0, 100), st.floats(0.1, 100), watts, watts, st.floats(0.01, 0.99))
def test_collinear_sample_does_not_change_energy(t0, span, w0, w1, frac):
    t1 = t0 + span
    tm = t0 + frac * span
    wm = w0 + frac * (w1 - w0)
    assume(t0 < tm < t1)
    a = integrate_energy([(t0, w0), (t1, w1)])
    b = integrate_energy([(t0, w0), (tm, wm), (t1, w1)])
    assert b == pytest.approx(a, rel=1e-9, abs=1e-6)


# -- cluster ownership ---------------------------------------------------------


def _owned_total(c: Cluster) -> float:
    return sum(c.owned_gb(i) for i in range(len(c.nodes)))


@given(st.lists(st.tuples(st.sampled_from(["place", "split", "merge"]), st.integers(0, 10**6),
                          st.integers(0, 3), st.integers(2, 4)), max_size=40))
def test_ownership_and_bytes_survive_any_reorganization(ops):
    c = Cluster(make_nodes(4, active=4))
    for i in range(8):
        c.add_partition("t" if i % 2 else "u", 1.0 + i, i % 4)
    total = c.total_gb()
    for op, pick, node, k in ops:
        pids = sorted(c.partitions)
        pid = pids[pick % len(pids)]
        try:
            if op == "place":
                c.place_partition(pid, node)
            elif op == "split":
                c.split_partition(pid, k)
            else:
                part = c.partitions[pid]
                peers = [p.id for p in c.partitions_on(c.owner_of(pid)) if p.table == part.table]
                if len(peers) >= 2:
                    c.merge_partitions(peers[:k])
        except (PlacementError, ProtocolError, DomainError):
            pass
        assert c.total_gb() == pytest.approx(total)
        assert _owned_total(c) == pytest.approx(total)
        hosted = [p for n in c.nodes for p in n.hosted]
        assert sorted(hosted) == sorted(c.partitions)  # each partition on exactly one node
        assert all(pid in c.nodes[c.owner_of(pid)].hosted for pid in c.partitions)


# -- workload ------------------------------------------------------------------


OLAP_Q = QueryClass("q", OLAP, 0.05, 0.0, 0.4, 0.6, 0.01)


@given(st.integers(1, 30), st.floats(0.5, 30.0), st.floats(0.0, 60.0), st.integers(0, 10**6))
def test_interval_clients_never_overlap_or_exceed_rate(n, interval, response, seed):
    horizon = 200.0
    sched = constant_schedule(ClientSpec(OLAP_Q, interval), n)
    per_client: dict[int, list[float]] = {}
    for t, cid, _ in emit_arrivals(sched, horizon, seed, response):
        per_client.setdefault(cid, []).append(t)
    for ts in per_client.values():
        gaps = np.diff(ts)
        assert np.all(gaps >= max(interval, response) - 1e-9)
    submitted = sum(len(v) for v in per_client.values())
    assert submitted <= n * (horizon / interval + 1)


@given(st.floats(0.0, 20.0), st.floats(1.0, 10.0), st.floats(0.0, 15.0))
def test_single_client_matches_reference_submit_times(offset, interval, response):
    ours, t = [], offset
    while t < 100.0:
        ours.append(t)
        t = next_submit(t, t + response, interval)
    assert ours == pytest.approx(oracles.timed_interval_submits(offset, interval, response, 100.0))


# -- cost model ------------------------------------------------------------------


def _spread(n: int, total_gb: float = 8.0) -> Cluster:
    c = Cluster(make_nodes(n, active=n))
    for i in range(n):
        c.add_partition("t", total_gb / n, i)
    return c


@given(st.integers(1, 9), st.floats(0.01, 5.0), st.floats(0.0, 2.0), st.floats(0.0, 2.0),
       st.one_of(st.just(0.0), st.floats(0.0, 1.0)))
def test_more_scan_nodes_never_slower(n, scan, pipe, blk, ship):
    # going from one node to two starts shipping; past that, every stream only shrinks
    assume(n >= 2 or ship == 0)
    q = QueryClass("q", OLAP, scan, 0.0, blk, pipe, 0.0, ("t",), ship)
    small = olap_response(plan_query(q, _spread(n), 0), _spread(n)).response_s
    big = olap_response(plan_query(q, _spread(n + 1), 0), _spread(n + 1)).response_s
    assert big <= small * (1 + 1e-9)


@given(st.integers(1, 10), st.floats(0.0, 1.0), st.floats(0.0, 0.1))
def test_transactions_slow_down_with_involved_nodes(k, base, sync):
    plan = plan_query(QueryClass("tx", OLTP, 0.00003, 0.6, 0.0, 0.001, 0.0, ("t",)), _spread(2), 0,
                      rng=np.random.default_rng(0))
    assert oltp_response(plan, k + 1, base, sync).response_s >= oltp_response(plan, k, base, sync).response_s


@given(st.integers(1, 6), st.floats(0.01, 5.0), st.floats(0.0, 2.0), st.floats(0.0, 2.0))
def test_prefetch_never_slower(n, scan, pipe, ship):
    q = QueryClass("q", OLAP, scan, 0.0, 0.0, pipe, 0.0, ("t",), ship)
    c = _spread(n)
    plan = plan_query(q, c, 0)
    with_p = olap_response(plan, c, net_rtt_s=0.001, prefetch=True).response_s
    without = olap_response(plan, c, net_rtt_s=0.001, prefetch=False).response_s
    assert with_p <= without


# -- controller arithmetic ---------------------------------------------------------


@given(st.floats(0.0, 500.0), st.floats(0.0, 500.0), st.floats(0.0, 100.0), st.floats(1.0, 1000.0))
def test_migration_estimate_is_linear_in_bytes(a, b, w, bw):
    da, ea = estimate_migration(a, w, bw)
    db, eb = estimate_migration(b, w, bw)
    dab, eab = estimate_migration(a + b, w, bw)
    assert dab == pytest.approx(da + db, rel=1e-9, abs=1e-9)
    assert eab == pytest.approx(ea + eb, rel=1e-9, abs=1e-9)
    assert (da, ea) == pytest.approx(oracles.migration(a, w, bw))


@given(st.floats(0.0, 1e6), st.floats(0.0, 500.0), st.floats(1.0, 1e4))
def test_scale_in_accepted_exactly_when_it_pays_back(energy, savings, horizon):
    plan = MigrationPlan(poweroffs=[3], est_energy_j=energy, kind="scale-in")
    assert amortization_check(plan, savings, horizon) == (energy < savings * horizon)


@given(st.floats(0.0, 1e6), st.floats(0.0, 500.0))
def test_scale_out_always_passes(energy, savings):
    assert amortization_check(MigrationPlan(powerons=[2], est_energy_j=energy, kind="scale-out"), savings, 1.0)


# -- processor sharing --------------------------------------------------------------


jobs_st = st.lists(st.tuples(st.floats(0.0, 10.0), st.floats(0.01, 5.0), st.integers(1, 4)),
                   min_size=1, max_size=15)


def _drain(cpu: ProcessorSharingCpu, jobs) -> dict[int, float]:
    """Feed jobs at their arrival times; return completion time per job index."""
    pending = sorted(enumerate(jobs), key=lambda j: j[1][0])
    done: dict[int, float] = {}
    now = 0.0
    while pending or cpu.jobs:
        nxt_arrival = pending[0][1][0] if pending else math.inf
        nxt_done = cpu.next_completion()
        if nxt_arrival <= nxt_done:
            idx, (t, work, w) = pending.pop(0)
            now = t
            cpu.add(now, work, w, idx)
        else:
            now = nxt_done
            finished = cpu.pop_finished(now)
            if not finished:  # rounding: take the head
                _, _, w, idx = cpu.jobs[0]
                heapq.heappop(cpu.jobs)
                cpu.weight -= w
                finished = [idx]
            for idx in finished:
                done[idx] = now
    cpu.advance(now)
    return done


@given(jobs_st, st.integers(1, 4), st.floats(0.5, 5.0))
def test_ps_conserves_work_and_respects_thread_speed(jobs, threads, capacity):
    cpu = ProcessorSharingCpu(threads, capacity)
    done = _drain(cpu, jobs)
    assert cpu.work_done == pytest.approx(sum(work * w for _, work, w in jobs), rel=1e-6)
    for i, (t, work, _) in enumerate(jobs):
        # a unit of weight never runs faster than one thread
        assert done[i] - t >= work / cpu.speed * (1 - 1e-9)
    # never finishes before the whole backlog could have been served at full capacity
    first = min(t for t, _, _ in jobs)
    assert max(done.values()) - first >= sum(work * w for _, work, w in jobs) / capacity * (1 - 1e-9)


@given(st.lists(st.floats(0.0, 5.0), min_size=1, max_size=8), st.floats(0.1, 1.0))
def test_single_thread_ps_matches_time_stepped_reference(arrivals, work):
    arrivals = sorted(arrivals)
    cpu = ProcessorSharingCpu(1, 1.0)
    done = _drain(cpu, [(t, work, 1) for t in arrivals])
    ours = [done[i] - t for i, t in enumerate(arrivals)]
    ref = oracles.brute_force_ps(arrivals, work, 1.0, 1e-3)
    assert ours == pytest.approx(ref, abs=5e-3 * len(arrivals))
