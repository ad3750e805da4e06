"""Discrete-event simulation of a wimpy-node cluster or a single brawny server.

Each node owns a weighted processor-sharing CPU and FIFO drives.  OLAP
queries fan out into one scan stream per drive holding touched data:
disk read, then pipelined (and possibly colocated blocking) CPU work,
then an optional remote blocking step and the remaining network shipping.
OLTP transactions run a short CPU step on the partition owner followed by
a fixed service latency and lock synchronization.

Power is piecewise constant between events, so per-node energy is kept
exactly alongside the sampled meter.
"""

from __future__ import annotations

import heapq
import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .cluster import Cluster, Node, make_nodes, snapshot
from .controller import Controller, ControllerConfig, Forecast, MigrationPlan, Move, effective_bandwidth
from .cost import MB_PER_GB, choose_node, nodes_needed, oltp_response, per_client_demand, plan_query
from .errors import PlacementError, UnavailableError
from .power import ACTIVE, PowerMode, PowerState, node_power, server_power
from .resources import FifoDisk, ProcessorSharingCpu
from .scenario import Scenario
from .trace import MigrationRecord, QueryRecord, SimTrace
from .workload import OLAP, ClientPool, ClientSpec

# kind priorities at equal timestamps
POWER, MIGRATION, ARRIVAL, COMPLETION, METRICS, CONTROL, PHASE, METER = range(8)
EVENT_NAMES = ("PowerTransition", "MigrationDone", "Arrival", "Completion", "MetricsTick",
               "ControllerTick", "PhaseChange", "MeterSample")

_SEQ_IO_BYTES = 128 * 1024
_PAGE_BYTES = 8192
_POWERED = (PowerMode.ACTIVE, PowerMode.BOOTING, PowerMode.SHUTTING_DOWN)


class _NodeRt:
    """Runtime state of one node that the cluster model does not track."""

    __slots__ = ("cpu", "disks", "power", "energy", "t", "resv_int", "work_mark", "streams",
                 "token", "job_util", "transfers", "disk_busy", "disk_ios", "net_bytes", "pages")

    def __init__(self, node: Node):
        self.cpu = ProcessorSharingCpu(node.cpu_threads, node.cpu_capacity)
        self.disks = [FifoDisk(d.bandwidth_mbs) for d in node.disks]
        self.power = 0.0
        self.energy = 0.0
        self.t = 0.0
        self.resv_int = 0.0
        self.work_mark = 0.0
        self.streams = 0
        self.token = 0
        self.job_util = 0.0
        self.transfers = 0
        self.disk_busy = [0.0] * len(node.disks)
        self.disk_ios = [0.0] * len(node.disks)
        self.net_bytes = 0.0
        self.pages = 0.0


class _Query:
    __slots__ = ("cid", "cls", "submit", "start", "weight", "pending", "mem", "deadline", "plan")

    def __init__(self, cid, cls, submit, weight, deadline):
        self.cid = cid
        self.cls = cls
        self.submit = submit
        self.start = math.inf
        self.weight = weight
        self.pending = 0
        self.mem: list[tuple[int, float]] = []
        self.deadline = deadline
        self.plan = None


class _Stream:
    __slots__ = ("q", "node", "share", "blk_node", "blk_work", "cpu_start", "net_s")

    def __init__(self, q, node, share):
        self.q = q
        self.node = node
        self.share = share
        self.blk_node = node
        self.blk_work = 0.0
        self.cpu_start = 0.0
        self.net_s = 0.0


@dataclass
class _Transfer:
    move: Move
    start: float
    energy0: float


@dataclass
class _Running:
    plan: MigrationPlan
    queues: dict[int, deque]
    moving: dict[int, _Transfer] = field(default_factory=dict)
    booting: set = field(default_factory=set)
    shutdown_wait: list = field(default_factory=list)
    shutting: set = field(default_factory=set)
    aborted: bool = False


def client_demand(scenario: Scenario, spec: ClientSpec, count: int) -> float:
    """Work-units/s ``count`` clients of ``spec`` offer the cluster."""
    cal = scenario.calibration
    q = spec.query_class
    base = cal.oltp_base_service_node_s if q.kind != OLAP else 0.0
    speed = scenario.node.cpu_capacity / scenario.node.cpu_threads
    return count * per_client_demand(q, spec.interval_s, cal.cluster_cpu_overhead, base, speed)


def data_fit_nodes(scenario: Scenario) -> int:
    """Fewest nodes whose drives hold the dataset with 5 % headroom."""
    part = sum(t.size_gb for t in scenario.tables if not t.replicated)
    repl = sum(t.size_gb for t in scenario.tables if t.replicated)
    per_node = scenario.node.n_disks * scenario.node.disk_capacity_gb * 0.95 - repl
    return max(1, math.ceil(part / per_node))


def initial_node_count(scenario: Scenario) -> int:
    if scenario.initial_nodes is not None:
        return scenario.initial_nodes
    cfg = scenario.thresholds
    first = scenario.schedule.phases[0] if scenario.schedule.phases else None
    demand = client_demand(scenario, first.client, first.client_count) if first else 0.0
    need = nodes_needed(demand, scenario.node.cpu_capacity, cfg.cpu_upper, scenario.node_count)
    return min(scenario.node_count, max(need, data_fit_nodes(scenario)))


def build_cluster(scenario: Scenario) -> Cluster:
    """Nodes plus the dataset, partitioned and spread largest-first."""
    if scenario.is_server:
        hw = scenario.server
        nodes = make_nodes(1, active=1, **hw.node_kwargs())
        n_active = 1
    else:
        n_active = initial_node_count(scenario)
        nodes = make_nodes(scenario.node_count, active=n_active, **scenario.node.node_kwargs())
    cluster = Cluster(nodes)
    parts = []
    for t in scenario.tables:
        if t.replicated:
            cluster.add_partition(t.name, t.size_gb, None, replicated=True)
            continue
        k = max(1, math.ceil(t.size_gb / scenario.partition_gb - 1e-9))
        parts.extend((t.size_gb / k, t.name) for _ in range(k))
    parts.sort(key=lambda p: -p[0])
    load = [0.0] * n_active
    for size, table in parts:
        target = min(range(n_active), key=lambda i: (load[i], i))
        cluster.add_partition(table, size, target)
        load[target] += size
    return cluster


class Simulation:
    """One run of a scenario.  Use :func:`run` unless stepping is needed."""

    def __init__(self, scenario: Scenario, seed: int | None = None):
        self.sc = scenario
        self.seed = scenario.seed if seed is None else seed
        ss = np.random.SeedSequence(self.seed)
        pool_ss, plan_ss = ss.spawn(2)
        self.cluster = build_cluster(scenario)
        self.rt = [_NodeRt(n) for n in self.cluster.nodes]
        self.server = scenario.is_server
        self.profile = scenario.power
        self.cal = scenario.calibration
        self.overhead = 0.0 if self.server else self.cal.cluster_cpu_overhead
        self.oltp_base = self.cal.oltp_base_service_server_s if self.server else self.cal.oltp_base_service_node_s
        self.cross_prob = 0.0 if self.server else self.cal.cross_partition_prob
        self.plan_rng = np.random.default_rng(plan_ss)
        self.pool = ClientPool(scenario.schedule, np.random.default_rng(pool_ss), scenario.client_weight)
        self.horizon = scenario.horizon_s
        self.window = scenario.control.window_s

        self.heap: list = []
        self.seq = 0
        self.now = 0.0
        self.queries: list[QueryRecord] = []
        self.in_flight: dict[int, _Query] = {}
        self.actions: list[tuple[float, str, str]] = []
        self.node_counts: list[tuple[float, int]] = []
        self.meter_t: list[float] = []
        self.meter_w: list[float] = []
        self.migrations: list[MigrationRecord] = []
        self.energy_marks: list[tuple[float, float]] = [(0.0, 0.0)]
        self.splits = 0
        self.failures = 0
        self.draining: set[int] = set()
        self.running: _Running | None = None
        self._qid = 0

        ctl = scenario.control
        self.ctl_cfg = ControllerConfig(
            thresholds=scenario.thresholds,
            forecast=Forecast(scenario.forecast_horizon_s),
            node_capacity=scenario.node.cpu_capacity,
            max_nodes=scenario.node_count,
            boot_s=ctl.boot_s,
            migration_mbs=ctl.migration_mbs,
            bandwidth_floor=ctl.bandwidth_floor,
            payback_horizon_s=ctl.payback_horizon_s,
            lead_factor=ctl.lead_factor,
            window_s=ctl.window_s,
            min_move_gb=ctl.min_move_gb,
            max_split=ctl.max_split,
            min_nodes=data_fit_nodes(scenario),
        )
        self.controller = None
        if scenario.controller and not self.server:
            self.controller = Controller(
                self.ctl_cfg, self.profile, lambda spec, n: client_demand(scenario, spec, n),
                scenario.schedule if scenario.forecast_horizon_s > 0 else None)

        for i in range(len(self.rt)):
            self._repower(i)
        self._record_nodes(0.0)

    # -- event plumbing ----------------------------------------------------

    def _push(self, t: float, prio: int, *payload) -> None:
        self.seq += 1
        heapq.heappush(self.heap, (t, prio, self.seq, payload))

    def _touch(self, i: int, now: float) -> None:
        rt = self.rt[i]
        dt = now - rt.t
        if dt > 0:
            rt.energy += rt.power * dt
            rt.resv_int += rt.cpu.reserved * dt
            rt.t = now
        rt.cpu.advance(now)

    def _repower(self, i: int) -> None:
        rt = self.rt[i]
        util = min(1.0, rt.cpu.util())
        if self.server:
            rt.power = server_power(self.profile, util)
            return
        node = self.cluster.nodes[i]
        w = node_power(self.profile, node.power, util)
        if node.power.mode in _POWERED:
            w += self.profile.disk_w * len(node.disks)
        rt.power = w

    def total_power(self) -> float:
        w = sum(rt.power for rt in self.rt)
        return w if self.server else w + self.profile.switch_w

    def exact_energy(self, now: float) -> float:
        for i in range(len(self.rt)):
            self._touch(i, now)
        e = sum(rt.energy for rt in self.rt)
        return e if self.server else e + self.profile.switch_w * now

    def _schedule_cpu(self, i: int) -> None:
        rt = self.rt[i]
        rt.token += 1
        tc = rt.cpu.next_completion()
        if tc < math.inf:
            self._push(max(tc, self.now), COMPLETION, "cpu", i, rt.token)

    def _cpu_add(self, i: int, work: float, weight: int, payload) -> None:
        self._touch(i, self.now)
        self.rt[i].cpu.add(self.now, work, weight, payload)
        self._repower(i)
        self._schedule_cpu(i)

    def _record_nodes(self, t: float) -> None:
        n = len(self.cluster.active_ids())
        if self.node_counts and self.node_counts[-1][1] == n:
            return
        if self.node_counts and self.node_counts[-1][0] == t:
            self.node_counts[-1] = (t, n)
        else:
            self.node_counts.append((t, n))

    def _action(self, what: str, detail: str) -> None:
        self.actions.append((self.now, what, detail))

    # -- workload ------------------------------------------------------------

    def _on_phase(self, index: int) -> None:
        for t, cid in self.pool.start_phase(index):
            if t < self.horizon:
                self._push(t, ARRIVAL, "arrive", cid)

    def _next_arrival(self, cid: int, completion: float) -> None:
        nxt = self.pool.complete(cid, completion)
        if nxt is not None and nxt < self.horizon:
            self._push(nxt, ARRIVAL, "arrive", cid)

    def _hold_memory(self, q: _Query, nodes) -> bool | None:
        """Reserve working memory; ``None`` if a node would overcommit fatally."""
        need = q.cls.mem_footprint_gb * q.weight
        spill = False
        for n in nodes:
            node = self.cluster.nodes[n]
            used = node.mem_used_gb + need
            if used > self.cal.mem_hard_limit * node.mem_capacity_gb:
                return None
            spill = spill or used > node.mem_capacity_gb
        if need > 0:
            for n in nodes:
                self.cluster.nodes[n].mem_used_gb += need
                q.mem.append((n, need))
        return spill

    def _release_memory(self, q: _Query) -> None:
        for n, gb in q.mem:
            node = self.cluster.nodes[n]
            node.mem_used_gb = max(0.0, node.mem_used_gb - gb)
        q.mem = []

    def _fail(self, q: _Query, reason: str) -> None:
        self.failures += q.weight
        if self.failures == q.weight:
            self._action("saturation", reason)
        self.queries.append(QueryRecord(q.submit, q.submit, self.now, q.cls.name, q.deadline, q.weight, True))
        self._next_arrival(q.cid, self.now)

    def _on_arrival(self, cid: int) -> None:
        client = self.pool.submit(cid, self.now)
        if client is None:
            return
        nxt = self.pool.next_open(client)
        if nxt is not None and nxt < self.horizon:
            self._push(nxt, ARRIVAL, "arrive", cid)
        qc = client.spec.query_class
        q = _Query(cid, qc, self.now, client.weight, self.sc.deadlines[qc.name])
        try:
            plan = plan_query(qc, self.cluster, self.cluster.master, self.plan_rng, self.cross_prob)
        except UnavailableError as e:
            self._fail(q, str(e))
            return
        spill = self._hold_memory(q, plan.involved)
        if spill is None:
            self._fail(q, "memory overcommit")
            return
        factor = self.cal.spill_factor if spill else 1.0
        if qc.kind == OLAP:
            self._start_olap(q, plan, factor)
        else:
            self._start_oltp(q, plan, factor)

    def _start_oltp(self, q: _Query, plan, factor: float) -> None:
        owner = plan.streams[0].node
        q.start = self.now
        rt = self.rt[owner]
        pages = q.cls.pages * q.weight
        rt.pages += pages
        rt.disk_ios[0] += pages
        rt.disk_busy[0] += pages * _PAGE_BYTES / (self.cluster.nodes[owner].disks[0].bandwidth_mbs * 1e6)
        work = q.cls.pipeline_work * (1.0 + self.overhead) * factor
        q.plan = plan
        self._cpu_add(owner, work, q.weight, ("oltp", q))

    def _finish_oltp(self, q: _Query) -> None:
        self._release_memory(q)
        est = oltp_response(q.plan, q.plan.involved_nodes, self.oltp_base, self.cal.sync_delta_s)
        done = self.now + est.response_s
        complete = done if done <= self.horizon else None
        self.queries.append(QueryRecord(q.submit, q.start, complete, q.cls.name, q.deadline, q.weight))
        self._next_arrival(q.cid, done)

    def _start_olap(self, q: _Query, plan, factor: float) -> None:
        qid = self._qid
        self._qid += 1
        self.in_flight[qid] = q
        q.pending = len(plan.streams)
        q.start = math.inf
        for s in plan.streams:
            st = _Stream(q, s.node, s.share)
            st.blk_work = factor
            rt = self.rt[s.node]
            rt.streams += 1
            mb = q.cls.scan_gb * s.share * MB_PER_GB * q.weight
            finish, service = rt.disks[s.disk].submit(self.now, mb)
            rt.disk_busy[s.disk] += service
            rt.disk_ios[s.disk] += mb * 1e6 / _SEQ_IO_BYTES
            q.start = min(q.start, max(self.now, finish - service))
            self._push(finish, COMPLETION, "disk", st, qid)

    def _on_disk_done(self, st: _Stream, qid: int) -> None:
        q = st.q
        factor = st.blk_work
        scale = (1.0 + self.overhead) * factor * st.share
        pipe = q.cls.pipeline_work * scale
        blk = q.cls.blocking_work * scale
        if blk > 0:
            candidates = [n for n in self.cluster.active_ids() if n not in self.draining]
            if candidates:
                pressure = {n: self.rt[n].cpu.weight / self.cluster.nodes[n].cpu_threads for n in candidates}
                st.blk_node = choose_node(st.node, pressure)
        st.cpu_start = self.now
        st.blk_work = blk
        ship_gb = q.cls.ship_gb * st.share * q.weight if st.node != self.cluster.master else 0.0
        if ship_gb > 0:
            link = self.cluster.nodes[self.cluster.master].net_bandwidth_mbps / 8.0
            st.net_s = ship_gb * MB_PER_GB / link + self.cal.net_rtt_s
            self.rt[st.node].net_bytes += ship_gb * 1e9
            self.rt[self.cluster.master].net_bytes += ship_gb * 1e9
        if st.blk_node == st.node:
            self._cpu_add(st.node, pipe + blk, q.weight, ("pipe", st, qid, True))
        else:
            self._cpu_add(st.node, pipe, q.weight, ("pipe", st, qid, False))

    def _on_cpu_job(self, node: int, payload) -> None:
        kind = payload[0]
        if kind == "oltp":
            self._finish_oltp(payload[1])
            return
        _, st, qid = payload[:3]
        if kind == "pipe" and not payload[3]:
            self.rt[st.blk_node].streams += 1
            self._cpu_add(st.blk_node, st.blk_work, st.q.weight, ("blk", st, qid))
            return
        if kind == "blk":
            self.rt[node].streams -= 1
        compute = self.now - st.cpu_start
        residual = max(0.0, st.net_s - compute) if self.cal.prefetch else st.net_s
        if residual > 0:
            self._push(self.now + residual, COMPLETION, "stream", st, qid)
        else:
            self._on_stream_done(st, qid)

    def _on_stream_done(self, st: _Stream, qid: int) -> None:
        self.rt[st.node].streams -= 1
        q = st.q
        q.pending -= 1
        if self.running is not None and self.running.shutdown_wait:
            self._try_shutdowns()
        if q.pending > 0:
            return
        master = self.cluster.nodes[self.cluster.master]
        result_b = q.cls.result_gb * 1e9 * q.weight
        self.rt[self.cluster.master].net_bytes += result_b
        result_s = result_b / (master.net_bandwidth_mbps / 8.0 * 1e6)
        if result_s > 0:
            self._push(self.now + result_s, COMPLETION, "query", qid)
        else:
            self._on_query_done(qid)

    def _on_query_done(self, qid: int) -> None:
        q = self.in_flight.pop(qid)
        self._release_memory(q)
        self.queries.append(QueryRecord(q.submit, q.start, self.now, q.cls.name, q.deadline, q.weight))
        self._next_arrival(q.cid, self.now)

    def _on_cpu_event(self, i: int, token: int) -> None:
        rt = self.rt[i]
        if token != rt.token:
            return
        self._touch(i, self.now)
        done = rt.cpu.pop_finished(self.now)
        if not done and rt.cpu.jobs and rt.cpu.next_completion() <= self.now:
            # rounding left the head a hair short of its tag
            tag, _, w, payload = heapq.heappop(rt.cpu.jobs)
            rt.cpu.weight -= w
            done = [payload]
        self._repower(i)
        self._schedule_cpu(i)
        for payload in done:
            self._on_cpu_job(i, payload)

    # -- monitoring and control -----------------------------------------------

    def _on_metrics(self) -> list:
        now = self.now
        snaps = []
        for i, node in enumerate(self.cluster.nodes):
            self._touch(i, now)
            rt = self.rt[i]
            cap = node.cpu_capacity
            job_work = rt.cpu.work_done - rt.work_mark
            rt.job_util = min(1.0, job_work / (cap * self.window))
            node.window_work = job_work + rt.resv_int * cap
            node.window_disk_busy_s = list(rt.disk_busy)
            node.window_disk_ios = list(rt.disk_ios)
            node.window_net_bytes = rt.net_bytes
            node.window_page_requests = rt.pages
            s = snapshot(node, self.window, self.cluster.partitions, now)
            if s is not None:
                snaps.append(s)
            node.reset_window()
            rt.work_mark = rt.cpu.work_done
            rt.resv_int = 0.0
            rt.disk_busy = [0.0] * len(rt.disk_busy)
            rt.disk_ios = [0.0] * len(rt.disk_ios)
            rt.net_bytes = 0.0
            rt.pages = 0.0
        self.energy_marks.append((now, self.exact_energy(now)))
        if self.running is not None and self.running.shutdown_wait:
            self._try_shutdowns()
        return snaps

    def _current_clients(self) -> list[tuple[ClientSpec, int]]:
        counts: dict[ClientSpec, int] = {}
        for c in self.pool.clients.values():
            if not c.retired:
                counts[c.spec] = counts.get(c.spec, 0) + c.weight
        return list(counts.items())

    def _on_control(self, snaps) -> None:
        ctl = self.controller
        ctl.observe(snaps)
        running = self.running.plan if self.running is not None else None
        decision = ctl.decide(self.now, self.cluster, self._current_clients(), running)
        for what, detail in decision.actions:
            self._action(what, detail)
        if decision.abort and self.running is not None and not self.running.aborted:
            self._abort()
        if decision.plan is not None and not decision.plan.empty:
            self._start_plan(decision.plan)

    # -- plan execution --------------------------------------------------------

    def _start_plan(self, plan: MigrationPlan) -> None:
        c = self.cluster
        for pid, k in plan.splits:
            c.split_partition(pid, k)
            self.splits += 1
        per_donor: dict[int, list[Move]] = {}
        for m in plan.moves:
            try:
                c.reserve(m.target, m.size_gb)
            except PlacementError as e:
                self._action("skip-move", str(e))
                continue
            per_donor.setdefault(m.source, []).append(m)
        # a donor fills one target completely before starting the next
        queues = {}
        for donor, moves in per_donor.items():
            order = list(dict.fromkeys(m.target for m in moves))
            queues[donor] = deque(sorted(moves, key=lambda m: order.index(m.target)))
        run = _Running(plan, queues)
        self.running = run
        self.draining = set(plan.poweroffs)
        # forecast plans power targets on just before their first transfer
        lazy = plan.kind == "forecast"
        targets = {m.target for q in queues.values() for m in q}
        for n in plan.powerons:
            if not (lazy and n in targets):
                self._boot(n)
        self._action("plan", f"{plan.kind} stage {plan.stage}: {len(plan.moves)} moves, "
                             f"{len(plan.splits)} splits, on {plan.powerons}, off {plan.poweroffs}, "
                             f"est {plan.est_duration_s:.0f} s / {plan.est_energy_j:.0f} J")
        self._pump()

    def _boot(self, n: int) -> None:
        node = self.cluster.nodes[n]
        if node.power.mode is not PowerMode.STANDBY:
            return
        self._touch(n, self.now)
        node.power = node.power.to(PowerMode.BOOTING, self.sc.control.boot_s)
        self._repower(n)
        self.running.booting.add(n)
        self._push(self.now + self.sc.control.boot_s, POWER, "boot", n)

    def _set_reserved(self, i: int, delta: int) -> None:
        rt = self.rt[i]
        self._touch(i, self.now)
        rt.transfers += delta
        rt.cpu.reserved = min(0.6, self.sc.control.migration_cpu * rt.transfers)
        self._repower(i)
        self._schedule_cpu(i)

    def _pump(self) -> None:
        run = self.running
        if run is None:
            return
        for donor, q in run.queues.items():
            if donor in run.moving or not q:
                continue
            ready = next((m for m in q if self.cluster.nodes[m.target].active), None)
            if ready is None:
                self._boot(q[0].target)
                continue
            q.remove(ready)
            bw = effective_bandwidth(self.sc.control.migration_mbs, self.rt[donor].job_util,
                                     self.sc.control.bandwidth_floor)
            duration = ready.size_gb * 1024.0 / bw
            self._set_reserved(donor, +1)
            self._set_reserved(ready.target, +1)
            run.moving[donor] = _Transfer(ready, self.now, self.rt[ready.target].energy)
            self._push(self.now + duration, MIGRATION, "moved", donor)
        self._maybe_finish()

    def _on_moved(self, donor: int) -> None:
        run = self.running
        tr = run.moving.pop(donor)
        m = tr.move
        self._set_reserved(donor, -1)
        self._set_reserved(m.target, -1)
        self.cluster.release(m.target, m.size_gb)
        self.cluster.place_partition(m.partition, m.target)
        energy = self.rt[m.target].energy - tr.energy0
        self.migrations.append(MigrationRecord(m.partition, m.source, m.target, m.size_gb, tr.start, self.now, energy))
        self._pump()

    def _maybe_finish(self) -> None:
        run = self.running
        if run is None:
            return
        if run.moving or any(run.queues.values()) or run.booting:
            return
        if run.plan.poweroffs and not run.aborted and not run.shutdown_wait and not run.shutting:
            run.shutdown_wait = list(run.plan.poweroffs)
            run.plan.poweroffs = []
            self._try_shutdowns()
            return
        if run.shutdown_wait or run.shutting:
            return
        self.running = None
        self.draining = set()
        self._action("plan-done", run.plan.kind + (" (aborted)" if run.aborted else ""))

    def _try_shutdowns(self) -> None:
        run = self.running
        for n in list(run.shutdown_wait):
            node = self.cluster.nodes[n]
            rt = self.rt[n]
            if node.hosted:
                run.shutdown_wait.remove(n)
                self._action("keep", f"node {n} still hosts data")
                continue
            if rt.streams or not rt.cpu.idle or rt.transfers or any(d.busy_until > self.now for d in rt.disks):
                continue
            self._touch(n, self.now)
            self.cluster.set_power(n, node.power.to(PowerMode.SHUTTING_DOWN, self.sc.control.shutdown_s))
            self._repower(n)
            run.shutdown_wait.remove(n)
            run.shutting.add(n)
            self._record_nodes(self.now)
            self._push(self.now + self.sc.control.shutdown_s, POWER, "down", n)
        self._maybe_finish()

    def _on_power(self, what: str, n: int) -> None:
        node = self.cluster.nodes[n]
        self._touch(n, self.now)
        if what == "boot":
            node.power = node.power.to(PowerMode.ACTIVE)
        else:
            node.power = node.power.to(PowerMode.STANDBY)
        self._repower(n)
        self._record_nodes(self.now)
        run = self.running
        if run is not None:
            run.booting.discard(n)
            run.shutting.discard(n)
            self._pump()

    def _abort(self) -> None:
        run = self.running
        run.aborted = True
        for q in run.queues.values():
            for m in q:
                self.cluster.release(m.target, m.size_gb)
            q.clear()
        run.shutdown_wait = []
        run.plan.poweroffs = []
        self.draining = set()
        self._maybe_finish()

    # -- main loop ---------------------------------------------------------------

    def _sample(self, t: float) -> None:
        """One meter reading: mean power since the previous reading, or the
        instantaneous draw in ``instant`` mode (and for the first reading)."""
        if self.sc.meter_mode == "average" and self.meter_t and t > self.meter_t[-1]:
            e = self.exact_energy(t)
            w = (e - self._meter_e) / (t - self.meter_t[-1])
            self._meter_e = e
        else:
            w = self.total_power()
            self._meter_e = self.exact_energy(t)
        self.meter_t.append(t)
        self.meter_w.append(w)

    def run(self) -> SimTrace:
        h = self.horizon
        for i, p in enumerate(self.sc.schedule.phases):
            if p.start_s < h:
                self._push(p.start_s, PHASE, "phase", i)
        self._push(self.window, METRICS, "metrics")
        self._push(0.0, METER, "meter", 0)
        dt_meter = 1.0 / self.sc.meter_hz
        n_samples = int(math.floor(h * self.sc.meter_hz + 1e-9))
        snaps = None
        heap = self.heap
        while heap:
            t, prio, _, payload = heapq.heappop(heap)
            if t > h:
                break
            self.now = t
            kind = payload[0]
            if kind == "cpu":
                self._on_cpu_event(payload[1], payload[2])
            elif kind == "arrive":
                self._on_arrival(payload[1])
            elif kind == "disk":
                self._on_disk_done(payload[1], payload[2])
            elif kind == "stream":
                self._on_stream_done(payload[1], payload[2])
            elif kind == "query":
                self._on_query_done(payload[1])
            elif kind == "meter":
                k = payload[1]
                self._sample(t)
                if k + 1 <= n_samples:
                    self._push((k + 1) * dt_meter, METER, "meter", k + 1)
            elif kind == "metrics":
                snaps = self._on_metrics()
                if self.controller is not None:
                    self._push(t, CONTROL, "control")
                self._push(t + self.window, METRICS, "metrics")
            elif kind == "control":
                self._on_control(snaps)
            elif kind == "phase":
                self._on_phase(payload[1])
            elif kind == "moved":
                self._on_moved(payload[1])
            elif kind in ("boot", "down"):
                self._on_power(kind, payload[1])
        self.now = h
        if not self.meter_t or self.meter_t[-1] < h - 1e-9:
            self._sample(h)
        exact = self.exact_energy(h)
        if self.energy_marks[-1][0] < h:
            self.energy_marks.append((h, exact))
        for q in self.in_flight.values():
            self.queries.append(QueryRecord(q.submit, q.start, None, q.cls.name, q.deadline, q.weight))
        self.in_flight.clear()
        self.queries.sort(key=lambda r: (r.submit, r.complete if r.complete is not None else math.inf))
        trace = SimTrace(
            name=self.sc.name,
            mode=self.sc.mode,
            horizon_s=h,
            measure_start=self.sc.measure_start,
            meter_t=np.array(self.meter_t),
            meter_w=np.array(self.meter_w),
            queries=self.queries,
            actions=self.actions,
            node_counts=self.node_counts,
            migrations=self.migrations,
            splits=self.splits,
            exact_energy_j=exact,
            energy_marks=self.energy_marks,
            phase_bounds=[(a, min(b, h)) for a, b in self.sc.schedule.phase_bounds(h) if a < h],
            data_gb_before=self._data_before,
            data_gb_after=self.cluster.total_gb(),
            failures=self.failures,
        )
        _attribute_energy(trace)
        return trace

    @property
    def _data_before(self) -> float:
        return sum(t.size_gb for t in self.sc.tables if not t.replicated)


def _attribute_energy(trace: SimTrace) -> None:
    """Split each metrics window's energy evenly over the queries completing in it."""
    marks = trace.energy_marks
    if len(marks) < 2:
        return
    edges = np.array([t for t, _ in marks])
    energy = np.diff([e for _, e in marks])
    done = [q for q in trace.queries if q.complete is not None and not q.failed]
    if not done:
        return
    idx = np.clip(np.searchsorted(edges, [q.complete for q in done], side="right") - 1, 0, len(energy) - 1)
    counts = np.zeros(len(energy))
    np.add.at(counts, idx, [q.weight for q in done])
    for q, k in zip(done, idx):
        q.energy_share_j = energy[k] * q.weight / counts[k]


def run(scenario: Scenario, seed: int | None = None) -> SimTrace:
    """Simulate ``scenario``; identical inputs give identical traces."""
    return Simulation(scenario, seed).run()
