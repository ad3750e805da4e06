"""Abstract cost model for distributed OLAP scans and OLTP transactions.

Scan and pipelining operators are pinned to the owners of the data they
read.  Blocking operators (sort, group, aggregate) may run on any Active
node.  Writes stay with the partition owner, and transactions spanning
several owners pay a lock-synchronization delay per extra node.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .cluster import Cluster
from .errors import ConfigurationError, DomainError, UnavailableError
from .workload import OLAP, OLTP, QueryClass

MB_PER_GB = 1000.0


@dataclass(frozen=True)
class Calibration:
    """Constants fitted so the simulated systems match the measured curves."""

    cluster_cpu_overhead: float = 0.45
    oltp_base_service_node_s: float = 0.050
    oltp_base_service_server_s: float = 0.030
    sync_delta_s: float = 0.005
    cross_partition_prob: float = 0.1
    spill_factor: float = 4.0
    mem_hard_limit: float = 2.0
    prefetch: bool = True
    net_rtt_s: float = 0.0002

    def __post_init__(self):
        if self.spill_factor < 1 or self.mem_hard_limit < 1:
            raise DomainError("spill_factor and mem_hard_limit must be >= 1")
        if not 0 <= self.cross_partition_prob <= 1:
            raise DomainError("cross_partition_prob must lie in [0, 1]")
        if min(self.cluster_cpu_overhead, self.oltp_base_service_node_s,
               self.oltp_base_service_server_s, self.sync_delta_s, self.net_rtt_s) < 0:
            raise DomainError("calibration constants must be >= 0")


@dataclass(frozen=True)
class Stream:
    """One parallel scan stream: a share of the data read from one drive."""

    node: int
    disk: int
    share: float


@dataclass
class PlanShape:
    kind: str
    streams: tuple[Stream, ...]
    blocking_ops: list[tuple[float, bool]]
    pipeline_ops: float
    result_bytes: float
    scan_gb: float
    ship_gb: float
    master: int
    involved: tuple[int, ...] = ()

    def __post_init__(self):
        if self.scan_fanout < 1:
            raise DomainError("a plan needs at least one scan stream")
        if self.pipeline_ops < 0 or any(w < 0 for w, _ in self.blocking_ops):
            raise DomainError("work-units must be >= 0")
        if not self.involved:
            self.involved = tuple(sorted({s.node for s in self.streams}))

    @property
    def scan_fanout(self) -> int:
        return len(self.streams)

    @property
    def involved_nodes(self) -> int:
        return len(self.involved)


@dataclass
class NodeDemand:
    cpu_work: float = 0.0
    disk_bytes: float = 0.0
    net_bytes: float = 0.0


@dataclass
class CostEstimate:
    response_s: float
    per_node: dict[int, NodeDemand] = field(default_factory=dict)
    lock_sync_s: float = 0.0


def _streams_for(cluster: Cluster, shares: Sequence[tuple[int, float]]) -> tuple[Stream, ...]:
    streams = []
    for node_id, share in shares:
        node = cluster.nodes[node_id]
        d = len(node.disks)
        streams.extend(Stream(node_id, i, share / d) for i in range(d))
    return tuple(streams)


def plan_query(
    query: QueryClass,
    cluster: Cluster,
    master: int,
    rng: np.random.Generator | None = None,
    cross_partition_prob: float = 0.0,
    projected_util: Mapping[int, float] | None = None,
) -> PlanShape:
    """Distributed plan for one query, built on the master.

    OLAP scans run on every owner of the touched tables (one stream per
    drive); a query over replicated tables only reads from the least-loaded
    Active node.  OLTP transactions touch one partition, picked by volume,
    plus a second one with probability ``cross_partition_prob``.

    Raises:
        UnavailableError: an owner of touched data is not Active.
    """
    tables = list(query.tables) or sorted(cluster.tables())
    replicated = cluster.replicated_tables()
    partitioned = [t for t in tables if t not in replicated]

    if query.kind == OLAP:
        if partitioned:
            shares = cluster.table_shares(partitioned)
            if not shares:
                raise UnavailableError(f"no data for tables {partitioned}")
        else:
            active = cluster.active_ids()
            if not active:
                raise UnavailableError("no Active node")
            util = projected_util or {}
            shares = [(min(active, key=lambda n: (util.get(n, 0.0), n)), 1.0)]
        for node_id, _ in shares:
            cluster.require_active(node_id)
        streams = _streams_for(cluster, shares)
        blocking = [(query.blocking_work * s.share, True) for s in streams]
        return PlanShape(OLAP, streams, blocking, query.pipeline_work, query.result_gb * 1e9,
                         query.scan_gb, query.ship_gb, master)

    rng = rng if rng is not None else np.random.default_rng(0)
    pid = cluster.sample_partition(rng, partitioned)
    owner = cluster.owner_of(pid)
    cluster.require_active(owner)
    involved = {owner}
    if cross_partition_prob > 0 and rng.random() < cross_partition_prob:
        other = cluster.owner_of(cluster.sample_partition(rng, partitioned))
        cluster.require_active(other)
        involved.add(other)
    streams = (Stream(owner, 0, 1.0),)
    # writes are pinned to the owner: nothing is assignable
    blocking = [(query.blocking_work, False)] if query.blocking_work else []
    return PlanShape(OLTP, streams, blocking, query.pipeline_work, query.result_gb * 1e9,
                     query.scan_gb, 0.0, master, tuple(sorted(involved)))


def olap_response(
    plan: PlanShape,
    cluster: Cluster,
    net_rtt_s: float = 0.0,
    prefetch: bool = True,
    assignment: Sequence[int] | None = None,
    cpu_overhead: float = 0.0,
) -> CostEstimate:
    """Unloaded response time of an OLAP plan.

    Each stream reads its share from disk, then runs its pipeline and
    blocking work.  Streams not on the master ship ``ship_gb`` per unit
    share to it; with ``prefetch`` the transfer overlaps computation.
    The query finishes with the slowest stream plus result shipping.

    Raises:
        ConfigurationError: a drive or link has zero bandwidth.
    """
    per_node: dict[int, NodeDemand] = {}
    master = cluster.nodes[plan.master]
    link_mbs = master.net_bandwidth_mbps / 8.0
    if link_mbs <= 0:
        raise ConfigurationError("network bandwidth must be > 0")
    slowest = 0.0
    blocking = [w for w, _ in plan.blocking_ops]
    for i, s in enumerate(plan.streams):
        node = cluster.nodes[s.node]
        bw = node.disks[s.disk].bandwidth_mbs
        if bw <= 0:
            raise ConfigurationError(f"disk {s.disk} of node {s.node} has zero bandwidth")
        scan_gb = plan.scan_gb * s.share
        scan_s = scan_gb * MB_PER_GB / bw
        pipe = plan.pipeline_ops * s.share * (1.0 + cpu_overhead)
        blk = (blocking[i] if i < len(blocking) else 0.0) * (1.0 + cpu_overhead)
        blk_node = cluster.nodes[assignment[i]] if assignment is not None else node
        compute_s = pipe / node.thread_speed + blk / blk_node.thread_speed
        ship_gb = plan.ship_gb * s.share if s.node != plan.master else 0.0
        net_s = ship_gb * MB_PER_GB / link_mbs + (net_rtt_s if ship_gb > 0 else 0.0)
        total = scan_s + (max(compute_s, net_s) if prefetch else compute_s + net_s)
        slowest = max(slowest, total)
        d = per_node.setdefault(s.node, NodeDemand())
        d.cpu_work += pipe
        d.disk_bytes += scan_gb * 1e9
        d.net_bytes += ship_gb * 1e9
        # intra-plan shipping loads both ends of the link
        per_node.setdefault(plan.master, NodeDemand()).net_bytes += ship_gb * 1e9
        bd = per_node.setdefault(blk_node.id, NodeDemand())
        bd.cpu_work += blk
    result_s = plan.result_bytes / (link_mbs * 1e6)
    per_node.setdefault(plan.master, NodeDemand()).net_bytes += plan.result_bytes
    return CostEstimate(slowest + result_s, per_node)


def oltp_response(
    plan: PlanShape,
    involved_nodes: int,
    base_service_s: float,
    sync_delta_s: float,
    queue_delay_s: float = 0.0,
) -> CostEstimate:
    """Transaction response: base service, lock synchronization, queueing."""
    if involved_nodes < 1:
        raise DomainError("involved_nodes must be >= 1")
    lock = (involved_nodes - 1) * sync_delta_s
    per_node = {n: NodeDemand(cpu_work=plan.pipeline_ops if n == plan.streams[0].node else 0.0)
                for n in plan.involved}
    return CostEstimate(base_service_s + lock + queue_delay_s, per_node, lock)


def assign_blocking_ops(
    plan: PlanShape,
    cluster: Cluster,
    projected_util: Mapping[int, float],
    exclude: frozenset[int] | set[int] = frozenset(),
    increment: float | None = None,
) -> list[int | None]:
    """Node per blocking operator; ``None`` for operators that are not assignable.

    Each assignable operator goes to the Active node with the lowest
    projected CPU utilization.  The operator stays with its scan when that
    node ties for the minimum, otherwise the lowest node id wins.  The
    projection is bumped after every choice (by ``increment``, or one
    thread's worth of the chosen node).

    Raises:
        UnavailableError: no Active node is eligible.
    """
    candidates = [n for n in cluster.active_ids() if n not in exclude]
    if not candidates:
        raise UnavailableError("no Active node for blocking operators")
    util = {n: float(projected_util.get(n, 0.0)) for n in candidates}
    out: list[int | None] = []
    for i, (_, assignable) in enumerate(plan.blocking_ops):
        home = plan.streams[i].node if i < len(plan.streams) else plan.master
        if not assignable:
            out.append(home)
            continue
        chosen = choose_node(home, util)
        out.append(chosen)
        util[chosen] += increment if increment is not None else 1.0 / cluster.nodes[chosen].cpu_threads
    return out


def choose_node(home: int, util: Mapping[int, float]) -> int:
    """Least-loaded candidate; ``home`` wins ties, then the lowest id."""
    best = min(util.values())
    if util.get(home, math.inf) <= best:
        return home
    return min(n for n, u in util.items() if u <= best)


def per_client_demand(
    query: QueryClass,
    interval_s: float,
    cpu_overhead: float,
    base_latency_s: float = 0.0,
    thread_speed: float = 1.0,
) -> float:
    """Work-units per second one timed-interval client offers, unloaded."""
    work = query.work * (1.0 + cpu_overhead)
    cycle = max(interval_s, base_latency_s + query.pipeline_work * (1.0 + cpu_overhead) / thread_speed)
    return work / cycle


def nodes_needed(demand: float, node_capacity: float, cpu_upper: float, max_nodes: int) -> int:
    """Fewest nodes that keep ``demand`` work-units/s under ``cpu_upper``."""
    if node_capacity <= 0 or cpu_upper <= 0:
        raise ConfigurationError("node capacity and cpu_upper must be > 0")
    n = math.ceil(demand / (cpu_upper * node_capacity) - 1e-9)
    return int(min(max(n, 1), max_nodes))
