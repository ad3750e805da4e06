"""Cluster topology: nodes, drives, partitions and utilization bookkeeping."""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

from .errors import DomainError, PlacementError, ProtocolError, UnavailableError
from .power import ACTIVE, PowerMode, PowerState, STANDBY

PartitionId = int


@dataclass
class Disk:
    capacity_gb: float = 500.0
    bandwidth_mbs: float = 250.0
    iops_capacity: float = 30000.0
    current_iops: float = 0.0

    @property
    def bandwidth_mbps(self) -> float:
        """Bandwidth in megabits per second."""
        return self.bandwidth_mbs * 8.0


@dataclass
class ActivityRecord:
    cpu_cycles: float = 0.0
    page_requests: float = 0.0
    net_bytes: float = 0.0
    window_start: float = 0.0
    window_end: float = 1.0

    def __post_init__(self):
        if min(self.cpu_cycles, self.page_requests, self.net_bytes) < 0:
            raise DomainError("activity counters must be >= 0")
        if not self.window_end > self.window_start:
            raise DomainError("window_end must be after window_start")


@dataclass
class Partition:
    id: PartitionId
    table: str
    size_gb: float
    replicated: bool = False
    activity: ActivityRecord = field(default_factory=ActivityRecord)

    def __post_init__(self):
        if not self.size_gb > 0:
            raise DomainError(f"partition {self.id}: size_gb must be > 0")


@dataclass
class Node:
    """One database node.

    The ``window_*`` counters are written by the simulation engine and
    consumed (and reset) by :func:`snapshot`.
    """

    id: int
    power: PowerState = STANDBY
    cpu_threads: int = 2
    cpu_capacity: float = 1.66
    mem_capacity_gb: float = 2.0
    disks: list[Disk] = field(default_factory=lambda: [Disk()])
    net_bandwidth_mbps: float = 1000.0
    hosted: set[PartitionId] = field(default_factory=set)

    mem_used_gb: float = 0.0
    window_work: float = 0.0
    window_disk_busy_s: list[float] = field(default_factory=list)
    window_disk_ios: list[float] = field(default_factory=list)
    window_net_bytes: float = 0.0
    window_page_requests: float = 0.0

    def __post_init__(self):
        if self.cpu_threads < 1 or self.cpu_capacity <= 0:
            raise DomainError(f"node {self.id}: needs >= 1 thread and positive capacity")
        if not self.window_disk_busy_s:
            self.window_disk_busy_s = [0.0] * len(self.disks)
            self.window_disk_ios = [0.0] * len(self.disks)

    @property
    def active(self) -> bool:
        return self.power.mode is PowerMode.ACTIVE

    @property
    def thread_speed(self) -> float:
        return self.cpu_capacity / self.cpu_threads

    @property
    def disk_capacity_gb(self) -> float:
        return sum(d.capacity_gb for d in self.disks)

    def reset_window(self) -> None:
        self.window_work = 0.0
        self.window_disk_busy_s = [0.0] * len(self.disks)
        self.window_disk_ios = [0.0] * len(self.disks)
        self.window_net_bytes = 0.0
        self.window_page_requests = 0.0


@dataclass(frozen=True)
class UtilizationSnapshot:
    node_id: int
    cpu_util: float
    mem_used_gb: float
    mem_util: float
    net_util: float
    iops_util: tuple[float, ...]
    partitions: Mapping[PartitionId, ActivityRecord]
    window_start: float = 0.0
    window_end: float = 0.0

    @property
    def max_iops_util(self) -> float:
        return max(self.iops_util, default=0.0)


def _clip(x: float) -> float:
    return min(1.0, max(0.0, x))


def snapshot(
    node: Node,
    window: float,
    partitions: Mapping[PartitionId, Partition] | None = None,
    now: float | None = None,
) -> UtilizationSnapshot | None:
    """Normalize the node's window counters into utilization fractions.

    CPU work accounted to the node is apportioned to its hosted partitions
    in proportion to their size; scans and transactions both pick data
    uniformly by volume.  Returns ``None`` for a node that is not Active,
    which the controller reads as an absent node.
    """
    if not node.active:
        return None
    if window <= 0:
        raise DomainError("window must be > 0")
    end = now if now is not None else window
    start = end - window
    cpu = _clip(node.window_work / (node.cpu_capacity * window))
    net_cap_bytes = node.net_bandwidth_mbps * 1e6 / 8.0 * window
    net = _clip(node.window_net_bytes / net_cap_bytes)
    iops = []
    for disk, busy, ios in zip(node.disks, node.window_disk_busy_s, node.window_disk_ios):
        disk.current_iops = min(ios / window, disk.iops_capacity)
        iops.append(_clip(max(busy / window, ios / (disk.iops_capacity * window))))

    records: dict[PartitionId, ActivityRecord] = {}
    if partitions is not None and node.hosted:
        hosted = [partitions[p] for p in node.hosted]
        total = sum(p.size_gb for p in hosted)
        for p in hosted:
            share = p.size_gb / total
            rec = ActivityRecord(
                cpu_cycles=node.window_work * share,
                page_requests=node.window_page_requests * share,
                net_bytes=node.window_net_bytes * share,
                window_start=start,
                window_end=end,
            )
            p.activity = rec
            records[p.id] = rec
    return UtilizationSnapshot(
        node_id=node.id,
        cpu_util=cpu,
        mem_used_gb=node.mem_used_gb,
        mem_util=_clip(node.mem_used_gb / node.mem_capacity_gb),
        net_util=net,
        iops_util=tuple(iops),
        partitions=records,
        window_start=start,
        window_end=end,
    )


class Cluster:
    """Nodes plus partition ownership.

    Node 0 is the master.  Replicated partitions live on every Active node
    and have no single owner; every other partition has exactly one owner.
    """

    def __init__(self, nodes: Iterable[Node], master: int = 0):
        self.nodes: list[Node] = list(nodes)
        if [n.id for n in self.nodes] != list(range(len(self.nodes))):
            raise DomainError("node ids must be 0..n-1 in order")
        self.master = master
        self.partitions: dict[PartitionId, Partition] = {}
        self.owner: dict[PartitionId, int] = {}
        self.reserved_gb: dict[int, float] = defaultdict(float)
        self._table_bytes: list[dict[str, float]] = [defaultdict(float) for _ in self.nodes]
        self._replicated_gb = 0.0
        self.next_pid: PartitionId = 0
        self.version = 0
        self._sample_cache: dict[tuple[str, ...], tuple[int, list[PartitionId], np.ndarray]] = {}

    # -- queries -----------------------------------------------------------

    def active_ids(self) -> list[int]:
        return [n.id for n in self.nodes if n.active]

    def owned_gb(self, node_id: int) -> float:
        return sum(self._table_bytes[node_id].values())

    def used_gb(self, node_id: int) -> float:
        node = self.nodes[node_id]
        replicas = self._replicated_gb if (node.active or node.hosted) else 0.0
        return self.owned_gb(node_id) + replicas + self.reserved_gb[node_id]

    def free_gb(self, node_id: int) -> float:
        return self.nodes[node_id].disk_capacity_gb - self.used_gb(node_id)

    def total_gb(self) -> float:
        """Total bytes of non-replicated partitions."""
        return sum(p.size_gb for p in self.partitions.values() if not p.replicated)

    def table_gb(self, node_id: int, table: str) -> float:
        return self._table_bytes[node_id].get(table, 0.0)

    def tables(self) -> set[str]:
        return {p.table for p in self.partitions.values()}

    def replicated_tables(self) -> set[str]:
        return {p.table for p in self.partitions.values() if p.replicated}

    def table_shares(self, tables: Iterable[str]) -> list[tuple[int, float]]:
        """``(node, fraction)`` of the given tables' bytes held by each owner."""
        tables = list(tables)
        per_node = []
        for node_id, tb in enumerate(self._table_bytes):
            gb = sum(tb.get(t, 0.0) for t in tables)
            if gb > 0:
                per_node.append((node_id, gb))
        total = sum(gb for _, gb in per_node)
        return [(n, gb / total) for n, gb in per_node]

    def partitions_on(self, node_id: int) -> list[Partition]:
        return [self.partitions[p] for p in sorted(self.nodes[node_id].hosted)]

    def owner_of(self, pid: PartitionId) -> int:
        return self.owner[pid]

    def sample_partition(self, rng: np.random.Generator, tables: Iterable[str]) -> PartitionId:
        """A non-replicated partition of ``tables``, drawn with probability ∝ size."""
        key = tuple(sorted(tables))
        cached = self._sample_cache.get(key)
        if cached is None or cached[0] != self.version:
            pids = sorted(p.id for p in self.partitions.values() if not p.replicated and p.table in key)
            if not pids:
                raise UnavailableError(f"no partitions for tables {list(key)}")
            cum = np.cumsum([self.partitions[p].size_gb for p in pids])
            cached = (self.version, pids, cum / cum[-1])
            self._sample_cache[key] = cached
        _, pids, cum = cached
        i = int(np.searchsorted(cum, rng.random(), side="right"))
        return pids[min(i, len(pids) - 1)]

    # -- mutation ----------------------------------------------------------

    def add_partition(self, table: str, size_gb: float, owner: int | None, replicated: bool = False) -> PartitionId:
        pid = self.next_pid
        part = Partition(pid, table, size_gb, replicated)
        self.next_pid += 1
        self.partitions[pid] = part
        if replicated:
            self._replicated_gb += size_gb
            return pid
        if owner is None:
            raise DomainError("non-replicated partition needs an owner")
        self._attach(part, owner)
        return pid

    def _attach(self, part: Partition, node_id: int) -> None:
        self.version += 1
        self.owner[part.id] = node_id
        self.nodes[node_id].hosted.add(part.id)
        self._table_bytes[node_id][part.table] += part.size_gb

    def _detach(self, part: Partition) -> int:
        self.version += 1
        node_id = self.owner.pop(part.id)
        self.nodes[node_id].hosted.discard(part.id)
        tb = self._table_bytes[node_id]
        tb[part.table] -= part.size_gb
        if tb[part.table] <= 1e-9:
            del tb[part.table]
        return node_id

    def place_partition(self, pid: PartitionId, target: int) -> "Cluster":
        """Transfer ownership of ``pid`` to ``target``.

        Raises:
            ProtocolError: replicated partition, or target not Active.
            PlacementError: target lacks free capacity.
        """
        part = self.partitions[pid]
        if part.replicated:
            raise ProtocolError(f"replicated partition {pid} is never migrated singly")
        node = self.nodes[target]
        if not node.active:
            raise ProtocolError(f"target node {target} is not Active")
        if self.owner.get(pid) == target:
            return self
        if part.size_gb > self.free_gb(target) + 1e-9:
            raise PlacementError(
                f"partition {pid} ({part.size_gb:.2f} GB) does not fit on node {target} "
                f"({self.free_gb(target):.2f} GB free)"
            )
        self._detach(part)
        self._attach(part, target)
        part.activity = ActivityRecord()
        return self

    def split_partition(self, pid: PartitionId, parts: int) -> list[PartitionId]:
        """Split into ``parts`` equal partitions on the same owner."""
        if parts < 2:
            raise DomainError("split needs k >= 2")
        part = self.partitions[pid]
        if part.replicated:
            raise ProtocolError(f"replicated partition {pid} cannot be split")
        owner = self._detach(part)
        del self.partitions[pid]
        size = part.size_gb / parts
        new_ids = []
        for _ in range(parts):
            new = Partition(self.next_pid, part.table, size)
            self.next_pid += 1
            self.partitions[new.id] = new
            self._attach(new, owner)
            new_ids.append(new.id)
        return new_ids

    def merge_partitions(self, pids: list[PartitionId]) -> PartitionId:
        """Inverse of :meth:`split_partition` for co-owned partitions of one table."""
        if len(pids) < 2:
            raise DomainError("merge needs at least two partitions")
        parts = [self.partitions[p] for p in pids]
        owners = {self.owner.get(p.id) for p in parts}
        tables = {p.table for p in parts}
        if any(p.replicated for p in parts) or len(owners) != 1 or len(tables) != 1:
            raise ProtocolError("only co-owned partitions of one table can be merged")
        owner = owners.pop()
        size = 0.0
        for p in parts:
            self._detach(p)
            del self.partitions[p.id]
            size += p.size_gb
        new = Partition(self.next_pid, tables.pop(), size)
        self.next_pid += 1
        self.partitions[new.id] = new
        self._attach(new, owner)
        return new.id

    def reserve(self, node_id: int, gb: float) -> None:
        if gb > self.free_gb(node_id) + 1e-9:
            raise PlacementError(f"node {node_id} cannot reserve {gb:.2f} GB")
        self.reserved_gb[node_id] += gb

    def release(self, node_id: int, gb: float) -> None:
        self.reserved_gb[node_id] = max(0.0, self.reserved_gb[node_id] - gb)

    def set_power(self, node_id: int, state: PowerState) -> None:
        node = self.nodes[node_id]
        if state.mode is not PowerMode.ACTIVE and node.hosted:
            raise ProtocolError(f"node {node_id} still hosts partitions")
        node.power = state

    def require_active(self, node_id: int) -> Node:
        node = self.nodes[node_id]
        if not node.active:
            raise UnavailableError(f"node {node_id} is not Active")
        return node


def make_nodes(count: int, active: int = 1, **node_kwargs) -> list[Node]:
    """``count`` identical nodes, the first ``active`` of them powered on."""
    disk_kwargs = node_kwargs.pop("disk", {})
    n_disks = node_kwargs.pop("n_disks", 1)
    return [
        Node(
            id=i,
            power=ACTIVE if i < active else STANDBY,
            disks=[Disk(**disk_kwargs) for _ in range(n_disks)],
            **node_kwargs,
        )
        for i in range(count)
    ]
