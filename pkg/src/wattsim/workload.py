"""Database clients and phase-structured workload schedules.

Clients are timed-interval by default: they submit at fixed interval
boundaries, or immediately when the previous answer overran its slot.
Open-loop Poisson clients are available for queueing checks.
"""

from __future__ import annotations

import csv
import heapq
import io
from dataclasses import dataclass, field
from typing import Callable, Iterator, Mapping, Sequence

import numpy as np

from .errors import DomainError, InputError

OLAP = "OLAP"
OLTP = "OLTP"
INTERVAL = "interval"
POISSON = "poisson"

# four 8 KiB pages
_OLTP_MAX_SCAN_GB = 0.01


@dataclass(frozen=True)
class QueryClass:
    """Resource demands of one abstract query.

    Work is in abstract work-units (one unit keeps one work-unit/second of
    CPU capacity busy for a second).  ``tables`` lists what the query reads.
    """

    name: str
    kind: str
    scan_gb: float
    write_fraction: float
    blocking_work: float
    pipeline_work: float
    mem_footprint_gb: float
    tables: tuple[str, ...] = ()
    ship_gb: float = 0.0
    result_gb: float = 0.0
    pages: int = 0

    def __post_init__(self):
        if self.kind not in (OLAP, OLTP):
            raise DomainError(f"query class {self.name}: kind must be OLAP or OLTP")
        values = (self.scan_gb, self.write_fraction, self.blocking_work, self.pipeline_work,
                  self.mem_footprint_gb, self.ship_gb, self.result_gb)
        if min(values) < 0:
            raise DomainError(f"query class {self.name}: demands must be >= 0")
        if self.write_fraction > 1:
            raise DomainError(f"query class {self.name}: write_fraction must be <= 1")
        if self.kind == OLTP and not (self.write_fraction > 0 and self.scan_gb <= _OLTP_MAX_SCAN_GB):
            raise DomainError(f"query class {self.name}: OLTP touches little data and writes")
        if self.kind == OLAP and self.write_fraction != 0:
            raise DomainError(f"query class {self.name}: OLAP queries are read-only")

    @property
    def work(self) -> float:
        return self.blocking_work + self.pipeline_work


@dataclass(frozen=True)
class ClientSpec:
    """How one client submits: timed-interval, or open-loop Poisson with mean gap ``interval_s``."""

    query_class: QueryClass
    interval_s: float
    arrivals: str = INTERVAL

    def __post_init__(self):
        if not self.interval_s > 0:
            raise DomainError("interval_s must be > 0")
        if self.arrivals not in (INTERVAL, POISSON):
            raise DomainError("arrivals must be 'interval' or 'poisson'")


@dataclass(frozen=True)
class Phase:
    start_s: float
    client_count: int
    client: ClientSpec

    def __post_init__(self):
        if self.client_count < 0:
            raise DomainError("client_count must be >= 0")


@dataclass(frozen=True)
class WorkloadSchedule:
    phases: tuple[Phase, ...]
    phase_length_s: float = 300.0

    def __post_init__(self):
        object.__setattr__(self, "phases", tuple(self.phases))
        starts = [p.start_s for p in self.phases]
        if any(b <= a for a, b in zip(starts, starts[1:])):
            raise DomainError("phase starts must be strictly increasing")
        if self.phase_length_s <= 0:
            raise DomainError("phase_length_s must be > 0")

    def phase_index_at(self, t: float) -> int | None:
        idx = None
        for i, p in enumerate(self.phases):
            if p.start_s <= t:
                idx = i
            else:
                break
        return idx

    def phase_bounds(self, horizon: float) -> list[tuple[float, float]]:
        """``[start, end)`` of every phase, the last one ending at ``horizon``."""
        starts = [p.start_s for p in self.phases]
        ends = starts[1:] + [horizon]
        return list(zip(starts, ends))

    def upcoming(self, now: float, horizon_s: float) -> list[Phase]:
        """The phase active at ``now`` plus every phase starting in ``(now, now + horizon_s]``."""
        out = []
        cur = self.phase_index_at(now)
        if cur is not None:
            out.append(self.phases[cur])
        out.extend(p for p in self.phases if now < p.start_s <= now + horizon_s)
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["start_s", "client_count", "class"])
        for p in self.phases:
            w.writerow([repr(float(p.start_s)), p.client_count, p.client.query_class.name])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, clients: Mapping[str, ClientSpec], phase_length_s: float = 300.0):
        rows = list(csv.DictReader(io.StringIO(text)))
        if not rows:
            raise InputError("schedule CSV has no rows")
        phases = []
        for r in rows:
            try:
                spec = clients[r["class"]]
            except KeyError:
                raise InputError(f"unknown query class {r['class']!r} in schedule CSV") from None
            phases.append(Phase(float(r["start_s"]), int(r["client_count"]), spec))
        return cls(tuple(phases), phase_length_s)


def next_submit(last_submit: float, completion: float, interval_s: float) -> float:
    """Submission time of a client's next query.

    Queries answered within the interval wait for the next interval slot;
    late answers trigger the next query immediately.
    """
    return max(last_submit + interval_s, completion)


@dataclass
class Client:
    id: int
    spec: ClientSpec
    weight: int = 1
    last_submit: float = float("nan")
    in_flight: int = 0
    retired: bool = False


@dataclass
class ClientPool:
    """Client population following a schedule.

    Clients persist across phases of the same class; surplus clients retire
    (newest first) and are never resubmitted, while their in-flight query
    drains.  With ``client_weight`` > 1 each simulated client stands for
    that many identical real clients.
    """

    schedule: WorkloadSchedule
    rng: np.random.Generator
    client_weight: int = 1
    clients: dict[int, Client] = field(default_factory=dict)
    _next_id: int = 0

    def _live(self, spec: ClientSpec) -> list[Client]:
        return [c for c in self.clients.values() if not c.retired and c.spec == spec]

    def start_phase(self, index: int) -> list[tuple[float, int]]:
        """Adjust the population for phase ``index``; return first submissions."""
        phase = self.schedule.phases[index]
        for c in self.clients.values():
            if not c.retired and c.spec != phase.client:
                c.retired = True
        live = self._live(phase.client)
        have = sum(c.weight for c in live)
        want = phase.client_count
        # retire newest first, whole clients only
        for c in sorted(live, key=lambda c: -c.id):
            if have - c.weight >= want:
                c.retired = True
                have -= c.weight
        arrivals = []
        g = self.client_weight
        while have < want:
            w = min(g, want - have)
            c = Client(self._next_id, phase.client, weight=w)
            self._next_id += 1
            self.clients[c.id] = c
            have += w
            if phase.client.arrivals == POISSON:
                t = phase.start_s + float(self.rng.exponential(phase.client.interval_s))
            else:
                t = phase.start_s + float(self.rng.uniform(0.0, phase.client.interval_s))
            arrivals.append((t, c.id))
        return arrivals

    def submit(self, client_id: int, t: float) -> Client | None:
        c = self.clients[client_id]
        if c.retired or (c.in_flight and c.spec.arrivals == INTERVAL):
            return None
        c.in_flight += 1
        c.last_submit = t
        return c

    def next_open(self, client: Client) -> float | None:
        """Next submission of a Poisson client (independent of completions)."""
        if client.retired or client.spec.arrivals != POISSON:
            return None
        return client.last_submit + float(self.rng.exponential(client.spec.interval_s))

    def complete(self, client_id: int, completion: float) -> float | None:
        """Record a completion; return a timed-interval client's next submission time."""
        c = self.clients[client_id]
        c.in_flight -= 1
        if c.retired or c.spec.arrivals != INTERVAL:
            return None
        return next_submit(c.last_submit, completion, c.spec.interval_s)


def emit_arrivals(
    schedule: WorkloadSchedule,
    horizon: float,
    seed: int,
    response_s: float | Callable[[float, int], float] = 0.0,
    client_weight: int = 1,
) -> Iterator[tuple[float, int, QueryClass]]:
    """Arrival stream ``(time, client_id, query_class)`` for assumed response times.

    ``response_s`` is a constant or a function of ``(submit_time, client_id)``.
    """
    if not schedule.phases:
        raise InputError("empty schedule")
    if horizon <= 0:
        raise DomainError("horizon must be > 0")
    respond = response_s if callable(response_s) else (lambda t, c: float(response_s))
    pool = ClientPool(schedule, np.random.default_rng(seed), client_weight)
    # (time, priority, seq, kind, payload); arrivals sort before phase changes
    heap: list = []
    seq = 0
    for i, p in enumerate(schedule.phases):
        if p.start_s < horizon:
            heap.append((p.start_s, 1, seq, "phase", i))
            seq += 1
    heapq.heapify(heap)
    while heap:
        t, _, _, kind, payload = heapq.heappop(heap)
        if kind == "phase":
            for at, cid in pool.start_phase(payload):
                if at < horizon:
                    heapq.heappush(heap, (at, 0, seq, "arrival", cid))
                    seq += 1
            continue
        if kind == "arrival":
            client = pool.submit(payload, t)
            if client is None:
                continue
            yield t, client.id, client.spec.query_class
            nxt = pool.next_open(client)
            if nxt is not None and nxt < horizon:
                heapq.heappush(heap, (nxt, 0, seq, "arrival", payload))
                seq += 1
            done = t + respond(t, client.id)
            heapq.heappush(heap, (done, 0, seq, "done", payload))
            seq += 1
        else:
            nxt = pool.complete(payload, t)
            if nxt is not None and nxt < horizon:
                heapq.heappush(heap, (nxt, 0, seq, "arrival", payload))
                seq += 1


def constant_schedule(client: ClientSpec, clients: int, phase_length_s: float = 300.0) -> WorkloadSchedule:
    return WorkloadSchedule((Phase(0.0, clients, client),), phase_length_s)


def stepped_schedule(
    client: ClientSpec, counts: Sequence[int], phase_length_s: float = 300.0
) -> WorkloadSchedule:
    """One phase per entry of ``counts``, each ``phase_length_s`` long."""
    phases = tuple(Phase(i * phase_length_s, n, client) for i, n in enumerate(counts))
    return WorkloadSchedule(phases, phase_length_s)
