"""Queueing resources used by the event loop."""

from __future__ import annotations

import heapq
import math


class ProcessorSharingCpu:
    """Multi-threaded processor-sharing CPU with weighted jobs.

    Every unit of job weight receives ``min(thread_speed, available / total_weight)``
    work-units per second, so a weight-``w`` job with per-unit work ``s`` is
    equivalent to ``w`` identical jobs of work ``s`` submitted together.
    Completion order is tracked in virtual time: ``v`` advances at the
    per-unit rate, and a job finishes once ``v`` reaches its tag.

    ``reserved`` is the fraction of capacity taken by background activity
    (data migration); it reduces what jobs get and counts as busy time.
    """

    __slots__ = ("threads", "capacity", "speed", "reserved", "v", "t", "weight",
                 "jobs", "work_done", "_seq")

    def __init__(self, threads: int, capacity: float):
        self.threads = threads
        self.capacity = capacity
        self.speed = capacity / threads
        self.reserved = 0.0
        self.v = 0.0
        self.t = 0.0
        self.weight = 0
        self.jobs: list = []
        self.work_done = 0.0
        self._seq = 0

    def rate(self) -> float:
        if self.weight <= 0:
            return 0.0
        return min(self.speed, self.capacity * (1.0 - self.reserved) / self.weight)

    def advance(self, now: float) -> None:
        dt = now - self.t
        if dt > 0 and self.weight > 0:
            r = self.rate()
            self.v += r * dt
            self.work_done += r * self.weight * dt
        self.t = now

    def add(self, now: float, work: float, weight: int, payload) -> None:
        """Start a job of ``work`` units per unit of weight."""
        self.advance(now)
        self._seq += 1
        heapq.heappush(self.jobs, (self.v + work, self._seq, weight, payload))
        self.weight += weight

    def next_completion(self) -> float:
        if not self.jobs:
            return math.inf
        r = self.rate()
        if r <= 0:
            return math.inf
        return self.t + max(0.0, self.jobs[0][0] - self.v) / r

    def pop_finished(self, now: float) -> list:
        self.advance(now)
        done = []
        eps = 1e-9 * max(1.0, abs(self.v))
        while self.jobs and self.jobs[0][0] <= self.v + eps:
            _, _, w, payload = heapq.heappop(self.jobs)
            self.weight -= w
            done.append(payload)
        return done

    def busy(self) -> float:
        """Fraction of capacity doing job work right now."""
        return self.rate() * self.weight / self.capacity

    def util(self) -> float:
        return min(1.0, self.busy() + self.reserved)

    @property
    def idle(self) -> bool:
        return not self.jobs


class FifoDisk:
    """Single-server FIFO drive; completion time is known at submission."""

    __slots__ = ("bandwidth_mbs", "busy_until")

    def __init__(self, bandwidth_mbs: float):
        self.bandwidth_mbs = bandwidth_mbs
        self.busy_until = 0.0

    def submit(self, now: float, megabytes: float) -> tuple[float, float]:
        """Queue a read; return ``(finish_time, service_time)``."""
        service = megabytes / self.bandwidth_mbs
        start = max(now, self.busy_until)
        self.busy_until = start + service
        return self.busy_until, service
