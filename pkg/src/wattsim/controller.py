"""Master-node elasticity: threshold monitoring, scale-out/in planning,
migration costing and schedule-driven forecasting.

The same :class:`Controller` implements both policies.  A forecast horizon
of zero makes it purely reactive.
"""

from __future__ import annotations

import math
from collections import defaultdict, deque
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

from .cluster import Cluster, UtilizationSnapshot
from .cost import nodes_needed
from .errors import ConfigurationError, DomainError
from .power import PowerMode, PowerProfile, PowerState, node_power
from .workload import ClientSpec, WorkloadSchedule

SMOOTHING_WINDOWS = 3


@dataclass(frozen=True)
class Thresholds:
    cpu_upper: float = 0.80
    cpu_lower: float = 0.30
    iops_upper: float = 0.80
    iops_lower: float = 0.20
    mem_upper: float = 0.90
    mem_lower: float = 0.50

    def __post_init__(self):
        for lo, hi in ((self.cpu_lower, self.cpu_upper), (self.iops_lower, self.iops_upper),
                       (self.mem_lower, self.mem_upper)):
            if not 0 <= lo < hi <= 1:
                raise DomainError("thresholds need 0 <= lower < upper <= 1")


@dataclass(frozen=True)
class Violation:
    kind: str
    node: int
    resource: str = "all"


def Overload(node: int, resource: str) -> Violation:  # noqa: N802
    return Violation("overload", node, resource)


def Underload(node: int) -> Violation:  # noqa: N802
    return Violation("underload", node)


@dataclass(frozen=True)
class Move:
    partition: int
    source: int
    target: int
    size_gb: float


@dataclass
class MigrationPlan:
    moves: list[Move] = field(default_factory=list)
    splits: list[tuple[int, int]] = field(default_factory=list)
    powerons: list[int] = field(default_factory=list)
    poweroffs: list[int] = field(default_factory=list)
    est_duration_s: float = 0.0
    est_energy_j: float = 0.0
    kind: str = "none"
    stage: int = 0
    note: str = ""

    def __post_init__(self):
        if self.est_duration_s < 0 or self.est_energy_j < 0:
            raise DomainError("plan estimates must be >= 0")
        if set(self.powerons) & set(self.poweroffs):
            raise DomainError("a node cannot be powered on and off by one plan")

    @property
    def empty(self) -> bool:
        return not (self.moves or self.splits or self.powerons or self.poweroffs)

    @property
    def moved_gb(self) -> float:
        return sum(m.size_gb for m in self.moves)


@dataclass(frozen=True)
class Forecast:
    """How far ahead the controller sees the workload schedule; 0 is reactive."""

    horizon_s: float = 1800.0

    def __post_init__(self):
        if self.horizon_s < 0:
            raise DomainError("horizon_s must be >= 0")


@dataclass(frozen=True)
class ControllerConfig:
    thresholds: Thresholds = Thresholds()
    forecast: Forecast = Forecast(0.0)
    node_capacity: float = 1.66
    max_nodes: int = 10
    boot_s: float = 10.0
    migration_mbs: float = 102.4
    bandwidth_floor: float = 0.5
    payback_horizon_s: float = 1800.0
    lead_factor: float = 1.25
    window_s: float = 5.0
    min_move_gb: float = 0.5
    max_split: int = 8
    min_nodes: int = 1


def estimate_migration(gb: float, target_power_w: float, effective_bw_mbs: float) -> tuple[float, float]:
    """``(duration_s, energy_j)`` of moving ``gb`` to a node drawing ``target_power_w``."""
    if effective_bw_mbs <= 0:
        raise ConfigurationError("effective migration bandwidth must be > 0")
    if gb < 0 or target_power_w < 0:
        raise DomainError("bytes and power must be >= 0")
    duration = gb * 1024.0 / effective_bw_mbs
    return duration, duration * target_power_w


def effective_bandwidth(raw_mbs: float, donor_util: float, floor: float = 0.5) -> float:
    """Migration bandwidth left over by a donor busy with queries."""
    return raw_mbs * max(floor, 1.0 - donor_util)


def _mean(values: Iterable[float]) -> float:
    values = list(values)
    return sum(values) / len(values) if values else 0.0


def smooth(snapshots: Sequence[UtilizationSnapshot]) -> dict[int, dict[str, float]]:
    """Per node, the mean utilization over its last three windows."""
    by_node: dict[int, list[UtilizationSnapshot]] = defaultdict(list)
    for s in snapshots:
        by_node[s.node_id].append(s)
    out = {}
    for node, snaps in by_node.items():
        last = snaps[-SMOOTHING_WINDOWS:]
        out[node] = {
            "cpu": _mean(s.cpu_util for s in last),
            "iops": _mean(s.max_iops_util for s in last),
            "mem": _mean(s.mem_util for s in last),
        }
    return out


def detect(snapshots: Sequence[UtilizationSnapshot], thresholds: Thresholds) -> list[Violation]:
    """Threshold violations from time-ordered snapshots.

    A node is overloaded on every resource whose smoothed utilization
    exceeds its upper bound, and underloaded when all its resources are
    below their lower bounds.
    """
    out = []
    for node, u in sorted(smooth(snapshots).items()):
        over = [(r, u[r]) for r, hi in (("cpu", thresholds.cpu_upper), ("iops", thresholds.iops_upper),
                                         ("mem", thresholds.mem_upper)) if u[r] > hi]
        if over:
            out.extend(Overload(node, r) for r, _ in over)
        elif (u["cpu"] < thresholds.cpu_lower and u["iops"] < thresholds.iops_lower
              and u["mem"] < thresholds.mem_lower):
            out.append(Underload(node))
    return out


def amortization_check(plan: MigrationPlan, projected_savings_w: float, payback_horizon_s: float) -> bool:
    """Accept a reorganization only if its energy is recouped within the horizon.

    Overload-driven scale-out plans always pass: performance emergencies run
    regardless of cost.
    """
    if plan.empty or plan.kind == "scale-out":
        return True
    return plan.est_energy_j < projected_savings_w * payback_horizon_s


# -- placement -------------------------------------------------------------


def rebalance(
    cluster: Cluster,
    targets: Sequence[int],
    hotness: Mapping[int, float] | None = None,
    donors_only: Iterable[int] | None = None,
    min_move_gb: float = 0.5,
    max_split: int = 8,
) -> tuple[list[tuple[int, int]], list[Move]]:
    """Splits and moves that spread data evenly over ``targets``.

    Every node outside ``targets`` is emptied.  With ``donors_only`` set,
    only those nodes (plus non-targets) give data away.  Partitions leave a
    donor hottest first; one larger than the receiver's deficit is split
    into equal pieces and a single piece moves.  Partition ids of split
    pieces are the ids :meth:`Cluster.split_partition` will allocate when
    the splits are applied in order.
    """
    targets = sorted(targets)
    if not targets:
        raise DomainError("rebalance needs at least one target node")
    tset = set(targets)
    owned = {n.id: cluster.owned_gb(n.id) for n in cluster.nodes}
    total = sum(owned.values())
    goal = total / len(targets)
    tol = max(min_move_gb, 0.02 * goal)
    free = {n: cluster.free_gb(n) for n in targets}
    heat = hotness or {}

    givers = [n for n, gb in owned.items() if gb > 0 and n not in tset]
    allowed = set(donors_only) if donors_only is not None else tset
    givers += [n for n in targets if n in allowed and owned[n] > goal + tol]
    givers.sort(key=lambda n: (n in tset, -(owned[n] - (goal if n in tset else 0.0)), n))

    next_pid = cluster.next_pid
    splits: list[tuple[int, int]] = []
    moves: list[Move] = []
    for donor in givers:
        must_empty = donor not in tset
        queue = sorted(((p.id, p.size_gb) for p in cluster.partitions_on(donor)),
                       key=lambda x: (-heat.get(x[0], 0.0), -x[1], x[0]))
        while queue:
            excess = owned[donor] - (0.0 if must_empty else goal)
            if excess <= (1e-9 if must_empty else tol):
                break
            receivers = [r for r in targets if r != donor]
            if not receivers:
                break
            recv = max(receivers, key=lambda r: (goal - owned[r], -r))
            deficit = goal - owned[recv]
            if deficit <= tol and not must_empty:
                break
            pid, size = queue.pop(0)
            amount = min(excess, deficit) if deficit > tol else excess
            if size > amount + tol and size > 2 * min_move_gb:
                k = min(max_split, max(2, math.ceil(size / max(amount, min_move_gb))))
                splits.append((pid, k))
                piece = size / k
                ids = list(range(next_pid, next_pid + k))
                next_pid += k
                # one piece moves, the rest stay queued on the donor
                queue = [(i, piece) for i in ids[1:]] + queue
                pid, size = ids[0], piece
            if size > free[recv] + 1e-9:
                fits = [r for r in receivers if free[r] >= size]
                if not fits:
                    continue
                recv = min(fits, key=lambda r: (owned[r], r))
            moves.append(Move(pid, donor, recv, size))
            owned[donor] -= size
            owned[recv] += size
            free[recv] -= size
    return splits, moves


def plan_costs(
    moves: Sequence[Move],
    donor_util: Mapping[int, float],
    target_power_w: Callable[[int], float],
    migration_mbs: float,
    floor: float,
    boot_s: float = 0.0,
) -> tuple[float, float]:
    """Estimated wall time (donors work in parallel, each sequentially) and energy."""
    per_donor: dict[int, float] = defaultdict(float)
    energy = 0.0
    for m in moves:
        bw = effective_bandwidth(migration_mbs, donor_util.get(m.source, 0.0), floor)
        dur, joules = estimate_migration(m.size_gb, target_power_w(m.target), bw)
        per_donor[m.source] += dur
        energy += joules
    duration = max(per_donor.values(), default=0.0)
    return (boot_s + duration if moves or boot_s else 0.0), energy


# -- planning ----------------------------------------------------------------


@dataclass
class LoadView:
    """What the master knows when planning.

    Attributes:
        util: smoothed CPU utilization per Active node.
        demand: work-units/s the connected clients offer, per the cost model.
        hotness: recent CPU cycles per partition.
    """

    util: dict[int, float]
    demand: float = 0.0
    hotness: dict[int, float] = field(default_factory=dict)


def _standby(cluster: Cluster) -> list[int]:
    return [n.id for n in cluster.nodes if n.power.mode is PowerMode.STANDBY]


def _with_costs(plan: MigrationPlan, view: LoadView, cfg: ControllerConfig, profile: PowerProfile) -> MigrationPlan:
    def target_power(node: int) -> float:
        u = min(1.0, view.util.get(node, 0.0))
        return node_power(profile, PowerState(PowerMode.ACTIVE), u) + profile.disk_w

    plan.est_duration_s, plan.est_energy_j = plan_costs(
        plan.moves, view.util, target_power, cfg.migration_mbs, cfg.bandwidth_floor,
        cfg.boot_s if plan.powerons else 0.0)
    return plan


def _scale_out_to(cluster: Cluster, want: int, view: LoadView, cfg: ControllerConfig,
                  profile: PowerProfile, note: str) -> MigrationPlan:
    active = cluster.active_ids()
    standby = _standby(cluster)
    extra = max(0, min(want - len(active), len(standby)))
    powerons = standby[:extra]
    splits, moves = rebalance(cluster, active + powerons, view.hotness,
                              min_move_gb=cfg.min_move_gb, max_split=cfg.max_split)
    plan = MigrationPlan(moves, splits, powerons, [], kind="scale-out", stage=3, note=note)
    return _with_costs(plan, view, cfg, profile)


def plan_scale_out(
    cluster: Cluster,
    violations: Sequence[Violation],
    view: LoadView,
    cfg: ControllerConfig,
    profile: PowerProfile = PowerProfile(),
    offload_tried: bool = False,
) -> MigrationPlan:
    """Staged response to overload.

    1. If some Active node has headroom and the total demand fits the
       Active set, first rely on rerouting blocking operators (no moves).
    2. If that was already tried, split and move hot partitions among the
       Active nodes.
    3. If the Active set cannot carry the demand under the upper bound,
       power on the fewest standby nodes that can and rebalance onto them.
    """
    over = sorted({v.node for v in violations if v.kind == "overload"})
    if not over:
        raise DomainError("plan_scale_out needs at least one Overload")
    active = cluster.active_ids()
    upper = cfg.thresholds.cpu_upper
    measured = sum(view.util.get(n, 0.0) for n in active) * cfg.node_capacity
    demand = max(measured, view.demand)
    want = nodes_needed(demand, cfg.node_capacity, upper, cfg.max_nodes)
    room = [n for n in active if n not in over and view.util.get(n, 0.0) < upper]

    if want > len(active):
        note = f"demand {demand:.2f} wu/s needs {want} nodes"
        if not _standby(cluster):
            note += "; saturated"
        return _scale_out_to(cluster, want, view, cfg, profile, note)
    if room and not offload_tried:
        return MigrationPlan(kind="scale-out", stage=1, note=f"offload blocking ops from {over}")
    splits, moves = rebalance(cluster, active, view.hotness, donors_only=over,
                              min_move_gb=cfg.min_move_gb, max_split=cfg.max_split)
    if moves:
        plan = MigrationPlan(moves, splits, [], [], kind="scale-out", stage=2,
                             note=f"repartition hot data of {over}")
        return _with_costs(plan, view, cfg, profile)
    if len(active) < cfg.max_nodes and _standby(cluster):
        return _scale_out_to(cluster, len(active) + 1, view, cfg, profile,
                             "balanced but overloaded; adding a node")
    return MigrationPlan(kind="scale-out", stage=3, note="saturated")


def plan_scale_in(
    cluster: Cluster,
    violations: Sequence[Violation],
    view: LoadView,
    cfg: ControllerConfig,
    profile: PowerProfile = PowerProfile(),
    floor_nodes: int = 1,
) -> MigrationPlan:
    """Drain underloaded nodes into the remaining ones and power them off.

    The remaining nodes must stay under the CPU upper bound after taking
    over the load; otherwise the plan is deferred (returned empty).  The
    master is never drained.
    """
    active = cluster.active_ids()
    if len(active) <= 1:
        return MigrationPlan(kind="scale-in", note="single node")
    under = [v.node for v in violations if v.kind == "underload" and v.node != cluster.master
             and v.node in active]
    if not under:
        return MigrationPlan(kind="scale-in", note="no drainable node")
    upper = cfg.thresholds.cpu_upper
    measured = sum(view.util.get(n, 0.0) for n in active) * cfg.node_capacity
    demand = max(measured, view.demand)
    keep = max(floor_nodes, cfg.min_nodes, 1)
    while keep < len(active) and demand / (keep * cfg.node_capacity) >= upper:
        keep += 1
    drop = min(len(active) - keep, len(under))
    if drop <= 0:
        return MigrationPlan(kind="scale-in", note="deferred: remaining nodes would exceed upper bound")
    victims = sorted(under, key=lambda n: (cluster.owned_gb(n), -n))[:drop]
    remaining = [n for n in active if n not in victims]
    splits, moves = rebalance(cluster, remaining, view.hotness, donors_only=victims,
                              min_move_gb=cfg.min_move_gb, max_split=cfg.max_split)
    plan = MigrationPlan(moves, splits, [], sorted(victims), kind="scale-in", stage=0,
                         note=f"drain {sorted(victims)} into {remaining}")
    return _with_costs(plan, view, cfg, profile)


def scale_in_savings(plan: MigrationPlan, view: LoadView, profile: PowerProfile) -> float:
    """Watts saved once the plan's nodes sit in standby."""
    saved = 0.0
    for n in plan.poweroffs:
        u = min(1.0, view.util.get(n, 0.0))
        saved += node_power(profile, PowerState(PowerMode.ACTIVE), u) + profile.disk_w - profile.node_standby_w
    return saved


def forecast_step(
    schedule: WorkloadSchedule,
    forecast: Forecast,
    cluster: Cluster,
    now: float,
    view: LoadView,
    cfg: ControllerConfig,
    demand_of: Callable[[ClientSpec, int], float],
    profile: PowerProfile = PowerProfile(),
) -> MigrationPlan:
    """Proactive scale-out for load announced within the forecast horizon.

    The node count is sized for the heaviest phase starting in
    ``(now, now + horizon]``.  The plan is released once its estimated
    duration (times ``cfg.lead_factor``) would no longer finish before
    that phase starts.
    """
    if forecast.horizon_s <= 0:
        return MigrationPlan(kind="forecast", note="reactive")
    future = [p for p in schedule.phases if now < p.start_s <= now + forecast.horizon_s]
    if not future:
        return MigrationPlan(kind="forecast", note="no announced change")
    active = len(cluster.active_ids())
    needs = [(p, nodes_needed(demand_of(p.client, p.client_count), cfg.node_capacity,
                              cfg.thresholds.cpu_upper, cfg.max_nodes)) for p in future]
    want = max(n for _, n in needs)
    if want <= active:
        return MigrationPlan(kind="forecast", note="capacity sufficient")
    first = next(p for p, n in needs if n > active)
    plan = _scale_out_to(cluster, want, view, cfg, profile,
                         f"prepare {want} nodes for {first.client_count} clients at t={first.start_s:g}")
    plan.kind = "forecast"
    if now + plan.est_duration_s * cfg.lead_factor < first.start_s:
        return MigrationPlan(kind="forecast", note="waiting")
    return plan


def floor_nodes(
    schedule: WorkloadSchedule | None,
    horizon_s: float,
    now: float,
    current: Sequence[tuple[ClientSpec, int]],
    demand_of: Callable[[ClientSpec, int], float],
    cfg: ControllerConfig,
) -> int:
    """Nodes needed for the heaviest load known for ``[now, now + horizon_s]``."""
    loads = [sum(demand_of(spec, n) for spec, n in current)]
    if schedule is not None and horizon_s > 0:
        loads += [demand_of(p.client, p.client_count)
                  for p in schedule.phases if now < p.start_s <= now + horizon_s]
    return nodes_needed(max(loads), cfg.node_capacity, cfg.thresholds.cpu_upper, cfg.max_nodes)


@dataclass
class Decision:
    plan: MigrationPlan | None = None
    abort: bool = False
    actions: list[tuple[str, str]] = field(default_factory=list)


class Controller:
    """Stateful decision maker invoked once per controller tick."""

    def __init__(
        self,
        cfg: ControllerConfig,
        profile: PowerProfile,
        demand_of: Callable[[ClientSpec, int], float],
        schedule: WorkloadSchedule | None = None,
    ):
        self.cfg = cfg
        self.profile = profile
        self.demand_of = demand_of
        self.schedule = schedule
        self.history: dict[int, deque] = defaultdict(lambda: deque(maxlen=SMOOTHING_WINDOWS))
        self.offload_tried_at: float | None = None
        self.quiet_until = 0.0
        self.last_saturation = -math.inf

    def observe(self, snapshots: Iterable[UtilizationSnapshot]) -> None:
        seen = set()
        for s in snapshots:
            self.history[s.node_id].append(s)
            seen.add(s.node_id)
        for node in list(self.history):
            if node not in seen:
                del self.history[node]

    def reset_history(self) -> None:
        self.history.clear()

    def view(self, cluster: Cluster, current: Sequence[tuple[ClientSpec, int]]) -> LoadView:
        smoothed = smooth([s for h in self.history.values() for s in h])
        util = {n: u["cpu"] for n, u in smoothed.items()}
        hot: dict[int, float] = {}
        for h in self.history.values():
            for s in h:
                for pid, rec in s.partitions.items():
                    hot[pid] = hot.get(pid, 0.0) + rec.cpu_cycles
        demand = sum(self.demand_of(spec, n) for spec, n in current)
        return LoadView(util, demand, hot)

    def decide(
        self,
        now: float,
        cluster: Cluster,
        current: Sequence[tuple[ClientSpec, int]],
        running: MigrationPlan | None,
    ) -> Decision:
        cfg = self.cfg
        full = [h for h in self.history.values() if len(h) >= SMOOTHING_WINDOWS]
        snaps = [s for h in full for s in h]
        violations = detect(snaps, cfg.thresholds)
        overloaded = any(v.kind == "overload" for v in violations)

        if running is not None:
            if overloaded and running.kind == "scale-in" and running.poweroffs:
                return Decision(abort=True, actions=[("abort", "overload during scale-in")])
            return Decision()
        if now < self.quiet_until:
            return Decision()

        view = self.view(cluster, current)
        horizon = cfg.forecast.horizon_s
        if horizon > 0 and self.schedule is not None:
            plan = forecast_step(self.schedule, cfg.forecast, cluster, now, view, cfg,
                                 self.demand_of, self.profile)
            if not plan.empty:
                return Decision(plan, actions=[("forecast", plan.note)])

        if overloaded:
            tried = self.offload_tried_at is not None and now - self.offload_tried_at < 4 * cfg.window_s * SMOOTHING_WINDOWS
            plan = plan_scale_out(cluster, violations, view, cfg, self.profile, offload_tried=tried)
            if plan.stage == 1:
                self.offload_tried_at = now
                self.quiet_until = now + SMOOTHING_WINDOWS * cfg.window_s
                return Decision(actions=[("offload", plan.note)])
            if plan.empty:
                if now - self.last_saturation >= 60.0:
                    self.last_saturation = now
                    return Decision(actions=[("saturation", plan.note)])
                return Decision()
            actions = [("scale-out", plan.note)]
            if "saturated" in plan.note and now - self.last_saturation >= 60.0:
                self.last_saturation = now
                actions.append(("saturation", "no standby node left"))
            return Decision(plan, actions=actions)

        if any(v.kind == "underload" for v in violations):
            floor = floor_nodes(self.schedule, horizon, now, current, self.demand_of, cfg)
            plan = plan_scale_in(cluster, violations, view, cfg, self.profile, floor)
            if plan.empty:
                return Decision()
            savings = scale_in_savings(plan, view, self.profile)
            if amortization_check(plan, savings, cfg.payback_horizon_s):
                return Decision(plan, actions=[("scale-in", plan.note)])
            self.quiet_until = now + 12 * cfg.window_s
            return Decision(actions=[("reject", f"{plan.note}: {plan.est_energy_j:.0f} J "
                                                f"vs {savings:.1f} W x {cfg.payback_horizon_s:g} s")])
        return Decision()
