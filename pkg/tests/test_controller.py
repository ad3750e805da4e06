import pytest

from tests import oracles
from wattsim.cluster import Cluster, UtilizationSnapshot, make_nodes
from wattsim.controller import (Controller, ControllerConfig, Forecast, LoadView, MigrationPlan, Move,
                                Overload, Thresholds, Underload, amortization_check, detect,
                                effective_bandwidth, estimate_migration, forecast_step, plan_scale_in,
                                plan_scale_out, rebalance)
from wattsim.errors import ConfigurationError, DomainError
from wattsim.power import PowerProfile
from wattsim.workload import OLAP, ClientSpec, QueryClass, stepped_schedule

T = Thresholds()
CFG = ControllerConfig()


def snap(node, cpu=0.0, iops=0.0, mem=0.0):
    return UtilizationSnapshot(node, cpu, mem * 2.0, mem, 0.0, (iops,), {})


def cluster(active, standby=0, gb_per_node=40.0, part_gb=10.0):
    c = Cluster(make_nodes(active + standby, active=active))
    for n in range(active):
        for _ in range(int(gb_per_node / part_gb)):
            c.add_partition("t", part_gb, n)
    return c


def test_detect_examples():
    assert detect([snap(0, cpu=0.85)] * 3, T) == [Overload(0, "cpu")]
    assert detect([snap(0, cpu=0.25, iops=0.1, mem=0.2)] * 3, T) == [Underload(0)]
    assert detect([snap(0, cpu=0.5)] * 3, T) == []


def test_detect_smooths_over_three_windows():
    spiky = [snap(0, cpu=0.1), snap(0, cpu=0.5), snap(0, cpu=0.5), snap(0, cpu=1.0)]
    # mean of the last three is 0.667: no overload despite the 100 % window
    assert detect(spiky, T) == []


@pytest.mark.parametrize("gb,watts,bw,out", [
    (1.0, 25.0, 102.4, (10.0, 250.0)),
    (100.0, 25.0, 102.4, (1000.0, 25000.0)),
    (0.0, 25.0, 102.4, (0.0, 0.0)),
])
def test_estimate_migration(gb, watts, bw, out):
    assert estimate_migration(gb, watts, bw) == pytest.approx(out)
    assert oracles.migration(gb, watts, bw) == pytest.approx(out)


def test_estimate_migration_exact_constant():
    assert estimate_migration(1.0, 25.0, 102.4) == (10.0, 250.0)


def test_zero_bandwidth_is_a_configuration_error():
    with pytest.raises(ConfigurationError):
        estimate_migration(1.0, 25.0, 0.0)


def test_effective_bandwidth_has_a_floor():
    assert effective_bandwidth(102.4, 0.25) == pytest.approx(76.8)
    assert effective_bandwidth(102.4, 0.9) == pytest.approx(51.2)


def test_overload_with_idle_peer_is_stage_one():
    c = cluster(2)
    plan = plan_scale_out(c, [Overload(0, "cpu")], LoadView({0: 0.9, 1: 0.1}, 1.0), CFG)
    assert plan.stage == 1 and plan.empty


def test_all_nodes_overloaded_powers_on_just_enough():
    c = cluster(2, standby=2)
    view = LoadView({0: 0.9, 1: 0.9})
    plan = plan_scale_out(c, [Overload(0, "cpu"), Overload(1, "cpu")], view, CFG)
    assert plan.powerons == [2]
    demand = 1.8 * CFG.node_capacity
    assert demand / (3 * CFG.node_capacity) <= 0.8
    assert {m.target for m in plan.moves} == {2}
    assert plan.est_duration_s > 0 and plan.est_energy_j > 0


def test_replicated_partitions_are_never_split_or_moved():
    c = cluster(2, gb_per_node=0.0)
    c.add_partition("t", 80.0, 0)
    rep = c.add_partition("nation", 0.001, None, replicated=True)
    plan = plan_scale_out(c, [Overload(0, "cpu")], LoadView({0: 0.9, 1: 0.3}, 1.5), CFG,
                          offload_tried=True)
    assert plan.stage == 2 and plan.moves
    assert rep not in {pid for pid, _ in plan.splits}
    assert rep not in {m.partition for m in plan.moves}


def test_scale_out_requires_an_overload():
    with pytest.raises(DomainError):
        plan_scale_out(cluster(1), [Underload(0)], LoadView({0: 0.1}), CFG)


def test_scale_in_drains_idle_node():
    c = cluster(2)
    plan = plan_scale_in(c, [Underload(1)], LoadView({0: 0.1, 1: 0.0}, 0.1), CFG)
    assert plan.poweroffs == [1]
    assert sorted(m.partition for m in plan.moves) == sorted(c.nodes[1].hosted)
    assert all(m.target == 0 for m in plan.moves)


def test_single_node_cannot_scale_in():
    assert plan_scale_in(cluster(1), [Underload(0)], LoadView({0: 0.0}), CFG).empty


def test_scale_in_that_would_overload_is_deferred():
    c = cluster(2)
    plan = plan_scale_in(c, [Underload(1)], LoadView({0: 0.6, 1: 0.25}), CFG)
    assert plan.empty and "deferred" in plan.note


def test_master_is_never_drained():
    c = cluster(2)
    assert plan_scale_in(c, [Underload(0)], LoadView({0: 0.0, 1: 0.5}), CFG).empty


def test_amortization_examples():
    plan = MigrationPlan([Move(0, 1, 0, 100.0)], poweroffs=[1], est_energy_j=25000.0, kind="scale-in")
    assert amortization_check(plan, 50.0, 1800.0)
    assert not amortization_check(plan, 10.0, 1800.0)
    assert amortization_check(MigrationPlan(), 0.0, 1800.0)


def test_plan_invariants():
    with pytest.raises(DomainError):
        MigrationPlan(powerons=[1], poweroffs=[1])
    with pytest.raises(DomainError):
        MigrationPlan(est_energy_j=-1.0)
    with pytest.raises(DomainError):
        Thresholds(cpu_lower=0.9, cpu_upper=0.8)
    with pytest.raises(DomainError):
        Forecast(-1.0)


def test_rebalance_spreads_and_conserves():
    c = cluster(1, standby=1, gb_per_node=200.0)
    c.nodes[1].power = c.nodes[0].power
    splits, moves = rebalance(c, [0, 1])
    assert sum(m.size_gb for m in moves) == pytest.approx(100.0)


# -- forecasting ------------------------------------------------------------

Q = QueryClass("olap", OLAP, 0.05, 0.0, 0.4, 0.6, 0.01)
SPEC = ClientSpec(Q, 20.0)


def demand(spec, n):
    return 2.0 if n >= 320 else 0.1


def forecast_fixture():
    c = cluster(1, standby=9, gb_per_node=200.0)
    sched = stepped_schedule(SPEC, [20] * 6 + [320] * 2, 300.0)
    cfg = ControllerConfig(forecast=Forecast(1800.0))
    return c, sched, cfg


def test_forecast_plan_is_issued_early_enough():
    c, sched, cfg = forecast_fixture()
    issued = None
    for now in range(0, 1800, 5):
        plan = forecast_step(sched, cfg.forecast, c, float(now), LoadView({0: 0.0}, 0.1), cfg, demand)
        if not plan.empty:
            issued = (now, plan)
            break
    assert issued is not None
    now, plan = issued
    # 100 GB at 102.4 MB/s plus a 10 s boot, scheduled backwards from t=1800
    assert plan.est_duration_s == pytest.approx(1010.0)
    assert plan.powerons == [1]
    assert now <= 800 and now + plan.est_duration_s <= 1800
    assert now == 540  # first 5 s tick with now + 1.25 * 1010 >= 1800


def test_zero_horizon_forecast_is_reactive():
    c, sched, cfg = forecast_fixture()
    plan = forecast_step(sched, Forecast(0.0), c, 1000.0, LoadView({0: 0.05}, 0.1), cfg, demand)
    assert plan.empty


def test_flat_schedule_needs_no_proactive_plan():
    c, _, cfg = forecast_fixture()
    flat = stepped_schedule(SPEC, [20] * 8, 300.0)
    for now in range(0, 2400, 60):
        assert forecast_step(flat, cfg.forecast, c, float(now), LoadView({0: 0.05}, 0.1), cfg, demand).empty


def test_controller_aborts_scale_in_on_overload():
    c = cluster(2)
    ctl = Controller(CFG, PowerProfile(), demand)
    ctl.observe([snap(0, cpu=0.95), snap(1, cpu=0.95)])
    ctl.observe([snap(0, cpu=0.95), snap(1, cpu=0.95)])
    ctl.observe([snap(0, cpu=0.95), snap(1, cpu=0.95)])
    running = MigrationPlan(poweroffs=[1], kind="scale-in")
    assert ctl.decide(100.0, c, [(SPEC, 20)], running).abort
    assert not ctl.decide(100.0, c, [(SPEC, 20)], MigrationPlan(kind="scale-out", powerons=[1])).abort


def test_controller_rejects_unamortized_scale_in():
    c = cluster(2, gb_per_node=200.0)
    ctl = Controller(ControllerConfig(payback_horizon_s=60.0), PowerProfile(), lambda s, n: 0.05)
    for _ in range(3):
        ctl.observe([snap(0, cpu=0.05), snap(1, cpu=0.05)])
    d = ctl.decide(100.0, c, [(SPEC, 1)], None)
    assert d.plan is None and d.actions[0][0] == "reject"
