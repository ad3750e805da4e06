import pytest

from wattsim.errors import ScenarioError
from wattsim.scenario import bundled, bundled_names, from_dict, load, parse_override, parse_value


def test_defaults_build():
    sc = from_dict({})
    assert sc.mode == "cluster-reactive"
    assert sc.node_count == 10
    assert sc.meter_mode == "average"
    assert sc.initial_nodes is None


def test_unknown_keys_are_all_listed():
    with pytest.raises(ScenarioError) as ei:
        from_dict({"bogus": 1, "node": {"cores": 4}})
    msg = str(ei.value)
    assert "bogus" in msg and "node.cores" in msg


def test_type_error_names_the_field():
    with pytest.raises(ScenarioError) as ei:
        from_dict({"node": {"cpu_threads": "two"}})
    assert ei.value.field == "node.cpu_threads"


def test_bool_is_not_a_number():
    with pytest.raises(ScenarioError) as ei:
        from_dict({"horizon_s": True})
    assert ei.value.field == "horizon_s"


@pytest.mark.parametrize("doc, where", [
    ({"mode": "mainframe"}, "mode"),
    ({"horizon_s": 0.0}, "horizon_s"),
    ({"meter_mode": "peak"}, "meter_mode"),
    ({"initial_nodes": 11}, "initial_nodes"),
    ({"initial_nodes": "many"}, "initial_nodes"),
    ({"workload": {"clients": [-1]}}, "workload.clients"),
    ({"workload": {"clients": []}}, "workload.clients"),
    ({"workload": {"class": "etl"}}, "workload.class"),
    ({"classes": {"olap": {"arrivals": "bursty"}}}, "classes.olap.arrivals"),
    ({"warmup": True, "warmup_s": 3600.0}, "warmup_s"),
    ({"suite": [""]}, "suite"),
    ({"control": {"window_s": 0.0}}, "control.window_s"),
    ({"dataset": {"tables": [{"name": "t", "size_gb": 1.0, "replicated": True}]}}, "dataset.tables"),
])
def test_invariant_violations(doc, where):
    with pytest.raises(ScenarioError) as ei:
        from_dict(doc)
    assert ei.value.field == where


def test_warmup_length_ignored_when_warmup_off():
    assert from_dict({"horizon_s": 10.0, "warmup_s": 60.0}).measure_start == 0.0


def test_malformed_file(tmp_path):
    p = tmp_path / "bad.toml"
    p.write_text("mode = \n[[[")
    with pytest.raises(ScenarioError, match="malformed"):
        load(p)


def test_missing_file(tmp_path):
    with pytest.raises(ScenarioError):
        load(tmp_path / "nope.toml")


def test_unknown_bundled_name():
    with pytest.raises(ScenarioError):
        bundled("no-such-scenario")


@pytest.mark.parametrize("name", bundled_names())
def test_every_bundled_scenario_validates(name):
    sc = load(bundled(name))
    assert sc.name == name
    for member in sc.suite:
        assert not load(bundled(member)).suite


def test_dynamic_trio_differs_only_in_mode():
    a, b, c = (load(bundled(f"fig6-olap-{m}")) for m in ("server", "reactive", "forecast"))
    assert (a.mode, b.mode, c.mode) == ("server", "cluster-reactive", "cluster-forecast")
    assert a.seed == b.seed == c.seed
    assert [p.client_count for p in a.schedule.phases] == [p.client_count for p in c.schedule.phases]


def test_override_parsing():
    assert parse_override("workload.clients=[20, 40]") == ("workload.clients", [20, 40])
    assert parse_override("mode=server") == ("mode", "server")
    assert parse_value("1.5") == 1.5
    assert parse_value("true") is True
    with pytest.raises(ScenarioError):
        parse_override("novalue")


def test_clients_alias_accepts_scalar():
    sc = from_dict({}, {"clients": 40})
    assert [p.client_count for p in sc.schedule.phases] == [40]


def test_override_wins_over_file(tmp_path):
    p = tmp_path / "s.toml"
    p.write_text('mode = "server"\nseed = 3\n')
    sc = load(p, {"seed": 9})
    assert (sc.mode, sc.seed) == ("server", 9)


def test_schedule_csv_relative_to_file(tmp_path):
    (tmp_path / "sched.csv").write_text("start_s,class,client_count\n0,olap,5\n300,olap,7\n")
    p = tmp_path / "s.toml"
    p.write_text('[workload]\nschedule_csv = "sched.csv"\n')
    sc = load(p)
    assert [ph.client_count for ph in sc.schedule.phases] == [5, 7]
