"""Scenario files: TOML documents merged over built-in defaults and validated.

A scenario names the system under test (mode), its hardware, dataset,
query classes, workload schedule and controller settings.  Every key in a
file must exist in the defaults; unknown keys are reported together.
"""

from __future__ import annotations

import copy
import dataclasses
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

import tomli

from .controller import Thresholds
from .cost import Calibration
from .errors import DomainError, ScenarioError
from .power import PowerProfile
from .workload import OLAP, OLTP, ClientSpec, Phase, QueryClass, WorkloadSchedule

SCHEMA_VERSION = 1
MODES = ("server", "cluster-reactive", "cluster-forecast")


@dataclass(frozen=True)
class Hardware:
    cpu_threads: int
    cpu_capacity: float
    mem_capacity_gb: float
    n_disks: int
    disk_capacity_gb: float
    disk_bandwidth_mbs: float
    disk_iops: float
    net_bandwidth_mbps: float

    def node_kwargs(self) -> dict:
        return dict(
            cpu_threads=self.cpu_threads,
            cpu_capacity=self.cpu_capacity,
            mem_capacity_gb=self.mem_capacity_gb,
            net_bandwidth_mbps=self.net_bandwidth_mbps,
            n_disks=self.n_disks,
            disk=dict(capacity_gb=self.disk_capacity_gb, bandwidth_mbs=self.disk_bandwidth_mbs,
                      iops_capacity=self.disk_iops),
        )


@dataclass(frozen=True)
class TableSpec:
    name: str
    size_gb: float
    replicated: bool = False


@dataclass(frozen=True)
class ControlSettings:
    window_s: float = 5.0
    boot_s: float = 10.0
    shutdown_s: float = 10.0
    migration_mbs: float = 102.4
    bandwidth_floor: float = 0.5
    migration_cpu: float = 0.2
    payback_horizon_s: float = 1800.0
    lead_factor: float = 1.25
    forecast_horizon_s: float = 1800.0
    min_move_gb: float = 0.5
    max_split: int = 8


@dataclass
class Scenario:
    name: str
    mode: str
    seed: int
    horizon_s: float
    warmup: bool
    warmup_s: float
    meter_hz: float
    meter_mode: str
    controller: bool
    initial_nodes: int | None
    client_weight: int
    power: PowerProfile
    node: Hardware
    node_count: int
    server: Hardware
    tables: tuple[TableSpec, ...]
    partition_gb: float
    classes: dict[str, QueryClass]
    deadlines: dict[str, float]
    schedule: WorkloadSchedule
    calibration: Calibration
    thresholds: Thresholds
    control: ControlSettings
    suite: tuple[str, ...] = ()
    raw: dict = field(default_factory=dict, repr=False)

    @property
    def is_server(self) -> bool:
        return self.mode == "server"

    @property
    def forecast_horizon_s(self) -> float:
        return self.control.forecast_horizon_s if self.mode == "cluster-forecast" else 0.0

    @property
    def measure_start(self) -> float:
        return self.warmup_s if self.warmup else 0.0


# -- defaults ----------------------------------------------------------------

TPCH_TABLES = [
    {"name": "lineitem", "size_gb": 320.0, "replicated": False},
    {"name": "orders", "size_gb": 75.0, "replicated": False},
    {"name": "partsupp", "size_gb": 40.0, "replicated": False},
    {"name": "part", "size_gb": 12.0, "replicated": False},
    {"name": "customer", "size_gb": 11.0, "replicated": False},
    {"name": "supplier", "size_gb": 1.0, "replicated": False},
    {"name": "nation", "size_gb": 0.001, "replicated": True},
    {"name": "region", "size_gb": 0.001, "replicated": True},
]

TPCC_TABLES = [
    {"name": "stock", "size_gb": 70.0, "replicated": False},
    {"name": "customer", "size_gb": 40.0, "replicated": False},
    {"name": "order_line", "size_gb": 60.0, "replicated": False},
    {"name": "orders", "size_gb": 10.0, "replicated": False},
    {"name": "history", "size_gb": 10.0, "replicated": False},
    {"name": "new_order", "size_gb": 2.0, "replicated": False},
    {"name": "district", "size_gb": 1.0, "replicated": False},
    {"name": "warehouse", "size_gb": 1.0, "replicated": False},
    {"name": "item", "size_gb": 0.01, "replicated": True},
]

CLASS_FIELDS = {
    "kind": "",
    "scan_gb": 0.0,
    "write_fraction": 0.0,
    "blocking_work": 0.0,
    "pipeline_work": 0.0,
    "mem_footprint_gb": 0.0,
    "tables": [],
    "ship_gb": 0.0,
    "result_gb": 0.0,
    "pages": 0,
    "interval_s": 1.0,
    "deadline_s": 1.0,
    "arrivals": "interval",
}


def _plain(dc) -> dict:
    return {f.name: getattr(dc, f.name) for f in dataclasses.fields(dc)}


def defaults() -> dict:
    """The complete default scenario as a nested dict."""
    return {
        "schema_version": SCHEMA_VERSION,
        "name": "scenario",
        "mode": "cluster-reactive",
        "seed": 1,
        "horizon_s": 3600.0,
        "warmup": False,
        "warmup_s": 60.0,
        "meter_hz": 10.0,
        "meter_mode": "average",
        "controller": True,
        "initial_nodes": "auto",
        "client_weight": 1,
        "suite": [],
        "power": _plain(PowerProfile()),
        "node": {
            "count": 10,
            "cpu_threads": 2,
            "cpu_capacity": 1.66,
            "mem_capacity_gb": 2.0,
            "n_disks": 1,
            "disk_capacity_gb": 500.0,
            "disk_bandwidth_mbs": 250.0,
            "disk_iops": 30000.0,
            "net_bandwidth_mbps": 1000.0,
        },
        "server": {
            "cpu_threads": 24,
            "cpu_capacity": 17.6,
            "mem_capacity_gb": 24.0,
            "n_disks": 10,
            "disk_capacity_gb": 500.0,
            "disk_bandwidth_mbs": 250.0,
            "disk_iops": 30000.0,
            "net_bandwidth_mbps": 1000.0,
        },
        "dataset": {"preset": "auto", "partition_gb": 10.0, "tables": []},
        "classes": {
            "olap": {
                "kind": OLAP,
                "scan_gb": 0.05,
                "write_fraction": 0.0,
                "blocking_work": 0.4,
                "pipeline_work": 0.6,
                "mem_footprint_gb": 0.0115,
                "tables": [],
                "ship_gb": 0.02,
                "result_gb": 0.0001,
                "pages": 0,
                "interval_s": 20.0,
                "deadline_s": 20.0,
                "arrivals": "interval",
            },
            "oltp": {
                "kind": OLTP,
                "scan_gb": 0.0000328,
                "write_fraction": 0.6,
                "blocking_work": 0.0,
                "pipeline_work": 0.001,
                "mem_footprint_gb": 0.0001,
                "tables": [],
                "ship_gb": 0.0,
                "result_gb": 0.0,
                "pages": 4,
                "interval_s": 0.04,
                "deadline_s": 0.1,
                "arrivals": "interval",
            },
        },
        "workload": {"class": "olap", "phase_length_s": 300.0, "clients": [20], "schedule_csv": ""},
        "calibration": _plain(Calibration()),
        "thresholds": _plain(Thresholds()),
        "control": _plain(ControlSettings()),
    }


# -- merging and type checks -----------------------------------------------


def _type_ok(default: Any, value: Any) -> bool:
    if isinstance(default, bool):
        return isinstance(value, bool)
    if isinstance(default, int):
        return isinstance(value, int) and not isinstance(value, bool)
    if isinstance(default, float):
        return isinstance(value, (int, float)) and not isinstance(value, bool)
    if isinstance(default, str):
        return isinstance(value, str)
    if isinstance(default, list):
        return isinstance(value, list)
    return True


def _merge(base: dict, update: Mapping, path: str, unknown: list[str], errors: list[ScenarioError]) -> None:
    for key, value in update.items():
        here = f"{path}.{key}" if path else key
        if path == "classes":
            template = base.get(key, CLASS_FIELDS)
            if not isinstance(value, Mapping):
                errors.append(ScenarioError("must be a table", here))
                continue
            merged = copy.deepcopy(template)
            _merge(merged, value, here, unknown, errors)
            base[key] = merged
            continue
        if key not in base:
            unknown.append(here)
            continue
        if here == "initial_nodes":
            if value != "auto" and not (isinstance(value, int) and not isinstance(value, bool)):
                errors.append(ScenarioError("must be an integer or \"auto\"", here))
                continue
            base[key] = value
            continue
        if isinstance(base[key], dict):
            if not isinstance(value, Mapping):
                errors.append(ScenarioError("must be a table", here))
                continue
            _merge(base[key], value, here, unknown, errors)
            continue
        if not _type_ok(base[key], value):
            errors.append(ScenarioError(f"expected {type(base[key]).__name__}, got {value!r}", here))
            continue
        base[key] = float(value) if isinstance(base[key], float) else value


def set_dotted(doc: dict, key: str, value: Any) -> None:
    """Assign ``value`` at a dotted path, creating tables as needed."""
    if key == "clients":
        key = "workload.clients"
        value = value if isinstance(value, list) else [value]
    parts = key.split(".")
    cur = doc
    for p in parts[:-1]:
        cur = cur.setdefault(p, {})
        if not isinstance(cur, dict):
            raise ScenarioError("is not a table", p)
    cur[parts[-1]] = value


def parse_value(text: str) -> Any:
    """TOML scalar or array syntax; anything else is taken as a bare string."""
    try:
        return tomli.loads(f"v = {text}")["v"]
    except tomli.TOMLDecodeError:
        return text


def parse_override(item: str) -> tuple[str, Any]:
    key, sep, value = item.partition("=")
    if not sep or not key.strip():
        raise ScenarioError(f"override {item!r} is not KEY=VALUE", "override")
    return key.strip(), parse_value(value.strip())


# -- building ------------------------------------------------------------------


def _check(cond: bool, message: str, where: str) -> None:
    if not cond:
        raise ScenarioError(message, where)


def _build(doc: dict, base_dir: Path | None) -> Scenario:
    _check(doc["schema_version"] == SCHEMA_VERSION, f"unsupported version (expected {SCHEMA_VERSION})",
           "schema_version")
    _check(doc["mode"] in MODES, f"must be one of {', '.join(MODES)}", "mode")
    _check(doc["horizon_s"] > 0 and math.isfinite(doc["horizon_s"]), "must be > 0", "horizon_s")
    _check(0 < doc["meter_hz"] <= 100, "must lie in (0, 100]", "meter_hz")
    _check(doc["meter_mode"] in ("average", "instant"), "must be average or instant", "meter_mode")
    _check(doc["client_weight"] >= 1, "must be >= 1", "client_weight")
    _check(doc["warmup_s"] >= 0 and (not doc["warmup"] or doc["warmup_s"] < doc["horizon_s"]),
           "must lie in [0, horizon_s)", "warmup_s")
    _check(all(isinstance(s, str) and s for s in doc["suite"]), "must be a list of scenario names", "suite")

    def section(name, cls):
        try:
            return cls(**doc[name])
        except DomainError as e:
            raise ScenarioError(str(e), name) from None

    power = section("power", PowerProfile)
    calibration = section("calibration", Calibration)
    thresholds = section("thresholds", Thresholds)
    control = ControlSettings(**doc["control"])
    for f in dataclasses.fields(control):
        _check(getattr(control, f.name) >= 0, "must be >= 0", f"control.{f.name}")
    _check(control.window_s > 0, "must be > 0", "control.window_s")
    _check(control.migration_mbs > 0, "must be > 0", "control.migration_mbs")
    _check(0 < control.bandwidth_floor <= 1, "must lie in (0, 1]", "control.bandwidth_floor")
    _check(control.migration_cpu < 1, "must be < 1", "control.migration_cpu")
    _check(control.max_split >= 2, "must be >= 2", "control.max_split")

    node_doc = dict(doc["node"])
    count = node_doc.pop("count")
    _check(count >= 1, "must be >= 1", "node.count")
    hw = {}
    for name, d in (("node", node_doc), ("server", doc["server"])):
        h = Hardware(**d)
        _check(h.cpu_threads >= 1, "must be >= 1", f"{name}.cpu_threads")
        _check(h.n_disks >= 1, "must be >= 1", f"{name}.n_disks")
        for f in ("cpu_capacity", "mem_capacity_gb", "disk_capacity_gb", "disk_bandwidth_mbs",
                  "disk_iops", "net_bandwidth_mbps"):
            _check(getattr(h, f) > 0, "must be > 0", f"{name}.{f}")
        hw[name] = h
    initial = doc["initial_nodes"]
    if initial != "auto":
        _check(1 <= initial <= count, f"must lie in [1, {count}] or be \"auto\"", "initial_nodes")

    classes: dict[str, QueryClass] = {}
    intervals: dict[str, float] = {}
    deadlines: dict[str, float] = {}
    for name, c in doc["classes"].items():
        where = f"classes.{name}"
        _check(c["kind"] in (OLAP, OLTP), "kind must be OLAP or OLTP", f"{where}.kind")
        _check(c["interval_s"] > 0, "must be > 0", f"{where}.interval_s")
        _check(c["deadline_s"] > 0, "must be > 0", f"{where}.deadline_s")
        _check(c["arrivals"] in ("interval", "poisson"), "must be interval or poisson", f"{where}.arrivals")
        _check(all(isinstance(t, str) for t in c["tables"]), "must be a list of names", f"{where}.tables")
        kw = {k: v for k, v in c.items() if k not in ("interval_s", "deadline_s", "arrivals")}
        kw["tables"] = tuple(kw["tables"])
        try:
            classes[name] = QueryClass(name=name, **kw)
        except DomainError as e:
            raise ScenarioError(str(e), where) from None
        intervals[name] = c["interval_s"]
        deadlines[name] = c["deadline_s"]

    wl = doc["workload"]
    cls_name = wl["class"]
    _check(cls_name in classes, f"unknown query class {cls_name!r}", "workload.class")
    _check(wl["phase_length_s"] > 0, "must be > 0", "workload.phase_length_s")
    specs = {n: ClientSpec(classes[n], intervals[n], doc["classes"][n]["arrivals"]) for n in classes}
    if wl["schedule_csv"]:
        path = Path(wl["schedule_csv"])
        if base_dir is not None and not path.is_absolute():
            path = base_dir / path
        try:
            schedule = WorkloadSchedule.from_csv(path.read_text(), specs, wl["phase_length_s"])
        except (OSError, ValueError, KeyError) as e:
            raise ScenarioError(str(e), "workload.schedule_csv") from None
    else:
        counts = wl["clients"]
        _check(len(counts) >= 1, "needs at least one phase", "workload.clients")
        _check(all(isinstance(n, int) and not isinstance(n, bool) and n >= 0 for n in counts),
               "must be non-negative integers", "workload.clients")
        spec = specs[cls_name]
        schedule = WorkloadSchedule(
            tuple(Phase(i * wl["phase_length_s"], n, spec) for i, n in enumerate(counts)),
            wl["phase_length_s"])

    ds = doc["dataset"]
    _check(ds["preset"] in ("auto", "tpch", "tpcc", "none"), "must be auto, tpch, tpcc or none",
           "dataset.preset")
    _check(ds["partition_gb"] > 0, "must be > 0", "dataset.partition_gb")
    if ds["tables"]:
        raw_tables = ds["tables"]
    else:
        preset = ds["preset"]
        if preset == "auto":
            preset = "tpch" if classes[cls_name].kind == OLAP else "tpcc"
        raw_tables = {"tpch": TPCH_TABLES, "tpcc": TPCC_TABLES, "none": []}[preset]
    tables = []
    for i, t in enumerate(raw_tables):
        where = f"dataset.tables[{i}]"
        _check(isinstance(t, Mapping), "must be a table", where)
        extra = set(t) - {"name", "size_gb", "replicated"}
        _check(not extra, f"unknown keys {sorted(extra)}", where)
        _check(isinstance(t.get("name"), str), "needs a name", f"{where}.name")
        size = t.get("size_gb")
        _check(isinstance(size, (int, float)) and not isinstance(size, bool) and size > 0,
               "must be > 0", f"{where}.size_gb")
        tables.append(TableSpec(t["name"], float(size), bool(t.get("replicated", False))))
    _check(len({t.name for t in tables}) == len(tables), "table names must be unique", "dataset.tables")
    _check(any(not t.replicated for t in tables), "needs at least one partitioned table", "dataset.tables")

    return Scenario(
        name=doc["name"],
        mode=doc["mode"],
        seed=doc["seed"],
        horizon_s=doc["horizon_s"],
        warmup=doc["warmup"],
        warmup_s=doc["warmup_s"],
        meter_hz=doc["meter_hz"],
        meter_mode=doc["meter_mode"],
        controller=doc["controller"],
        initial_nodes=None if initial == "auto" else initial,
        client_weight=doc["client_weight"],
        power=power,
        node=hw["node"],
        node_count=count,
        server=hw["server"],
        tables=tuple(tables),
        partition_gb=ds["partition_gb"],
        classes=classes,
        deadlines=deadlines,
        schedule=schedule,
        calibration=calibration,
        thresholds=thresholds,
        control=control,
        suite=tuple(doc["suite"]),
        raw=doc,
    )


def from_dict(data: Mapping, overrides: Mapping[str, Any] | None = None, base_dir: Path | None = None) -> Scenario:
    """Validate ``data`` (plus dotted ``overrides``) against the defaults.

    Raises:
        ScenarioError: unknown keys, wrong types or violated invariants.
    """
    data = copy.deepcopy(dict(data))
    for key, value in (overrides or {}).items():
        set_dotted(data, key, value)
    doc = defaults()
    unknown: list[str] = []
    errors: list[ScenarioError] = []
    _merge(doc, data, "", unknown, errors)
    if unknown:
        raise ScenarioError(f"unknown keys: {', '.join(sorted(unknown))}", "scenario")
    if errors:
        raise errors[0]
    return _build(doc, base_dir)


def load(path: str | Path, overrides: Mapping[str, Any] | None = None) -> Scenario:
    path = Path(path)
    try:
        data = tomli.loads(path.read_text())
    except OSError as e:
        raise ScenarioError(f"cannot read scenario: {e.strerror}", str(path)) from None
    except tomli.TOMLDecodeError as e:
        raise ScenarioError(f"malformed file: {e}", str(path)) from None
    return from_dict(data, overrides, path.parent)


def bundled_dir() -> Path:
    return Path(__file__).parent / "scenarios"


def bundled(name: str) -> Path:
    """Path of a bundled scenario by name (with or without ``.toml``)."""
    p = bundled_dir() / (name if name.endswith(".toml") else f"{name}.toml")
    if not p.exists():
        raise ScenarioError(f"no bundled scenario named {name!r}", "scenario")
    return p


def bundled_names() -> list[str]:
    return sorted(p.stem for p in bundled_dir().glob("*.toml"))
