"""Discrete-event simulator for energy-proportional database clusters.

Compares a cluster of low-power nodes, scaled elastically by a reactive or
forecasting controller, against a single high-end server.
"""

from .controller import Controller, ControllerConfig, Thresholds, estimate_migration
from .cost import Calibration, plan_query
from .engine import Simulation, run
from .errors import (ConfigurationError, DomainError, InputError, PlacementError, ProtocolError,
                     ScenarioError, UnavailableError, WattsimError)
from .power import PowerMode, PowerProfile, PowerState, cluster_power, integrate_energy, node_power, server_power
from .report import hinge_knee, jump_knee, run_scenario, sign_changes, sweep
from .scenario import Scenario, bundled, bundled_names, from_dict, load
from .trace import SimTrace, energy_per_query, summarize, write_summary, write_trace
from .workload import ClientSpec, Phase, QueryClass, WorkloadSchedule

__version__ = "0.1.0"
