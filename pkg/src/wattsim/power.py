"""Power draw of wimpy nodes, the brawny server and the cluster switch.

Power is linear in CPU utilization between the idle and peak figures of
each device.  Energy is obtained by trapezoidal integration of metered
samples.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, fields
from typing import Iterable, Sequence

import numpy as np

from .errors import DomainError, InputError


@dataclass(frozen=True)
class PowerProfile:
    """Watt figures for every powered component.

    Defaults are the measured figures of the Atom-class nodes, their
    Gigabit switch and the dual-Xeon server.
    """

    node_active_min_w: float = 22.0
    node_active_max_w: float = 26.0
    node_standby_w: float = 2.5
    switch_w: float = 20.0
    server_idle_w: float = 200.0
    server_peak_w: float = 430.0
    disk_w: float = 2.0

    def __post_init__(self):
        for f in fields(self):
            value = getattr(self, f.name)
            if not math.isfinite(value) or value < 0:
                raise DomainError(f"{f.name} must be finite and non-negative, got {value!r}")
        if not 0 < self.node_standby_w < self.node_active_min_w <= self.node_active_max_w:
            raise DomainError("need 0 < node_standby_w < node_active_min_w <= node_active_max_w")
        if not self.server_idle_w < self.server_peak_w:
            raise DomainError("need server_idle_w < server_peak_w")


class PowerMode(enum.Enum):
    OFF = "off"
    STANDBY = "standby"
    BOOTING = "booting"
    ACTIVE = "active"
    SHUTTING_DOWN = "shutting_down"


_ALLOWED = {
    PowerMode.OFF: {PowerMode.STANDBY},
    PowerMode.STANDBY: {PowerMode.OFF, PowerMode.BOOTING},
    PowerMode.BOOTING: {PowerMode.ACTIVE},
    PowerMode.ACTIVE: {PowerMode.SHUTTING_DOWN},
    PowerMode.SHUTTING_DOWN: {PowerMode.STANDBY},
}


@dataclass(frozen=True)
class PowerState:
    """Power state of a node; ``remaining`` counts down Booting/ShuttingDown."""

    mode: PowerMode
    remaining: float = 0.0

    def __post_init__(self):
        if self.remaining < 0:
            raise DomainError("remaining transition time must be >= 0")

    def to(self, mode: PowerMode, remaining: float = 0.0) -> "PowerState":
        """Return the successor state, refusing illegal transitions."""
        if mode not in _ALLOWED[self.mode]:
            raise DomainError(f"illegal power transition {self.mode.value} -> {mode.value}")
        return PowerState(mode, remaining)

    @property
    def serving(self) -> bool:
        return self.mode is PowerMode.ACTIVE


OFF = PowerState(PowerMode.OFF)
STANDBY = PowerState(PowerMode.STANDBY)
ACTIVE = PowerState(PowerMode.ACTIVE)


def _check_fraction(name: str, value: float) -> None:
    if not 0.0 <= value <= 1.0:
        raise DomainError(f"{name} must lie in [0, 1], got {value!r}")


def node_power(profile: PowerProfile, state: PowerState, cpu_util: float) -> float:
    """Instantaneous draw of one wimpy node, excluding its drives."""
    _check_fraction("cpu_util", cpu_util)
    mode = state.mode
    if mode is PowerMode.OFF:
        return 0.0
    if mode is PowerMode.STANDBY:
        return profile.node_standby_w
    if mode is not PowerMode.ACTIVE:
        cpu_util = 0.0
    return profile.node_active_min_w + cpu_util * (profile.node_active_max_w - profile.node_active_min_w)


def server_power(profile: PowerProfile, util: float) -> float:
    _check_fraction("util", util)
    return profile.server_idle_w + util * (profile.server_peak_w - profile.server_idle_w)


def cluster_power(
    profile: PowerProfile,
    nodes: Sequence[tuple[PowerState, float]],
    disks: int = 0,
) -> float:
    """Switch plus every node, plus ``disks`` active drives.

    Args:
        profile: watt figures.
        nodes: ``(state, cpu_util)`` per node.
        disks: number of drives attached to Active nodes.
    """
    if len(nodes) == 0:
        raise InputError("cluster_power needs at least one node")
    if disks < 0:
        raise DomainError("disks must be >= 0")
    total = profile.switch_w + disks * profile.disk_w
    for state, util in nodes:
        total += node_power(profile, state, util)
    return total


def integrate_energy(samples: Iterable[tuple[float, float]]) -> float:
    """Trapezoidal integral of ``(t_s, watts)`` samples, in joules."""
    arr = np.asarray(list(samples) if not isinstance(samples, np.ndarray) else samples, dtype=float)
    if arr.ndim != 2 or arr.shape[0] < 2 or arr.shape[1] != 2:
        raise InputError("need at least two (timestamp, watts) samples")
    t, w = arr[:, 0], arr[:, 1]
    dt = np.diff(t)
    if np.any(dt <= 0):
        raise InputError("timestamps must be strictly increasing")
    return float(np.sum(0.5 * (w[1:] + w[:-1]) * dt))
