import os
import sys

import pytest
from hypothesis import HealthCheck, settings

from wattsim.scenario import from_dict

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("ci", max_examples=200, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


def small(**overrides):
    """A short, cheap scenario; keyword arguments are nested scenario sections."""
    doc = {"horizon_s": 120.0, "controller": False, "workload": {"class": "olap", "clients": [10]}}
    for k, v in overrides.items():
        if isinstance(v, dict) and isinstance(doc.get(k), dict):
            doc[k] = {**doc[k], **v}
        else:
            doc[k] = v
    return from_dict(doc)


@pytest.fixture
def small_scenario():
    return small


def pytest_terminal_summary(terminalreporter):
    acceptance = sys.modules.get("tests.test_acceptance")
    if acceptance is None or not acceptance.VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(acceptance.VERDICTS, key=lambda k: (int(k.rstrip("b")), k)):
        terminalreporter.write_line(acceptance.VERDICTS[key])
