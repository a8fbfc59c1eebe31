import os
from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

from metricbm.graph import build_graph
from metricbm.wentzell import standard_data, validate_and_normalize

# fixtures hold immutable graphs, so sharing them across examples is safe
settings.register_profile(
    "default", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture]
)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"


@pytest.fixture
def star3():
    return build_graph(["v"], [], [("e1", "v"), ("e2", "v"), ("e3", "v")])


@pytest.fixture
def interval():
    return build_graph(["u", "w"], [("i", "u", "w", 1.0)], [])


@pytest.fixture
def trapped_interval(interval):
    return interval, validate_and_normalize(interval, {"u": (0, [0], 1), "w": (0, [0], 1)})


@pytest.fixture
def mixed_graph():
    """Two vertices, one internal edge, externals on both sides, mixed data."""
    g = build_graph(["p", "q"], [("m", "p", "q", 1.5)], [("x1", "p"), ("x2", "p"), ("y1", "q")])
    data = validate_and_normalize(g, {"p": (0.1, [0.3, 0.2, 0.2], 0.2), "q": (0.0, [0.4, 0.4], 0.2)})
    return g, data


@pytest.fixture
def std(star3):
    return standard_data(star3)


# -- acceptance summary ------------------------------------------------------------


@pytest.fixture
def acceptance(request):
    """Record ``(criterion, passed, detail)``; printed together at the end of the run."""
    log = request.config.__dict__.setdefault("_acceptance_log", {})

    def record(n: int, passed: bool, detail: str) -> bool:
        log[n] = (passed, detail)
        print(f"criterion {n:2d} {'PASS' if passed else 'FAIL'}: {detail}")
        return passed

    return record


def pytest_terminal_summary(terminalreporter, config):
    log = config.__dict__.get("_acceptance_log")
    if not log:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(log):
        passed, detail = log[n]
        terminalreporter.write_line(f"criterion {n:2d} {'PASS' if passed else 'FAIL'}: {detail}")
