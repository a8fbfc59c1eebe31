import pytest

from metricbm.compare import ComparisonReport, ComparisonRow, run_scenario
from tests.conftest import SCENARIOS


def test_row_pass_rule():
    assert ComparisonRow("r", 1.0, 1.05, 0.02, 0.0).passed
    assert not ComparisonRow("r", 1.0, 1.07, 0.02, 0.0).passed
    assert ComparisonRow("r", 1.0, 1.07, 0.02, 0.02).passed
    assert ComparisonRow("r", 1.0, 1.0, 0.0, 0.0).z == 0.0


def test_empty_scenario_passes():
    rep = run_scenario(SCENARIOS / "empty.json")
    assert rep.passed and rep.rows == []
    assert rep.to_csv().splitlines()[-1] == ",".join(ComparisonReport.HEADER)


def test_control_passes_and_swapped_data_fails():
    over = {"paths": 8000}
    good = run_scenario(SCENARIOS / "killing_control.json", over)
    bad = run_scenario(SCENARIOS / "killing_swapped.json", over)
    assert good.passed
    assert not bad.passed and abs(bad.rows[0].z) > 10


def test_rows_of_every_kind():
    sc = {
        "graph": {"vertices": ["v"], "external": [{"id": "e1", "at": "v"}, {"id": "e2", "at": "v"}],
                  "wentzell": [{"vertex": "v", "a": 0.2, "c": 0.1, "b": {"e1": 0.3, "e2": 0.3}}]},
        "mc": {"delta": 0.01, "paths": 3000, "horizon": 20, "seed": 8},
        "rows": [
            {"kind": "hitting", "start": {"edge": "e1", "x": 0.5}, "lambda": 1, "vertex": "v"},
            {"kind": "resolvent", "start": {"edge": "e2", "x": 0.2}, "lambda": 1, "f": "exp"},
            {"kind": "killing", "start": {"vertex": "v"}, "lambda": 1},
            {"kind": "exit", "vertex": "v", "radius": 0.5, "edge": "e1"},
        ],
    }
    rep = run_scenario(sc)
    assert len(rep.rows) == 4
    assert all(r.passed for r in rep.rows[:3]), rep.to_table()
    with pytest.raises(ValueError):
        run_scenario({**sc, "rows": [{"kind": "bogus"}]})
