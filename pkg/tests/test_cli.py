import csv
import io
import json
import math

import pytest

from metricbm.cli import EXIT_COMPARE, EXIT_INVARIANT, EXIT_OK, EXIT_USAGE, main
from tests.conftest import SCENARIOS

S = str(SCENARIOS)


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_validate_star(capsys):
    code, out, _ = run(capsys, "validate", "--graph", f"{S}/star3.json")
    assert code == EXIT_OK
    assert "v: Instantaneous w=(1/3,1/3,1/3)" in out


def test_validate_kinds(capsys):
    _, out, _ = run(capsys, "validate", "--graph", f"{S}/interval.json")
    assert out.count("Trap") == 2
    _, out, _ = run(capsys, "validate", "--graph", f"{S}/sticky_kill.json")
    assert "stickiness=" in out and "kill_rate=" in out


def test_exit_codes(capsys):
    assert run(capsys, "validate", "--graph", f"{S}/missing.json")[0] == EXIT_USAGE
    assert run(capsys, "frobnicate")[0] == EXIT_USAGE
    assert run(capsys, "validate")[0] == EXIT_USAGE
    code, _, err = run(capsys, "validate", "--graph", f"{S}/corner.json")
    assert code == EXIT_INVARIANT and err.startswith("invalid:")
    assert run(capsys, "validate", "--graph", f"{S}/tadpole.json")[0] == EXIT_INVARIANT
    assert run(capsys, "validate", "--graph", f"{S}/tadpole.json", "--allow-tadpole")[0] == EXIT_OK


def _resolve_rows(capsys, *argv):
    code, out, _ = run(capsys, "resolve", *argv)
    assert code == EXIT_OK
    head, body = out.split("\n", 1)
    return head, list(csv.DictReader(io.StringIO(body)))


def test_resolve_interval_closed_forms(capsys):
    head, rows = _resolve_rows(capsys, "--graph", f"{S}/interval.json", "--f", "one", "--lambda", "2",
                               "--points", "5")
    assert head.startswith("# lambda=2 ") and "retries=0" in head
    assert len(rows) == 5
    # nothing is killed, so a constant integrand gives 1/lambda
    assert all(float(r["u"]) == pytest.approx(0.5, abs=1e-12) for r in rows)
    _, rows = _resolve_rows(capsys, "--graph", f"{S}/interval.json", "--f", "sin:i", "--lambda", "2",
                            "--points", "9")
    for r in rows:
        x = float(r["x"])
        assert float(r["u"]) == pytest.approx(math.sin(math.pi * x) / (2 + math.pi**2 / 2), abs=1e-10)


def test_resolve_table_format(capsys):
    code, out, _ = run(capsys, "resolve", "--graph", f"{S}/star3.json", "--format", "table", "--points", "3")
    assert code == EXIT_OK
    assert out.splitlines()[1].split()[:3] == ["edge", "x", "u"]


def test_simulate_rows_and_events(capsys, tmp_path):
    ev = tmp_path / "ev.csv"
    code, out, _ = run(capsys, "simulate", "--graph", f"{S}/elastic2.json", "--start", "e1:0.3", "--f", "exp",
                       "--paths", "500", "--delta", "0.02", "--horizon", "5", "--events", str(ev),
                       "--event-paths", "2")
    assert code == EXIT_OK
    names = [r["estimator"] for r in csv.DictReader(io.StringIO(out))]
    assert names == ["resolvent[exp]", "killing_transform", "hitting_transform[v]", "censored_fraction",
                     "local_time[v]"]
    events = list(csv.DictReader(ev.open()))
    assert {r["path"] for r in events} == {"0", "1"}
    assert events[0]["edge"] == "0" and float(events[0]["x"]) == pytest.approx(0.3)
    for r in events:
        assert (r["vertex"] != "") == (r["edge"] == "-1")


def test_simulate_is_worker_independent(capsys):
    args = ["simulate", "--graph", f"{S}/star3.json", "--start", "e2:0.5", "--paths", "900", "--delta", "0.02"]
    a = run(capsys, *args)[1]
    b = run(capsys, *args, "--workers", "3")[1]
    assert a == b


def test_simulate_bad_start(capsys):
    code, _, err = run(capsys, "simulate", "--graph", f"{S}/star3.json", "--start", "q:1")
    assert code == EXIT_USAGE and "unknown edge" in err


def test_compare_exit_codes(capsys):
    assert run(capsys, "compare", "--scenario", f"{S}/empty.json")[0] == EXIT_OK
    code, out, _ = run(capsys, "compare", "--scenario", f"{S}/killing_swapped.json", "--paths", "4000")
    assert code == EXIT_COMPARE and "FAIL" in out
    code, out, _ = run(capsys, "compare", "--scenario", f"{S}/killing_control.json", "--paths", "4000",
                       "--format", "table")
    assert code == EXIT_OK and "paths=4000" in out


def test_detscan_grid(capsys):
    code, out, _ = run(capsys, "detscan", "--graph", f"{S}/star3.json", "--re-n", "3", "--im-n", "2",
                       "--re-min", "1", "--re-max", "2", "--im-min", "0", "--im-max", "0")
    assert code == EXIT_OK
    rows = list(csv.DictReader(io.StringIO(out)))
    assert len(rows) == 6
    at_one = next(r for r in rows if float(r["kappa_re"]) == 1.0)
    assert float(at_one["abs_det"]) == pytest.approx(1.0)


def test_glue_two_halves(capsys, tmp_path):
    out_path = tmp_path / "joined.json"
    code, out, _ = run(capsys, "glue", "--graph1", f"{S}/half1.json", "--graph2", f"{S}/half2.json",
                       "--pair", "a:b:1.5:1:m", "--out", str(out_path))
    assert code == EXIT_OK
    assert out.count("shadow") == 2
    doc = json.loads(out_path.read_text())
    assert doc["internal"] == [{"id": "m", "from": "u", "to": "w", "length": 1.5}]
    assert doc["external"] == []
    assert run(capsys, "validate", "--graph", str(out_path))[0] == EXIT_OK


def test_glue_bad_pair(capsys):
    code, _, err = run(capsys, "glue", "--graph1", f"{S}/half1.json", "--graph2", f"{S}/half2.json",
                       "--pair", "a:b:1")
    assert code == EXIT_USAGE
    code, _, err = run(capsys, "glue", "--graph1", f"{S}/half1.json", "--graph2", f"{S}/half2.json",
                       "--pair", "zz:b:1:1")
    assert code in (EXIT_USAGE, EXIT_INVARIANT)
