import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats

from metricbm import _kernel as K
from metricbm.graph import CEMETERY, HalfEdge, Interior, Vertex, build_graph
from metricbm.resolvent import EdgeFunction
from metricbm.simulate import (
    CrossoverChain,
    Estimate,
    SimConfig,
    SimulationError,
    Trajectory,
    _record,
    _start,
    compile_inputs,
    exit_edge_frequencies,
    extract_crossovers,
    holding_times,
    mc_hitting_transform,
    mc_killing_transform,
    mc_resolvent,
    run_batch,
    simulate_path,
    vertex_step_probabilities,
)
from metricbm.wentzell import Instantaneous, classify_vertex, standard_data, validate_and_normalize

FAST = SimConfig(delta=0.02, horizon=10.0, seed=5, paths=4000)


def within(est: Estimate, exact: float, allowance: float) -> bool:
    return abs(est.value - exact) <= 3 * est.se + allowance


# -- lattice probabilities ----------------------------------------------------------------


def _inst(a, bs, c):
    g = build_graph(["v"], [], [(f"e{k}", "v") for k in range(len(bs))])
    return classify_vertex(validate_and_normalize(g, {"v": (a, bs, c)}), "v")


def test_standard_step_is_walsh():
    move, stay, kill = vertex_step_probabilities(_inst(0, [0.5, 0.3, 0.2], 0), 0.01)
    assert list(move.values()) == pytest.approx([0.5, 0.3, 0.2])
    assert stay == 0 and kill == 0


def test_sticky_step_never_kills():
    move, stay, kill = vertex_step_probabilities(_inst(0, [1, 1], 0.5), 0.01)
    assert kill == 0 and stay > 0


def test_elastic_step_value():
    _, _, kill = vertex_step_probabilities(_inst(0.5, [0.25, 0.25], 0), 0.01)
    assert kill == pytest.approx(0.01 / 1.01)


@given(a=st.floats(0, 0.5), c=st.just(0.0) | st.floats(0.05, 0.5), bs=st.lists(st.floats(0.01, 1), min_size=1, max_size=4),
       delta=st.floats(1e-4, 0.05))
def test_step_probabilities_sum_to_one(a, c, bs, delta):
    move, stay, kill = vertex_step_probabilities(_inst(a, bs, c), delta)
    assert sum(move.values()) + stay + kill == pytest.approx(1.0, abs=1e-12)
    assert min([stay, kill, *move.values()]) >= 0


def test_step_too_coarse():
    cls = Instantaneous({HalfEdge("e", 0): 1.0}, stickiness=0.001, kill_rate=100.0)
    with pytest.raises(SimulationError):
        vertex_step_probabilities(cls, 0.1)


# -- configuration --------------------------------------------------------------------


def test_config_validation(interval):
    with pytest.raises(SimulationError):
        SimConfig(delta=0)
    with pytest.raises(SimulationError):
        SimConfig(horizon=-1)
    with pytest.raises(SimulationError):
        SimConfig(delta=0.2).check_graph(interval)
    SimConfig(delta=0.125).check_graph(interval)


# -- single paths ----------------------------------------------------------------------


def test_trap_path_is_constant():
    g = build_graph(["v"], [], [("e", "v")])
    data = validate_and_normalize(g, {"v": (0, [0], 1)})
    traj = simulate_path(g, data, Vertex("v"), SimConfig(delta=0.01, horizon=3.0))
    assert all(p == Vertex("v") for p in traj.points())
    assert traj.stop_code == K.TRAPPED and traj.lifetime == math.inf


def _elastic_star():
    g = build_graph(["v"], [], [("e1", "v"), ("e2", "v")])
    return g, validate_and_normalize(g, {"v": (0.3, [0.3, 0.3], 0.1)})


@pytest.mark.parametrize("path", range(20))
def test_path_invariants(path):
    g, data = _elastic_star()
    cfg = SimConfig(delta=0.01, horizon=5.0, seed=3)
    xi = Interior("e1", 0.3)
    traj = simulate_path(g, data, xi, cfg, path=path)
    assert traj.times[0] == 0 and traj.point(0) == xi
    assert np.all(np.diff(traj.times) > 0)
    pts = traj.points()
    if CEMETERY in pts:
        k = pts.index(CEMETERY)
        assert k == len(pts) - 1
        assert isinstance(pts[k - 1], Vertex)
        assert traj.lifetime == pytest.approx(traj.times[k])
    # continuity: each move is a lattice step, a Gaussian step or a vertex contact
    for k in range(1, len(pts)):
        a, b = pts[k - 1], pts[k]
        if isinstance(a, Interior) and isinstance(b, Interior) and a.edge == b.edge:
            dt = traj.times[k] - traj.times[k - 1]
            assert abs(a.x - b.x) <= max(8 * math.sqrt(dt), 2 * cfg.delta)


def test_reproducible_and_worker_independent():
    g, data = _elastic_star()
    c = compile_inputs(g, data, FAST)
    start = _start(c, Interior("e1", 0.5))
    a = run_batch(c, FAST, 1.0, [start] * 600)
    b = run_batch(c, SimConfig(**{**FAST.__dict__, "workers": 3}), 1.0, [start] * 600)
    for name in ("first_t", "stop_t", "code", "death_t", "integral"):
        np.testing.assert_array_equal(getattr(a, name), getattr(b, name))
    r1 = simulate_path(g, data, Interior("e1", 0.5), FAST, path=17)
    r2 = simulate_path(g, data, Interior("e1", 0.5), FAST, path=17)
    np.testing.assert_array_equal(r1.times, r2.times)


def test_start_at_cemetery_rejected(star3, std):
    with pytest.raises(SimulationError):
        simulate_path(star3, std, CEMETERY, FAST)


def test_pre_absorption_law_on_trapped_interval(trapped_interval):
    """X_t before absorption has the absorbed heat-kernel law (method of images)."""
    g, data = trapped_interval
    t, x0 = 0.04, 0.35
    cfg = SimConfig(delta=0.005, horizon=t, seed=9)
    c = compile_inputs(g, data, cfg)
    start = _start(c, Interior("i", x0))
    finals = []
    for p in range(3000):
        _, _, _, e, x, _ = _record(c, cfg, 0.0, start, 0.0, p, 0)
        if e[-1] >= 0:
            finals.append(x[-1])
    s = math.sqrt(t)
    ks = np.arange(-6, 7)

    def cdf_unnorm(y):
        y = np.atleast_1d(y)[:, None]
        return (stats.norm.cdf((y - x0 - 2 * ks) / s) - stats.norm.cdf((-x0 - 2 * ks) / s)
                - stats.norm.cdf((y + x0 - 2 * ks) / s) + stats.norm.cdf((x0 - 2 * ks) / s)).sum(axis=1)

    mass = cdf_unnorm(1.0)[0]
    res = stats.kstest(finals, lambda y: cdf_unnorm(y) / mass)
    assert res.pvalue > 0.01
    # survival probability matches too
    assert abs(len(finals) / 3000 - mass) <= 3 * math.sqrt(mass * (1 - mass) / 3000) + 2 * cfg.delta


# -- estimators -------------------------------------------------------------------------


def test_interval_hitting_transform(interval):
    lam, x = 0.5, 0.5
    est = mc_hitting_transform(interval, standard_data(interval), Interior("i", x), lam, FAST)
    exact = math.sinh(0.5) / math.sinh(1.0)
    assert within(est["u"], exact, 2 * FAST.delta) and within(est["w"], exact, 2 * FAST.delta)


@pytest.mark.parametrize("x", [0.25, 0.6])
def test_zero_lambda_gamblers_ruin(interval, x):
    est = mc_hitting_transform(interval, standard_data(interval), Interior("i", x), 0.0, FAST)
    assert within(est["u"], 1 - x, 2 * FAST.delta) and within(est["w"], x, 2 * FAST.delta)


def test_external_edge_transform(star3, std):
    lam, x = 2.0, 0.5
    est = mc_hitting_transform(star3, std, Interior("e2", x), lam, FAST)["v"]
    assert within(est, math.exp(-math.sqrt(2 * lam) * x), 2 * FAST.delta)


def test_zero_integrand_gives_zero(star3, std):
    est = mc_resolvent(star3, std, Vertex("v"), 1.0, EdgeFunction.constant(star3, 0.0), FAST)
    assert est.value == 0.0 and est.se == 0.0


def test_trap_resolvent_of_one():
    # a trapped path's remaining integral is closed out exactly
    g = build_graph(["v"], [], [("e", "v")])
    data = validate_and_normalize(g, {"v": (0, [0], 1)})
    cfg = SimConfig(delta=0.01, horizon=30.0, paths=50)
    est = mc_resolvent(g, data, Vertex("v"), 0.7, EdgeFunction.constant(g, 1.0), cfg)
    assert est.value == pytest.approx(1 / 0.7, rel=1e-12) and est.se == 0.0


def test_standard_exit_frequencies(star3, std):
    freq = exit_edge_frequencies(star3, std, "v", 0.1, SimConfig(delta=0.01, paths=6000, seed=2))
    for h, est in freq.items():
        assert abs(est.value - 1 / 3) <= 3 * est.se


def test_holding_time_mean():
    g = build_graph(["v"], [], [("e", "v")])
    data = validate_and_normalize(g, {"v": (0.5, [0], 0.5)})
    times = holding_times(g, data, "v", SimConfig(paths=5000, horizon=40.0, seed=4))
    assert np.isfinite(times).all()
    assert abs(times.mean() - 1.0) <= 3 * times.std(ddof=1) / math.sqrt(len(times))


def test_killing_only_through_the_vertex():
    g, data = _elastic_star()
    c = compile_inputs(g, data, FAST)
    b = run_batch(c, FAST, 0.0, [_start(c, Interior("e1", 0.5))] * 2000)
    died = b.code == K.DIED
    assert died.any()
    # a path that dies has visited the vertex first
    assert np.all(b.first_v[died] == 0)
    assert np.all(b.first_t[died] <= b.death_t[died])


def test_killing_transform_against_closed_form(interval):
    g, data = _elastic_star()
    est = mc_killing_transform(g, data, Vertex("v"), 1.0, FAST)
    from metricbm.resolvent import solve_resolvent

    exact = 1 - solve_resolvent(g, data, 1.0, EdgeFunction.constant(g, 1.0)).at(Vertex("v"))
    assert within(est, exact, 2 * FAST.delta)


# -- crossover extraction ------------------------------------------------------------------


def _synthetic(g, events, censored=False):
    vids = g.vertices
    t = np.array([e[0] for e in events])
    edges = np.array([K.EV_VERTEX if isinstance(p, Vertex) else K.EV_CEMETERY if p is CEMETERY
                      else g.edges.index(p.edge) for _, p in events])
    xs = np.array([p.x if isinstance(p, Interior) else 0.0 for _, p in events])
    vs = np.array([vids.index(p.vertex) if isinstance(p, Vertex) else -1 for _, p in events])
    return Trajectory(g, t, edges, xs, vs, g.edges, vids, math.inf, censored, {})


def test_crossovers_of_synthetic_path(interval):
    traj = _synthetic(interval, [(0.0, Interior("i", 0.5)), (1.0, Vertex("u")), (1.5, Interior("i", 0.1)),
                                 (2.0, Vertex("w")), (3.0, Interior("i", 0.9))], censored=True)
    assert extract_crossovers(traj, ["u", "w"]).steps == [(1.0, "u"), (2.0, "w")]


def test_crossovers_dead_before_connected_vertex(interval):
    traj = _synthetic(interval, [(0.0, Interior("i", 0.5)), (0.7, CEMETERY)])
    assert extract_crossovers(traj, ["u"]).steps == [(math.inf, None)]


def test_crossovers_from_connected_start(interval):
    traj = _synthetic(interval, [(0.0, Vertex("u")), (0.1, Interior("i", 0.1)), (0.2, Vertex("u")),
                                 (0.9, Vertex("w"))], censored=True)
    chain = extract_crossovers(traj, ["u", "w"])
    assert chain.steps == [(0.9, "w")] and chain.steps[0][0] > 0


def test_chain_validation():
    with pytest.raises(ValueError):
        CrossoverChain([(2.0, "u"), (1.0, "w")])
    with pytest.raises(ValueError):
        CrossoverChain([(math.inf, "u")])
    assert CrossoverChain([(1.0, "u"), (math.inf, None)]).absorbed
