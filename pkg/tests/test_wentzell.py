import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, strategies as st

from metricbm.graph import GraphError, HalfEdge, build_graph
from metricbm.wentzell import (
    ExponentialHolding,
    Instantaneous,
    SingularSystemError,
    Trap,
    VertexData,
    WentzellError,
    ansatz_system,
    assemble,
    check_domain_membership,
    classify_vertex,
    det_scan,
    find_invertible_kappa,
    standard_data,
    validate_and_normalize,
    vertex_blocks,
    vertex_det_formula,
    z_hat,
    z_matrix,
)


def two_vertex_graph():
    g = build_graph(["p", "q"], [("m", "p", "q", 1.5), ("n", "q", "p", 0.7)], [("x1", "p"), ("y1", "q")])
    data = validate_and_normalize(g, {"p": (0.1, [0.3, 0.2, 0.2], 0.2), "q": (0.0, [0.4, 0.4, 0.1], 0.2)})
    return g, data


# -- validation and classification ------------------------------------------------------


def test_standard_normalization(star3):
    d = validate_and_normalize(star3, {"v": (0, {"e1": 1, "e2": 1, "e3": 1}, 0)})["v"]
    assert d.a == 0 and d.c == 0
    assert list(d.b.values()) == pytest.approx([1 / 3] * 3)


def test_trap_data_valid(star3):
    d = validate_and_normalize(star3, {"v": (0, [0, 0, 0], 1)})
    assert classify_vertex(d, "v") == Trap()


@pytest.mark.parametrize("raw, msg", [
    ((1, [0, 0, 0], 0), "excluded corner"),
    ((3, [0, 0, 0], 0), "excluded corner"),
    ((0, [0, 0, 0], 0), "zero"),
    ((-0.1, [1, 1, 1], 0), "negative"),
    ((0, [1, math.nan, 1], 0), "non-finite"),
    ((0, [1, 1], 0), "expected 3"),
])
def test_invalid_data(star3, raw, msg):
    with pytest.raises(WentzellError, match=msg):
        validate_and_normalize(star3, {"v": raw})


def test_missing_vertex_and_unknown_edge(star3):
    with pytest.raises(WentzellError):
        validate_and_normalize(star3, {})
    with pytest.raises(WentzellError, match="not incident"):
        validate_and_normalize(star3, {"v": (0, {"zz": 1}, 0)})


def test_classification_examples():
    g = build_graph(["v"], [], [("e1", "v"), ("e2", "v")])
    assert classify_vertex(validate_and_normalize(g, {"v": (0.5, [0, 0], 0.5)}), "v") == ExponentialHolding(1.0)
    cls = classify_vertex(validate_and_normalize(g, {"v": (0.2, [0.3, 0.3], 0.2)}), "v")
    assert isinstance(cls, Instantaneous)
    assert list(cls.weights.values()) == pytest.approx([0.5, 0.5])
    assert cls.stickiness == pytest.approx(1 / 3)
    assert cls.kill_rate == pytest.approx(1 / 3)


def test_holding_rate_is_scale_free():
    g = build_graph(["v"], [], [("e", "v")])
    for a, c in [(1, 3), (2, 6), (0.25, 0.75)]:
        assert classify_vertex(validate_and_normalize(g, {"v": (a, [0], c)}), "v").rate == pytest.approx(1 / 3)


positive = st.floats(0.0, 10.0, allow_nan=False)


@given(a=positive, c=positive, b=st.lists(positive, min_size=3, max_size=3))
def test_normalized_sums_to_one(a, c, b):
    star3 = build_graph(["v"], [], [("e1", "v"), ("e2", "v"), ("e3", "v")])
    total = a + c + sum(b)
    if total <= 0 or (a / total >= 1 - 1e-12 if total else True):
        return
    d = validate_and_normalize(star3, {"v": (a, b, c)})["v"]
    assert math.fsum([d.a, d.c, *d.b.values()]) == pytest.approx(1.0, abs=1e-12)


def test_already_normalized_is_untouched(star3):
    b = [0.1, 0.2, 0.3]
    d = validate_and_normalize(star3, {"v": (0.15, b, 0.25)})["v"]
    assert list(d.b.values()) == b and d.a == 0.15 and d.c == 0.25


def test_replace_renormalizes(star3, std):
    new = std.replace("v", VertexData(0, {h: 2.0 for h in star3.incident("v")}, 2.0))
    assert new["v"].c == pytest.approx(0.25)


# -- matrices -----------------------------------------------------------------------


def test_two_star_standard_blocks():
    g = build_graph(["v"], [], [("e1", "v"), ("e2", "v")])
    m = assemble(g, standard_data(g))
    np.testing.assert_array_equal(m.A, 0)
    np.testing.assert_allclose(m.B[0], [-0.5, -0.5])
    np.testing.assert_allclose(m.C, [[0, 0], [1, -1]])


def test_interval_permutation_identity(interval):
    m = assemble(interval, standard_data(interval))
    assert m.n == 2
    np.testing.assert_array_equal(m.P, np.eye(2))


def test_trap_block():
    g = build_graph(["v"], [], [("e1", "v"), ("e2", "v")])
    At, Bt, Ct = assemble(g, validate_and_normalize(g, {"v": (0, [0, 0], 1)})).blocks["v"]
    assert not At.any() and not Bt.any() and Ct[0, 0] == 0.5


def test_assemble_rejects_tadpole():
    g = build_graph(["v"], [("t", "v", "v", 1.0)], [])
    with pytest.raises(GraphError):
        assemble(g, standard_data(g))


def test_boundary_rows_vanish_on_domain_traces():
    """Manufactured traces satisfying every vertex condition are annihilated by A, B, C."""
    g, data = two_vertex_graph()
    rng = np.random.default_rng(4)
    n = g.n_trace
    f, f1, f2 = np.zeros(n), np.zeros(n), np.zeros(n)
    for v in g.vertices:
        d, hs = data[v], g.incident(v)
        val, second = rng.normal(), rng.normal()
        slopes = rng.normal(size=len(hs))
        # fix the last slope so that the Wentzell row balances
        rest = d.a * val + 0.5 * d.c * second - sum(d.b[h] * s for h, s in zip(hs[:-1], slopes[:-1]))
        slopes[-1] = rest / d.b[hs[-1]]
        for h, s in zip(hs, slopes):
            k = g.trace_index(h)
            f[k], f1[k], f2[k] = val, s, second
    m = assemble(g, data)
    np.testing.assert_allclose(m.A @ f + m.B @ f1 + m.C @ f2, 0, atol=1e-12)


@given(a=st.floats(0, 0.9), c=st.floats(0, 1), bs=st.lists(st.floats(0, 1), min_size=1, max_size=5),
       kr=st.floats(-3, 3), ki=st.floats(-3, 3), sign=st.sampled_from([1, -1]))
def test_vertex_determinant_formula(a, c, bs, kr, ki, sign):
    d = VertexData(a, {HalfEdge(f"e{k}", 0): b for k, b in enumerate(bs)}, c)
    At, Bt, Ct = vertex_blocks(d, list(d.b))
    kappa = complex(kr, ki)
    num = np.linalg.det(At + sign * kappa * Bt + kappa**2 * Ct)
    exact = vertex_det_formula(a, d.b_total, c, len(bs), kappa, sign)
    assert abs(num - exact) <= 1e-10 * max(1.0, abs(exact))
    # same identity for the matrix with +b in the first row
    flipped = np.array(At + sign * kappa * Bt + kappa**2 * Ct)
    flipped[0, 1:] *= -1
    flipped[0, 0] = a + sign * kappa * bs[0] + 0.5 * kappa**2 * c
    plus = (a + sign * kappa * d.b_total + 0.5 * kappa**2 * c) * (-(kappa**2)) ** (len(bs) - 1)
    assert abs(np.linalg.det(flipped) - plus) <= 1e-10 * max(1.0, abs(plus))


def test_z_without_internal_edges_is_z_hat(star3):
    data = validate_and_normalize(star3, {"v": (0.2, [0.1, 0.3, 0.2], 0.2)})
    m = assemble(star3, data)
    for kappa in (0.7, 1.0 + 0.5j, -2.0):
        np.testing.assert_allclose(z_matrix(m, kappa), z_hat(m, kappa), atol=1e-14)


def test_standard_star_det_against_mpmath(star3, std):
    m = assemble(star3, std)
    oracle = mpmath.det(mpmath.matrix(z_matrix(m, 1.0).tolist()))
    assert float(np.linalg.det(z_matrix(m, 1.0))) == pytest.approx(float(oracle), rel=1e-12)
    assert float(oracle) == pytest.approx(vertex_det_formula(0, 1, 0, 3, 1.0)) == -1.0


def _z_mpmath(m, kappa):
    """Z(kappa) rebuilt in 40-digit arithmetic, entry by entry from its definition."""
    mpmath.mp.dps = 40
    k = mpmath.mpc(kappa)
    n, ne, ni = m.n, m.n_external, len(m.rho)
    A, B, C = (mpmath.matrix(M.tolist()) for M in (m.A, m.B, m.C))
    Xp, Xm = mpmath.eye(n), mpmath.eye(n)
    for j in range(ni):
        e = mpmath.exp(k * mpmath.mpf(m.rho[j]))
        Xp[ne + j, ne + ni + j] = Xp[ne + ni + j, ne + j] = e
        Xm[ne + j, ne + ni + j] = Xm[ne + ni + j, ne + j] = -e
    return (A + k**2 * C) * Xp + k * B * Xm


def test_det_matches_high_precision_oracle():
    g, data = two_vertex_graph()
    m = assemble(g, data)
    rng = np.random.default_rng(11)
    for _ in range(20):
        kappa = complex(rng.uniform(-2, 2), rng.uniform(-2, 2))
        num = np.linalg.det(z_matrix(m, kappa))
        exact = complex(mpmath.det(_z_mpmath(m, kappa)))
        assert abs(num - exact) <= 1e-9 * abs(exact)


def test_blocks_agree_with_entrywise_ansatz():
    """Two code paths: literal Z at -kappa versus the trace-built ansatz system."""
    g, data = two_vertex_graph()
    m = assemble(g, data)
    ne, ni = m.n_external, len(m.rho)
    swap = list(range(ne)) + [ne + ni + j for j in range(ni)] + [ne + j for j in range(ni)]
    for kappa in (0.4, 1.3, 2.0 + 0.7j):
        np.testing.assert_allclose(ansatz_system(g, data, kappa, scaled=True), z_matrix(m, -kappa)[:, swap],
                                   atol=1e-12)


def test_relabeling_leaves_determinant_unchanged():
    g, data = two_vertex_graph()
    g2 = build_graph(["q", "p"], [g.internal[1], g.internal[0]], [g.external[1], g.external[0]])
    raw = {v: data[v] for v in g.vertices}
    d2 = validate_and_normalize(g2, raw)
    m1, m2 = assemble(g, data), assemble(g2, d2)
    for kappa in (0.5, 1.7, 1 + 1j):
        assert abs(np.linalg.det(z_matrix(m1, kappa))) == pytest.approx(abs(np.linalg.det(z_matrix(m2, kappa))),
                                                                         rel=1e-10)


# -- invertibility ------------------------------------------------------------------


def test_standard_star_invertible(star3, std):
    rep = find_invertible_kappa(assemble(star3, std), 0.5)
    assert rep.kappa == pytest.approx(1.0) and rep.invertible and rep.retries == 0


def test_trap_graph_invertible(trapped_interval):
    g, data = trapped_interval
    for lam in (0.01, 1.0, 50.0):
        assert find_invertible_kappa(assemble(g, data), lam).invertible


def test_kappa_zero_singular_when_a_vanishes(star3, std):
    assert np.linalg.det(z_hat(assemble(star3, std), 0.0)) == 0.0


def test_singular_system_raises():
    # a Dirichlet-type vertex system with a node of the sine mode: the interval with traps
    # at both ends is never singular, but a forced zero determinant must be reported
    g = build_graph(["v"], [], [("e", "v")])
    data = validate_and_normalize(g, {"v": (0, [1], 0)})
    m = assemble(g, data)
    broken = type(m)(m.graph, m.A * 0, m.B * 0, m.C * 0, m.P, m.blocks, m.rho)
    with pytest.raises(SingularSystemError):
        find_invertible_kappa(broken, 1.0)
    with pytest.raises(ValueError):
        find_invertible_kappa(m, 0.0)


def test_det_scan_rows(star3, std):
    rows = det_scan(assemble(star3, std), [0.5, 1.0], [-1.0, 0.0, 1.0])
    assert len(rows) == 6
    for kr, ki, d, _ in rows:
        assert d == pytest.approx(abs(vertex_det_formula(0, 1, 0, 3, complex(kr, ki))), rel=1e-10)


# -- domain membership ----------------------------------------------------------------


def test_zero_function_in_domain(star3, std):
    res = check_domain_membership(star3, std, {h: (0.0, 0.0, 0.0) for h in star3.incident("v")})
    assert res[0].wentzell == 0 and res[0].second_derivative_gap == 0


def test_decaying_exponential_not_in_domain(star3, std):
    kappa = 1.7
    traces = {h: (1.0, -kappa, kappa**2) for h in star3.incident("v")}
    (res,) = check_domain_membership(star3, std, traces)
    assert res.wentzell == pytest.approx(kappa * 1.0)
    with pytest.raises(WentzellError):
        check_domain_membership(star3, std, traces, tol=1e-9)
    with pytest.raises(WentzellError, match="missing"):
        check_domain_membership(star3, std, {})
