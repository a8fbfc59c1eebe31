"""Analytic resolvent, hitting transforms and semigroup values.

The resolvent ``u = R_lam f`` is computed as ``u = u_D + u_H``: ``u_D`` is the
edge-wise Dirichlet resolvent (zero at every vertex end) and ``u_H`` is a
combination of the decaying exponentials ``exp(-k x)`` / ``exp(-k (rho - x))``
whose coefficients solve the vertex system.  Data ``f`` are piecewise
exponential polynomials (:mod:`metricbm.expoly`), so every step is exact up to
rounding; sampled data are replaced by their piecewise-linear interpolant.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping

import numpy as np

from .expoly import Piecewise, Terms, linear_interpolant
from .graph import CEMETERY, GraphPoint, HalfEdge, Interior, MetricGraph, Vertex
from .wentzell import (
    WentzellData,
    ansatz_system,
    ansatz_traces,
    assemble,
    check_domain_membership,
    find_invertible_kappa,
)

KERNEL_RTOL = 1e-14


# -- functions on the graph ------------------------------------------------------


class EdgeFunction(Mapping):
    """A function on a metric graph, one :class:`Piecewise` per edge (local coordinates)."""

    def __init__(self, graph: MetricGraph, parts: Mapping[str, Piecewise]):
        self.graph = graph
        self._parts = {}
        for e in graph.edges:
            p = parts.get(e)
            if p is None:
                p = Piecewise.zero(graph.length(e))
            if p.length != graph.length(e):
                raise ValueError(f"edge {e!r}: domain length {p.length} != {graph.length(e)}")
            self._parts[e] = p

    def __getitem__(self, e: str) -> Piecewise:
        return self._parts[e]

    def __iter__(self):
        return iter(self.graph.edges)

    def __len__(self) -> int:
        return len(self._parts)

    # constructors ----------------------------------------------------------------
    @classmethod
    def from_terms(cls, g: MetricGraph, rows: Mapping[str, Iterable[tuple]]) -> "EdgeFunction":
        """``rows[edge]`` lists ``(coef, power, rate, anchor)`` terms."""
        return cls(g, {e: Piecewise.single(Terms.make(r), g.length(e)) for e, r in rows.items()})

    @classmethod
    def constant(cls, g: MetricGraph, value: float = 1.0) -> "EdgeFunction":
        return cls.from_terms(g, {e: [(value, 0, 0.0, 0.0)] for e in g.edges})

    @classmethod
    def exp(cls, g: MetricGraph, rate: float = 1.0, value: float = 1.0) -> "EdgeFunction":
        """``value * exp(-rate x)`` on external edges and ``value`` on internal ones."""
        rows = {}
        for e in g.edges:
            rows[e] = [(value, 0, -rate, 0.0)] if g.is_external(e) else [(value, 0, 0.0, 0.0)]
        return cls.from_terms(g, rows)

    @classmethod
    def sine(cls, g: MetricGraph, edge: str, modes: int = 1, amplitude: float = 1.0) -> "EdgeFunction":
        """``amplitude * sin(modes pi x / rho)`` on one internal edge, zero elsewhere."""
        w = modes * math.pi / g.length(edge)
        c = amplitude / 2j
        return cls.from_terms(g, {edge: [(c, 0, 1j * w, 0.0), (-c, 0, -1j * w, 0.0)]})

    @classmethod
    def indicator(cls, g: MetricGraph, edge: str, lo: float, hi: float) -> "EdgeFunction":
        L = g.length(edge)
        if not 0 <= lo < hi <= L:
            raise ValueError("need 0 <= lo < hi <= length")
        br = [0.0] + [b for b in (lo, hi) if 0 < b < L] + [L]
        br = sorted(set(br))
        pieces = []
        for a, b in zip(br[:-1], br[1:]):
            inside = lo <= 0.5 * (a + (b if np.isfinite(b) else a + 2)) <= hi
            pieces.append(Terms.make([(1.0, 0, 0.0, 0.0)]) if inside else Terms.empty())
        return cls(g, {edge: Piecewise(br, pieces)})

    @classmethod
    def from_samples(cls, g: MetricGraph, samples: Mapping[str, np.ndarray], h: float) -> "EdgeFunction":
        """Uniform samples ``f(k h)``; internal grids must end at the far vertex.

        External samples are held constant past the last grid point.
        """
        parts = {}
        for e, ys in samples.items():
            ys = np.asarray(ys, float)
            xs = h * np.arange(len(ys))
            L = g.length(e)
            if g.is_internal(e):
                if not math.isclose(xs[-1], L, rel_tol=1e-9, abs_tol=1e-12):
                    raise ValueError(f"edge {e!r}: samples cover [0, {xs[-1]}], expected [0, {L}]")
                xs[-1] = L
            parts[e] = linear_interpolant(xs, ys, L)
        return cls(g, parts)

    @classmethod
    def from_callable(cls, g: MetricGraph, fn: Callable[[str, np.ndarray], np.ndarray], h: float,
                      external_length: float = 20.0) -> "EdgeFunction":
        samples = {}
        for e in g.edges:
            L = g.length(e) if g.is_internal(e) else external_length
            n = max(2, int(round(L / h)) + 1)
            xs = np.linspace(0, L, n)
            samples[e] = (xs, np.asarray(fn(e, xs), float))
        parts = {e: linear_interpolant(xs, ys, g.length(e)) for e, (xs, ys) in samples.items()}
        return cls(g, parts)

    # queries ---------------------------------------------------------------------
    def __call__(self, edge: str, x) -> np.ndarray:
        return self._parts[edge](x)

    def at(self, p: GraphPoint) -> float:
        if p is CEMETERY:
            return 0.0
        if isinstance(p, Vertex):
            return self.vertex_values()[p.vertex]
        return float(self._parts[p.edge](p.x))

    def end_value(self, h: HalfEdge) -> float:
        part = self._parts[h.edge]
        if h.end == 0:
            return part.limit(0.0, +1)
        return part.limit(part.length, -1)

    def vertex_values(self) -> dict[str, float]:
        return {v: self.end_value(self.graph.incident(v)[0]) for v in self.graph.vertices}

    def vertex_gap(self) -> float:
        gap = 0.0
        for v in self.graph.vertices:
            vals = [self.end_value(h) for h in self.graph.incident(v)]
            gap = max(gap, max(vals) - min(vals))
        return gap

    def bounded(self) -> bool:
        return all(p.bounded() for p in self._parts.values())

    def map(self, fn: Callable[[str, Piecewise], Piecewise]) -> "EdgeFunction":
        return EdgeFunction(self.graph, {e: fn(e, p) for e, p in self._parts.items()})

    def __add__(self, other: "EdgeFunction") -> "EdgeFunction":
        return EdgeFunction(self.graph, {e: self[e] + other[e] for e in self.graph.edges})

    def scale(self, k: float) -> "EdgeFunction":
        return self.map(lambda e, p: p.scale(k))

    def samples(self, grid=None) -> dict[str, tuple[np.ndarray, np.ndarray]]:
        grid = grid or graph_grid(self.graph)
        return {e: (xs, self(e, xs)) for e, xs in grid.items()}

    def sup_norm(self, grid=None) -> float:
        vals = [np.max(np.abs(y)) for _, y in self.samples(grid).values() if len(y)]
        return float(max(vals, default=0.0))

    def tabulate(self, edge: str, h: float, length: float | None = None) -> np.ndarray:
        """Values on ``0, h, 2h, ...`` up to the edge length (or ``length`` for external edges)."""
        L = self.graph.length(edge) if length is None else length
        n = int(math.floor(L / h + 1e-9)) + 1
        return self(edge, h * np.arange(n))


def graph_grid(g: MetricGraph, points: int = 65, external_length: float = 10.0,
               external_points: int = 201) -> dict[str, np.ndarray]:
    """Sample grid including vertex ends, used for sup norms and reports."""
    grid = {}
    for e in g.edges:
        if g.is_internal(e):
            grid[e] = np.linspace(0.0, g.length(e), points)
        else:
            grid[e] = np.linspace(0.0, external_length, external_points)
    return grid


# -- Dirichlet resolvent ----------------------------------------------------------


def _kappa(lam: float) -> float:
    if not lam > 0:
        raise ValueError("lambda must be positive")
    return math.sqrt(2 * lam)


def dirichlet_kernel(g: MetricGraph, lam: float, xi: GraphPoint, eta: GraphPoint) -> float:
    """Density of the resolvent of the motion killed at the first vertex hit."""
    kappa = _kappa(lam)
    if not (isinstance(xi, Interior) and isinstance(eta, Interior)) or xi.edge != eta.edge:
        return 0.0
    x, y = xi.x, eta.x
    if g.is_external(xi.edge):
        return (math.exp(-kappa * abs(x - y)) - math.exp(-kappa * (x + y))) / kappa
    rho = g.length(xi.edge)
    total = 0.0
    k = 0
    while True:
        shifts = (0,) if k == 0 else (k, -k)
        add = 0.0
        for j in shifts:
            add += math.exp(-kappa * abs(x - y + 2 * j * rho)) - math.exp(-kappa * abs(x + y + 2 * j * rho))
        total += add
        if k > 0 and abs(add) <= KERNEL_RTOL * abs(total):
            break
        if k > 0 and add == 0.0:
            break
        k += 1
    return total / kappa


def dirichlet_part(lam: float, f: Piecewise, length: float) -> Piecewise:
    """Edge-local Dirichlet resolvent of ``f``: zero at finite ends and bounded at infinity."""
    kappa = _kappa(lam)
    p = f.particular(lam)
    p0 = p.limit(0.0, +1)
    if math.isinf(length):
        return p.add_terms(Terms.make([(-p0, 0, -kappa, 0.0)]))
    pr = p.limit(length, -1)
    q = math.exp(-kappa * length)
    den = -math.expm1(-2 * kappa * length)
    rows = [
        (-p0 / den, 0, -kappa, 0.0),
        (p0 * q / den, 0, kappa, length),
        (-pr / den, 0, kappa, length),
        (pr * q / den, 0, -kappa, 0.0),
    ]
    return p.add_terms(Terms.make(rows))


def simpson_step(kappa: float, h_f: float = math.inf) -> float:
    """Step used by the quadrature cross-check: resolves both f and the kernel scale ``1/kappa``."""
    return min(h_f, 1.0 / (64.0 * kappa), 0.005)


def _simpson(fn, a: float, b: float, h: float) -> float:
    if b <= a:
        return 0.0
    n = max(2, int(math.ceil((b - a) / h)))
    n += n % 2
    xs = np.linspace(a, b, n + 1)
    ys = fn(xs)
    w = np.ones(n + 1)
    w[1:-1:2] = 4
    w[2:-1:2] = 2
    return float((b - a) / (3 * n) * np.dot(w, ys))


def dirichlet_resolvent_apply(g: MetricGraph, lam: float, f: EdgeFunction, xi: GraphPoint,
                              method: str = "exact", h_f: float = math.inf) -> float:
    """``(R^D_lam f)(xi)``; ``method`` is ``"exact"`` or ``"simpson"``."""
    kappa = _kappa(lam)
    if xi is CEMETERY or isinstance(xi, Vertex):
        return 0.0
    e, x = xi.edge, xi.x
    part = f[e]
    if not part.bounded():
        raise ValueError(f"f grows at infinity on edge {e!r}")
    if method == "exact":
        return float(dirichlet_part(lam, part, g.length(e))(x))
    if method != "simpson":
        raise ValueError(f"unknown method {method!r}")
    h = simpson_step(kappa, h_f)
    rho = g.length(e)

    def kern(ys):
        if math.isinf(rho):
            return (np.exp(-kappa * np.abs(x - ys)) - np.exp(-kappa * (x + ys))) / kappa
        return np.array([dirichlet_kernel(g, lam, Interior(e, x), Interior(e, float(y))) for y in ys])

    upper = rho if not math.isinf(rho) else x + 40.0 / kappa
    breaks = sorted({0.0, x, upper, *[b for b in part.breaks if 0 < b < upper]})
    return math.fsum(
        _simpson(lambda ys: kern(ys) * part(ys), a, b, h) for a, b in zip(breaks[:-1], breaks[1:])
    )


# -- first passage --------------------------------------------------------------


def _sinh_ratio(kappa: float, num: float, den: float) -> float:
    """``sinh(kappa num) / sinh(kappa den)`` for ``0 <= num <= den``, overflow-free."""
    if kappa == 0:
        return num / den
    if kappa * den < 20:
        return math.sinh(kappa * num) / math.sinh(kappa * den)
    return math.exp(-kappa * (den - num)) * (-math.expm1(-2 * kappa * num)) / (-math.expm1(-2 * kappa * den))


def passage_weights(g: MetricGraph, lam: float, xi: GraphPoint) -> dict[str, float]:
    """``E_xi[exp(-lam H) ; X_H = v]`` for the first vertex hitting time ``H`` (``lam >= 0``)."""
    if not isinstance(xi, Interior):
        raise ValueError("passage weights need an interior starting point")
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    kappa = math.sqrt(2 * lam)
    out = {v: 0.0 for v in g.vertices}
    if g.is_external(xi.edge):
        out[g.external_edge(xi.edge).anchor] += math.exp(-kappa * xi.x)
        return out
    i = g.internal_edge(xi.edge)
    out[i.initial] += _sinh_ratio(kappa, i.length - xi.x, i.length)
    out[i.terminal] += _sinh_ratio(kappa, xi.x, i.length)
    return out


def hitting_transform(g: MetricGraph, data: WentzellData | None, xi: GraphPoint, lam: float) -> dict[str, float]:
    """Laplace transform of the first vertex hit, split by vertex.

    Before its first vertex visit the process is a standard Brownian motion on
    one edge, so the vertex data do not enter.
    """
    return passage_weights(g, lam, xi)


# -- full resolvent ---------------------------------------------------------------


@dataclass
class ResolventSolution:
    lam: float
    kappa: float
    r: np.ndarray
    s: np.ndarray
    vertex_values: dict
    u: EdgeFunction
    diagnostics: dict = field(default_factory=dict)

    def __call__(self, edge: str, x) -> np.ndarray:
        return self.u(edge, x)

    def at(self, p: GraphPoint) -> float:
        return self.u.at(p)


def _traces(g: MetricGraph, u: EdgeFunction):
    """``{half_edge: (value, inward derivative, second derivative)}``."""
    out = {}
    for e in g.edges:
        p = u[e]
        d1, d2 = p.derivative(), p.derivative().derivative()
        L = p.length
        out[HalfEdge(e, 0)] = (p.limit(0.0, 1), d1.limit(0.0, 1), d2.limit(0.0, 1))
        if not math.isinf(L):
            out[HalfEdge(e, 1)] = (p.limit(L, -1), -d1.limit(L, -1), d2.limit(L, -1))
    return out


def solve_resolvent(g: MetricGraph, data: WentzellData, lam: float, f: EdgeFunction,
                    m=None) -> ResolventSolution:
    """``R_lam f`` on ``g``; ``f`` must be bounded and continuous at vertices.

    If the vertex system is singular at ``lam`` it is retried at
    ``lam (1 + 1e-6)^k`` (``k <= 3``); the value actually used is ``.lam``.
    """
    m = m or assemble(g, data)
    rep = find_invertible_kappa(m, lam)
    lam, kappa = rep.lam, rep.kappa
    fnorm = max(f.sup_norm(), 1e-300)
    if not f.bounded():
        raise ValueError("f grows at infinity on an external edge")
    if f.vertex_gap() > 1e-9 * fnorm:
        raise ValueError("f is discontinuous at a vertex")
    parts = {e: dirichlet_part(lam, f[e], g.length(e)) for e in g.edges}
    uD = EdgeFunction(g, parts)
    n = g.n_trace
    dD = np.zeros(n)
    fend = np.zeros(n)
    for h, (val, der, _) in _traces(g, uD).items():
        dD[g.trace_index(h)] = der
        fend[g.trace_index(h)] = f.end_value(h)
    Z = ansatz_system(g, data, kappa, scaled=True, m=m)
    rhs = -(m.B @ dD + m.C @ (-2.0 * fend))
    s = np.linalg.solve(Z, rhs) if n else np.zeros(0)
    ne, ni = len(g.external), len(g.internal)
    for j, ext in enumerate(g.external):
        parts[ext.id] = parts[ext.id].add_terms(Terms.make([(s[j], 0, -kappa, 0.0)]))
    r = s.astype(float).copy()
    for k, ie in enumerate(g.internal):
        sp, sm = s[ne + k], s[ne + ni + k]
        parts[ie.id] = parts[ie.id].add_terms(
            Terms.make([(sp, 0, kappa, ie.length), (sm, 0, -kappa, 0.0)])
        )
        q = math.exp(-kappa * ie.length)
        r[ne + k], r[ne + ni + k] = sp * q, sm * q
    u = EdgeFunction(g, parts)
    F, _ = ansatz_traces(g, kappa, scaled=True)
    vals = F @ s if n else np.zeros(0)
    vertex_values = {v: float(vals[g.trace_index(g.incident(v)[0])]) for v in g.vertices}
    res = check_domain_membership(g, data, _traces(g, u))
    diag = {
        "abs_det": rep.abs_det,
        "cond": rep.cond,
        "retries": rep.retries,
        "wentzell_residual": max((x.wentzell for x in res), default=0.0) / fnorm,
        "second_derivative_gap": max((x.second_derivative_gap for x in res), default=0.0) / fnorm,
        "f_norm": fnorm,
    }
    return ResolventSolution(lam, kappa, r, s, vertex_values, u, diag)


def generator_residual(sol: ResolventSolution, f: EdgeFunction, h: float = 1e-3,
                       grid=None) -> float:
    """``max |lam u - u''/2 - f|`` over interior grid points, ``u''`` by central differences."""
    g = sol.u.graph
    worst = 0.0
    for e, xs in (grid or graph_grid(g)).items():
        L = g.length(e)
        xs = xs[(xs > h) & (xs < L - h)]
        if not len(xs):
            continue
        u0, up, um = sol(e, xs), sol(e, xs + h), sol(e, xs - h)
        d2 = (up - 2 * u0 + um) / h**2
        worst = max(worst, float(np.max(np.abs(sol.lam * u0 - 0.5 * d2 - f(e, xs)))))
    return worst


# -- semigroup -----------------------------------------------------------------

SERIES_WINDOW = 3.0


@dataclass
class SemigroupResult:
    t: float
    lam: float
    weights: list
    solutions: list
    converged: bool

    @property
    def n_terms(self) -> int:
        return len(self.weights)

    def __call__(self, edge: str, x) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, float))
        rows = np.array([w * s(edge, x) for w, s in zip(self.weights, self.solutions)])
        return np.array([math.fsum(col) for col in rows.T])


def semigroup_from_resolvent(g: MetricGraph, data: WentzellData, t: float, f: EdgeFunction,
                             lam: float, tol: float = 1e-10, max_terms: int = 400) -> SemigroupResult:
    """Alternating series ``sum_n (-1)^(n+1) n lam exp(n lam t) R_{n lam} f / n!``.

    Terms are solved independently and summed per point with ``math.fsum`` in
    index order.  Requires ``lam t <= 3``.
    """
    if t < 0 or lam <= 0:
        raise ValueError("need t >= 0 and lam > 0")
    if lam * t > SERIES_WINDOW:
        raise ValueError(f"lam*t = {lam * t:g} exceeds the stability window {SERIES_WINDOW}")
    m = assemble(g, data)
    grid = graph_grid(g)
    weights, sols = [], []
    n_min = math.exp(lam * t) + 10
    converged = False
    for n in range(1, max_terms + 1):
        log_w = math.log(n * lam) + n * lam * t - math.lgamma(n + 1)
        w = (-1) ** (n + 1) * math.exp(log_w)
        sol = solve_resolvent(g, data, n * lam, f, m=m)
        weights.append(w)
        sols.append(sol)
        size = abs(w) * sol.u.sup_norm(grid)
        if n > n_min and size < tol:
            converged = True
            break
    return SemigroupResult(t, lam, weights, sols, converged)


# -- Feller checks -------------------------------------------------------------


@dataclass
class FellerReport:
    contraction: float  # max ||lam R f|| / ||f||
    min_positive: float  # min of R f over samples, for f >= 0
    resolvent_identity: float  # max relative residual
    approximation: dict  # f name -> [(lam, ||lam R f - f||)]
    tail: dict  # f name -> max |R f| at the far end of external grids

    def approximation_monotone(self, name: str) -> bool:
        errs = [e for _, e in self.approximation[name]]
        return all(b < a for a, b in zip(errs, errs[1:]))


def feller_checks(g: MetricGraph, data: WentzellData, lam_grid, f_suite: Mapping[str, EdgeFunction],
                  approx_grid=(10.0, 1e2, 1e3, 1e4), grid=None) -> FellerReport:
    m = assemble(g, data)
    grid = grid or graph_grid(g)
    contraction, min_pos, ident = 0.0, math.inf, 0.0
    approx, tail = {}, {}
    for name, f in f_suite.items():
        fn = f.sup_norm(grid)
        nonneg = min(np.min(y) for _, y in f.samples(grid).values()) >= 0
        sols = {lam: solve_resolvent(g, data, lam, f, m=m) for lam in lam_grid}
        for lam, sol in sols.items():
            contraction = max(contraction, lam * sol.u.sup_norm(grid) / fn)
            if nonneg:
                min_pos = min(min_pos, min(np.min(y) for _, y in sol.u.samples(grid).values()))
        tail[name] = max(
            (abs(float(sol(e, grid[e][-1]))) for sol in sols.values() for e in g.edges if g.is_external(e)),
            default=0.0,
        )
        lams = sorted(sols)
        for i, lam in enumerate(lams):
            for mu in lams[i + 1 :]:
                rmu = sols[mu]
                rlr = solve_resolvent(g, data, lam, rmu.u, m=m)
                worst = 0.0
                for e, xs in grid.items():
                    diff = sols[lam](e, xs) - rmu(e, xs) - (mu - lam) * rlr(e, xs)
                    worst = max(worst, float(np.max(np.abs(diff))))
                ident = max(ident, worst / fn)
        rows = []
        for lam in approx_grid:
            sol = solve_resolvent(g, data, lam, f, m=m)
            err = max(float(np.max(np.abs(lam * sol(e, xs) - f(e, xs)))) for e, xs in grid.items())
            rows.append((lam, err))
        approx[name] = rows
    return FellerReport(contraction, min_pos if math.isfinite(min_pos) else 0.0, ident, approx, tail)
