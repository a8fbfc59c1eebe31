"""Monte Carlo simulation of Brownian motion on metric graphs.

Edge interiors use exact Gaussian increments with a Brownian-bridge crossing
test.  Within ``delta`` of a vertex the motion follows a symmetric lattice
walk with step ``delta`` and duration ``delta**2``; at the vertex itself the
step probabilities of :func:`vertex_step_probabilities` realize the
vertex data.  Trap and holding vertices are handled exactly.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from . import _kernel as K
from .expoly import linear_interpolant
from .resolvent import EdgeFunction
from .graph import CEMETERY, GraphPoint, HalfEdge, Interior, MetricGraph, ShadowMap, Vertex
from .wentzell import (
    ExponentialHolding,
    Instantaneous,
    Trap,
    WentzellData,
    classify_vertex,
    validate_and_normalize,
)

CENSORED, DIED, STOP_VERTEX, STOP_TARGET, TRAPPED = (
    K.CENSORED, K.DIED, K.STOP_VERTEX, K.STOP_TARGET, K.TRAPPED,
)


class SimulationError(ValueError):
    pass


@dataclass(frozen=True)
class SimConfig:
    delta: float = 0.005
    horizon: float = 20.0
    seed: int = 0
    paths: int = 10_000
    bridge: bool = True
    dt_max: float = 0.01
    workers: int = 1

    def __post_init__(self):
        if not self.delta > 0:
            raise SimulationError("delta must be positive")
        if not self.horizon > 0:
            raise SimulationError("horizon must be positive")
        if self.paths < 1 or self.workers < 1:
            raise SimulationError("paths and workers must be positive")

    def check_graph(self, g: MetricGraph) -> None:
        shortest = min((i.length for i in g.internal), default=math.inf)
        if self.delta > shortest / 8:
            raise SimulationError(
                f"delta={self.delta} exceeds 1/8 of the shortest internal edge ({shortest})"
            )


class Estimate(NamedTuple):
    value: float
    se: float
    n: int

    @staticmethod
    def of(samples: np.ndarray) -> "Estimate":
        samples = np.asarray(samples, float)
        n = len(samples)
        se = float(samples.std(ddof=1) / math.sqrt(n)) if n > 1 else math.inf
        return Estimate(float(samples.mean()), se, n)


def vertex_step_probabilities(cls: Instantaneous, delta: float):
    """``(p_move per half-edge, p_stay, p_kill)`` for one lattice step at the vertex."""
    w, c, a = cls.weights, cls.stickiness, cls.kill_rate  # b scaled so that sum(b) = 1
    if c > 0:
        den = c + delta
        p_move = {h: delta * x / den for h, x in w.items()}
        p_kill = delta**2 * a / den
        p_stay = (c - delta**2 * a) / den
        if p_stay < 0:
            raise SimulationError(f"delta={delta} too large: negative stay probability")
    else:
        p_kill = delta * a / (1 + delta * a)
        p_move = {h: x * (1 - p_kill) for h, x in w.items()}
        p_stay = 0.0
    return p_move, p_stay, p_kill


# -- compilation of the inputs -------------------------------------------------


@dataclass
class Compiled:
    graph: MetricGraph
    edge_ids: tuple
    vertex_ids: tuple
    arrays: tuple
    targets: tuple  # ((edge, x, key), ...) in target-id order
    f_h: float

    def edge_of(self, k: int) -> str:
        return self.edge_ids[k]


def compile_inputs(g: MetricGraph, data: WentzellData, cfg: SimConfig, *, targets=(), stop_vertices=(),
                   f=None, f_step: float | None = None, external_table: float | None = None) -> Compiled:
    """Flatten graph, vertex data, stop sets and integrand into kernel arrays.

    ``targets`` is a sequence of ``(Interior point, key)``; reaching one
    stops the path.  ``f`` is an :class:`EdgeFunction` (or ``None`` for 0),
    tabulated with step ``f_step`` and held constant past
    ``external_table`` on external edges.
    """
    cfg.check_graph(g)
    edges = g.edges
    vidx = {v: k for k, v in enumerate(g.vertices)}
    eidx = {e: k for k, e in enumerate(edges)}
    E, V = len(edges), len(g.vertices)
    edge_len = np.array([g.length(e) for e in edges])
    edge_v0 = np.empty(E, np.int64)
    edge_v1 = np.full(E, -1, np.int64)
    for e in edges:
        if g.is_external(e):
            edge_v0[eidx[e]] = vidx[g.external_edge(e).anchor]
        else:
            i = g.internal_edge(e)
            edge_v0[eidx[e]] = vidx[i.initial]
            edge_v1[eidx[e]] = vidx[i.terminal]

    vclass = np.zeros(V, np.int64)
    vrate = np.zeros(V)
    p_stay = np.zeros(V)
    p_kill = np.zeros(V)
    inc_ptr = np.zeros(V + 1, np.int64)
    inc_edge, inc_end, inc_p = [], [], []
    for v in g.vertices:
        k = vidx[v]
        cls = classify_vertex(data, v)
        halves = g.incident(v)
        if isinstance(cls, Trap):
            vclass[k] = K.TRAP
            moves = {h: 0.0 for h in halves}
        elif isinstance(cls, ExponentialHolding):
            vclass[k] = K.HOLD
            vrate[k] = cls.rate
            moves = {h: 0.0 for h in halves}
        else:
            vclass[k] = K.INSTANT
            moves, p_stay[k], p_kill[k] = vertex_step_probabilities(cls, cfg.delta)
        for h in halves:
            inc_edge.append(eidx[h.edge])
            inc_end.append(h.end)
            inc_p.append(moves[h])
        inc_ptr[k + 1] = len(inc_edge)
    stop = np.zeros(V, np.bool_)
    for v in stop_vertices:
        stop[vidx[v]] = True

    tg = sorted(((eidx[p.edge], float(p.x), key) for p, key in targets), key=lambda r: (r[0], r[1]))
    for ek, x, key in tg:
        L = edge_len[ek]
        if not (2 * cfg.delta < x and (math.isinf(L) or x < L - 2 * cfg.delta)):
            raise SimulationError(f"target {x} on edge {edges[ek]!r} is within 2*delta of a vertex")
    tgt_ptr = np.zeros(E + 1, np.int64)
    for ek, _, _ in tg:
        tgt_ptr[ek + 1] += 1
    tgt_ptr = np.cumsum(tgt_ptr)
    tgt_x = np.array([r[1] for r in tg], float)
    tgt_id = np.arange(len(tg), dtype=np.int64)

    h = f_step or cfg.delta / 2
    if f is None:
        f_tab = np.zeros((E, 1))
        f_n = np.zeros(E, np.int64)
        f_v = np.zeros(V)
    else:
        ext_len = external_table or (10.0 + 8.0 * math.sqrt(cfg.horizon))
        tabs = [f.tabulate(e, h, ext_len if g.is_external(e) else None) for e in edges]
        width = max(len(t) for t in tabs)
        f_tab = np.zeros((E, width))
        f_n = np.zeros(E, np.int64)
        for k, t in enumerate(tabs):
            f_tab[k, : len(t)] = t
            f_n[k] = len(t)
        vv = f.vertex_values()
        f_v = np.array([vv[v] for v in g.vertices])
    arrays = (
        edge_len, edge_v0, edge_v1,
        vclass, vrate, inc_ptr, np.array(inc_edge, np.int64), np.array(inc_end, np.int64),
        np.array(inc_p, float), p_stay, p_kill, stop,
        tgt_ptr, tgt_x, tgt_id,
        f_tab, f_n, float(h), f_v,
    )
    return Compiled(g, edges, g.vertices, arrays, tuple((edges[r[0]], r[1], r[2]) for r in tg), h)


def _start(c: Compiled, xi: GraphPoint) -> tuple[int, float, int]:
    g = c.graph
    if xi is CEMETERY:
        raise SimulationError("cannot start at the cemetery")
    g.check_point(xi)
    if isinstance(xi, Vertex):
        return -1, 0.0, c.vertex_ids.index(xi.vertex)
    p = g.point(xi.edge, xi.x)
    if isinstance(p, Vertex):
        return -1, 0.0, c.vertex_ids.index(p.vertex)
    return c.edge_ids.index(p.edge), float(p.x), -1


# -- batches -------------------------------------------------------------------


@dataclass
class BatchResult:
    first_t: np.ndarray
    first_v: np.ndarray
    stop_t: np.ndarray
    code: np.ndarray
    stop_id: np.ndarray
    death_t: np.ndarray
    integral: np.ndarray
    visits: np.ndarray

    @property
    def n(self) -> int:
        return len(self.code)

    @property
    def censored(self) -> np.ndarray:
        return self.code == CENSORED


def run_batch(c: Compiled, cfg: SimConfig, lam: float, starts, t0=None, path_ids=None,
              streams=None, exclude=None) -> BatchResult:
    """Run one path per start ``(edge, x, vertex)`` triple (kernel indices).

    ``exclude[p]`` is a vertex index at which path ``p`` does not stop.
    """
    s_edge = np.ascontiguousarray([s[0] for s in starts], np.int64)
    s_x = np.ascontiguousarray([s[1] for s in starts], float)
    s_vertex = np.ascontiguousarray([s[2] for s in starts], np.int64)
    n = len(s_edge)
    t0 = np.zeros(n) if t0 is None else np.ascontiguousarray(t0, float)
    path_ids = np.arange(n, dtype=np.int64) if path_ids is None else np.ascontiguousarray(path_ids, np.int64)
    streams = np.zeros(n, np.int64) if streams is None else np.ascontiguousarray(streams, np.int64)
    exclude = np.full(n, -1, np.int64) if exclude is None else np.ascontiguousarray(exclude, np.int64)
    out = BatchResult(
        np.empty(n), np.empty(n, np.int64), np.empty(n), np.empty(n, np.int64), np.empty(n, np.int64),
        np.empty(n), np.empty(n), np.zeros((n, len(c.vertex_ids)), np.int64),
    )

    def work(lo: int, hi: int):
        K.run_batch(
            *c.arrays, float(lam), cfg.delta, cfg.dt_max, cfg.horizon, cfg.bridge,
            s_edge, s_x, s_vertex, t0, path_ids, streams, exclude, int(cfg.seed), lo, hi,
            out.first_t, out.first_v, out.stop_t, out.code, out.stop_id, out.death_t, out.integral,
            out.visits,
        )

    if cfg.workers == 1 or n < 2 * cfg.workers:
        work(0, n)
    else:
        bounds = np.linspace(0, n, cfg.workers + 1).astype(int)
        with ThreadPoolExecutor(cfg.workers) as pool:
            list(pool.map(lambda k: work(bounds[k], bounds[k + 1]), range(cfg.workers)))
    return out


def _batch_from(g, data, xi0, cfg, lam=0.0, **kw) -> tuple[Compiled, BatchResult]:
    c = compile_inputs(g, data, cfg, **kw)
    start = _start(c, xi0)
    return c, run_batch(c, cfg, lam, [start] * cfg.paths)


# -- single trajectories -------------------------------------------------------


@dataclass
class CrossoverChain:
    """Crossover times ``S_n`` and vertices ``K_n``; ``None`` stands for the cemetery."""

    steps: list
    censored: bool = False

    def __post_init__(self):
        times = [s for s, _ in self.steps]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("crossover times must increase strictly")
        for s, k in self.steps:
            if (k is None) != math.isinf(s):
                raise ValueError("K_n is the cemetery exactly when S_n is infinite")

    @property
    def absorbed(self) -> bool:
        return bool(self.steps) and self.steps[-1][1] is None


@dataclass
class Trajectory:
    graph: MetricGraph
    times: np.ndarray
    edges: np.ndarray  # kernel edge index, -1 at a vertex, -2 at the cemetery
    xs: np.ndarray
    vertices: np.ndarray
    edge_ids: tuple
    vertex_ids: tuple
    lifetime: float
    censored: bool
    local_time: dict
    crossovers: CrossoverChain | None = None
    integral: float = 0.0
    stop_code: int = CENSORED

    def __len__(self) -> int:
        return len(self.times)

    def point(self, k: int) -> GraphPoint:
        e = int(self.edges[k])
        if e == K.EV_CEMETERY:
            return CEMETERY
        if e == K.EV_VERTEX:
            return Vertex(self.vertex_ids[int(self.vertices[k])])
        return Interior(self.edge_ids[e], float(self.xs[k]))

    def points(self) -> list:
        return [self.point(k) for k in range(len(self))]

    def vertex_visits(self) -> list[tuple[float, str]]:
        return [(float(self.times[k]), self.vertex_ids[int(self.vertices[k])])
                for k in range(len(self)) if self.edges[k] == K.EV_VERTEX]


def _record(c: Compiled, cfg: SimConfig, lam: float, start, t0: float, path: int, stream: int,
            exclude: int = -1):
    cap = 4096
    while True:
        rec_t, rec_x = np.empty(cap), np.empty(cap)
        rec_e, rec_v = np.empty(cap, np.int64), np.empty(cap, np.int64)
        visits = np.zeros(len(c.vertex_ids), np.int64)
        res = K.walk(
            *c.arrays, float(lam), cfg.delta, cfg.dt_max, cfg.horizon, cfg.bridge,
            start[0], float(start[1]), start[2], float(t0), int(cfg.seed), path, stream, exclude,
            visits, True, rec_t, rec_e, rec_x, rec_v,
        )
        nrec = res[7]
        if nrec >= 0:
            return res, visits, rec_t[:nrec], rec_e[:nrec], rec_x[:nrec], rec_v[:nrec]
        cap *= 4


def _dedupe(t, e, x, v):
    """Drop events whose time does not advance (zero-length stays, segment joins)."""
    keep = np.ones(len(t), bool)
    keep[1:] = t[1:] > t[:-1]
    return t[keep], e[keep], x[keep], v[keep]


def simulate_path(g: MetricGraph, data: WentzellData, xi0: GraphPoint, cfg: SimConfig, path: int = 0,
                  f=None, lam: float = 0.0) -> Trajectory:
    """One recorded trajectory, reproducible from ``(cfg.seed, path)``."""
    c = compile_inputs(g, data, cfg, f=f)
    start = _start(c, xi0)
    res, visits, t, e, x, v = _record(c, cfg, lam, start, 0.0, path, 0)
    t, e, x, v = _dedupe(t, e, x, v)
    code = int(res[3])
    return Trajectory(
        g, t, e, x, v, c.edge_ids, c.vertex_ids,
        lifetime=float(res[5]),
        censored=code == CENSORED,
        local_time={vid: cfg.delta * int(visits[k]) for k, vid in enumerate(c.vertex_ids)},
        integral=float(res[6]),
        stop_code=code,
    )


def extract_crossovers(traj: Trajectory, connected: Sequence[str], start: GraphPoint | None = None) -> CrossoverChain:
    """``S_n``: first visit to a connected vertex other than ``K_{n-1}``.

    ``K_0`` is the start vertex when the path starts in ``connected``.
    The chain ends with ``(inf, None)`` unless the trajectory was censored.
    """
    connected = set(connected)
    start = start if start is not None else traj.point(0)
    last = start.vertex if isinstance(start, Vertex) and start.vertex in connected else None
    steps = []
    for t, v in traj.vertex_visits():
        if v in connected and v != last:
            if steps and t <= steps[-1][0]:
                continue
            if not steps and t == 0.0 and last is None:
                last = v  # started here
                continue
            steps.append((t, v))
            last = v
    if not traj.censored:
        steps.append((math.inf, None))
    return CrossoverChain(steps, censored=traj.censored)


# -- Monte Carlo estimators ------------------------------------------------------


def mc_hitting_transform(g: MetricGraph, data: WentzellData, xi0: GraphPoint, lam: float,
                         cfg: SimConfig, vertices: Sequence[str] | None = None) -> dict[str, Estimate]:
    """``E[exp(-lam H) ; X_H = v]`` for the first hit ``H`` of ``vertices`` (default: all), per vertex."""
    stops = g.vertices if vertices is None else tuple(vertices)
    c, b = _batch_from(g, data, xi0, cfg, 0.0, stop_vertices=stops)
    if vertices is not None:
        hit = b.code == STOP_VERTEX
        b.first_v = np.where(hit, b.stop_id, -1)
        b.first_t = np.where(hit, b.stop_t, math.inf)
    disc = np.where(b.first_v >= 0, np.exp(-lam * np.where(np.isfinite(b.first_t), b.first_t, 0.0)), 0.0)
    return {v: Estimate.of(np.where(b.first_v == k, disc, 0.0)) for k, v in enumerate(c.vertex_ids)}


def mc_resolvent(g: MetricGraph, data: WentzellData, xi0: GraphPoint, lam: float, f, cfg: SimConfig) -> Estimate:
    """Monte Carlo ``E[int_0^{zeta ^ T} exp(-lam t) f(X_t) dt]`` (trapezoid along each path)."""
    if f is None:
        return Estimate(0.0, 0.0, cfg.paths)
    _, b = _batch_from(g, data, xi0, cfg, lam, f=f)
    return Estimate.of(b.integral)


def mc_killing_transform(g: MetricGraph, data: WentzellData, xi0: GraphPoint, lam: float,
                         cfg: SimConfig) -> Estimate:
    """``E[exp(-lam zeta)]`` for the lifetime ``zeta`` (zero if alive at the horizon)."""
    _, b = _batch_from(g, data, xi0, cfg, lam)
    dead = b.code == DIED
    return Estimate.of(np.where(dead, np.exp(-lam * np.where(dead, b.death_t, 0.0)), 0.0))


def exit_edge_frequencies(g: MetricGraph, data: WentzellData, v: str, radius: float,
                          cfg: SimConfig) -> dict[HalfEdge, Estimate]:
    """Which incident edge the path first reaches distance ``radius`` on, starting at ``v``."""
    targets = []
    for h in g.incident(v):
        L = g.length(h.edge)
        if not radius < L / 2:
            raise SimulationError("radius must be below half of every incident edge length")
        targets.append((Interior(h.edge, radius if h.end == 0 else L - radius), h))
    c, b = _batch_from(g, data, Vertex(v), cfg, 0.0, targets=targets)
    keys = [t[2] for t in c.targets]
    hit = b.code == STOP_TARGET
    return {h: Estimate.of(hit & (b.stop_id == keys.index(h))) for h in g.incident(v)}


def holding_times(g: MetricGraph, data: WentzellData, v: str, cfg: SimConfig) -> np.ndarray:
    """Lifetimes of paths started at ``v`` (``inf`` if alive at the horizon)."""
    _, b = _batch_from(g, data, Vertex(v), cfg, 0.0)
    return np.where(b.code == DIED, b.death_t, math.inf)


# -- glued simulation ------------------------------------------------------------


def union_data(smap: ShadowMap, data: WentzellData) -> WentzellData:
    """Carry vertex data from the joined graph over to the disjoint union."""
    g0 = smap.union()
    if data.graph.vertices == g0.vertices and set(data.graph.edges) == set(g0.edges):
        return data
    back = {}
    for p in smap.pairs:
        g = data.graph
        ie = g.internal_edge(p.new_edge)
        v1 = smap.g1.external_edge(p.edge1).anchor
        end_at_v1 = 0 if ie.initial == v1 else 1
        back[HalfEdge(p.new_edge, end_at_v1)] = HalfEdge(p.edge1, 0)
        back[HalfEdge(p.new_edge, 1 - end_at_v1)] = HalfEdge(p.edge2, 0)
    raw = {}
    for v in g0.vertices:
        d = data[v]
        raw[v] = (d.a, {back.get(h, h): x for h, x in d.b.items()}, d.c)
    return validate_and_normalize(g0, raw)


def joined_data(smap: ShadowMap, joined: MetricGraph, data1: WentzellData, data2: WentzellData) -> WentzellData:
    """Vertex data on the joined graph from data on the two components."""
    fwd = {}
    for p in smap.pairs:
        ie = joined.internal_edge(p.new_edge)
        v1 = smap.g1.external_edge(p.edge1).anchor
        end_at_v1 = 0 if ie.initial == v1 else 1
        fwd[HalfEdge(p.edge1, 0)] = HalfEdge(p.new_edge, end_at_v1)
        fwd[HalfEdge(p.edge2, 0)] = HalfEdge(p.new_edge, 1 - end_at_v1)
    raw = {}
    for data in (data1, data2):
        for v in data.graph.vertices:
            d = data[v]
            raw[v] = (d.a, {fwd.get(h, h): x for h, x in d.b.items()}, d.c)
    return validate_and_normalize(joined, raw)


@dataclass
class GlueBatch:
    first_t: np.ndarray  # first vertex hit on the joined graph
    first_v: list
    integral: np.ndarray
    transitions: np.ndarray  # rows: path, n, S_{n-1}, K_{n-1}, S_n, K_n (K index, -1 = cemetery, -2 = censored)
    vertex_ids: tuple
    stages: int

    def chain_vertex(self, k: int):
        return self.vertex_ids[k] if k >= 0 else None


def _shadow_targets(smap: ShadowMap):
    return [(s.point, k) for k, s in enumerate(smap.shadows)]


def _next_vertex(c: Compiled, smap: ShadowMap, vindex, code: int, stop_id: int) -> int:
    """Kernel index of the crossover vertex a stage ended at, or -1."""
    if code == STOP_TARGET:
        return vindex[smap.shadows[c.targets[stop_id][2]].vertex]
    if code == STOP_VERTEX:
        return stop_id
    return -1


def _glue_setup(smap: ShadowMap, data: WentzellData, cfg: SimConfig, xi0: GraphPoint, f=None,
                stop_all: bool = False):
    g0 = smap.union()
    f0 = _union_function(smap, g0, f) if f is not None else None
    stops = g0.vertices if stop_all else smap.connected
    c = compile_inputs(g0, union_data(smap, data), cfg, targets=_shadow_targets(smap),
                       stop_vertices=stops, f=f0)
    if isinstance(xi0, Interior) and _joined_graph(smap, data) is not None:
        xi0 = Interior(*smap.to_union(xi0.edge, xi0.x))
    return c, _start(c, xi0)


def glue_batch(g1: MetricGraph, g2: MetricGraph, smap: ShadowMap, data: WentzellData, xi0: GraphPoint,
               cfg: SimConfig, lam: float = 0.0, f=None, max_stages: int = 100_000,
               stop_at_vertex: bool = False) -> GlueBatch:
    """Many glued paths at once, run stage by stage on the disjoint union.

    ``xi0`` and ``f`` live on the joined graph.  A stage ends when the path
    reaches a connected vertex other than the one it started from, either
    directly or through a shadow vertex; the next stage restarts there with
    a fresh random stream.  With ``stop_at_vertex`` only the first stage is
    run and it ends at any vertex.
    """
    c, start = _glue_setup(smap, data, cfg, xi0, f, stop_all=stop_at_vertex)
    vindex = {v: k for k, v in enumerate(c.vertex_ids)}
    n = cfg.paths
    first_t = np.full(n, math.inf)
    first_v = np.full(n, -1, np.int64)
    integral = np.zeros(n)
    rows = []
    active = np.arange(n)
    starts = [start] * n
    t0 = np.zeros(n)
    k_prev = np.full(n, start[2] if start[0] < 0 else -1, np.int64)
    s_prev = np.zeros(n)
    stage = 0
    while len(active) and stage < max_stages:
        b = run_batch(c, cfg, lam, starts, t0=t0, path_ids=active,
                      streams=np.full(len(active), stage), exclude=k_prev)
        integral[active] += b.integral
        k_next = np.array([_next_vertex(c, smap, vindex, cd, sid) for cd, sid in zip(b.code, b.stop_id)],
                          np.int64)
        moved = k_next >= 0
        if stage == 0:
            first_t[active] = np.where(b.first_v >= 0, b.first_t, math.inf)
            first_v[active] = b.first_v
            via_shadow = (b.code == STOP_TARGET) & (b.first_v < 0)
            first_t[active[via_shadow]] = b.stop_t[via_shadow]
            first_v[active[via_shadow]] = k_next[via_shadow]
        s_next = np.where(moved, b.stop_t, math.inf)
        k_rec = np.where(moved, k_next, np.where(b.code == CENSORED, -2, -1))
        rows.append(np.column_stack([active, np.full(len(active), stage + 1), s_prev, k_prev, s_next, k_rec]))
        keep = moved & (not stop_at_vertex)
        active = active[keep]
        starts = [(-1, 0.0, int(k)) for k in k_next[keep]]
        t0 = b.stop_t[keep]
        s_prev = t0.copy()
        k_prev = k_next[keep]
        stage += 1
    trans = np.concatenate(rows) if rows else np.zeros((0, 6))
    return GlueBatch(first_t, [c.vertex_ids[k] if k >= 0 else None for k in first_v], integral, trans,
                     c.vertex_ids, stage)


def _joined_graph(smap: ShadowMap, data: WentzellData):
    """The joined graph when ``data`` refers to it, else ``None``."""
    return None if set(data.graph.edges) == set(smap.union().edges) else data.graph


def _union_function(smap: ShadowMap, g0: MetricGraph, f):
    """Move an integrand from the joined graph to the disjoint union.

    On a paired external edge the part up to the shadow vertex copies the
    joining edge (sampled finely); the path never goes beyond it.
    """
    parts = {e: f[e] for e in g0.edges if f.graph.has_edge(e)}
    for p in smap.pairs:
        src = f[p.new_edge]
        xs = np.linspace(0.0, p.length, 2049)
        for edge, flip in ((p.edge1, p.orientation != 1), (p.edge2, p.orientation == 1)):
            ys = src(p.length - xs) if flip else src(xs)
            parts[edge] = linear_interpolant(xs, ys, math.inf)
    return EdgeFunction(g0, parts)


def glue_simulate(g1: MetricGraph, g2: MetricGraph, smap: ShadowMap, data: WentzellData, xi0: GraphPoint,
                  cfg: SimConfig, path: int = 0, max_stages: int = 100_000) -> Trajectory:
    """One glued trajectory in joined-graph coordinates, with its crossover chain."""
    joined = _joined_graph(smap, data)
    c, start = _glue_setup(smap, data, cfg, xi0)
    vindex = {v: k for k, v in enumerate(c.vertex_ids)}
    t0, exclude = 0.0, (start[2] if start[0] < 0 else -1)
    pts_t, pts = [], []
    steps = []
    visits = {v: 0 for v in c.vertex_ids}
    censored, lifetime, code = True, math.inf, CENSORED
    for stage in range(max_stages):
        res, vis, t, e, x, v = _record(c, cfg, 0.0, start, t0, path, stage, exclude)
        for k, vid in enumerate(c.vertex_ids):
            # a restart re-counts its starting vertex
            visits[vid] += int(vis[k]) - (1 if stage > 0 and k == start[2] else 0)
        for k in range(len(t)):
            if e[k] == K.EV_CEMETERY:
                pts.append(CEMETERY)
            elif e[k] == K.EV_VERTEX:
                pts.append(Vertex(c.vertex_ids[v[k]]))
            else:
                pts.append(_to_joined_point(smap, c.edge_ids[e[k]], float(x[k]), joined))
            pts_t.append(float(t[k]))
        code = int(res[3])
        kn = _next_vertex(c, smap, vindex, code, int(res[4]))
        if kn < 0:
            censored = code == CENSORED
            lifetime = float(res[5])
            if not censored:
                steps.append((math.inf, None))
            break
        steps.append((float(res[2]), c.vertex_ids[kn]))
        pts[-1] = Vertex(c.vertex_ids[kn])
        start, t0, exclude = (-1, 0.0, kn), float(res[2]), kn
    times, keep_pts = [], []
    for tt, pp in zip(pts_t, pts):
        if times and tt <= times[-1]:
            continue
        times.append(tt)
        keep_pts.append(pp)
    target = joined or smap.union()
    e_ids, v_ids = target.edges, target.vertices
    edges = np.array([K.EV_CEMETERY if p is CEMETERY else K.EV_VERTEX if isinstance(p, Vertex)
                      else e_ids.index(p.edge) for p in keep_pts], np.int64)
    xs = np.array([p.x if isinstance(p, Interior) else 0.0 for p in keep_pts])
    vs = np.array([v_ids.index(p.vertex) if isinstance(p, Vertex) else -1 for p in keep_pts], np.int64)
    return Trajectory(
        target, np.array(times), edges, xs, vs, e_ids, v_ids, lifetime, censored,
        {vid: cfg.delta * n for vid, n in visits.items()},
        crossovers=CrossoverChain(steps, censored=censored), stop_code=code,
    )


def _to_joined_point(smap: ShadowMap, edge: str, x: float, joined) -> GraphPoint:
    if joined is None:
        return Interior(edge, x)
    e, y = smap.to_joined(edge, x)
    return joined.point(e, y)
