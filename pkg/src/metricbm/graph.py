"""Finite metric graphs: construction, local coordinates, distances, joins.

Edges are either *external* (isometric to ``[0, inf)``, attached to one
vertex at ``x = 0``) or *internal* (isometric to ``[0, length]``, running
from an initial vertex at ``x = 0`` to a terminal vertex at ``x = length``).
The canonical edge order puts all external edges first, then all internal
edges, each group in declaration order.  That order fixes the layout of
the boundary trace vectors used by :mod:`metricbm.wentzell`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Union

import networkx as nx


class GraphError(ValueError):
    """Raised for malformed graphs or invalid graph operations."""


class HalfEdge(NamedTuple):
    """One end of an edge: ``end`` is 0 for ``x = 0`` and 1 for ``x = length``."""

    edge: str
    end: int


@dataclass(frozen=True)
class InternalEdge:
    id: str
    initial: str
    terminal: str
    length: float

    @property
    def is_tadpole(self) -> bool:
        return self.initial == self.terminal


@dataclass(frozen=True)
class ExternalEdge:
    id: str
    anchor: str


# -- points -----------------------------------------------------------------


@dataclass(frozen=True)
class Interior:
    """A point strictly inside an edge, ``x`` measured from the edge's ``x = 0`` end."""

    edge: str
    x: float


@dataclass(frozen=True)
class Vertex:
    vertex: str


class _Cemetery:
    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "CEMETERY"

    def __reduce__(self):
        return (_Cemetery, ())


CEMETERY = _Cemetery()

GraphPoint = Union[Interior, Vertex, _Cemetery]


# -- graph ------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class MetricGraph:
    """Immutable finite metric graph.  Build it with :func:`build_graph`."""

    vertices: tuple[str, ...]
    internal: tuple[InternalEdge, ...]
    external: tuple[ExternalEdge, ...]
    _index: dict = field(default=None, repr=False, compare=False)

    # ordering helpers
    @property
    def edges(self) -> tuple[str, ...]:
        """Edge ids in canonical order: external first, then internal."""
        return tuple(e.id for e in self.external) + tuple(i.id for i in self.internal)

    @property
    def n_trace(self) -> int:
        return len(self.external) + 2 * len(self.internal)

    def is_external(self, edge: str) -> bool:
        return self._index["kind"][edge] == "external"

    def is_internal(self, edge: str) -> bool:
        return self._index["kind"][edge] == "internal"

    def has_edge(self, edge: str) -> bool:
        return edge in self._index["kind"]

    def length(self, edge: str) -> float:
        """Edge length; ``inf`` for external edges."""
        if self.is_external(edge):
            return math.inf
        return self._index["internal"][edge].length

    def internal_edge(self, edge: str) -> InternalEdge:
        return self._index["internal"][edge]

    def external_edge(self, edge: str) -> ExternalEdge:
        return self._index["external"][edge]

    def endpoint(self, half: HalfEdge) -> str:
        if self.is_external(half.edge):
            if half.end != 0:
                raise GraphError(f"external edge {half.edge!r} has no end {half.end}")
            return self._index["external"][half.edge].anchor
        i = self._index["internal"][half.edge]
        return i.initial if half.end == 0 else i.terminal

    def incident(self, v: str) -> tuple[HalfEdge, ...]:
        """Half-edges at ``v`` in canonical order (a tadpole contributes both ends)."""
        return self._index["incident"][v]

    def trace_index(self, half: HalfEdge) -> int:
        """Position of ``half`` in the trace vectors f(V), f'(V), f''(V)."""
        ne, ni = len(self.external), len(self.internal)
        if self.is_external(half.edge):
            return self._index["pos"][half.edge]
        k = self._index["pos"][half.edge] - ne
        return ne + k if half.end == 0 else ne + ni + k

    def vertex_index(self, v: str) -> int:
        return self._index["vpos"][v]

    def edge_index(self, edge: str) -> int:
        return self._index["pos"][edge]

    @property
    def tadpoles(self) -> tuple[str, ...]:
        return tuple(i.id for i in self.internal if i.is_tadpole)

    @property
    def total_length(self) -> float:
        return sum(i.length for i in self.internal)

    # points
    def point(self, edge: str, x: float) -> GraphPoint:
        """Canonical point at local coordinate ``x`` on ``edge``."""
        if not self.has_edge(edge):
            raise GraphError(f"unknown edge {edge!r}")
        x = float(x)
        if x < 0 or x > self.length(edge):
            raise GraphError(f"coordinate {x} outside edge {edge!r}")
        if x == 0:
            return Vertex(self.endpoint(HalfEdge(edge, 0)))
        if self.is_internal(edge) and x == self.length(edge):
            return Vertex(self.endpoint(HalfEdge(edge, 1)))
        return Interior(edge, x)

    def check_point(self, p: GraphPoint) -> None:
        if isinstance(p, Vertex):
            if p.vertex not in self._index["vpos"]:
                raise GraphError(f"unknown vertex {p.vertex!r}")
        elif isinstance(p, Interior):
            if not self.has_edge(p.edge):
                raise GraphError(f"unknown edge {p.edge!r}")
            if not 0 < p.x < self.length(p.edge):
                raise GraphError(f"{p} is not interior to its edge")
        elif p is not CEMETERY:
            raise GraphError(f"not a graph point: {p!r}")

    def components(self) -> list[set[str]]:
        h = nx.Graph()
        h.add_nodes_from(self.vertices)
        h.add_edges_from((i.initial, i.terminal) for i in self.internal)
        return [set(c) for c in nx.connected_components(h)]


def build_graph(
    vertices,
    internal_specs=(),
    external_specs=(),
    *,
    allow_tadpoles: bool = True,
) -> MetricGraph:
    """Validate edge specifications and return a :class:`MetricGraph`.

    ``internal_specs`` holds ``(id, initial, terminal, length)`` tuples (or
    :class:`InternalEdge`), ``external_specs`` holds ``(id, anchor)`` tuples
    (or :class:`ExternalEdge`).
    """
    vertices = tuple(str(v) for v in vertices)
    if len(set(vertices)) != len(vertices):
        raise GraphError("duplicate vertex id")
    vset = set(vertices)
    internal = tuple(
        s if isinstance(s, InternalEdge) else InternalEdge(str(s[0]), str(s[1]), str(s[2]), float(s[3]))
        for s in internal_specs
    )
    external = tuple(
        s if isinstance(s, ExternalEdge) else ExternalEdge(str(s[0]), str(s[1]))
        for s in external_specs
    )
    ids = [e.id for e in external] + [i.id for i in internal]
    if len(set(ids)) != len(ids):
        raise GraphError("duplicate edge id")
    for i in internal:
        if i.initial not in vset or i.terminal not in vset:
            raise GraphError(f"edge {i.id!r} references an undeclared vertex")
        if not (i.length > 0 and math.isfinite(i.length)):
            raise GraphError(f"edge {i.id!r} must have a positive finite length, got {i.length}")
        if i.is_tadpole and not allow_tadpoles:
            raise GraphError(f"edge {i.id!r} is a tadpole")
    for e in external:
        if e.anchor not in vset:
            raise GraphError(f"edge {e.id!r} references an undeclared vertex")

    incident: dict[str, list[HalfEdge]] = {v: [] for v in vertices}
    for e in external:
        incident[e.anchor].append(HalfEdge(e.id, 0))
    for i in internal:
        incident[i.initial].append(HalfEdge(i.id, 0))
        incident[i.terminal].append(HalfEdge(i.id, 1))
    for v, hs in incident.items():
        if not hs:
            raise GraphError(f"vertex {v!r} is isolated")

    index = {
        "kind": {**{e.id: "external" for e in external}, **{i.id: "internal" for i in internal}},
        "internal": {i.id: i for i in internal},
        "external": {e.id: e for e in external},
        "incident": {v: tuple(hs) for v, hs in incident.items()},
        "pos": {eid: k for k, eid in enumerate(ids)},
        "vpos": {v: k for k, v in enumerate(vertices)},
    }
    return MetricGraph(vertices, internal, external, index)


# -- distance ---------------------------------------------------------------


def _attach(h: nx.Graph, g: MetricGraph, node, p: GraphPoint):
    if isinstance(p, Vertex):
        return p.vertex
    h.add_node(node)
    if g.is_external(p.edge):
        h.add_edge(node, g.endpoint(HalfEdge(p.edge, 0)), weight=p.x)
    else:
        i = g.internal_edge(p.edge)
        _add_min(h, node, i.initial, p.x)
        _add_min(h, node, i.terminal, i.length - p.x)
    return node


def _add_min(h: nx.Graph, u, v, w: float) -> None:
    if u == v:
        return
    if h.has_edge(u, v):
        w = min(w, h[u][v]["weight"])
    h.add_edge(u, v, weight=w)


def distance(g: MetricGraph, xi: GraphPoint, eta: GraphPoint) -> float:
    """Length of a shortest path along the edges; ``inf`` across components."""
    if xi is CEMETERY or eta is CEMETERY:
        raise GraphError("distance is undefined at the cemetery")
    g.check_point(xi)
    g.check_point(eta)
    if xi == eta:
        return 0.0
    h = nx.Graph()
    h.add_nodes_from(g.vertices)
    for i in g.internal:
        _add_min(h, i.initial, i.terminal, i.length)
    a = _attach(h, g, ("pt", 0), xi)
    b = _attach(h, g, ("pt", 1), eta)
    best = math.inf
    if isinstance(xi, Interior) and isinstance(eta, Interior) and xi.edge == eta.edge:
        best = abs(xi.x - eta.x)
    try:
        best = min(best, nx.dijkstra_path_length(h, a, b))
    except nx.NetworkXNoPath:
        pass
    return best


# -- joining ----------------------------------------------------------------


@dataclass(frozen=True)
class JoinedPair:
    edge1: str  # external edge of g1
    edge2: str  # external edge of g2
    new_edge: str
    length: float
    orientation: int  # +1: runs g1 -> g2, -1: runs g2 -> g1


@dataclass(frozen=True)
class Shadow:
    """A shadow vertex: an interior point of a component graph standing in for ``vertex``."""

    point: Interior
    vertex: str
    component: int  # 1 or 2: graph that contains ``point``
    pair: int


@dataclass(frozen=True)
class ShadowMap:
    """Bookkeeping produced by :func:`join_graphs`."""

    g1: MetricGraph
    g2: MetricGraph
    pairs: tuple[JoinedPair, ...]
    shadows: tuple[Shadow, ...]

    @property
    def connected(self) -> tuple[str, ...]:
        """Vertices touched by a new internal edge, without duplicates."""
        out: list[str] = []
        for s in self.shadows:
            if s.vertex not in out:
                out.append(s.vertex)
        return tuple(out)

    def kappa(self, point: GraphPoint) -> str:
        for s in self.shadows:
            if s.point == point:
                return s.vertex
        raise KeyError(point)

    def union(self) -> MetricGraph:
        return disjoint_union(self.g1, self.g2)

    def to_joined(self, edge0: str, x: float) -> tuple[str, float]:
        """Map local coordinates on the disjoint union to the joined graph.

        Only the part of a paired external edge between its vertex and the
        shadow vertex has a counterpart (on the new internal edge).
        """
        for p in self.pairs:
            if edge0 == p.edge1:
                return p.new_edge, (x if p.orientation == 1 else p.length - x)
            if edge0 == p.edge2:
                return p.new_edge, (p.length - x if p.orientation == 1 else x)
        return edge0, x

    def to_union(self, edge: str, x: float) -> tuple[str, float]:
        """Map a joined-graph coordinate to the union; new edges live on the g2 side."""
        for p in self.pairs:
            if edge == p.new_edge:
                return p.edge2, (p.length - x if p.orientation == 1 else x)
        return edge, x


def disjoint_union(g1: MetricGraph, g2: MetricGraph) -> MetricGraph:
    clash = set(g1.vertices) & set(g2.vertices)
    clash |= set(g1.edges) & set(g2.edges)
    if clash:
        raise GraphError(f"graphs share ids {sorted(clash)}; rename before joining")
    return build_graph(
        g1.vertices + g2.vertices,
        g1.internal + g2.internal,
        g1.external + g2.external,
    )


def join_graphs(g1: MetricGraph, g2: MetricGraph, pairs) -> tuple[MetricGraph, ShadowMap]:
    """Connect external edges of ``g1`` and ``g2`` pairwise by new internal edges.

    ``pairs`` holds ``(edge1, edge2, length, orientation[, new_id])``.  With
    orientation ``+1`` the new edge runs from the vertex of ``edge1`` to the
    vertex of ``edge2``; with ``-1`` it runs the other way.
    """
    g0 = disjoint_union(g1, g2)
    used1: set[str] = set()
    used2: set[str] = set()
    jp: list[JoinedPair] = []
    for k, p in enumerate(pairs):
        e1, e2, length, sigma = p[0], p[1], float(p[2]), int(p[3])
        new_id = p[4] if len(p) > 4 else f"j{k + 1}"
        if not g1.has_edge(e1) or not g1.is_external(e1):
            raise GraphError(f"{e1!r} is not an external edge of the first graph")
        if not g2.has_edge(e2) or not g2.is_external(e2):
            raise GraphError(f"{e2!r} is not an external edge of the second graph")
        if e1 in used1 or e2 in used2:
            raise GraphError(f"edge paired twice in pair {k}")
        if not length > 0:
            raise GraphError("joining length must be positive")
        if sigma not in (1, -1):
            raise GraphError("orientation must be +1 or -1")
        if g0.has_edge(new_id) or any(q.new_edge == new_id for q in jp):
            raise GraphError(f"new edge id {new_id!r} already in use")
        used1.add(e1)
        used2.add(e2)
        jp.append(JoinedPair(e1, e2, new_id, length, sigma))

    new_internal = list(g0.internal)
    for p in jp:
        v1 = g1.external_edge(p.edge1).anchor
        v2 = g2.external_edge(p.edge2).anchor
        ends = (v1, v2) if p.orientation == 1 else (v2, v1)
        new_internal.append(InternalEdge(p.new_edge, ends[0], ends[1], p.length))
    paired = used1 | used2
    g = build_graph(g0.vertices, new_internal, [e for e in g0.external if e.id not in paired])

    shadows = []
    for k, p in enumerate(jp):
        v1 = g1.external_edge(p.edge1).anchor
        v2 = g2.external_edge(p.edge2).anchor
        # the far end of the new edge, seen from each side
        shadows.append(Shadow(Interior(p.edge2, p.length), v1, 2, k))
        shadows.append(Shadow(Interior(p.edge1, p.length), v2, 1, k))
    return g, ShadowMap(g1, g2, tuple(jp), tuple(shadows))


def unjoin(g: MetricGraph, smap: ShadowMap) -> MetricGraph:
    """Delete the joining edges and restore the paired external edges."""
    new_ids = {p.new_edge for p in smap.pairs}
    internal = [i for i in g.internal if i.id not in new_ids]
    restored = {p.edge1: smap.g1.external_edge(p.edge1) for p in smap.pairs}
    restored.update({p.edge2: smap.g2.external_edge(p.edge2) for p in smap.pairs})
    order = smap.g1.external + smap.g2.external
    present = {e.id for e in g.external}
    external = [e for e in order if e.id in present or e.id in restored]
    return build_graph(g.vertices, internal, external)


# -- tadpoles ---------------------------------------------------------------


def eliminate_tadpole(g: MetricGraph, data, edge: str, new_vertex: str | None = None):
    """Split tadpole ``edge`` at its midpoint by an auxiliary vertex.

    The auxiliary vertex gets standard conditions with weight 1/2 on each
    half, which is ordinary Brownian motion through the point.  Returns
    ``(graph, data)``; data at all original vertices is carried over with
    the two tadpole ends renamed to the two new edges.
    """
    from .wentzell import VertexData, WentzellData

    if not g.has_edge(edge) or not g.is_internal(edge):
        raise GraphError(f"{edge!r} is not an internal edge")
    t = g.internal_edge(edge)
    if not t.is_tadpole:
        raise GraphError(f"{edge!r} is not a tadpole")
    v0 = new_vertex or f"{edge}_mid"
    if v0 in g.vertices:
        raise GraphError(f"vertex id {v0!r} already in use")
    e_a, e_b = f"{edge}_a", f"{edge}_b"
    if g.has_edge(e_a) or g.has_edge(e_b):
        raise GraphError("split edge ids already in use")
    half = t.length / 2
    internal = []
    for i in g.internal:
        if i.id == edge:
            internal.append(InternalEdge(e_a, t.initial, v0, half))
            internal.append(InternalEdge(e_b, v0, t.terminal, half))
        else:
            internal.append(i)
    g2 = build_graph(g.vertices + (v0,), internal, g.external)

    rename = {HalfEdge(edge, 0): HalfEdge(e_a, 0), HalfEdge(edge, 1): HalfEdge(e_b, 1)}
    vd = {}
    for v in g.vertices:
        d = data[v]
        vd[v] = VertexData(d.a, {rename.get(h, h): b for h, b in d.b.items()}, d.c)
    vd[v0] = VertexData(0.0, {HalfEdge(e_a, 1): 0.5, HalfEdge(e_b, 0): 0.5}, 0.0)
    return g2, WentzellData(g2, vd)
