"""Graph files, named integrands and start-point specs."""

from __future__ import annotations

import csv
import hashlib
import json
from fractions import Fraction
from pathlib import Path

import numpy as np

from .graph import GraphError, GraphPoint, HalfEdge, Interior, MetricGraph, Vertex, build_graph
from .resolvent import EdgeFunction
from .wentzell import WentzellData, WentzellError, validate_and_normalize


class ParseError(ValueError):
    pass


def _load_json(source) -> dict:
    if isinstance(source, dict):
        return source
    text = Path(source).read_text(encoding="utf-8") if not str(source).lstrip().startswith("{") else str(source)
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"line {exc.lineno}, column {exc.colno}: {exc.msg}") from None


def graph_from_dict(doc: dict, allow_tadpoles: bool = True) -> tuple[MetricGraph, WentzellData]:
    try:
        vertices = [str(v) for v in doc["vertices"]]
        internal = [(str(i["id"]), str(i["from"]), str(i["to"]), float(i["length"])) for i in doc.get("internal", [])]
        external = [(str(e["id"]), str(e["at"])) for e in doc.get("external", [])]
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"malformed graph entry: {exc!r}") from None
    g = build_graph(vertices, internal, external)
    if g.tadpoles and not allow_tadpoles:
        raise GraphError(
            f"graph has tadpoles {list(g.tadpoles)}; eliminate them (eliminate_tadpole) or pass --allow-tadpole"
        )
    raw = {}
    for entry in doc.get("wentzell", []):
        try:
            v = str(entry["vertex"])
            raw[v] = {"a": float(entry.get("a", 0.0)), "c": float(entry.get("c", 0.0)), "b": dict(entry.get("b", {}))}
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"malformed wentzell entry: {exc!r}") from None
        if v not in g.vertices:
            raise WentzellError(f"wentzell data for unknown vertex {v!r}")
    for v in g.vertices:
        if v not in raw:
            ends = g.incident(v)
            raw[v] = (0.0, [1.0] * len(ends), 0.0)
    return g, validate_and_normalize(g, raw)


def load_graph(source, allow_tadpoles: bool = True) -> tuple[MetricGraph, WentzellData]:
    """Parse a graph file (path, JSON text or dict) into a graph and normalized vertex data."""
    return graph_from_dict(_load_json(source), allow_tadpoles)


def graph_to_dict(g: MetricGraph, data: WentzellData | None = None) -> dict:
    doc = {
        "vertices": list(g.vertices),
        "internal": [{"id": i.id, "from": i.initial, "to": i.terminal, "length": i.length} for i in g.internal],
        "external": [{"id": e.id, "at": e.anchor} for e in g.external],
    }
    if data is not None:
        rows = []
        for v in g.vertices:
            d = data[v]
            b = {}
            for h in g.incident(v):
                if h.edge in b:
                    continue
                if g.is_internal(h.edge) and g.internal_edge(h.edge).is_tadpole:
                    b[h.edge] = [d.b[HalfEdge(h.edge, 0)], d.b[HalfEdge(h.edge, 1)]]
                else:
                    b[h.edge] = d.b[h]
            rows.append({"vertex": v, "a": d.a, "c": d.c, "b": b})
        doc["wentzell"] = rows
    return doc


def dumps_graph(g: MetricGraph, data: WentzellData | None = None) -> str:
    return json.dumps(graph_to_dict(g, data), indent=2) + "\n"


def graph_hash(g: MetricGraph, data: WentzellData | None = None) -> str:
    return hashlib.sha256(dumps_graph(g, data).encode()).hexdigest()[:12]


def parse_point(g: MetricGraph, spec: str) -> GraphPoint:
    """``"vertex:ID"`` or ``"EDGE:X"``."""
    head, _, tail = spec.partition(":")
    if head == "vertex":
        if tail not in g.vertices:
            raise ParseError(f"unknown vertex {tail!r}")
        return Vertex(tail)
    if not g.has_edge(head):
        raise ParseError(f"unknown edge {head!r} in point spec {spec!r}")
    try:
        return g.point(head, float(tail))
    except ValueError:
        raise ParseError(f"bad coordinate in point spec {spec!r}") from None


def point_from_dict(g: MetricGraph, d: dict) -> GraphPoint:
    if "vertex" in d:
        return parse_point(g, f"vertex:{d['vertex']}")
    return parse_point(g, f"{d['edge']}:{d['x']}")


def load_samples_csv(g: MetricGraph, path) -> EdgeFunction:
    """CSV with columns ``edge,x,value`` on a uniform grid shared by all edges."""
    rows: dict[str, list[tuple[float, float]]] = {}
    with open(path, newline="") as fh:
        for r in csv.DictReader(fh):
            rows.setdefault(r["edge"], []).append((float(r["x"]), float(r["value"])))
    steps = {round(b[0] - a[0], 12) for pts in rows.values() for a, b in zip(sorted(pts), sorted(pts)[1:])}
    if len(steps) != 1:
        raise ParseError("sample grid must be uniform with one step for all edges")
    h = steps.pop()
    return EdgeFunction.from_samples(g, {e: np.array([v for _, v in sorted(p)]) for e, p in rows.items()}, h)


def named_function(g: MetricGraph, spec: str) -> EdgeFunction:
    """Integrands by name.

    ``zero``; ``one`` or ``const:C``; ``exp`` or ``exp:RATE`` (decaying on
    external edges, constant on internal ones); ``sin:EDGE[:MODES]``;
    ``indicator:EDGE:LO:HI``; ``csv:PATH``.
    """
    name, _, rest = spec.partition(":")
    args = rest.split(":") if rest else []
    try:
        if name == "zero":
            return EdgeFunction.constant(g, 0.0)
        if name == "one":
            return EdgeFunction.constant(g, 1.0)
        if name == "const":
            return EdgeFunction.constant(g, float(args[0]))
        if name == "exp":
            return EdgeFunction.exp(g, float(args[0]) if args else 1.0)
        if name == "sin":
            return EdgeFunction.sine(g, args[0], int(args[1]) if len(args) > 1 else 1)
        if name == "indicator":
            return EdgeFunction.indicator(g, args[0], float(args[1]), float(args[2]))
        if name == "csv":
            return load_samples_csv(g, rest)
    except (IndexError, ValueError, KeyError) as exc:
        raise ParseError(f"bad function spec {spec!r}: {exc}") from None
    raise ParseError(f"unknown function spec {spec!r}")


def fmt_weight(x: float) -> str:
    """Short exact-looking rendering of a probability (``1/3`` rather than ``0.3333``)."""
    fr = Fraction(x).limit_denominator(64)
    if abs(float(fr) - x) < 1e-12:
        return str(fr)
    return f"{x:.6g}"
