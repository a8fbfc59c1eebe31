"""Monte Carlo versus analytic comparison reports driven by scenario files.

A scenario is a JSON document::

    {
      "graph": "path/to/graph.json" | {...inline graph...},
      "mc": {"delta": 0.005, "horizon": 20, "paths": 100000, "seed": 1},
      "allowance": 2.0,
      "simulate_wentzell": [...],          # optional: different data for the MC side
      "rows": [
        {"kind": "hitting",   "start": {"edge": "i", "x": 0.5}, "lambda": 0.5, "vertex": "u"},
        {"kind": "resolvent", "start": {"vertex": "v"}, "lambda": 1, "f": "exp"},
        {"kind": "killing",   "start": {"vertex": "v"}, "lambda": 1},
        {"kind": "exit",      "vertex": "v", "radius": 0.5, "edge": "e1"},
        {"kind": "holding",   "vertex": "v"}
      ]
    }

Each row passes when ``|analytic - mc| <= 3 SE + allowance * delta``.
"""

from __future__ import annotations

import csv
import io as _io
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .graph import HalfEdge
from .io import graph_from_dict, graph_hash, named_function, point_from_dict
from .resolvent import EdgeFunction, passage_weights, solve_resolvent
from .simulate import (
    Estimate,
    SimConfig,
    exit_edge_frequencies,
    holding_times,
    mc_hitting_transform,
    mc_killing_transform,
    mc_resolvent,
)
from .wentzell import ExponentialHolding, Instantaneous, classify_vertex

Z_LEVEL = 3.0


@dataclass
class ComparisonRow:
    name: str
    analytic: float
    mc: float
    se: float
    allowance: float

    @property
    def z(self) -> float:
        return (self.mc - self.analytic) / self.se if self.se > 0 else (0.0 if self.mc == self.analytic else math.inf)

    @property
    def passed(self) -> bool:
        return abs(self.analytic - self.mc) <= Z_LEVEL * self.se + self.allowance


@dataclass
class ComparisonReport:
    rows: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.rows)

    HEADER = ("quantity", "analytic", "mc", "se", "z", "allowance", "pass")

    def _records(self):
        for r in self.rows:
            yield (r.name, f"{r.analytic:.6g}", f"{r.mc:.6g}", f"{r.se:.3g}", f"{r.z:.2f}",
                   f"{r.allowance:.3g}", "pass" if r.passed else "FAIL")

    def to_csv(self) -> str:
        buf = _io.StringIO()
        for k, v in self.meta.items():
            buf.write(f"# {k}={v}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.HEADER)
        w.writerows(self._records())
        return buf.getvalue()

    def to_table(self) -> str:
        recs = [self.HEADER, *self._records()]
        widths = [max(len(r[k]) for r in recs) for k in range(len(self.HEADER))]
        lines = ["  ".join(c.ljust(wd) for c, wd in zip(r, widths)) for r in recs]
        meta = ", ".join(f"{k}={v}" for k, v in self.meta.items())
        return (meta + "\n" if meta else "") + "\n".join(lines) + "\n"


def load_scenario(source) -> dict:
    if isinstance(source, dict):
        return source
    path = Path(source)
    doc = json.loads(path.read_text(encoding="utf-8"))
    if isinstance(doc.get("graph"), str):
        doc["graph"] = json.loads((path.parent / doc["graph"]).read_text(encoding="utf-8"))
    return doc


def run_scenario(scenario, overrides: dict | None = None) -> ComparisonReport:
    sc = load_scenario(scenario)
    rows_spec = sc.get("rows", [])
    mc = dict(sc.get("mc", {}))
    mc.update({k: v for k, v in (overrides or {}).items() if v is not None})
    cfg = SimConfig(**mc) if mc else SimConfig()
    if not rows_spec:
        return ComparisonReport([], {"seed": cfg.seed, "delta": cfg.delta, "horizon": cfg.horizon, "paths": cfg.paths})
    g, data = graph_from_dict(sc["graph"])
    sim_data = data
    if "simulate_wentzell" in sc:
        _, sim_data = graph_from_dict({**sc["graph"], "wentzell": sc["simulate_wentzell"]})
    allow = float(sc.get("allowance", 2.0)) * cfg.delta
    report = ComparisonReport(meta={
        "seed": cfg.seed, "delta": cfg.delta, "horizon": cfg.horizon, "paths": cfg.paths,
        "graph": graph_hash(g, data),
    })
    for k, spec in enumerate(rows_spec):
        kind = spec["kind"]
        cfg_k = replace(cfg, seed=cfg.seed + 1000 * k)
        if kind == "hitting":
            xi = point_from_dict(g, spec["start"])
            lam, v = float(spec["lambda"]), spec["vertex"]
            exact = passage_weights(g, lam, xi)[v]
            est = mc_hitting_transform(g, sim_data, xi, lam, cfg_k)[v]
            name = f"hitting[{v}] from {_fmt_point(xi)} lam={lam:g}"
        elif kind == "resolvent":
            xi = point_from_dict(g, spec["start"])
            lam = float(spec["lambda"])
            f = named_function(g, spec.get("f", "exp"))
            exact = solve_resolvent(g, data, lam, f).at(xi)
            est = mc_resolvent(g, sim_data, xi, lam, f, cfg_k)
            name = f"resolvent[{spec.get('f', 'exp')}] at {_fmt_point(xi)} lam={lam:g}"
        elif kind == "killing":
            xi = point_from_dict(g, spec["start"])
            lam = float(spec["lambda"])
            exact = 1.0 - lam * solve_resolvent(g, data, lam, EdgeFunction.constant(g, 1.0)).at(xi)
            est = mc_killing_transform(g, sim_data, xi, lam, cfg_k)
            name = f"killing at {_fmt_point(xi)} lam={lam:g}"
        elif kind == "exit":
            v, radius, edge = spec["vertex"], float(spec["radius"]), spec["edge"]
            cls = classify_vertex(data, v)
            half = next(h for h in g.incident(v) if h.edge == edge)
            # exit weights; meaningful for vertices without killing
            exact = cls.weights[half] if isinstance(cls, Instantaneous) else 0.0
            freq = exit_edge_frequencies(g, sim_data, v, radius, cfg_k)
            est = freq[HalfEdge(half.edge, half.end)]
            name = f"exit[{edge}] at {v} r={radius:g}"
        elif kind == "holding":
            v = spec["vertex"]
            cls = classify_vertex(data, v)
            exact = 1.0 / cls.rate if isinstance(cls, ExponentialHolding) else math.inf
            times = holding_times(g, sim_data, v, cfg_k)
            est = Estimate.of(np.where(np.isfinite(times), times, cfg.horizon))
            name = f"holding mean at {v}"
        else:
            raise ValueError(f"unknown row kind {kind!r}")
        report.rows.append(ComparisonRow(name, float(exact), est.value, est.se, allow))
    return report


def _fmt_point(p) -> str:
    if hasattr(p, "edge"):
        return f"{p.edge}:{p.x:g}"
    return f"vertex:{p.vertex}"
