"""Command-line front end: ``metricbm {validate,resolve,simulate,compare,detscan,glue}``.

Exit codes: 0 success, 1 usage or parse error, 2 invariant violation,
3 comparison failure.
"""

from __future__ import annotations

import argparse
import csv
import io as _io
import math
import sys

import numpy as np

from .compare import run_scenario
from .graph import GraphError, join_graphs
from .io import ParseError, dumps_graph, fmt_weight, load_graph, named_function, parse_point
from .resolvent import graph_grid, solve_resolvent
from .simulate import (
    CENSORED,
    DIED,
    SimConfig,
    SimulationError,
    _record,
    _start,
    compile_inputs,
    joined_data,
    run_batch,
)
from .wentzell import (
    ExponentialHolding,
    SingularSystemError,
    Trap,
    WentzellError,
    assemble,
    classify_vertex,
    det_scan,
)

EXIT_OK, EXIT_USAGE, EXIT_INVARIANT, EXIT_COMPARE = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _emit(text: str, out: str | None) -> None:
    if out:
        with open(out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _rows_out(header, rows, fmt: str) -> str:
    rows = [[str(c) for c in r] for r in rows]
    if fmt == "table":
        recs = [list(header), *rows]
        widths = [max(len(r[k]) for r in recs) for k in range(len(header))]
        return "\n".join("  ".join(c.ljust(w) for c, w in zip(r, widths)) for r in recs) + "\n"
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _cfg(args) -> SimConfig:
    return SimConfig(delta=args.delta, horizon=args.horizon, seed=args.seed, paths=args.paths,
                     workers=getattr(args, "workers", 1))


# -- subcommands ------------------------------------------------------------------


def cmd_validate(args) -> int:
    g, data = load_graph(args.graph, allow_tadpoles=args.allow_tadpole)
    print(f"graph: {len(g.vertices)} vertices, {len(g.internal)} internal, {len(g.external)} external edges")
    for v in g.vertices:
        cls = classify_vertex(data, v)
        if isinstance(cls, Trap):
            desc = "Trap"
        elif isinstance(cls, ExponentialHolding):
            desc = f"ExponentialHolding rate={cls.rate:.6g}"
        else:
            w = ",".join(fmt_weight(cls.weights[h]) for h in g.incident(v))
            desc = f"Instantaneous w=({w})"
            if cls.stickiness:
                desc += f" stickiness={cls.stickiness:.6g}"
            if cls.kill_rate:
                desc += f" kill_rate={cls.kill_rate:.6g}"
        print(f"{v}: {desc}")
    return EXIT_OK


def cmd_resolve(args) -> int:
    g, data = load_graph(args.graph)
    f = named_function(g, args.f)
    sol = solve_resolvent(g, data, args.lam, f)
    grid = graph_grid(g, points=args.points, external_length=args.external_length, external_points=args.points)
    rows = [(e, f"{x:.10g}", f"{u:.12g}") for e, xs in grid.items() for x, u in zip(xs, sol(e, xs))]
    text = _rows_out(("edge", "x", "u"), rows, args.format)
    d = sol.diagnostics
    diag = (f"# lambda={sol.lam:.12g} abs_det={d['abs_det']:.6g} cond={d['cond']:.3g} retries={d['retries']}"
            f" wentzell_residual={d['wentzell_residual']:.3g} second_derivative_gap={d['second_derivative_gap']:.3g}\n")
    _emit(diag + text, args.out)
    return EXIT_OK


def cmd_simulate(args) -> int:
    g, data = load_graph(args.graph)
    cfg = _cfg(args)
    xi = parse_point(g, args.start)
    f = named_function(g, args.f) if args.f else None
    c = compile_inputs(g, data, cfg, f=f)
    start = _start(c, xi)
    b = run_batch(c, cfg, args.lam, [start] * cfg.paths)
    lam = args.lam
    rows = []

    def add(name, samples):
        samples = np.asarray(samples, float)
        se = samples.std(ddof=1) / math.sqrt(len(samples)) if len(samples) > 1 else float("nan")
        rows.append((name, f"{samples.mean():.10g}", f"{se:.4g}"))

    if f is not None:
        add(f"resolvent[{args.f}]", b.integral)
    dead = b.code == DIED
    add("killing_transform", np.where(dead, np.exp(-lam * np.where(dead, b.death_t, 0.0)), 0.0))
    hit_t = np.where(b.first_v >= 0, b.first_t, 0.0)
    for k, v in enumerate(c.vertex_ids):
        add(f"hitting_transform[{v}]", np.where(b.first_v == k, np.exp(-lam * hit_t), 0.0))
    add("censored_fraction", b.code == CENSORED)
    for k, v in enumerate(c.vertex_ids):
        add(f"local_time[{v}]", cfg.delta * b.visits[:, k])
    _emit(_rows_out(("estimator", "value", "se"), rows, args.format), args.out)
    if args.events:
        with open(args.events, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("path", "time", "edge", "x", "vertex"))
            for p in range(min(args.event_paths, cfg.paths)):
                _, _, t, e, x, v = _record(c, cfg, lam, start, 0.0, p, 0)
                for k in range(len(t)):
                    vk = int(v[k])
                    w.writerow((p, repr(float(t[k])), int(e[k]), repr(float(x[k])),
                                c.vertex_ids[vk] if vk >= 0 else ""))
    return EXIT_OK


def cmd_compare(args) -> int:
    overrides = {"seed": args.seed, "delta": args.delta, "horizon": args.horizon, "paths": args.paths}
    report = run_scenario(args.scenario, overrides)
    _emit(report.to_table() if args.format == "table" else report.to_csv(), args.out)
    return EXIT_OK if report.passed else EXIT_COMPARE


def cmd_detscan(args) -> int:
    g, data = load_graph(args.graph)
    m = assemble(g, data)
    re = np.linspace(args.re_min, args.re_max, args.re_n)
    im = np.linspace(args.im_min, args.im_max, args.im_n)
    rows = [(f"{a:.8g}", f"{b:.8g}", f"{d:.10g}", f"{lc:.6g}") for a, b, d, lc in det_scan(m, re, im)]
    _emit(_rows_out(("kappa_re", "kappa_im", "abs_det", "log10_cond"), rows, args.format), args.out)
    return EXIT_OK


def cmd_glue(args) -> int:
    g1, d1 = load_graph(args.graph1)
    g2, d2 = load_graph(args.graph2)
    pairs = []
    for spec in args.pair:
        parts = spec.split(":")
        if len(parts) not in (4, 5):
            raise ParseError(f"pair spec {spec!r} must be EDGE1:EDGE2:LENGTH:SIGN[:NEWID]")
        pairs.append((parts[0], parts[1], float(parts[2]), int(parts[3]), *parts[4:]))
    g, smap = join_graphs(g1, g2, pairs)
    data = joined_data(smap, g, d1, d2)
    _emit(dumps_graph(g, data), args.out)
    for s in smap.shadows:
        print(f"shadow {s.point.edge}:{s.point.x:g} (component {s.component}) -> {s.vertex}",
              file=sys.stderr if not args.out else sys.stdout)
    return EXIT_OK


# -- parser -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="metricbm", description="Brownian motion on metric graphs: simulation and resolvents")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, mc=False, lam=False):
        sp.add_argument("--out", help="write output here instead of stdout")
        sp.add_argument("--format", choices=("csv", "table"), default="csv")
        if lam:
            sp.add_argument("--lambda", dest="lam", type=float, default=1.0)
        if mc:
            sp.add_argument("--seed", type=int, default=None if mc == "optional" else 0)
            sp.add_argument("--delta", type=float, default=None if mc == "optional" else 0.005)
            sp.add_argument("--horizon", type=float, default=None if mc == "optional" else 20.0)
            sp.add_argument("--paths", type=int, default=None if mc == "optional" else 10_000)

    sp = sub.add_parser("validate", help="parse and validate a graph file")
    sp.add_argument("--graph", required=True)
    sp.add_argument("--allow-tadpole", action="store_true")
    sp.set_defaults(func=cmd_validate)

    sp = sub.add_parser("resolve", help="analytic resolvent on a grid")
    sp.add_argument("--graph", required=True)
    sp.add_argument("--f", default="exp", help="function spec (zero, one, const:C, exp[:R], sin:EDGE, csv:PATH)")
    sp.add_argument("--points", type=int, default=33)
    sp.add_argument("--external-length", type=float, default=5.0)
    common(sp, lam=True)
    sp.set_defaults(func=cmd_resolve)

    sp = sub.add_parser("simulate", help="Monte Carlo estimators from one start point")
    sp.add_argument("--graph", required=True)
    sp.add_argument("--start", required=True, help="EDGE:X or vertex:ID")
    sp.add_argument("--f", default=None)
    sp.add_argument("--workers", type=int, default=1)
    sp.add_argument("--events", help="CSV event log (path,time,edge,x,vertex; edge -1 at a vertex, -2 dead)")
    sp.add_argument("--event-paths", type=int, default=1)
    common(sp, mc=True, lam=True)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("compare", help="run a comparison scenario")
    sp.add_argument("--scenario", required=True)
    common(sp, mc="optional")
    sp.set_defaults(func=cmd_compare)

    sp = sub.add_parser("detscan", help="|det| and conditioning of the vertex system over complex kappa")
    sp.add_argument("--graph", required=True)
    sp.add_argument("--re-min", type=float, default=0.1)
    sp.add_argument("--re-max", type=float, default=5.0)
    sp.add_argument("--re-n", type=int, default=50)
    sp.add_argument("--im-min", type=float, default=-2.0)
    sp.add_argument("--im-max", type=float, default=2.0)
    sp.add_argument("--im-n", type=int, default=41)
    common(sp)
    sp.set_defaults(func=cmd_detscan)

    sp = sub.add_parser("glue", help="join two graphs along external edges")
    sp.add_argument("--graph1", required=True)
    sp.add_argument("--graph2", required=True)
    sp.add_argument("--pair", action="append", required=True, help="EDGE1:EDGE2:LENGTH:SIGN[:NEWID]")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_glue)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (ParseError, FileNotFoundError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (GraphError, WentzellError, SimulationError, SingularSystemError, ValueError) as exc:
        print(f"invalid: {exc}", file=sys.stderr)
        return EXIT_INVARIANT


if __name__ == "__main__":
    sys.exit(main())
