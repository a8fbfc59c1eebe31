"""Interval as two joined half-lines: glued pipeline against direct simulation.

Compares the hitting transforms from several starts and tabulates the
crossover-chain transitions of the glued pipeline.
"""

import argparse
from collections import Counter

from metricbm.graph import Interior, build_graph, join_graphs
from metricbm.simulate import SimConfig, glue_batch, mc_hitting_transform
from metricbm.wentzell import standard_data
import numpy as np


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--paths", type=int, default=50_000)
    ap.add_argument("--delta", type=float, default=0.005)
    ap.add_argument("--seed", type=int, default=11)
    args = ap.parse_args()
    cfg = SimConfig(delta=args.delta, horizon=20.0, seed=args.seed, paths=args.paths)
    g1 = build_graph(["u"], [], [("a", "u")])
    g2 = build_graph(["w"], [], [("b", "w")])
    joined, smap = join_graphs(g1, g2, [("a", "b", 1.0, 1)])
    data = standard_data(joined)
    edge = smap.pairs[0].new_edge
    print("start,lambda,vertex,glued,glued_se,direct,direct_se")
    for x in (0.25, 0.5, 0.75):
        xi = Interior(edge, x)
        direct = mc_hitting_transform(joined, data, xi, 1.0, cfg)
        gb = glue_batch(g1, g2, smap, data, xi, cfg, stop_at_vertex=True)
        for v in ("u", "w"):
            hit = np.array([fv == v for fv in gb.first_v])
            s = np.where(hit, np.exp(-np.where(hit, gb.first_t, 0.0)), 0.0)
            se = s.std(ddof=1) / np.sqrt(len(s))
            print(f"{x},1,{v},{s.mean():.5f},{se:.2g},{direct[v].value:.5f},{direct[v].se:.2g}")

    gb = glue_batch(g1, g2, smap, data, Interior(edge, 0.5), SimConfig(
        delta=args.delta, horizon=5.0, seed=args.seed, paths=args.paths // 10))
    counts = Counter((gb.chain_vertex(int(r[3])), gb.chain_vertex(int(r[5])) if r[5] >= 0 else "end")
                     for r in gb.transitions)
    print("\nfrom,to,count")
    for (a, b), n in sorted(counts.items(), key=str):
        print(f"{a},{b},{n}")


if __name__ == "__main__":
    main()
