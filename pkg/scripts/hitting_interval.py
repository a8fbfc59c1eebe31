"""First-passage transforms on a unit interval and on a half-line, MC against closed forms.

Usage: python3 scripts/hitting_interval.py [--paths N] [--delta D] [--seed S]
"""

import argparse
import math

from metricbm.graph import Interior, build_graph
from metricbm.resolvent import passage_weights
from metricbm.simulate import SimConfig, mc_hitting_transform
from metricbm.wentzell import standard_data


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--paths", type=int, default=100_000)
    ap.add_argument("--delta", type=float, default=0.005)
    ap.add_argument("--horizon", type=float, default=20.0)
    ap.add_argument("--seed", type=int, default=1)
    args = ap.parse_args()
    cfg = SimConfig(delta=args.delta, horizon=args.horizon, seed=args.seed, paths=args.paths)

    interval = build_graph(["u", "w"], [("i", "u", "w", 1.0)], [])
    print("graph,start,lambda,vertex,exact,mc,se,z")
    for x in (0.25, 0.5, 0.75):
        for lam in (0.5, 2.0):
            xi = Interior("i", x)
            exact = passage_weights(interval, lam, xi)
            est = mc_hitting_transform(interval, standard_data(interval), xi, lam, cfg)
            for v in ("u", "w"):
                e = est[v]
                print(f"interval,{x},{lam},{v},{exact[v]:.6f},{e.value:.6f},{e.se:.2g},{(e.value - exact[v]) / e.se:.2f}")

    half = build_graph(["v"], [], [("e", "v")])
    for x in (0.5, 1.0):
        for lam in (0.5, 2.0):
            exact = math.exp(-math.sqrt(2 * lam) * x)
            e = mc_hitting_transform(half, standard_data(half), Interior("e", x), lam, cfg)["v"]
            print(f"half-line,{x},{lam},v,{exact:.6f},{e.value:.6f},{e.se:.2g},{(e.value - exact) / e.se:.2f}")


if __name__ == "__main__":
    main()
