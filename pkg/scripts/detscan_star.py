"""Scan |det| of the vertex system over complex kappa for a sticky-elastic star.

Writes plot-ready CSV and reports the smallest |det| found, to compare
with the closed-form zero set of the vertex determinant.
"""

import argparse
import sys

import numpy as np

from metricbm.graph import build_graph
from metricbm.wentzell import assemble, det_scan, validate_and_normalize


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="-")
    ap.add_argument("--n", type=int, default=101)
    args = ap.parse_args()
    g = build_graph(["v"], [], [("e1", "v"), ("e2", "v"), ("e3", "v")])
    data = validate_and_normalize(g, {"v": (0.3, [0.2, 0.2, 0.1], 0.2)})
    rows = det_scan(assemble(g, data), np.linspace(0.1, 5, args.n), np.linspace(-2, 2, args.n))
    out = sys.stdout if args.out == "-" else open(args.out, "w")
    out.write("kappa_re,kappa_im,abs_det,log10_cond\n")
    for r in rows:
        out.write(",".join(f"{v:.8g}" for v in r) + "\n")
    worst = min(rows, key=lambda r: r[2])
    print(f"min |det| = {worst[2]:.3g} at kappa = {worst[0]:.3g}{worst[1]:+.3g}i", file=sys.stderr)


if __name__ == "__main__":
    main()
