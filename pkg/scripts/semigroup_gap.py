"""Resolvent-series semigroup on a trapped interval against the heat-kernel mode.

Prints, for several t and lambda, the series value at x = 0.5 next to
exp(-pi^2 t / 2) sin(pi x), plus the number of series terms used.
"""

import math

from metricbm.graph import build_graph
from metricbm.resolvent import EdgeFunction, semigroup_from_resolvent
from metricbm.wentzell import validate_and_normalize


def main():
    g = build_graph(["u", "w"], [("i", "u", "w", 1.0)], [])
    data = validate_and_normalize(g, {"u": (0.0, [0.0], 1.0), "w": (0.0, [0.0], 1.0)})
    f = EdgeFunction.sine(g, "i")
    print("t,lambda,terms,series,heat_mode,gap")
    for t in (0.0, 0.05, 0.1, 0.2):
        for lam in (4.0, 8.0, 16.0):
            if lam * t > 3:
                continue
            res = semigroup_from_resolvent(g, data, t, f, lam)
            val = float(res("i", 0.5)[0])
            heat = math.exp(-math.pi**2 * t / 2)
            print(f"{t},{lam},{res.n_terms},{val:.6f},{heat:.6f},{val - heat:.3g}")


if __name__ == "__main__":
    main()
