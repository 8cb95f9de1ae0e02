"""Compare AD3, branch-and-bound and exhaustive MAP on random factor graphs.

    python3 scripts/inference_check.py --n-graphs 1000 --max-vars 12
"""
import argparse
import time

import numpy as np

from argstruct.inference import branch_and_bound, brute_force_map
from argstruct.inference.random_graphs import random_factor_graph


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n-graphs", type=int, default=1000)
    ap.add_argument("--max-vars", type=int, default=12)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    t_exact = t_bb = 0.0
    n_integral, nodes, worst = 0, [], 0.0
    for _ in range(args.n_graphs):
        g, pots = random_factor_graph(rng, max_vars=args.max_vars)
        t0 = time.perf_counter()
        exact = brute_force_map(g, pots)
        t1 = time.perf_counter()
        bb = branch_and_bound(g, pots)
        t2 = time.perf_counter()
        t_exact += t1 - t0
        t_bb += t2 - t1
        n_integral += bb.relaxation.is_integral
        nodes.append(bb.nodes)
        worst = max(worst, abs(bb.score - exact.score))
    print(f"graphs {args.n_graphs}; integral root relaxations {n_integral / args.n_graphs:.1%}")
    print(f"branch-and-bound nodes: mean {np.mean(nodes):.2f}, max {max(nodes)}")
    print(f"max |bb - exhaustive| {worst:.2e}")
    print(f"time: exhaustive {t_exact:.1f}s, branch-and-bound {t_bb:.1f}s")


if __name__ == "__main__":
    main()
