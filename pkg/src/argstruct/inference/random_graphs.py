"""Random feasible factor graphs mixing every factor kind, for testing inference."""
from __future__ import annotations

import numpy as np

from ..graph import LOGIC_KINDS, Factor, FactorGraph, Potentials
from .arborescence import InfeasibleError
from .exact import brute_force_map


def _tree_edges(n_nodes: int) -> list[tuple[int, int]]:
    return [(h, d) for d in range(1, n_nodes) for h in range(n_nodes) if h != d]


def random_factor_graph(rng: np.random.Generator, max_vars: int = 12, scale: float = 1.0,
                        max_tries: int = 100) -> tuple[FactorGraph, Potentials]:
    """Sample a feasible graph with dense, logic and (sometimes) tree factors."""
    for _ in range(max_tries):
        factors = []
        arities: list[int] = []
        if max_vars >= 3 and rng.random() < 0.5:
            n_nodes = int(rng.integers(2, 4 if max_vars < 6 else 5))
            edges = _tree_edges(n_nodes)
            if len(edges) <= max_vars - 1:
                factors.append(Factor("tree", tuple(range(len(edges))), role="tree",
                                      n_nodes=n_nodes, edges=tuple(edges)))
                arities += [2] * len(edges)
        n = int(rng.integers(max(1, len(arities)), max_vars + 1))
        while len(arities) < n:
            arities.append(2 if rng.random() < 0.7 else 3)
        binary = [v for v in range(n) if arities[v] == 2]
        states = 1
        for a in arities:
            states *= a
        if states > 2 ** 20:
            continue
        for _ in range(int(rng.integers(0, n + 2))):
            m = int(rng.integers(1, min(3, n) + 1))
            vs = tuple(int(v) for v in rng.choice(n, size=m, replace=False))
            factors.append(Factor("dense", vs, role="random"))
        for _ in range(int(rng.integers(0, 4))):
            if len(binary) < 2:
                break
            m = int(rng.integers(2, min(4, len(binary)) + 1))
            vs = tuple(int(v) for v in rng.choice(binary, size=m, replace=False))
            logic = LOGIC_KINDS[int(rng.integers(len(LOGIC_KINDS)))]
            neg = tuple(bool(x) for x in rng.random(m) < 0.4)
            factors.append(Factor("logic", vs, role="random", logic=logic, negated=neg))
        graph = FactorGraph(tuple(arities), tuple(factors))
        unary = [rng.normal(scale=scale, size=a) for a in arities]
        tables = {i: rng.normal(scale=scale, size=tuple(arities[v] for v in f.variables))
                  for i, f in enumerate(factors) if f.kind == "dense"}
        pots = Potentials(unary, tables)
        try:
            brute_force_map(graph, pots)
        except InfeasibleError:
            continue
        return graph, pots
    raise RuntimeError("could not sample a feasible graph")
