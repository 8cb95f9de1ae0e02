"""Exact MAP: exhaustive enumeration (test oracle) and branch-and-bound over AD3."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..graph import FactorGraph, Potentials, score_assignment
from .ad3 import Ad3Config, ad3_solve
from .arborescence import InfeasibleError

BRUTE_FORCE_LIMIT = 2 ** 20


@dataclass
class MapResult:
    assignment: list[int]
    score: float
    nodes: int = 0               # branch-and-bound nodes visited
    relaxation: object = None    # root RelaxedSolution, when available


class NodeBudgetExceeded(RuntimeError):
    """Branch-and-bound gave up; ``incumbent`` holds the best assignment found."""

    def __init__(self, msg: str, incumbent: MapResult | None):
        super().__init__(msg)
        self.incumbent = incumbent


def _all_assignments(arities) -> np.ndarray:
    return np.indices(arities, dtype=np.int32).reshape(len(arities), -1).T


def _feasible_trees(Y: np.ndarray, factor) -> np.ndarray:
    """Vectorized arborescence test over the rows of Y (members' states)."""
    N = len(Y)
    n = factor.n_nodes
    parent = np.zeros((N, n), dtype=np.int64)
    indeg = np.zeros((N, n), dtype=np.int64)
    for i, (h, d) in enumerate(factor.edges):
        on = Y[:, i] == 1
        parent[on, d] = h
        indeg[on, d] += 1
    ok = (indeg[:, 0] == 0) & np.all(indeg[:, 1:] == 1, axis=1)
    # after n steps every node of an arborescence has walked up to the root
    node = np.tile(np.arange(n), (N, 1))
    rows = np.arange(N)[:, None]
    for _ in range(n):
        node = parent[rows, node]
    return ok & np.all(node == 0, axis=1)


def brute_force_map(graph: FactorGraph, potentials: Potentials) -> MapResult:
    """Exhaustive MAP honoring every hard factor; ties go to the first assignment
    in lexicographic order. Raises ValueError beyond 2**20 joint states."""
    potentials.check(graph)
    ar = graph.arities
    if not ar:
        return MapResult([], 0.0)
    total = float(np.prod([float(a) for a in ar]))
    if total > BRUTE_FORCE_LIMIT:
        raise ValueError(f"state space of {total:.0f} exceeds the brute-force limit")
    Y = _all_assignments(ar)
    score = np.zeros(len(Y))
    for v, u in enumerate(potentials.unary):
        score += np.asarray(u, float)[Y[:, v]]
    feasible = np.ones(len(Y), dtype=bool)
    for i, f in enumerate(graph.factors):
        S = Y[:, list(f.variables)]
        if f.kind == "dense":
            score += potentials.tables[i][tuple(S.T)]
        elif f.kind == "logic":
            lit = np.where(np.array(f.negated), 1 - S, S).sum(axis=1)
            if f.logic == "or_with_negations":
                feasible &= lit >= 1
            elif f.logic == "at_most_one":
                feasible &= lit <= 1
            else:
                feasible &= lit == 1
        else:
            feasible &= _feasible_trees(S, f)
    if not feasible.any():
        raise InfeasibleError("no assignment satisfies the hard factors")
    score = np.where(feasible, score, -np.inf)
    k = int(np.argmax(score))
    return MapResult([int(s) for s in Y[k]], float(score[k]))


def _branch_variable(marginals, fixed, threshold):
    """Unclamped variable whose distribution is nearest uniform (ties: lowest id)."""
    best, best_dist = -1, np.inf
    for v, m in enumerate(marginals):
        if fixed[v] >= 0 or len(m) < 2:
            continue
        if m.max() >= 1.0 - threshold:
            continue
        dist = float(np.sum((m - 1.0 / len(m)) ** 2))
        if dist < best_dist:
            best, best_dist = v, dist
    if best < 0:
        # nothing fractional but no certificate either: split the least certain one
        free = [v for v in range(len(marginals)) if fixed[v] < 0 and len(marginals[v]) > 1]
        if free:
            best = min(free, key=lambda v: (marginals[v].max(), v))
    return best


def branch_and_bound(graph: FactorGraph, potentials: Potentials, config: Ad3Config | None = None,
                     node_budget: int = 10000, tol: float = 1e-10) -> MapResult:
    """Exact MAP by depth-first branch-and-bound with AD3 dual bounds.

    A subtree is pruned when its bound does not beat the incumbent by more
    than ``tol``; the bounds are valid whether or not AD3 converged, so the
    returned score is the true maximum.
    """
    config = config or Ad3Config()
    n = graph.n_variables
    incumbent: MapResult | None = None
    stack = [np.full(n, -1, dtype=np.int64)]
    nodes = 0
    root = None

    def offer(y, s):
        nonlocal incumbent
        if s > -np.inf and (incumbent is None or s > incumbent.score):
            incumbent = MapResult(list(y), float(s))

    while stack:
        fixed = stack.pop()
        nodes += 1
        if nodes > node_budget:
            raise NodeBudgetExceeded(f"branch-and-bound exceeded {node_budget} nodes", incumbent)
        if np.all(fixed >= 0):
            offer(fixed.tolist(), score_assignment(graph, potentials, fixed.tolist()))
            continue
        try:
            sol = ad3_solve(graph, potentials, config, fixed)
        except InfeasibleError:
            continue
        if root is None:
            root = sol
        offer(sol.assignment, sol.assignment_score)
        if sol.is_integral:
            continue
        if incumbent is not None and sol.objective <= incumbent.score + tol:
            continue
        v = _branch_variable(sol.marginals, fixed, config.integrality_threshold)
        order = np.argsort(-sol.marginals[v], kind="stable")
        for s in order[::-1]:                   # most likely state explored first
            child = fixed.copy()
            child[v] = s
            stack.append(child)
    if incumbent is None:
        raise InfeasibleError("no assignment satisfies the hard factors")
    incumbent.nodes = nodes
    incumbent.relaxation = root
    return incumbent
