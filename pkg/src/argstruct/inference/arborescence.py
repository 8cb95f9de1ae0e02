"""Maximum spanning arborescence (Chu-Liu/Edmonds)."""
from __future__ import annotations

from typing import Mapping

import numba
import numpy as np


class InfeasibleError(ValueError):
    """No spanning arborescence exists under the given edges."""


@numba.njit(cache=True)
def _find_cycle_nb(parent, root):
    n = len(parent)
    color = np.zeros(n, dtype=np.int8)
    color[root] = 2
    path = np.empty(n, dtype=np.int64)
    for start in range(n):
        m = 0
        v = start
        while color[v] == 0:
            color[v] = 1
            path[m] = v
            m += 1
            v = parent[v]
        if color[v] == 1:
            k = 0
            while path[k] != v:
                k += 1
            return path[k:m].copy()
        for i in range(m):
            color[path[i]] = 2
    return np.empty(0, dtype=np.int64)


@numba.njit(cache=True)
def _greedy_parents(S, root):
    n = S.shape[0]
    parent = np.empty(n, dtype=np.int64)
    for d in range(n):
        best = 0
        for h in range(1, n):
            if S[h, d] > S[best, d]:
                best = h
        parent[d] = best
        if d != root and S[best, d] == -np.inf:
            parent[0] = -1
            return parent
    parent[root] = root
    return parent


@numba.njit(cache=True)
def cle_parents(S, root):
    """Chu-Liu/Edmonds on the score matrix S[head, dependent].

    Greedy best incoming edges; each cycle is contracted into one node and
    the smaller problem solved the same way, then the contractions are
    expanded in reverse. Ties go to the lowest head index. Returns the
    parent array (root maps to itself), or an array of -1 when some node
    has no admissible incoming edge.
    """
    n0 = S.shape[0]
    fail = np.full(n0, -1, dtype=np.int64)
    # contraction stack: greedy parents, kept nodes, entry/exit choices, root
    st_parent = []
    st_rest = []
    st_enter = []
    st_leave = []
    st_root = []
    while True:
        n = S.shape[0]
        S = S.copy()
        for i in range(n):
            S[i, root] = -np.inf
            S[i, i] = -np.inf
        parent = _greedy_parents(S, root)
        if parent[0] == -1:
            return fail
        cyc = _find_cycle_nb(parent, root)
        if len(cyc) == 0:
            break
        in_cycle = np.zeros(n, dtype=np.bool_)
        for v in cyc:
            in_cycle[v] = True
        c = n - len(cyc)
        rest = np.empty(c, dtype=np.int64)
        index = np.full(n, -1, dtype=np.int64)
        k = 0
        for v in range(n):
            if not in_cycle[v]:
                rest[k] = v
                index[v] = k
                k += 1
        S2 = np.full((c + 1, c + 1), -np.inf)
        for i in range(c):
            for j in range(c):
                S2[i, j] = S[rest[i], rest[j]]
        enter_to = np.empty(c, dtype=np.int64)
        leave_from = np.empty(c, dtype=np.int64)
        for i in range(c):
            u = rest[i]
            bj = 0
            bg = -np.inf
            for j in range(len(cyc)):
                g = S[u, cyc[j]] - S[parent[cyc[j]], cyc[j]]
                if g > bg or j == 0:
                    bg = g
                    bj = j
            S2[i, c] = bg
            enter_to[i] = cyc[bj]
            bj = 0
            for j in range(1, len(cyc)):
                if S[cyc[j], u] > S[cyc[bj], u]:
                    bj = j
            S2[c, i] = S[cyc[bj], u]
            leave_from[i] = cyc[bj]
        st_parent.append(parent)
        st_rest.append(rest)
        st_enter.append(enter_to)
        st_leave.append(leave_from)
        st_root.append(root)
        S = S2
        root = index[root]
    sub = parent
    for lvl in range(len(st_parent) - 1, -1, -1):
        parent = st_parent[lvl]
        rest = st_rest[lvl]
        c = len(rest)
        out = parent.copy()
        for i in range(c):
            v = rest[i]
            if v == st_root[lvl]:
                continue
            h = sub[i]
            out[v] = st_leave[lvl][i] if h == c else rest[h]
        h = sub[c]
        out[st_enter[lvl][h]] = rest[h]
        sub = out
    return sub


def max_arborescence(n_nodes: int, root: int, edge_scores) -> set[tuple[int, int]]:
    """Maximum-score spanning arborescence rooted at ``root``.

    ``edge_scores`` is an (n, n) array indexed [head, dependent] with
    ``-inf`` marking absent edges, or a mapping (head, dependent) -> score.
    Among equal-scoring choices the lower-index head wins. Raises
    InfeasibleError when some node cannot be reached from the root.
    """
    if isinstance(edge_scores, Mapping):
        S = np.full((n_nodes, n_nodes), -np.inf)
        for (h, d), s in edge_scores.items():
            S[h, d] = s
    else:
        S = np.array(edge_scores, dtype=float)
    if S.shape != (n_nodes, n_nodes):
        raise ValueError("edge score matrix must be n_nodes x n_nodes")
    if np.isnan(S).any():
        raise ValueError("NaN edge score")
    if n_nodes == 1:
        return set()
    parent = cle_parents(S, root)
    if parent[0] == -1:
        raise InfeasibleError("some node cannot be reached from the root")
    return {(int(parent[d]), d) for d in range(n_nodes) if d != root}


def arborescence_score(edges, edge_scores) -> float:
    """Total score, summed in order of dependent so equal trees give equal floats."""
    S = np.asarray(edge_scores, dtype=float)
    return float(sum(S[h, d] for h, d in sorted(edges, key=lambda e: (e[1], e[0]))))
