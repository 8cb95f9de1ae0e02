"""Alternating directions dual decomposition (AD3) over a ``FactorGraph``.

Each factor keeps its own copy ``q`` of the marginals of its members;
consensus marginals ``p`` and dual variables ``lam`` tie the copies
together. Unary potentials are split evenly across the factors touching a
variable. Variables outside every factor are decoded directly.

The reported ``objective`` is the dual value

    L(lam) = sum_f max_{y_f} [theta_f(y_f) + sum_v (theta_v / deg_v + lam_fv)(y_v)]

which upper-bounds the MAP score for any zero-sum ``lam``. A solution is
reported integral only once the rounded assignment is feasible and scores
within ``certificate_gap`` of that bound, which makes it provably optimal.
"""
from __future__ import annotations

import functools
from dataclasses import dataclass, field

import numpy as np

from ..graph import FactorGraph, Potentials, score_assignment
from .arborescence import InfeasibleError
from .qp import (ACTIVE_SET_CAP, ACTIVE_SET_MAX_ITER, TreeSpec, dense_active_set,
                 enumerate_configs, logic_feasible_rows, logic_map_rows, project_logic)

STATUSES = ("integral", "fractional", "max_iter")


@dataclass(frozen=True)
class Ad3Config:
    eta: float = 0.1
    max_iterations: int = 2000
    tolerance: float = 1e-6
    integrality_threshold: float = 1e-6
    certificate_gap: float = 1e-6
    check_every: int = 10

    def __post_init__(self):
        for name in ("eta", "tolerance", "integrality_threshold", "certificate_gap"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.max_iterations < 1 or self.check_every < 1:
            raise ValueError("max_iterations and check_every must be positive")


@dataclass
class RelaxedSolution:
    marginals: list[np.ndarray]              # per variable, simplex vectors
    factor_marginals: list[np.ndarray]       # dense: joint table; logic/tree: (m, 2)
    objective: float                         # dual bound on the MAP score
    primal_objective: float                  # relaxed score of the returned marginals
    status: str
    primal_residual: float
    dual_residual: float
    iterations: int
    assignment: list[int] = field(default_factory=list)   # per-variable argmax
    assignment_score: float = -np.inf
    state: "Ad3State | None" = None

    @property
    def is_integral(self) -> bool:
        return self.status == "integral"


@dataclass
class Ad3State:
    """Iterates of a finished solve, reusable as a warm start on the same graph."""

    p: np.ndarray
    lam: np.ndarray
    dense: list
    trees: list


# ---------------------------------------------------------------------------
# static layout of a graph

@dataclass
class _Layout:
    arities: np.ndarray
    voff: np.ndarray                 # variable -> first entry
    deg: np.ndarray                  # factors per variable
    mem_var: np.ndarray              # member entry -> variable
    mem_entry: np.ndarray            # member entry -> variable entry
    fstart: np.ndarray               # factor -> first member entry
    dense: list                      # (arities, factor ids, E (F, D), cfg)
    logic: list                      # (logic, factor ids, E_off, E_on, negated, var ids)
    trees: list                      # (factor id, E_off, E_on, var ids)


@functools.lru_cache(maxsize=32)
def _layout(graph: FactorGraph) -> _Layout:
    ar = np.array(graph.arities, dtype=np.int64)
    voff = np.concatenate([[0], np.cumsum(ar)]).astype(np.int64)
    deg = np.zeros(len(ar), dtype=np.int64)
    mem_var, mem_entry, fstart = [], [], []
    for f in graph.factors:
        fstart.append(len(mem_entry))
        for v in f.variables:
            deg[v] += 1
            for s in range(ar[v]):
                mem_var.append(v)
                mem_entry.append(voff[v] + s)
    fstart.append(len(mem_entry))
    fstart = np.array(fstart, dtype=np.int64)

    dense_groups: dict[tuple, list[int]] = {}
    logic_groups: dict[tuple, list[int]] = {}
    trees = []
    for i, f in enumerate(graph.factors):
        if f.kind == "dense":
            dense_groups.setdefault(tuple(ar[list(f.variables)]), []).append(i)
        elif f.kind == "logic":
            logic_groups.setdefault((f.logic, len(f.variables)), []).append(i)
        else:
            E = fstart[i] + 2 * np.arange(len(f.variables))
            trees.append((i, E, E + 1, np.array(f.variables)))
    dense = []
    for shape, ids in dense_groups.items():
        D = int(sum(shape))
        E = np.array([fstart[i] + np.arange(D) for i in ids], dtype=np.int64)
        dense.append((shape, np.array(ids), E, enumerate_configs(shape)))
    logic = []
    for (name, m), ids in logic_groups.items():
        base = np.array([fstart[i] for i in ids])[:, None] + 2 * np.arange(m)[None, :]
        neg = np.array([graph.factors[i].negated for i in ids], dtype=bool)
        vids = np.array([graph.factors[i].variables for i in ids], dtype=np.int64)
        logic.append((name, np.array(ids), base, base + 1, neg, vids))
    return _Layout(ar, voff, deg, np.array(mem_var, dtype=np.int64),
                   np.array(mem_entry, dtype=np.int64), fstart, dense, logic, trees)


# ---------------------------------------------------------------------------

def _dense_scores(lay: _Layout, graph: FactorGraph, potentials: Potentials,
                  fixed: np.ndarray | None):
    """Per dense group: (F, K) table scores with clamped-out configs at -inf."""
    out = []
    for shape, ids, E, cfg in lay.dense:
        b = np.stack([np.asarray(potentials.tables[i], float).ravel() for i in ids])
        if fixed is not None:
            # member j of factor f is clamped when fixed[var] >= 0
            states = cfg - np.concatenate([[0], np.cumsum(shape)[:-1]])[None, :]
            for row, i in enumerate(ids):
                for j, v in enumerate(graph.factors[i].variables):
                    if fixed[v] >= 0:
                        b[row, states[:, j] != fixed[v]] = -np.inf
            if np.isneginf(b).all(axis=1).any():
                raise InfeasibleError("a dense factor has no configuration left under the clamps")
        out.append(b)
    return out


def _bound(lay, theta, share, lam, dense_b, fixed, trees):
    """Dual value: sum of factor maxima of the split potentials plus loose variables."""
    c = share + lam
    total = 0.0
    for (shape, ids, E, cfg), b in zip(lay.dense, dense_b):
        vals = b + c[E][:, cfg].sum(axis=2)
        total += float(vals.max(axis=1).sum())
    for name, ids, Eoff, Eon, neg, vids in lay.logic:
        gains = c[Eon] - c[Eoff]
        z = logic_map_rows(name, gains, neg, None if fixed is None else fixed[vids])
        total += float(c[Eoff].sum() + (gains * z).sum())
    for (fid, Eoff, Eon, vids), spec in zip(lay.trees, trees):
        y = spec.map(np.stack([c[Eoff], c[Eon]], axis=1))
        total += float(np.where(y == 1, c[Eon], c[Eoff]).sum())
    for v in np.flatnonzero(lay.deg == 0):
        t = theta[lay.voff[v]:lay.voff[v + 1]]
        total += float(t[fixed[v]] if fixed is not None and fixed[v] >= 0 else t.max())
    return total


def _round(lay, p, fixed) -> list[int]:
    y = [int(np.argmax(p[lay.voff[v]:lay.voff[v + 1]])) for v in range(len(lay.arities))]
    if fixed is not None:
        y = [int(f) if f >= 0 else s for s, f in zip(y, fixed)]
    return y


def _vertex_solution(lay, graph, y):
    marg = [np.eye(k)[s] for k, s in zip(lay.arities, y)]
    fm = []
    for f in graph.factors:
        if f.kind == "dense":
            u = np.zeros(tuple(lay.arities[list(f.variables)]))
            u[tuple(y[v] for v in f.variables)] = 1.0
            fm.append(u)
        else:
            fm.append(np.array([marg[v] for v in f.variables]))
    return marg, fm


def ad3_solve(graph: FactorGraph, potentials: Potentials, config: Ad3Config | None = None,
              fixed=None, warm: Ad3State | None = None) -> RelaxedSolution:
    """Solve the LP relaxation of MAP over the local polytope with AD3.

    ``fixed`` optionally clamps variables (-1 = free, otherwise the state);
    it raises InfeasibleError when some factor has no admissible
    configuration left. Never raises on non-convergence: the status is then
    "max_iter" and ``objective`` is still a valid upper bound.

    ``warm`` resumes from the state of an earlier unclamped solve on the same
    graph (potentials may differ); it is ignored when variables are clamped.
    """
    config = config or Ad3Config()
    potentials.check(graph)
    lay = _layout(graph)
    n = len(lay.arities)
    eta = config.eta
    if fixed is not None:
        fixed = np.asarray(fixed, dtype=np.int64)
        if fixed.shape != (n,) or np.any(fixed >= lay.arities):
            raise ValueError("fixed must hold one state (or -1) per variable")
        if not (fixed >= 0).any():
            fixed = None
    theta = np.concatenate([np.asarray(u, float) for u in potentials.unary]) if n else np.zeros(0)
    if np.isinf(theta).any():
        raise ValueError("unary potentials must be finite")

    dense_b = _dense_scores(lay, graph, potentials, fixed)
    dense_a = [b / eta for b in dense_b]
    for name, ids, Eoff, Eon, neg, vids in lay.logic:
        if fixed is not None and not logic_feasible_rows(name, neg, fixed[vids]).all():
            raise InfeasibleError(f"{name} constraint cannot be satisfied under the clamps")
    trees = [TreeSpec.of(graph.factors[fid], None if fixed is None else fixed[vids])
             for fid, _, _, vids in lay.trees]

    deg_m = lay.deg[lay.mem_var].astype(float)
    share = theta[lay.mem_entry] / np.maximum(deg_m, 1.0)
    deg_e = np.repeat(lay.deg, lay.arities).astype(float)
    n_mem = len(lay.mem_entry)

    p = np.concatenate([np.full(k, 1.0 / k) for k in lay.arities]) if n else np.zeros(0)
    for v in np.flatnonzero(lay.deg == 0):
        t = theta[lay.voff[v]:lay.voff[v + 1]]
        s = fixed[v] if fixed is not None and fixed[v] >= 0 else int(np.argmax(t))
        p[lay.voff[v]:lay.voff[v + 1]] = np.eye(lay.arities[v])[s]
    lam = np.zeros(n_mem)
    q = np.zeros(n_mem)
    if warm is not None and fixed is None and len(warm.lam) == n_mem:
        loose = np.repeat(lay.deg == 0, lay.arities)
        p = np.where(loose, p, warm.p)
        lam = warm.lam.copy()
        dense_work = [tuple(x.copy() for x in w) for w in warm.dense]
        tree_work = [tuple(x.copy() for x in w) for w in warm.trees]
    else:
        dense_work = []
        for shape, ids, E, cfg in lay.dense:
            cap = min(ACTIVE_SET_CAP, cfg.shape[0])
            dense_work.append((np.zeros((len(ids), cap), dtype=np.int64),
                               np.zeros(len(ids), dtype=np.int64), np.zeros((len(ids), cap))))
        tree_work = [spec.workspace() for spec in trees]
    dense_u = [None] * len(lay.dense)

    def certify():
        y = _round(lay, p, fixed)
        score = score_assignment(graph, potentials, y)
        bound = _bound(lay, theta, share, lam, dense_b, fixed, trees)
        return y, score, bound

    r_primal = r_dual = np.inf
    it = 0
    status = None
    y = score = bound = None
    if n_mem == 0:
        status = "integral"
        r_primal = r_dual = 0.0
    while status is None and it < config.max_iterations:
        it += 1
        for g, (shape, ids, E, cfg) in enumerate(lay.dense):
            a = p[lay.mem_entry[E]] + (share[E] + lam[E]) / eta
            W, nW, alpha = dense_work[g]
            qg, dense_u[g] = dense_active_set(a, dense_a[g], cfg, W, nW, alpha,
                                              ACTIVE_SET_MAX_ITER, W.shape[1])
            q[E] = qg
        for name, ids, Eoff, Eon, neg, vids in lay.logic:
            a_off = p[lay.mem_entry[Eoff]] + (share[Eoff] + lam[Eoff]) / eta
            a_on = p[lay.mem_entry[Eon]] + (share[Eon] + lam[Eon]) / eta
            z = project_logic(name, (1.0 + a_on - a_off) / 2.0, neg,
                              None if fixed is None else fixed[vids])
            q[Eon] = z
            q[Eoff] = 1.0 - z
        for t, (fid, Eoff, Eon, vids) in enumerate(lay.trees):
            a = np.stack([p[lay.mem_entry[Eoff]] + (share[Eoff] + lam[Eoff]) / eta,
                          p[lay.mem_entry[Eon]] + (share[Eon] + lam[Eon]) / eta], axis=1)
            qt = trees[t].solve(a, tree_work[t])
            q[Eoff] = qt[:, 0]
            q[Eon] = qt[:, 1]

        p_old = p
        p = p.copy()
        active = deg_e > 0
        p[active] = (np.bincount(lay.mem_entry, q, minlength=len(p))[active] / deg_e[active])
        diff = q - p[lay.mem_entry]
        lam -= eta * diff
        r_primal = float(np.sqrt(np.mean(diff ** 2)))
        r_dual = float(eta * np.sqrt(np.mean((p - p_old)[lay.mem_entry] ** 2)))

        converged = r_primal < config.tolerance and r_dual < config.tolerance
        if converged or it % config.check_every == 0 or it == config.max_iterations:
            y, score, bound = certify()
            if bound - score <= config.certificate_gap:
                status = "integral"
            elif converged:
                status = "fractional"
    if status is None:
        status = "max_iter"

    if y is None:
        y, score, bound = certify()
    if status == "integral":
        marg, fm = _vertex_solution(lay, graph, y)
        primal = score
    else:
        marg = [np.clip(p[lay.voff[v]:lay.voff[v + 1]], 0.0, None) for v in range(n)]
        marg = [m / m.sum() for m in marg]
        fm = [None] * len(graph.factors)
        for g, (shape, ids, E, cfg) in enumerate(lay.dense):
            for row, i in enumerate(ids):
                fm[i] = dense_u[g][row].reshape(shape)
        for f_i, f in enumerate(graph.factors):
            if f.kind != "dense":
                sl = q[lay.fstart[f_i]:lay.fstart[f_i + 1]].reshape(-1, 2)
                fm[f_i] = sl.copy()
        primal = _relaxed_score(graph, potentials, marg, fm)
    state = Ad3State(p, lam, dense_work, tree_work) if fixed is None else None
    return RelaxedSolution(marg, fm, float(bound), float(primal), status, r_primal, r_dual,
                           it, list(y), float(score), state)


def _relaxed_score(graph, potentials, marg, fm) -> float:
    total = sum(float(u @ m) for u, m in zip(potentials.unary, marg))
    for i, f in enumerate(graph.factors):
        if f.kind == "dense":
            total += float(np.sum(potentials.tables[i] * fm[i]))
    return total
