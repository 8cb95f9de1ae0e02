"""Local quadratic subproblems of AD3.

Every factor solves

    maximize   theta . u  +  sum_v c_v . q_v  -  eta/2 sum_v ||q_v - p_v||^2

over its local marginal polytope, where ``u`` is a distribution over the
factor's joint configurations and ``q_v`` its variable marginals. Dividing
by ``eta`` turns this into the Euclidean-style problem

    minimize   1/2 ||M u - a||^2 - b . u,     a = p + c/eta,  b = theta/eta

which is what the solvers below take.

Logic factors (over binary variables, no scores) have closed-form
projections. Dense and tree factors use an active-set method over the
vertices returned by a maximization oracle.

``fixed`` arguments clamp members: -1 is free, otherwise the forced state.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numba
import numpy as np

from ..graph import Factor
from .arborescence import InfeasibleError, cle_parents

ACTIVE_SET_CAP = 500
ACTIVE_SET_MAX_ITER = 200


# ---------------------------------------------------------------------------
# logic factors (binary members, literal space)

def logic_feasible_rows(logic: str, negated: np.ndarray, fixed: np.ndarray) -> np.ndarray:
    """Whether each row still admits a satisfying completion."""
    lf = np.where(fixed < 0, -1, np.where(negated, 1 - fixed, fixed))
    free = (lf < 0).sum(axis=1)
    ones = (lf == 1).sum(axis=1)
    if logic == "or_with_negations":
        return (ones >= 1) | (free >= 1)
    if logic == "at_most_one":
        return ones <= 1
    return (ones == 1) | ((ones == 0) & (free >= 1))


LOGIC_CODES = {"or_with_negations": 0, "at_most_one": 1, "exactly_one": 2}


@numba.njit(cache=True)
def _project_rows(code, t, negated, fixed):
    F, m = t.shape
    out = np.empty((F, m))
    x = np.empty(m)
    for f in range(F):
        ones = 0
        nfree = 0
        total = 0.0
        for i in range(m):
            lf = fixed[f, i]
            if lf >= 0 and negated[f, i]:
                lf = 1 - lf
            if lf == 1:
                ones += 1
            lt = 1.0 - t[f, i] if negated[f, i] else t[f, i]
            if lf < 0:
                nfree += 1
                x[i] = lt
                total += min(max(lt, 0.0), 1.0)
            else:
                x[i] = -np.inf
        if code == 0:
            need = ones == 0 and total < 1.0
        elif code == 1:
            need = ones == 0 and total > 1.0
        else:
            need = ones == 0
        tau = 0.0
        if need and nfree > 0:
            # Euclidean projection of the free entries onto the simplex
            srt = -np.sort(-x)
            cs = 0.0
            for k in range(nfree):
                cs += srt[k]
                if srt[k] - (cs - 1.0) / (k + 1) > 0:
                    tau = (cs - 1.0) / (k + 1)
        for i in range(m):
            lf = fixed[f, i]
            if lf >= 0:
                lit = float(1 - lf) if negated[f, i] else float(lf)
            elif need:
                lit = max(x[i] - tau, 0.0)
            elif ones >= 1 and code != 0:
                lit = 0.0
            else:
                lit = min(max(x[i], 0.0), 1.0)
            out[f, i] = 1.0 - lit if negated[f, i] else lit
    return out


def project_logic(logic: str, t: np.ndarray, negated: np.ndarray,
                  fixed: np.ndarray | None = None) -> np.ndarray:
    """Project target "on" probabilities ``t`` (F, m) onto the constraint polytope.

    The objective is sum_i (z_i - t_i)^2, minimized over the convex hull of
    the satisfying binary assignments, row by row.
    """
    if logic not in LOGIC_CODES:
        raise ValueError(f"unknown logic constraint {logic!r}")
    t = np.atleast_2d(np.asarray(t, dtype=float))
    negated = np.ascontiguousarray(np.broadcast_to(np.asarray(negated, dtype=np.bool_), t.shape))
    if fixed is None:
        fixed = np.full(t.shape, -1, dtype=np.int64)
    fixed = np.ascontiguousarray(np.broadcast_to(np.asarray(fixed, dtype=np.int64), t.shape))
    return _project_rows(LOGIC_CODES[logic], np.ascontiguousarray(t), negated, fixed)


def logic_map_rows(logic: str, gains: np.ndarray, negated: np.ndarray,
                   fixed: np.ndarray | None = None) -> np.ndarray:
    """Row-wise best satisfying binary assignment for gains (F, m) of "on" over "off".

    Rows without any satisfying completion raise InfeasibleError. Ties
    resolve to the lowest member index.
    """
    gains = np.atleast_2d(np.asarray(gains, dtype=float))
    negated = np.broadcast_to(np.asarray(negated, dtype=bool), gains.shape)
    if fixed is None:
        fixed = np.full(gains.shape, -1, dtype=np.int64)
    fixed = np.broadcast_to(np.asarray(fixed), gains.shape)
    if not logic_feasible_rows(logic, negated, fixed).all():
        raise InfeasibleError(f"{logic} constraint cannot be satisfied under the clamps")
    lg = np.where(negated, -gains, gains)       # gain of literal true over false
    lf = np.where(fixed < 0, -1, np.where(negated, 1 - fixed, fixed))
    free = lf < 0
    ones = (lf == 1).sum(axis=1)
    lit = np.where(free, 0, lf)
    masked = np.where(free, lg, -np.inf)
    best = np.argmax(masked, axis=1)
    rows = np.arange(len(lg))
    if logic == "or_with_negations":
        lit = np.where(free & (lg > 0), 1, lit)
        pick = (ones == 0) & (lit.sum(axis=1) == 0)
    elif logic == "at_most_one":
        pick = (ones == 0) & (masked[rows, best] > 0)
    else:
        pick = ones == 0
    lit[rows[pick], best[pick]] = 1
    return np.where(negated, 1 - lit, lit).astype(np.int64)


def logic_map(logic: str, gains: np.ndarray, negated: np.ndarray,
              fixed: np.ndarray | None = None) -> tuple[float, np.ndarray]:
    """Best satisfying binary assignment for per-member gains (score on - off).

    Returns (gain total, z). Raises InfeasibleError if none exists.
    """
    gains = np.asarray(gains, dtype=float)
    z = logic_map_rows(logic, gains[None, :], negated,
                       None if fixed is None else np.asarray(fixed)[None, :])[0]
    return float(np.sum(gains * z)), z


# ---------------------------------------------------------------------------
# dense factors: active set over enumerated configurations

@numba.njit(cache=True)
def _config_value(bk, a, cfg, k):
    val = bk
    for j in range(cfg.shape[1]):
        val += a[cfg[k, j]]
    return val


@numba.njit(cache=True)
def _oracle(b, a, cfg):
    best = -np.inf
    kb = -1
    for k in range(cfg.shape[0]):
        if b[k] == -np.inf:
            continue
        val = _config_value(b[k], a, cfg, k)
        if val > best:
            best = val
            kb = k
    return kb, best


@numba.njit(cache=True)
def _solve_kkt(A, r):
    """Gaussian elimination with partial pivoting; ok=False when (near) singular."""
    n = A.shape[0]
    M = A.copy()
    x = r.copy()
    scale = np.abs(A).max()
    for k in range(n):
        piv = k
        for i in range(k + 1, n):
            if abs(M[i, k]) > abs(M[piv, k]):
                piv = i
        if abs(M[piv, k]) <= 1e-10 * scale:
            return False, x
        if piv != k:
            for j in range(n):
                M[k, j], M[piv, j] = M[piv, j], M[k, j]
            x[k], x[piv] = x[piv], x[k]
        for i in range(k + 1, n):
            f = M[i, k] / M[k, k]
            if f != 0.0:
                for j in range(k, n):
                    M[i, j] -= f * M[k, j]
                x[i] -= f * x[k]
    for k in range(n - 1, -1, -1):
        acc = x[k]
        for j in range(k + 1, n):
            acc -= M[k, j] * x[j]
        x[k] = acc / M[k, k]
    return True, x


@numba.njit(cache=True)
def _null_direction(A, n):
    """Unit null vector (first n entries) of a singular KKT matrix."""
    U, S, Vt = np.linalg.svd(A)
    return Vt[n, :n].copy()


@numba.njit(cache=True)
def _compact(W, nW, alpha, f, new_alpha):
    # keep vertices with weight; the blocking one is at (or below) zero
    m = 0
    lo = 0
    for i in range(nW[f]):
        if new_alpha[i] < new_alpha[lo]:
            lo = i
    for i in range(nW[f]):
        if i == lo or new_alpha[i] <= 1e-14:
            continue
        W[f, m] = W[f, i]
        alpha[f, m] = new_alpha[i]
        m += 1
    s = 0.0
    for i in range(m):
        s += alpha[f, i]
    for i in range(m):
        alpha[f, i] /= s
    nW[f] = m


@numba.njit(cache=True)
def dense_active_set(a, b, cfg, W, nW, alpha, max_iter, cap):
    """Solve a batch of dense-factor QPs in place.

    a: (F, D) targets; b: (F, K) scaled config scores (-inf = excluded);
    cfg: (K, nv) entry index of each config's state per member.
    W, nW, alpha: per-factor active sets (warm start; nW == 0 means cold).
    Returns q (F, D) and the joint distributions u (F, K).
    """
    F, D = a.shape
    K, nv = cfg.shape
    q_out = np.zeros((F, D))
    u_out = np.zeros((F, K))
    for f in range(F):
        af = a[f]
        bf = b[f]
        if nW[f] == 0:
            kb, _ = _oracle(bf, af, cfg)
            W[f, 0] = kb
            alpha[f, 0] = 1.0
            nW[f] = 1
        q = np.zeros(D)
        for it in range(max_iter):
            n = nW[f]
            A = np.zeros((n + 1, n + 1))
            r = np.zeros(n + 1)
            for i in range(n):
                ki = W[f, i]
                for j in range(n):
                    kj = W[f, j]
                    c = 0.0
                    for v in range(nv):
                        if cfg[ki, v] == cfg[kj, v]:
                            c += 1.0
                    A[i, j] = c
                A[i, n] = 1.0
                A[n, i] = 1.0
                r[i] = _config_value(bf[ki], af, cfg, ki)
            r[n] = 1.0
            ok, sol = _solve_kkt(A, r)
            if not ok:
                # affinely dependent vertices: the objective is linear along
                # the null direction; follow it until a vertex drops out
                d = _null_direction(A, n)
                slope = 0.0
                for i in range(n):
                    slope += d[i] * r[i]
                if slope < 0.0:
                    d = -d
                beta = np.empty(n)
                t = np.inf
                for i in range(n):
                    if d[i] < -1e-15:
                        ratio = alpha[f, i] / -d[i]
                        if ratio < t:
                            t = ratio
                for i in range(n):
                    beta[i] = alpha[f, i] + t * d[i]
                _compact(W, nW, alpha, f, beta)
                continue
            beta = sol[:n]
            tau = sol[n]
            if beta.min() >= -1e-12:
                s = 0.0
                for i in range(n):
                    alpha[f, i] = max(beta[i], 0.0)
                    s += alpha[f, i]
                for i in range(n):
                    alpha[f, i] /= s
                q[:] = 0.0
                for i in range(n):
                    for v in range(nv):
                        q[cfg[W[f, i], v]] += alpha[f, i]
                kb, best = _oracle(bf, af - q, cfg)
                if best <= tau + 1e-12 * (1.0 + abs(tau)):
                    break
                known = False
                for i in range(n):
                    if W[f, i] == kb:
                        known = True
                if known:
                    break
                if n >= cap:
                    # restart from the heaviest vertex
                    i_best = 0
                    for i in range(n):
                        if alpha[f, i] > alpha[f, i_best]:
                            i_best = i
                    W[f, 0] = W[f, i_best]
                    alpha[f, 0] = 1.0
                    nW[f] = 1
                    continue
                W[f, n] = kb
                alpha[f, n] = 0.0
                nW[f] = n + 1
            else:
                t = 1.0
                for i in range(n):
                    if beta[i] < 0.0:
                        ratio = alpha[f, i] / (alpha[f, i] - beta[i])
                        if ratio < t:
                            t = ratio
                for i in range(n):
                    beta[i] = alpha[f, i] + t * (beta[i] - alpha[f, i])
                _compact(W, nW, alpha, f, beta)
        q[:] = 0.0
        for i in range(nW[f]):
            u_out[f, W[f, i]] += alpha[f, i]
            for v in range(nv):
                q[cfg[W[f, i], v]] += alpha[f, i]
        q_out[f] = q
    return q_out, u_out


def enumerate_configs(arities: Sequence[int]) -> np.ndarray:
    """(K, nv) entry indices of all joint configs in C order."""
    arities = list(arities)
    offsets = np.concatenate([[0], np.cumsum(arities)[:-1]]).astype(np.int64)
    states = np.indices(arities).reshape(len(arities), -1).T
    return (states + offsets).astype(np.int64)


# ---------------------------------------------------------------------------
# tree factors: active set over arborescences found by Chu-Liu/Edmonds

@numba.njit
def _tree_map(w, heads, deps, allowed, n_nodes):
    """Best arborescence for member weights w (m, 2); y[0] == -1 if none exists."""
    m = len(heads)
    S = np.full((n_nodes, n_nodes), -np.inf)
    for i in range(m):
        if allowed[i]:
            S[heads[i], deps[i]] = w[i, 1] - w[i, 0]
    y = np.zeros(m, dtype=np.int64)
    parent = cle_parents(S, 0)
    if parent[0] == -1:
        y[:] = -1
        return y
    for i in range(m):
        if allowed[i] and parent[deps[i]] == heads[i]:
            y[i] = 1
    return y


@numba.njit(cache=True)
def _tree_value(w, y):
    val = 0.0
    for i in range(len(y)):
        val += w[i, y[i]]
    return val


@numba.njit
def tree_active_set(a, heads, deps, allowed, n_nodes, Y, nW, alpha, max_iter, cap):
    """Active-set QP of one tree factor; Y/nW/alpha hold the (warm) vertex set.

    a: (m, 2) targets for (off, on). Returns the member marginals (m, 2).
    """
    m = a.shape[0]
    if nW[0] == 0:
        Y[0] = _tree_map(a, heads, deps, allowed, n_nodes)
        alpha[0] = 1.0
        nW[0] = 1
    q = np.zeros((m, 2))
    for it in range(max_iter):
        n = nW[0]
        A = np.zeros((n + 1, n + 1))
        r = np.zeros(n + 1)
        for i in range(n):
            for j in range(n):
                c = 0.0
                for v in range(m):
                    if Y[i, v] == Y[j, v]:
                        c += 1.0
                A[i, j] = c
            A[i, n] = 1.0
            A[n, i] = 1.0
            r[i] = _tree_value(a, Y[i])
        r[n] = 1.0
        ok, sol = _solve_kkt(A, r)
        if not ok:
            d = _null_direction(A, n)
            if np.dot(d, r[:n]) < 0.0:
                d = -d
            t = np.inf
            for i in range(n):
                if d[i] < -1e-15:
                    t = min(t, alpha[i] / -d[i])
            _compact_rows(Y, nW, alpha, alpha[:n] + t * d)
            continue
        beta = sol[:n]
        tau = sol[n]
        if beta.min() >= -1e-12:
            s = 0.0
            for i in range(n):
                alpha[i] = max(beta[i], 0.0)
                s += alpha[i]
            alpha[:n] /= s
            q[:] = 0.0
            for i in range(n):
                for v in range(m):
                    q[v, Y[i, v]] += alpha[i]
            y = _tree_map(a - q, heads, deps, allowed, n_nodes)
            if _tree_value(a - q, y) <= tau + 1e-12 * (1.0 + abs(tau)):
                break
            known = False
            for i in range(n):
                same = True
                for v in range(m):
                    if Y[i, v] != y[v]:
                        same = False
                        break
                if same:
                    known = True
            if known:
                break
            if n >= cap:
                i_best = np.argmax(alpha[:n])
                Y[0] = Y[i_best].copy()
                alpha[0] = 1.0
                nW[0] = 1
                continue
            Y[n] = y
            alpha[n] = 0.0
            nW[0] = n + 1
        else:
            t = 1.0
            for i in range(n):
                if beta[i] < 0.0:
                    t = min(t, alpha[i] / (alpha[i] - beta[i]))
            _compact_rows(Y, nW, alpha, alpha[:n] + t * (beta - alpha[:n]))
    q[:] = 0.0
    for i in range(nW[0]):
        for v in range(m):
            q[v, Y[i, v]] += alpha[i]
    return q


@numba.njit(cache=True)
def _compact_rows(Y, nW, alpha, new_alpha):
    n = nW[0]
    lo = np.argmin(new_alpha)
    k = 0
    for i in range(n):
        if i == lo or new_alpha[i] <= 1e-14:
            continue
        Y[k] = Y[i].copy()
        alpha[k] = new_alpha[i]
        k += 1
    alpha[:k] /= alpha[:k].sum()
    nW[0] = k


@dataclass
class TreeSpec:
    """Edges of a tree factor with clamps folded into an ``allowed`` mask."""

    heads: np.ndarray
    deps: np.ndarray
    allowed: np.ndarray
    n_nodes: int

    @classmethod
    def of(cls, factor: Factor, fixed: np.ndarray | None = None) -> "TreeSpec":
        heads = np.array([h for h, _ in factor.edges], dtype=np.int64)
        deps = np.array([d for _, d in factor.edges], dtype=np.int64)
        allowed = np.ones(len(heads), dtype=np.bool_)
        if fixed is not None:
            fixed = np.asarray(fixed)
            allowed &= fixed != 0
            for i in np.flatnonzero(fixed == 1):
                # a forced edge is the only way into its dependent
                allowed &= ~((deps == deps[i]) & (np.arange(len(deps)) != i))
        spec = cls(heads, deps, allowed, factor.n_nodes)
        if (spec.map(np.zeros((len(heads), 2)))[0] < 0) if len(heads) else factor.n_nodes > 1:
            raise InfeasibleError("no arborescence is left under the clamps")
        return spec

    def map(self, w: np.ndarray) -> np.ndarray:
        return _tree_map(np.asarray(w, dtype=float), self.heads, self.deps, self.allowed,
                         self.n_nodes)

    def workspace(self, cap: int = ACTIVE_SET_CAP):
        m = len(self.heads)
        return np.zeros((cap, m), dtype=np.int64), np.zeros(1, dtype=np.int64), np.zeros(cap)

    def solve(self, a: np.ndarray, work) -> np.ndarray:
        Y, nW, alpha = work
        return tree_active_set(np.ascontiguousarray(a, dtype=float), self.heads, self.deps,
                               self.allowed, self.n_nodes, Y, nW, alpha,
                               ACTIVE_SET_MAX_ITER, Y.shape[0])


def tree_oracle(factor: Factor, fixed: np.ndarray | None = None) -> Callable[[np.ndarray], np.ndarray]:
    """Maximization oracle of a tree factor: best arborescence for member scores (m, 2)."""
    return TreeSpec.of(factor, fixed).map


# ---------------------------------------------------------------------------
# single-factor entry point

@dataclass
class FactorQP:
    marginals: list[np.ndarray]          # one distribution per member
    joint: np.ndarray | None = None      # dense factors: table-shaped distribution


def solve_factor_qp(factor: Factor, arities: Sequence[int], adjusted: Sequence[np.ndarray],
                    p: Sequence[np.ndarray], eta: float, table: np.ndarray | None = None,
                    fixed: Sequence[int] | None = None) -> FactorQP:
    """Solve one factor's AD3 subproblem.

    ``adjusted`` holds the per-member linear terms c_v (unary share plus
    dual variables), ``p`` the current consensus marginals.
    """
    arities = [int(k) for k in arities]
    a = [np.asarray(pv, float) + np.asarray(cv, float) / eta for pv, cv in zip(p, adjusted)]
    fixed_arr = None if fixed is None else np.asarray(fixed, dtype=np.int64)
    if factor.kind == "logic":
        A = np.stack(a)
        t = (1.0 + A[:, 1] - A[:, 0]) / 2.0
        z = project_logic(factor.logic, t[None, :], np.asarray(factor.negated)[None, :],
                          None if fixed_arr is None else fixed_arr[None, :])[0]
        return FactorQP([np.array([1.0 - zi, zi]) for zi in z])
    if factor.kind == "tree":
        spec = TreeSpec.of(factor, fixed_arr)
        q = spec.solve(np.stack(a), spec.workspace())
        return FactorQP([row.copy() for row in q])
    cfg = enumerate_configs(arities)
    b = np.asarray(table, float).ravel() / eta
    if fixed_arr is not None:
        offsets = np.concatenate([[0], np.cumsum(arities)[:-1]])
        for j, s in enumerate(fixed_arr):
            if s >= 0:
                b = np.where(cfg[:, j] == offsets[j] + s, b, -np.inf)
    if not np.isfinite(b).any():
        raise InfeasibleError("no configuration of the dense factor is allowed")
    K = cfg.shape[0]
    cap = min(ACTIVE_SET_CAP, K)
    W = np.zeros((1, cap), dtype=np.int64)
    nW = np.zeros(1, dtype=np.int64)
    alpha = np.zeros((1, cap))
    q, u = dense_active_set(np.concatenate(a)[None, :], b[None, :], cfg, W, nW, alpha,
                            ACTIVE_SET_MAX_ITER, cap)
    bounds = np.cumsum([0] + arities)
    return FactorQP([q[0, bounds[i]:bounds[i + 1]].copy() for i in range(len(arities))],
                    u[0].reshape(arities))
