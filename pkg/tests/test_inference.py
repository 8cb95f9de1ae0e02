import itertools

import cvxpy as cp
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from argstruct.graph import Factor, FactorGraph, Potentials, is_arborescence, score_assignment
from argstruct.inference import (Ad3Config, InfeasibleError, NodeBudgetExceeded, ad3_solve,
                                 arborescence_score, branch_and_bound, brute_force_map,
                                 max_arborescence, solve_factor_qp)
from argstruct.inference.qp import enumerate_configs, logic_map, project_logic, tree_oracle
from argstruct.inference.random_graphs import random_factor_graph
from oracles import arborescences

# ---------------------------------------------------------------------------
# arborescences


def test_arborescence_dominant_edge():
    S = {(0, 1): 1.0, (0, 2): 1.0, (1, 2): 5.0}
    assert max_arborescence(3, 0, S) == {(0, 1), (1, 2)}


def test_arborescence_tie_break():
    assert max_arborescence(4, 0, np.zeros((4, 4))) == {(0, 1), (0, 2), (0, 3)}


def test_arborescence_unreachable():
    S = np.full((3, 3), -np.inf)
    S[0, 1] = 1.0
    with pytest.raises(InfeasibleError):
        max_arborescence(3, 0, S)


def test_arborescence_root_not_zero():
    S = np.zeros((3, 3))
    S[2, 0] = S[0, 1] = 3.0
    assert max_arborescence(3, 2, S) == {(2, 0), (0, 1)}


@given(st.integers(2, 6), st.integers(0, 2 ** 32 - 1), st.booleans())
def test_arborescence_matches_enumeration(n, seed, integer):
    rng = np.random.default_rng(seed)
    S = rng.integers(-3, 4, size=(n, n)).astype(float) if integer else rng.normal(size=(n, n))
    S[rng.random((n, n)) < 0.15] = -np.inf
    S[0, 1:] = np.where(np.isinf(S[0, 1:]), -5.0, S[0, 1:])      # keep it feasible
    best = max(arborescence_score([(h, d) for d, h in par.items()], S) for par in arborescences(n))
    got = max_arborescence(n, 0, S)
    assert is_arborescence(n, sorted(got))
    assert arborescence_score(got, S) == best


# ---------------------------------------------------------------------------
# factor subproblems against a generic QP solver

def qp_oracle(vertices, a, b=None):
    """max_u a . (V^T u) + b . u - 1/2 ||V^T u||^2 over the simplex; returns V^T u."""
    V = np.asarray(vertices, float)
    u = cp.Variable(V.shape[0], nonneg=True)
    q = V.T @ u
    obj = a @ q - 0.5 * cp.sum_squares(q)
    if b is not None:
        obj = obj + b @ u
    cp.Problem(cp.Maximize(obj), [cp.sum(u) == 1]).solve(
        solver=cp.CLARABEL, tol_gap_abs=1e-12, tol_gap_rel=1e-12, tol_feas=1e-12, max_iter=500)
    return V.T @ u.value


def binary_vertices(configs):
    """Two-state (off, on) encoding of binary configurations, flattened per member."""
    return [np.ravel([[1 - s, s] for s in c]) for c in configs]


@pytest.mark.parametrize("logic", ["or_with_negations", "at_most_one", "exactly_one"])
@pytest.mark.parametrize("clamp", [False, True])
def test_logic_projection_matches_qp(logic, clamp):
    rng = np.random.default_rng([len(logic), clamp])
    for _ in range(15):
        m = int(rng.integers(2, 4))
        neg = rng.random(m) < 0.4
        fixed = np.full(m, -1)
        if clamp:
            fixed[int(rng.integers(m))] = int(rng.integers(2))
        sat = []
        for c in itertools.product((0, 1), repeat=m):
            lits = [1 - s if n else s for s, n in zip(c, neg)]
            ok = {"or_with_negations": sum(lits) >= 1, "at_most_one": sum(lits) <= 1,
                  "exactly_one": sum(lits) == 1}[logic]
            if ok and all(f < 0 or f == s for f, s in zip(fixed, c)):
                sat.append(c)
        if not sat:
            with pytest.raises(InfeasibleError):
                solve_factor_qp(Factor("logic", tuple(range(m)), logic=logic, negated=tuple(neg)),
                                [2] * m, [np.zeros(2)] * m, [np.full(2, 0.5)] * m, 1.0,
                                fixed=fixed)
            continue
        adj = [rng.normal(scale=2, size=2) for _ in range(m)]
        p = [np.array([1 - x, x]) for x in rng.random(m)]
        eta = float(rng.choice([0.1, 1.0]))
        got = solve_factor_qp(Factor("logic", tuple(range(m)), logic=logic, negated=tuple(neg)),
                              [2] * m, adj, p, eta, fixed=fixed)
        a = np.concatenate([pv + cv / eta for pv, cv in zip(p, adj)])
        want = qp_oracle(binary_vertices(sat), a)
        np.testing.assert_allclose(np.concatenate(got.marginals), want, atol=1e-6)


def test_at_most_one_strongly_negative():
    got = project_logic("at_most_one", np.full((1, 3), -5.0), np.zeros(3, bool))
    assert got.tolist() == [[0.0, 0.0, 0.0]]


def test_logic_map():
    gain, z = logic_map("exactly_one", np.array([1.0, 3.0, 2.0]), np.zeros(3, bool))
    assert z.tolist() == [0, 1, 0] and gain == 3.0
    gain, z = logic_map("or_with_negations", np.array([1.0, 1.0, -5.0]), np.array([True, True, False]))
    assert sum([1 - z[0], 1 - z[1], z[2]]) >= 1 and gain == 1.0


@pytest.mark.parametrize("arities", [(2,), (3, 2), (2, 2, 2), (3, 3, 2)])
def test_dense_qp_matches_qp(arities):
    rng = np.random.default_rng(sum(arities))
    configs = list(itertools.product(*(range(k) for k in arities)))
    V = [np.concatenate([np.eye(k)[s] for k, s in zip(arities, c)]) for c in configs]
    for _ in range(10):
        table = rng.normal(size=arities)
        adj = [rng.normal(size=k) for k in arities]
        p = [rng.dirichlet(np.ones(k)) for k in arities]
        eta = float(rng.choice([0.1, 1.0]))
        got = solve_factor_qp(Factor("dense", tuple(range(len(arities)))), arities, adj, p, eta, table)
        a = np.concatenate([pv + cv / eta for pv, cv in zip(p, adj)])
        want = qp_oracle(V, a, table.ravel() / eta)
        np.testing.assert_allclose(np.concatenate(got.marginals), want, atol=1e-6)
        np.testing.assert_allclose(got.joint.sum(), 1.0, atol=1e-9)
        for i, k in enumerate(arities):
            axes = tuple(j for j in range(len(arities)) if j != i)
            np.testing.assert_allclose(got.joint.sum(axis=axes), got.marginals[i], atol=1e-9)


def test_dense_qp_dominant_state():
    table = np.zeros((2, 2))
    table[1, 0] = 1e3
    got = solve_factor_qp(Factor("dense", (0, 1)), (2, 2), [np.zeros(2)] * 2, [np.full(2, 0.5)] * 2,
                          0.1, table)
    np.testing.assert_allclose(got.joint, [[0, 0], [1, 0]], atol=1e-12)


def tree_factor(n_nodes):
    edges = tuple((h, d) for d in range(1, n_nodes) for h in range(n_nodes) if h != d)
    return Factor("tree", tuple(range(len(edges))), n_nodes=n_nodes, edges=edges)


@pytest.mark.parametrize("n_nodes", [3, 4])
def test_tree_qp_matches_qp(n_nodes):
    f = tree_factor(n_nodes)
    m = len(f.edges)
    trees = []
    for par in arborescences(n_nodes):
        on = {(h, d) for d, h in par.items()}
        trees.append([int(e in on) for e in f.edges])
    rng = np.random.default_rng(n_nodes)
    for _ in range(10):
        adj = [rng.normal(size=2) for _ in range(m)]
        p = [np.array([1 - x, x]) for x in rng.random(m)]
        got = solve_factor_qp(f, [2] * m, adj, p, 0.5)
        a = np.concatenate([pv + cv / 0.5 for pv, cv in zip(p, adj)])
        np.testing.assert_allclose(np.concatenate(got.marginals), qp_oracle(binary_vertices(trees), a),
                                   atol=1e-6)


def test_tree_oracle_and_clamps():
    f = tree_factor(3)                   # edges (0,1) (2,1) (0,2) (1,2)
    w = np.zeros((4, 2))
    w[1, 1] = w[3, 1] = 1.0
    assert tree_oracle(f)(w).tolist() == [1, 0, 0, 1]
    assert tree_oracle(f, np.array([-1, -1, 1, -1]))(w).tolist() == [0, 1, 1, 0]
    with pytest.raises(InfeasibleError):
        tree_oracle(f, np.array([0, 0, -1, -1]))


# ---------------------------------------------------------------------------
# AD3, brute force and branch-and-bound

def test_ad3_single_binary():
    g = FactorGraph((2,))
    sol = ad3_solve(g, Potentials([np.array([0.2, 0.7])]))
    assert sol.assignment == [1] and sol.objective == pytest.approx(0.7) and sol.is_integral


def test_ad3_exactly_one():
    g = FactorGraph((2, 2, 2), (Factor("logic", (0, 1, 2), logic="exactly_one"),))
    pots = Potentials([np.array([0.0, x]) for x in (1.0, 3.0, 2.0)])
    sol = ad3_solve(g, pots)
    assert sol.status == "integral" and sol.assignment == [0, 1, 0]
    assert sol.objective == pytest.approx(3.0, abs=1e-6)


def test_ad3_config_validation():
    with pytest.raises(ValueError):
        Ad3Config(eta=0)
    with pytest.raises(ValueError):
        Ad3Config(max_iterations=0)


def test_ad3_rejects_nan():
    with pytest.raises(ValueError):
        ad3_solve(FactorGraph((2,)), Potentials([np.array([0.0, np.nan])]))


def frustrated_triangle():
    """Three binary variables, pairwise at-most-one, all wanting to be on: LP optimum is 1/2 each."""
    pairs = [(0, 1), (1, 2), (0, 2)]
    g = FactorGraph((2, 2, 2), tuple(Factor("logic", p, logic="at_most_one") for p in pairs))
    return g, Potentials([np.array([0.0, 1.0])] * 3)


def test_ad3_fractional_then_branch_and_bound():
    g, pots = frustrated_triangle()
    sol = ad3_solve(g, pots)
    assert sol.status == "fractional"
    np.testing.assert_allclose([m[1] for m in sol.marginals], 0.5, atol=1e-4)
    assert sol.objective == pytest.approx(1.5, abs=1e-4)
    res = branch_and_bound(g, pots)
    assert res.score == brute_force_map(g, pots).score == 1.0 and res.nodes > 1


def test_branch_and_bound_integral_root():
    g = FactorGraph((2, 3), (Factor("dense", (0, 1)),))
    pots = Potentials([np.array([0.0, 1.0]), np.array([0.0, 0.5, 0.2])], {0: np.zeros((2, 3))})
    res = branch_and_bound(g, pots)
    assert res.nodes == 1 and res.assignment == ad3_solve(g, pots).assignment == [1, 1]


def test_branch_and_bound_budget():
    g, pots = frustrated_triangle()
    with pytest.raises(NodeBudgetExceeded) as err:
        branch_and_bound(g, pots, node_budget=1)
    assert err.value.incumbent is None or err.value.incumbent.score <= 1.0


def test_masked_preferences_fall_back_to_all_off():
    # link wants to be on but every on-configuration is masked
    g = FactorGraph((2, 2, 2), (Factor("dense", (0, 1, 2)),))
    t = np.zeros((2, 2, 2))
    t[:, :, 1] = -1e6
    pots = Potentials([np.zeros(2), np.zeros(2), np.array([0.0, 5.0])], {0: t})
    res = branch_and_bound(g, pots)
    assert res.assignment[2] == 0 and res.score == 0.0


def test_brute_force_small_cases():
    assert brute_force_map(FactorGraph(()), Potentials([])).assignment == []
    assert brute_force_map(FactorGraph(()), Potentials([])).score == 0.0
    res = brute_force_map(FactorGraph((4,)), Potentials([np.array([0.1, 0.9, 0.3, 0.9])]))
    assert res.assignment == [1] and res.score == 0.9
    # hand enumeration: y0 -> y1 implication, y0 wants on (1), y1 wants off (-0.4)
    g = FactorGraph((2, 2), (Factor("logic", (0, 1), logic="or_with_negations", negated=(True, False)),))
    res = brute_force_map(g, Potentials([np.array([0.0, 1.0]), np.array([0.0, -0.4])]))
    assert res.assignment == [1, 1] and res.score == pytest.approx(0.6)
    with pytest.raises(ValueError):
        brute_force_map(FactorGraph((2,) * 21), Potentials([np.zeros(2)] * 21))


def test_clamps():
    g = FactorGraph((2, 2), (Factor("logic", (0, 1), logic="at_most_one"),))
    pots = Potentials([np.array([0.0, 1.0]), np.array([0.0, 2.0])])
    sol = ad3_solve(g, pots, fixed=[1, -1])
    assert sol.assignment == [1, 0] and sol.is_integral
    with pytest.raises(InfeasibleError):
        ad3_solve(g, pots, fixed=[1, 1])


@given(st.integers(0, 2 ** 32 - 1))
def test_random_graphs_bound_soundness_exactness(seed):
    rng = np.random.default_rng(seed)
    g, pots = random_factor_graph(rng, max_vars=10)
    exact = brute_force_map(g, pots)
    sol = ad3_solve(g, pots)
    assert sol.objective >= exact.score - 1e-6
    for m in sol.marginals:
        assert abs(m.sum() - 1) < 1e-9 and (m >= 0).all()
    if sol.is_integral:
        assert abs(sol.assignment_score - exact.score) <= 1e-6
        assert all(m.max() >= 1 - 1e-6 for m in sol.marginals)
    bb = branch_and_bound(g, pots)
    assert abs(bb.score - exact.score) <= 1e-9
    assert bb.score == score_assignment(g, pots, bb.assignment)


def test_warm_start_gives_same_answer():
    rng = np.random.default_rng(5)
    g, pots = random_factor_graph(rng, max_vars=10)
    cold = ad3_solve(g, pots)
    pots2 = Potentials([u + 0.01 for u in pots.unary], pots.tables)
    warm = ad3_solve(g, pots2, warm=cold.state)
    ref = ad3_solve(g, pots2)
    assert warm.objective == pytest.approx(ref.objective, abs=1e-4)


def test_enumerate_configs_layout():
    cfg = enumerate_configs((2, 3))
    assert cfg.shape == (6, 2) and cfg[-1].tolist() == [1, 4]
