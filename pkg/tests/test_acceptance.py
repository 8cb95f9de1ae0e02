"""One test per acceptance criterion; each prints a single PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -s`` to see the lines as
they happen; they are also repeated in the terminal summary.
"""
import itertools
import os
import time

import numpy as np
import pytest

from argstruct.corpus import Scheme, candidate_links, corpus_stats, load_corpus
from argstruct.evaluation import evaluate
from argstruct.features import fit_template
from argstruct.graph import VariantConfig, build_graph, score_assignment
from argstruct.inference import branch_and_bound, brute_force_map
from argstruct.inference.arborescence import arborescence_score, max_arborescence
from argstruct.inference.random_graphs import random_factor_graph
from argstruct.learning import (BaselineConfig, TrainConfig, check_corpus, fit_baseline,
                                fit_structured, joint_feature_map, predict_corpus)
from argstruct.synth import separable_corpus, synth_corpus
from argstruct.weights import ModelWeights
from conftest import ACCEPTANCE_LINES, make_doc
from fixtures import CONFUSION, EXPECTED, five_doc_fixture
from oracles import arborescences, feasible_link_sets, is_forest, is_transitive_antisymmetric, subsets


def report(name: str, ok: bool, detail: str) -> None:
    line = f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


# ---------------------------------------------------------------------------
# shared training runs

@pytest.fixture(scope="module")
def cdcp_run():
    """Full structured model and full baseline on a 200-document planted-rule corpus."""
    t0 = time.perf_counter()
    train = synth_corpus("cdcp", 200, seed=0)
    test = synth_corpus("cdcp", 100, seed=1)
    fit = fit_structured(train, TrainConfig(epochs=20, variant=VariantConfig.structured("full")))
    base = fit_baseline(train, BaselineConfig(), "full")
    pred = predict_corpus(test, fit.model, "inference")
    base_pred = predict_corpus(test, base.model, "inference")
    return dict(train=train, test=test, fit=fit, base=base, pred=pred, base_pred=base_pred,
                seconds=time.perf_counter() - t0)


# ---------------------------------------------------------------------------

def test_inference_correctness():
    rng = np.random.default_rng(2024)
    t0 = time.perf_counter()
    n, bad, n_integral, kinds = 1000, [], 0, set()
    for i in range(n):
        g, pots = random_factor_graph(rng, max_vars=12)
        kinds |= {f.kind for f in g.factors}
        exact = brute_force_map(g, pots)
        bb = branch_and_bound(g, pots)
        root = bb.relaxation
        if abs(bb.score - exact.score) > 1e-9:
            bad.append((i, "bb"))
        if root.objective < exact.score - 1e-6:
            bad.append((i, "bound"))
        if root.is_integral:
            n_integral += 1
            if abs(root.assignment_score - exact.score) > 1e-6:
                bad.append((i, "ad3"))
    secs = time.perf_counter() - t0
    ok = not bad and secs < 120 and kinds == {"dense", "logic", "tree"}
    report("inference correctness", ok,
           f"{n} graphs, {len(bad)} mismatches, {n_integral} integral relaxations, {secs:.1f}s (< 120s)")
    assert not bad, bad[:5]
    assert kinds == {"dense", "logic", "tree"}
    assert secs < 120


def test_arborescence_correctness():
    rng = np.random.default_rng(7)
    n, bad = 1000, 0
    for _ in range(n):
        m = int(rng.integers(2, 7))
        S = rng.normal(size=(m, m))
        # drop some edges but keep the root's so every node stays reachable
        S[1:][rng.random((m - 1, m)) < 0.3] = -np.inf
        np.fill_diagonal(S, -np.inf)
        got = arborescence_score(max_arborescence(m, 0, S), S)
        best = max(arborescence_score({(h, d) for d, h in t.items()}, S) for t in arborescences(m, 0))
        bad += got != best
    report("arborescence correctness", bad == 0, f"{n} digraphs (2-6 nodes), {bad} non-optimal")
    assert bad == 0


def test_feasible_set_exactness():
    checked, bad = 0, []
    for n in range(1, 5):
        doc = make_doc(["w"] * n)
        want = {s for s in subsets(candidate_links(doc)) if is_transitive_antisymmetric(s)}
        got = feasible_link_sets(doc)
        checked += 1
        if set(got) != want or len(got) != len(want):
            bad.append(("cdcp", n))
    for n in range(1, 5):
        for pars in itertools.product(range(n), repeat=n):
            if list(pars) != sorted(pars) or pars[0] != 0 or any(b - a > 1 for a, b in zip(pars, pars[1:])):
                continue
            doc = make_doc(["w"] * n, ["premise"] * n, scheme="ukp", paragraphs=list(pars))
            want = {s for s in subsets(candidate_links(doc)) if is_forest(s, pars)}
            got = feasible_link_sets(doc)
            checked += 1
            if set(got) != want or len(got) != len(want):
                bad.append(("ukp", pars))
    report("feasible-set exactness", not bad, f"{checked} layouts with n <= 4, {len(bad)} mismatches")
    assert not bad


def test_constraint_satisfaction(cdcp_run):
    totals = {}
    cdcp_model = cdcp_run["fit"].model
    ukp_train = synth_corpus("ukp", 60, seed=0)
    ukp_test = synth_corpus("ukp", 60, seed=1)
    ukp_model = fit_structured(ukp_train, TrainConfig(epochs=5, variant=VariantConfig.structured("full"))).model
    for scheme, model, test in (("cdcp", cdcp_model, cdcp_run["test"]), ("ukp", ukp_model, ukp_test)):
        for v in ("full", "strict"):
            variant = VariantConfig.structured(v)
            if v == "full" and scheme == "cdcp":
                docs = [p.doc for p in cdcp_run["pred"]]
            else:
                docs = [p.doc for p in predict_corpus(test, model, "inference", variant)]
            totals[f"{scheme}/{v}"] = check_corpus(docs, variant)
    bad = {k: v.as_dict() for k, v in totals.items() if v.total}
    report("constraint satisfaction", not bad,
           "violations " + ", ".join(f"{k}={v.total}" for k, v in totals.items()))
    assert not bad, bad


def test_learning_sanity(cdcp_run):
    t0 = time.perf_counter()
    trace = cdcp_run["fit"].trace
    steps = np.diff(trace.step_dual)
    a = steps.min() >= -1e-9
    gap1, gap20 = trace.epochs[0].gap, trace.epochs[-1].gap
    b = len(trace.epochs) == 20 and gap20 < 0.1 * gap1
    test = cdcp_run["test"]
    structured = evaluate(test, [p.doc for p in cdcp_run["pred"]])
    baseline = evaluate(test, [p.doc for p in cdcp_run["base_pred"]])
    c = structured.average >= baseline.average
    toy = separable_corpus(16, seed=0)
    toy_fit = fit_structured(toy, TrainConfig(C=1.0, epochs=20))
    toy_rep = evaluate(toy, [p.doc for p in predict_corpus(toy, toy_fit.model, "inference")])
    d = toy_rep.prop_macro_f1 == 1.0 and toy_rep.link_f1 == 1.0
    secs = cdcp_run["seconds"] + time.perf_counter() - t0
    ok = a and b and c and d and secs < 300
    report("learning sanity", ok,
           f"(a) min dual step {steps.min():.3g}; (b) gap {gap1:.4g} -> {gap20:.4g} "
           f"({gap20 / gap1:.1%}); (c) structured avg F1 {structured.average:.4f} vs baseline "
           f"{baseline.average:.4f}; (d) toy prop F1 {toy_rep.prop_macro_f1:.3f} link F1 "
           f"{toy_rep.link_f1:.3f}; {secs:.0f}s (< 300s)")
    assert a and b and c and d
    assert secs < 300


def test_integrality_trend(cdcp_run):
    epochs = cdcp_run["fit"].trace.epochs
    first, last = epochs[0].integral_ratio, epochs[-1].integral_ratio
    report("integrality trend", last > first,
           f"integral AD3 calls {first:.1%} in epoch 1 -> {last:.1%} in epoch {len(epochs)}")
    assert last > first


def _random_feasible_labels(rng, doc):
    n = len(doc.props)
    types = [int(rng.integers(len(doc.labels))) for _ in range(n)]
    links = set()
    if doc.scheme is Scheme.CDCP:
        rank = rng.permutation(n)
        for a, b in candidate_links(doc):
            if rank[a] < rank[b] and rng.random() < 0.3:
                links.add((a, b))
        changed = True
        while changed:
            new = {(a, c) for a, b in links for b2, c in links if b == b2 and a != c} - links
            links |= new
            changed = bool(new)
    else:
        order = rng.permutation(n)
        for i, a in enumerate(order):
            earlier = [b for b in order[:i] if doc.props[b].paragraph == doc.props[a].paragraph]
            if earlier and rng.random() < 0.6:
                links.add((int(a), int(rng.choice(earlier))))
    return types, links


def test_cross_module_consistency():
    rng = np.random.default_rng(11)
    docs = synth_corpus("cdcp", 20, seed=5) + synth_corpus("ukp", 20, seed=5)
    templates = {s: fit_template([d for d in docs if d.scheme.value == s]) for s in ("cdcp", "ukp")}
    variants = [VariantConfig.structured("basic"), VariantConfig.structured("full"),
                VariantConfig.baseline("full")]
    n, worst = 500, 0.0
    for i in range(n):
        doc = docs[int(rng.integers(len(docs)))]
        tpl = templates[doc.scheme.value]
        variant = variants[i % len(variants)]
        w = ModelWeights.zeros(tpl)
        w = w.like(rng.normal(size=w.size))
        dg, pots = build_graph(doc, tpl, w, variant)
        y = dg.assignment(*_random_feasible_labels(rng, doc))
        s = score_assignment(dg.graph, pots, y)
        ip = float(w.to_vector() @ joint_feature_map(doc, tpl, y, variant).to_vector())
        worst = max(worst, abs(ip - s))
    report("cross-module consistency", worst <= 1e-9, f"{n} (doc, w, y) triples, max |<w,psi> - score| {worst:.2e}")
    assert worst <= 1e-9


def test_metric_fixture():
    gold, pred = five_doc_fixture()
    rep = evaluate(gold, pred)
    got = {
        "link": (rep.link.precision, rep.link.recall, rep.link.f1),
        **{k: (rep.prop[k].precision, rep.prop[k].recall, rep.prop[k].f1)
           for k in ("testimony", "fact", "value", "policy")},
        "macro": rep.prop_macro_f1,
        "average": rep.average,
        **{k: (s.precision, s.recall, s.f1) for k, s in rep.structures.items()},
    }
    want = {k: (tuple(float(x) for x in v) if isinstance(v, tuple) else float(v)) for k, v in EXPECTED.items()}
    ok = got == want and rep.confusion.tolist() == CONFUSION
    report("metric fixture", ok, f"5 documents, {len(want)} hand-computed scores and the confusion matrix")
    assert rep.confusion.tolist() == CONFUSION
    assert got == want


@pytest.mark.skipif(not os.environ.get("ARGSTRUCT_CDCP_TRAIN") or not os.environ.get("ARGSTRUCT_CDCP_TEST"),
                    reason="set ARGSTRUCT_CDCP_TRAIN and ARGSTRUCT_CDCP_TEST to the converted CDCP release")
def test_real_cdcp_statistics():
    train = corpus_stats(load_corpus(os.environ["ARGSTRUCT_CDCP_TRAIN"], "cdcp"))
    test = corpus_stats(load_corpus(os.environ["ARGSTRUCT_CDCP_TEST"], "cdcp"))
    rate = (train.n_links + test.n_links) / (train.n_candidate_pairs + test.n_candidate_pairs)
    ok = (train.n_docs + test.n_docs == 731 and (test.n_docs, test.n_props, test.n_links) == (150, 973, 272)
          and abs(rate - 0.03) <= 0.005)
    report("real CDCP statistics", ok,
           f"{train.n_docs + test.n_docs} docs; test {test.n_docs}/{test.n_props}/{test.n_links}; "
           f"positive-link rate {rate:.2%}")
    assert ok
