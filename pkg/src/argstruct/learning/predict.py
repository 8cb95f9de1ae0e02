"""Decoding documents with a trained model, and a checker for hard constraints."""
from __future__ import annotations

import itertools
from collections import Counter
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from ..corpus import Document, Scheme, objectivity_rank
from ..graph import Potentials, VariantConfig, build_graph
from ..inference import Ad3Config, branch_and_bound
from .model import Model

MODES = ("round", "inference")


@dataclass
class Prediction:
    doc: Document                   # same text and spans, predicted types and links
    y: list[int]
    score: float
    status: str                     # "round", or the root relaxation's AD3 status
    iterations: int = 0
    nodes: int = 0
    objective: float = float("nan")


def variant_for(model: Model, variant: VariantConfig | str | None = None) -> VariantConfig:
    """Resolve a variant name against the model kind (baselines get parameter-free factors only)."""
    if variant is None:
        return model.variant
    if isinstance(variant, VariantConfig):
        return variant
    return VariantConfig.baseline(variant) if model.kind == "baseline" else VariantConfig.structured(variant)


def round_assignment(potentials: Potentials) -> list[int]:
    """Per-variable argmax of the unary potentials; ties go to the lowest state."""
    return [int(np.argmax(u)) for u in potentials.unary]


def apply_prediction(doc: Document, types: Sequence[int], links) -> Document:
    labels = doc.labels
    props = tuple(replace(p, gold_type=labels[t]) for p, t in zip(doc.props, types))
    return Document(doc.doc_id, doc.text, props, frozenset(links), doc.scheme)


def predict(doc: Document, model: Model, mode: str = "inference",
            variant: VariantConfig | str | None = None, ad3: Ad3Config | None = None,
            node_budget: int = 10000) -> Prediction:
    """Predict prop types and links for ``doc``.

    ``round`` takes the argmax of every unary potential on its own;
    ``inference`` runs exact MAP (branch-and-bound) over the variant's graph.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    config = variant_for(model, variant)
    dg, pots = build_graph(doc, model.template, model.weights, config)
    if mode == "round":
        y = round_assignment(pots)
        pred = Prediction(doc, y, float(sum(u[s] for u, s in zip(pots.unary, y))), "round")
    else:
        res = branch_and_bound(dg.graph, pots, ad3, node_budget=node_budget)
        root = res.relaxation
        pred = Prediction(doc, res.assignment, res.score, root.status if root else "exact",
                          root.iterations if root else 0, res.nodes,
                          root.objective if root else res.score)
    types, links = dg.decode(pred.y)
    pred.doc = apply_prediction(doc, types, links)
    return pred


def predict_corpus(docs: Sequence[Document], model: Model, mode: str = "inference",
                   variant: VariantConfig | str | None = None, ad3: Ad3Config | None = None,
                   jobs: int = 1) -> list[Prediction]:
    """Predict every document; documents are independent, so ``jobs`` > 1 uses processes."""
    if jobs <= 1 or len(docs) < 2:
        return [predict(d, model, mode, variant, ad3) for d in docs]
    from concurrent.futures import ProcessPoolExecutor
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_predict_one, [(d, model, mode, variant, ad3) for d in docs],
                             chunksize=max(1, len(docs) // (4 * jobs))))


def _predict_one(args) -> Prediction:
    return predict(*args)


# ---------------------------------------------------------------------------
# constraint checker

@dataclass
class Violations:
    transitivity: int = 0       # a->b, b->c without a->c (CDCP)
    symmetry: int = 0           # both a->b and b->a
    forest: int = 0             # extra outgoing links, cycles, cross-paragraph links (UKP)
    objectivity: int = 0        # strict: disallowed (source type, target type) pairs

    @property
    def total(self) -> int:
        return self.transitivity + self.symmetry + self.forest + self.objectivity

    def __add__(self, other: "Violations") -> "Violations":
        return Violations(self.transitivity + other.transitivity, self.symmetry + other.symmetry,
                          self.forest + other.forest, self.objectivity + other.objectivity)

    def as_dict(self) -> dict:
        return dict(self.__dict__, total=self.total)


def _n_cycles(n: int, links) -> int:
    """Number of props lying on a directed cycle."""
    succ = {a: set() for a in range(n)}
    for a, b in links:
        succ[a].add(b)
    on_cycle = 0
    for s in range(n):
        seen, frontier = set(), list(succ[s])
        while frontier:
            v = frontier.pop()
            if v not in seen:
                seen.add(v)
                frontier.extend(succ[v])
        on_cycle += s in seen
    return on_cycle


def check_constraints(doc: Document, variant: VariantConfig) -> Violations:
    """Count violations of the hard constraints ``variant`` imposes on ``doc``'s links and types."""
    links = set(doc.gold_links)
    n = len(doc.props)
    v = Violations()
    if variant.link_structure:
        v.symmetry = sum((b, a) in links for a, b in links if a < b)
        if doc.scheme is Scheme.CDCP:
            v.transitivity = sum(
                1 for (a, b), (b2, c) in itertools.product(links, links)
                if b == b2 and a != c and (a, c) not in links)
        else:
            out_degree = Counter(a for a, _ in links)
            v.forest = (sum(d - 1 for d in out_degree.values() if d > 1) + _n_cycles(n, links)
                        + sum(doc.props[a].paragraph != doc.props[b].paragraph for a, b in links))
    if variant.strict_constraints:
        types = [p.gold_type for p in doc.props]
        if doc.scheme is Scheme.CDCP:
            v.objectivity = sum(objectivity_rank(types[a]) > objectivity_rank(types[b]) for a, b in links)
        else:
            v.objectivity = sum(types[a] != "premise" for a, _ in links)
    return v


def check_corpus(docs: Sequence[Document], variant: VariantConfig) -> Violations:
    total = Violations()
    for d in docs:
        total = total + check_constraints(d, variant)
    return total


__all__ = ["MODES", "Prediction", "Violations", "apply_prediction", "check_constraints",
           "check_corpus", "predict", "predict_corpus", "round_assignment", "variant_for"]
