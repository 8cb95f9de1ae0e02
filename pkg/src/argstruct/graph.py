"""Factor graphs over proposition and link variables.

The generic part (``Factor``, ``FactorGraph``, ``Potentials``,
``score_assignment``) knows nothing about documents and is what the
inference code consumes. ``build_structure`` / ``build_graph`` instantiate
it for one document and one model variant.

Variable states: proposition variables take one state per label (in
``Scheme.labels`` order); link and root-link variables are binary with
state 0 = off and state 1 = on.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .corpus import Document, LABELS, Scheme, candidate_links, objectivity_rank
from .features import DocFeatures, FeatureTemplate, doc_features
from .weights import SECOND_ORDER_KINDS, ModelWeights

LARGE = 1e6

DUMP_VERSION = 1

LOGIC_KINDS = ("or_with_negations", "at_most_one", "exactly_one")


@dataclass(frozen=True)
class Factor:
    """A factor over ``variables``.

    kind "dense": a score table over the joint states (in ``Potentials``).
    kind "logic": a hard constraint over binary variables; ``logic`` names
    the constraint and ``negated`` flips individual members.
    kind "tree": the "on" members must form a spanning arborescence of
    ``n_nodes`` nodes rooted at node 0; member i is the edge ``edges[i]``
    given as (head, dependent).
    """

    kind: str
    variables: tuple[int, ...]
    role: str = "generic"
    logic: str | None = None
    negated: tuple[bool, ...] = ()
    n_nodes: int = 0
    edges: tuple[tuple[int, int], ...] = ()

    def __post_init__(self):
        if self.kind not in ("dense", "logic", "tree"):
            raise ValueError(f"unknown factor kind {self.kind!r}")
        if len(set(self.variables)) != len(self.variables):
            raise ValueError("a factor cannot bind the same variable twice")
        if self.kind == "logic":
            if self.logic not in LOGIC_KINDS:
                raise ValueError(f"unknown logic constraint {self.logic!r}")
            if not self.negated:
                object.__setattr__(self, "negated", (False,) * len(self.variables))
            if len(self.negated) != len(self.variables):
                raise ValueError("one negation flag per member")
        if self.kind == "tree" and len(self.edges) != len(self.variables):
            raise ValueError("one edge per tree-factor member")


@dataclass(frozen=True)
class FactorGraph:
    arities: tuple[int, ...]
    factors: tuple[Factor, ...] = ()
    names: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "arities", tuple(int(a) for a in self.arities))
        object.__setattr__(self, "factors", tuple(self.factors))
        for f in self.factors:
            for v in f.variables:
                if not 0 <= v < len(self.arities):
                    raise ValueError(f"factor references unknown variable {v}")
            if f.kind in ("logic", "tree") and any(self.arities[v] != 2 for v in f.variables):
                raise ValueError(f"{f.kind} factors bind binary variables only")

    @property
    def n_variables(self) -> int:
        return len(self.arities)

    def name(self, v: int) -> str:
        return self.names[v] if self.names else f"v{v}"


@dataclass
class Potentials:
    unary: list[np.ndarray]
    tables: dict[int, np.ndarray] = field(default_factory=dict)

    def copy(self) -> "Potentials":
        return Potentials([u.copy() for u in self.unary],
                          {k: t.copy() for k, t in self.tables.items()})

    def check(self, graph: FactorGraph) -> None:
        if len(self.unary) != graph.n_variables:
            raise ValueError("one unary potential per variable")
        for v, u in enumerate(self.unary):
            if u.shape != (graph.arities[v],):
                raise ValueError(f"unary potential of variable {v} has shape {u.shape}")
            if np.isnan(u).any():
                raise ValueError(f"NaN in unary potential of variable {v}")
        for i, f in enumerate(graph.factors):
            if f.kind != "dense":
                continue
            t = self.tables.get(i)
            shape = tuple(graph.arities[v] for v in f.variables)
            if t is None or t.shape != shape:
                raise ValueError(f"dense factor {i} needs a table of shape {shape}")
            if np.isnan(t).any():
                raise ValueError(f"NaN in table of factor {i}")


# ---------------------------------------------------------------------------
# hard-factor semantics

def logic_satisfied(logic: str, literals: Sequence[int]) -> bool:
    s = sum(literals)
    if logic == "or_with_negations":
        return s >= 1
    if logic == "at_most_one":
        return s <= 1
    return s == 1


def is_arborescence(n_nodes: int, edges: Sequence[tuple[int, int]]) -> bool:
    """True iff ``edges`` form a spanning arborescence rooted at node 0."""
    parent = {}
    for h, d in edges:
        if d == 0 or d in parent:
            return False
        parent[d] = h
    if len(parent) != n_nodes - 1:
        return False
    for node in range(1, n_nodes):
        seen = set()
        while node != 0:
            if node in seen:
                return False
            seen.add(node)
            node = parent[node]
    return True


def factor_satisfied(factor: Factor, states: Sequence[int]) -> bool:
    if factor.kind == "logic":
        lits = [1 - s if neg else s for s, neg in zip(states, factor.negated)]
        return logic_satisfied(factor.logic, lits)
    if factor.kind == "tree":
        return is_arborescence(factor.n_nodes, [e for e, s in zip(factor.edges, states) if s])
    return True


def score_assignment(graph: FactorGraph, potentials: Potentials, y: Sequence[int]) -> float:
    """Total score of a full assignment; ``-inf`` if a hard factor is violated."""
    if len(y) != graph.n_variables:
        raise ValueError(f"assignment covers {len(y)} of {graph.n_variables} variables")
    for v, s in enumerate(y):
        if not 0 <= s < graph.arities[v]:
            raise ValueError(f"state {s} invalid for variable {v}")
    total = 0.0
    for v, s in enumerate(y):
        total += float(potentials.unary[v][s])
    for i, f in enumerate(graph.factors):
        states = tuple(y[v] for v in f.variables)
        if f.kind == "dense":
            total += float(potentials.tables[i][states])
        elif not factor_satisfied(f, states):
            return -np.inf
    return total


def is_feasible(graph: FactorGraph, y: Sequence[int]) -> bool:
    return all(factor_satisfied(f, [y[v] for v in f.variables])
               for f in graph.factors if f.kind != "dense")


def dump_graph(graph: FactorGraph, potentials: Potentials | None = None) -> str:
    """Plain-text listing of variables, factors and potentials."""
    fmt = lambda a: " ".join(f"{x:.6g}" for x in np.ravel(a))
    lines = [f"# factor-graph dump v{DUMP_VERSION}",
             f"variables {graph.n_variables}"]
    for v, k in enumerate(graph.arities):
        line = f"var {v} {graph.name(v)} arity={k}"
        if potentials is not None:
            line += f" unary=[{fmt(potentials.unary[v])}]"
        lines.append(line)
    lines.append(f"factors {len(graph.factors)}")
    for i, f in enumerate(graph.factors):
        members = ",".join(str(v) for v in f.variables)
        if f.kind == "dense":
            line = f"factor {i} dense role={f.role} vars=[{members}]"
            if potentials is not None:
                line += f" table=[{fmt(potentials.tables[i])}]"
        elif f.kind == "logic":
            signs = "".join("-" if n else "+" for n in f.negated)
            line = f"factor {i} logic={f.logic} role={f.role} vars=[{members}] signs={signs}"
        else:
            edges = ",".join(f"{h}>{d}" for h, d in f.edges)
            line = f"factor {i} tree role={f.role} nodes={f.n_nodes} vars=[{members}] edges=[{edges}]"
        lines.append(line)
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# model variants

@dataclass(frozen=True)
class VariantConfig:
    variant: str = "full"
    unaries: bool = True
    compat_factors: bool = True
    compat_features: bool = True
    higher_order: bool = True
    link_structure: bool = True
    strict_constraints: bool = False

    @classmethod
    def structured(cls, variant: str) -> "VariantConfig":
        grid = {
            "basic": dict(compat_features=False, higher_order=False, link_structure=False),
            "full": {},
            "strict": dict(strict_constraints=True),
        }
        if variant not in grid:
            raise ValueError(f"unknown variant {variant!r}")
        return cls(variant=variant, **grid[variant])

    @classmethod
    def baseline(cls, variant: str) -> "VariantConfig":
        """Baselines carry only unaries plus parameter-free factors."""
        grid = {
            "basic": dict(link_structure=False),
            "full": dict(link_structure=True),
            "strict": dict(link_structure=True, strict_constraints=True),
        }
        if variant not in grid:
            raise ValueError(f"unknown variant {variant!r}")
        return cls(variant=variant, compat_factors=False, compat_features=False,
                   higher_order=False, **grid[variant])

    @property
    def is_baseline(self) -> bool:
        return not self.compat_factors

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def strict_mask(scheme: Scheme) -> np.ndarray:
    """Boolean (src type, trg type) table of link-on configurations to forbid."""
    labels = LABELS[scheme]
    P = len(labels)
    mask = np.zeros((P, P), dtype=bool)
    for i, j in itertools.product(range(P), repeat=2):
        if scheme is Scheme.CDCP:
            mask[i, j] = objectivity_rank(labels[i]) > objectivity_rank(labels[j])
        else:
            mask[i, j] = labels[i] != "premise"
    return mask


@dataclass
class DocGraph:
    """A document's factor graph plus the bookkeeping to map back to it."""

    doc: Document
    config: VariantConfig
    graph: FactorGraph
    links: list[tuple[int, int]]
    link_var: dict[tuple[int, int], int]
    root_var: dict[int, int]
    compat_factor: dict[tuple[int, int], int]
    second_order: list[tuple[int, str, tuple[int, int, int]]]

    @property
    def n_props(self) -> int:
        return len(self.doc.props)

    def prop_var(self, a: int) -> int:
        return a

    def gold_assignment(self) -> list[int]:
        return self.assignment(self.doc.gold_type_ids(), self.doc.gold_links)

    def assignment(self, types: Sequence[int], links) -> list[int]:
        y = [0] * self.graph.n_variables
        for a, t in enumerate(types):
            y[a] = int(t)
        links = set(links)
        for l, v in self.link_var.items():
            y[v] = int(l in links)
        has_out = {s for s, _ in links}
        for a, v in self.root_var.items():
            y[v] = int(a not in has_out)
        return y

    def decode(self, y: Sequence[int]) -> tuple[list[int], set[tuple[int, int]]]:
        types = [int(y[a]) for a in range(self.n_props)]
        links = {l for l, v in self.link_var.items() if y[v] == 1}
        return types, links


def _second_order_triples(scheme: Scheme, link_set: set, n: int, kinds: Sequence[str]):
    """Yield (kind, triple, (link1, link2)) for every second-order pattern."""
    for kind in kinds:
        for a, b, c in itertools.permutations(range(n), 3):
            if kind == "grandparent":          # a -> b -> c
                pair = ((a, b), (b, c))
            elif kind == "sibling":            # a <- b -> c
                if a > c:
                    continue
                pair = ((b, a), (b, c))
            else:                              # a -> b <- c
                if a > c:
                    continue
                pair = ((a, b), (c, b))
            if pair[0] in link_set and pair[1] in link_set:
                yield kind, (a, b, c), pair


def build_structure(doc: Document, config: VariantConfig) -> DocGraph:
    """Variables and factors for ``doc`` under ``config`` (no potentials)."""
    n = len(doc.props)
    labels = doc.labels
    P = len(labels)
    links = candidate_links(doc)
    link_set = set(links)
    arities = [P] * n
    names = [f"prop{a}" for a in range(n)]
    link_var = {}
    for a, b in links:
        link_var[(a, b)] = len(arities)
        arities.append(2)
        names.append(f"link{a}->{b}")
    root_var = {}
    if doc.scheme is Scheme.UKP and config.link_structure:
        for a in range(n):
            root_var[a] = len(arities)
            arities.append(2)
            names.append(f"link{a}->*")

    factors: list[Factor] = []
    compat_factor = {}
    if config.compat_factors or config.strict_constraints:
        role = "compat" if config.compat_factors else "strict"
        for a, b in links:
            compat_factor[(a, b)] = len(factors)
            factors.append(Factor("dense", (a, b, link_var[(a, b)]), role=role))

    second_order = []
    if config.higher_order:
        for kind, triple, (l1, l2) in _second_order_triples(
                doc.scheme, link_set, n, SECOND_ORDER_KINDS[doc.scheme]):
            second_order.append((len(factors), kind, triple))
            factors.append(Factor("dense", (link_var[l1], link_var[l2]), role=kind))

    if config.link_structure:
        if doc.scheme is Scheme.CDCP:
            for a, b, c in itertools.permutations(range(n), 3):
                trio = ((a, b), (b, c), (a, c))
                if all(l in link_set for l in trio):
                    factors.append(Factor(
                        "logic", tuple(link_var[l] for l in trio), role="transitivity",
                        logic="or_with_negations", negated=(True, True, False)))
            for a, b in itertools.combinations(range(n), 2):
                if (a, b) in link_set and (b, a) in link_set:
                    factors.append(Factor(
                        "logic", (link_var[(a, b)], link_var[(b, a)]),
                        role="antisymmetry", logic="at_most_one"))
        else:
            paragraphs: dict[int, list[int]] = {}
            for p in doc.props:
                paragraphs.setdefault(p.paragraph, []).append(p.id)
            for members in paragraphs.values():
                node = {a: i + 1 for i, a in enumerate(members)}
                variables, edges = [], []
                for a, b in links:
                    if a in node and b in node:
                        variables.append(link_var[(a, b)])
                        edges.append((node[b], node[a]))
                for a in members:
                    variables.append(root_var[a])
                    edges.append((0, node[a]))
                factors.append(Factor("tree", tuple(variables), role="forest",
                                      n_nodes=len(members) + 1, edges=tuple(edges)))

    graph = FactorGraph(tuple(arities), tuple(factors), tuple(names))
    return DocGraph(doc, config, graph, links, link_var, root_var, compat_factor, second_order)


def doc_graph_features(dg: DocGraph, template: FeatureTemplate) -> DocFeatures:
    return doc_features(template, dg.doc, [t for _, _, t in dg.second_order], dg.links)


def compute_potentials(dg: DocGraph, feats: DocFeatures, weights: ModelWeights) -> Potentials:
    """Fill unary, compatibility and second-order potentials from linear weights."""
    n = dg.n_props
    cfg = dg.config
    if feats.prop.shape[1] != weights.prop.shape[1] or feats.link.shape[1] != weights.link.shape[1]:
        raise ValueError("weight dimensions do not match the feature template")
    unary: list[np.ndarray] = [None] * dg.graph.n_variables
    prop_scores = np.asarray(feats.prop @ weights.prop.T) if n else np.zeros((0, weights.prop.shape[0]))
    for a in range(n):
        unary[a] = prop_scores[a].copy()
    if dg.links:
        link_scores = np.asarray(feats.link @ weights.link.T)
        for i, l in enumerate(dg.links):
            unary[dg.link_var[l]] = link_scores[i].copy()
    for v in dg.root_var.values():
        unary[v] = np.zeros(2)
    if not cfg.unaries:
        unary = [np.zeros_like(u) for u in unary]

    tables = {}
    P = weights.prop.shape[0]
    mask = strict_mask(dg.doc.scheme) if cfg.strict_constraints else None
    if dg.compat_factor:
        v = feats.compat if cfg.compat_features else np.tile([1.0, 0.0, 0.0], (len(dg.links), 1))
        for i, l in enumerate(dg.links):
            if cfg.compat_factors:
                t = np.einsum("ijkf,f->ijk", weights.compat, v[i])
            else:
                t = np.zeros((P, P, 2))
            if mask is not None:
                t[:, :, 1] = np.where(mask, t[:, :, 1] - LARGE, t[:, :, 1])
            tables[dg.compat_factor[l]] = t
    if dg.second_order:
        X = feats.triples([t for _, _, t in dg.second_order])
        for row, (fi, kind, _) in enumerate(dg.second_order):
            s = float(X[row] @ weights.second_order[kind])
            tables[fi] = np.array([[0.0, 0.0], [0.0, s]])
    return Potentials(unary, tables)


def build_graph(doc: Document, template: FeatureTemplate, weights: ModelWeights,
                config: VariantConfig) -> tuple[DocGraph, Potentials]:
    weights.check(template)
    dg = build_structure(doc, config)
    return dg, compute_potentials(dg, doc_graph_features(dg, template), weights)
