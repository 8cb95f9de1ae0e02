"""Weighted Hamming cost and cost-augmented potentials."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..corpus import Document, candidate_links
from ..graph import DocGraph, Potentials


@dataclass(frozen=True)
class CostConfig:
    """Per-variable misclassification costs.

    Every wrong state costs ``default_cost`` except the "off" state of a
    link that is on in the gold graph, which costs ``fn_cost``.
    """

    default_cost: float = 1.0
    fn_cost: float = 1.0
    beta: float = 1.0

    def __post_init__(self):
        if self.default_cost < 0 or self.fn_cost < 0 or self.beta < 0:
            raise ValueError("costs must be non-negative")

    @classmethod
    def from_corpus(cls, docs: Sequence[Document], beta: float = 1.0,
                    default_cost: float = 1.0) -> "CostConfig":
        return cls(default_cost, fn_link_cost(docs, beta), beta)

    @classmethod
    def zero(cls) -> "CostConfig":
        return cls(0.0, 0.0, 0.0)

    def as_dict(self) -> dict:
        return {"default_cost": self.default_cost, "fn_cost": self.fn_cost, "beta": self.beta}


def fn_link_cost(docs: Sequence[Document], beta: float = 1.0) -> float:
    """max(1, beta * #negative / #positive candidate links)."""
    pos = sum(len(d.gold_links) for d in docs)
    total = sum(len(candidate_links(d)) for d in docs)
    if pos == 0:
        return 1.0
    return max(1.0, beta * (total - pos) / pos)


def cost_vectors(dg: DocGraph, gold: Sequence[int], cost: CostConfig) -> list[np.ndarray]:
    """rho_v(s): cost of predicting state s for variable v (zero at the gold state).

    Root-link variables carry no cost: they are determined by the real links.
    """
    link_vars = set(dg.link_var.values())
    root_vars = set(dg.root_var.values())
    out = []
    for v, k in enumerate(dg.graph.arities):
        rho = np.zeros(k)
        if v not in root_vars:
            c = cost.fn_cost if v in link_vars and gold[v] == 1 else cost.default_cost
            rho[:] = c
            rho[gold[v]] = 0.0
        out.append(rho)
    return out


def cost_augment(dg: DocGraph, potentials: Potentials, gold: Sequence[int],
                 cost: CostConfig) -> Potentials:
    """Potentials plus rho_v(s) on every unary; factor tables are shared, not copied."""
    if len(gold) != dg.graph.n_variables:
        raise ValueError("gold assignment must cover every variable")
    rho = cost_vectors(dg, gold, cost)
    return Potentials([u + r for u, r in zip(potentials.unary, rho)], potentials.tables)


def hamming(rho: Sequence[np.ndarray], y_or_marginals) -> float:
    """Cost of an assignment, or expected cost under per-variable marginals."""
    total = 0.0
    for r, y in zip(rho, y_or_marginals):
        total += float(r @ y) if np.ndim(y) else float(r[int(y)])
    return total
