"""Structured SVM: structured hinge and block-coordinate Frank-Wolfe training.

The primal is

    min_w  lambda/2 ||w||^2 + 1/n sum_i H_i(w),   lambda = 1 / (C n)

with H_i the structured hinge of document i under a weighted Hamming
cost. BCFW keeps one block (w_i, l_i) per document with w = sum_i w_i and
l = sum_i l_i; the dual objective is -lambda/2 ||w||^2 + l.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..corpus import Document
from ..features import FeatureTemplate
from ..graph import Potentials, VariantConfig
from ..inference import Ad3Config, RelaxedSolution, ad3_solve
from ..weights import ModelWeights
from .cost import CostConfig, hamming
from .model import Example, psi

log = logging.getLogger(__name__)

C_GRID = (0.001, 0.003, 0.01, 0.03, 0.1, 0.3)


@dataclass(frozen=True)
class TrainConfig:
    C: float = 0.1
    epochs: int = 20
    seed: int = 0
    variant: VariantConfig = field(default_factory=lambda: VariantConfig.structured("full"))
    k: int = 3
    average: bool = True
    ad3: Ad3Config = field(default_factory=Ad3Config)
    gap_every: int = 0          # exact duality gap every n epochs (0: first and last only)
    warm_start: bool = True     # resume AD3 from the document's previous visit

    def __post_init__(self):
        if not self.C > 0:
            raise ValueError("C must be positive")
        if self.epochs < 0 or self.k < 2:
            raise ValueError("epochs must be >= 0 and k >= 2")


class TrainingDiverged(RuntimeError):
    def __init__(self, msg: str, trace: "TrainTrace"):
        super().__init__(msg)
        self.trace = trace


@dataclass
class EpochRecord:
    epoch: int
    dual: float
    primal: float = float("nan")
    gap: float = float("nan")
    integral_ratio: float = float("nan")
    n_calls: int = 0
    seconds: float = 0.0

    def as_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class TrainTrace:
    step_dual: list[float] = field(default_factory=list)
    epochs: list[EpochRecord] = field(default_factory=list)

    def rows(self) -> list[dict]:
        return [e.as_dict() for e in self.epochs]


@dataclass
class TrainResult:
    weights: ModelWeights          # averaged iterate when averaging is on
    last: ModelWeights             # final BCFW iterate
    trace: TrainTrace


@dataclass
class HingeResult:
    loss: float
    solution: RelaxedSolution
    psi: np.ndarray                 # psi of the loss-augmented solution
    cost: float                     # (expected) Hamming cost of it
    integral: bool


def loss_augmented(ex: Example, weights: ModelWeights, template: FeatureTemplate,
                   ad3: Ad3Config, warm=None) -> tuple[RelaxedSolution, np.ndarray, float]:
    """Cost-augmented AD3; returns the solution with its psi and cost."""
    pots = ex.potentials(weights)
    aug = Potentials([u + r for u, r in zip(pots.unary, ex.rho)], pots.tables)
    sol = ad3_solve(ex.dg.graph, aug, ad3, warm=warm)
    if sol.is_integral:
        y = sol.assignment
        return sol, psi(ex.dg, ex.feats, template, y).to_vector(), hamming(ex.rho, y)
    # fractional solutions are used as they are: expected features and cost
    return sol, psi(ex.dg, ex.feats, template, sol).to_vector(), hamming(ex.rho, sol.marginals)


def structured_hinge(weights: ModelWeights, ex: Example, template: FeatureTemplate,
                     ad3: Ad3Config | None = None) -> HingeResult:
    """max_y [score(y) + cost(y)] - score(gold), clipped at zero, with AD3 as the max."""
    sol, p, c = loss_augmented(ex, weights, template, ad3 or Ad3Config())
    w = weights.to_vector()
    loss = max(0.0, float(w @ p) + c - float(w @ ex.psi_gold))
    return HingeResult(loss, sol, p, c, sol.is_integral)


def hinge_for_doc(weights: ModelWeights, doc: Document, template: FeatureTemplate,
                  cost: CostConfig, variant: VariantConfig | None = None,
                  ad3: Ad3Config | None = None) -> HingeResult:
    ex = Example.build(doc, template, variant or VariantConfig.structured("full"), cost)
    return structured_hinge(weights, ex, template, ad3)


def _gap_pass(examples, template, w_vec, layout, blocks_w, blocks_l, lam, n, ad3, states):
    """Exact (relaxed-oracle) duality gap and primal objective at w."""
    weights = layout.like(w_vec)
    gap = 0.0
    hinge = 0.0
    for i, ex in enumerate(examples):
        sol, p, c = loss_augmented(ex, weights, template, ad3, states[i])
        ws = (ex.psi_gold - p) / (lam * n)
        ls = c / n
        gap += lam * float((blocks_w[i] - ws) @ w_vec) - blocks_l[i] + ls
        hinge += max(0.0, c - float(w_vec @ (ex.psi_gold - p)))
    primal = 0.5 * lam * float(w_vec @ w_vec) + hinge / n
    return gap, primal


def bcfw_train(docs: Sequence[Document], template: FeatureTemplate, config: TrainConfig,
               cost: CostConfig, examples: Sequence[Example] | None = None) -> TrainResult:
    """Train a structured SVM with BCFW; one block per document.

    Visits documents in a fresh seeded permutation every epoch. The
    trace records the dual objective after every block step and, per
    epoch, the share of integral AD3 calls plus (on selected epochs) the
    exact duality gap.
    """
    if not docs:
        raise ValueError("empty training corpus")
    if examples is None:
        examples = [Example.build(d, template, config.variant, cost) for d in docs]
    n = len(examples)
    layout = ModelWeights.zeros(template)
    dim = layout.size
    lam = 1.0 / (config.C * n)
    rng = np.random.default_rng(config.seed)
    w = np.zeros(dim)
    w_avg = np.zeros(dim)
    blocks_w = np.zeros((n, dim))
    blocks_l = np.zeros(n)
    ell = 0.0
    trace = TrainTrace()
    states = [None] * n
    k = 0
    for epoch in range(1, config.epochs + 1):
        t0 = time.perf_counter()
        n_int = 0
        for i in rng.permutation(n):
            ex = examples[i]
            sol, p, c = loss_augmented(ex, layout.like(w), template, config.ad3, states[i])
            if config.warm_start:
                states[i] = sol.state
            n_int += sol.is_integral
            ws = (ex.psi_gold - p) / (lam * n)
            ls = c / n
            d = blocks_w[i] - ws
            dd = float(d @ d)
            gap_i = lam * float(d @ w) - blocks_l[i] + ls
            gamma = 0.0 if dd <= 0 else min(1.0, max(0.0, gap_i / (lam * dd)))
            new_wi = blocks_w[i] - gamma * d
            new_li = (1.0 - gamma) * blocks_l[i] + gamma * ls
            w += new_wi - blocks_w[i]
            ell += new_li - blocks_l[i]
            blocks_w[i] = new_wi
            blocks_l[i] = new_li
            if config.average:
                w_avg = (k / (k + 2.0)) * w_avg + (2.0 / (k + 2.0)) * w
            k += 1
            dual = -0.5 * lam * float(w @ w) + ell
            trace.step_dual.append(dual)
            if not np.isfinite(dual):
                raise TrainingDiverged(f"non-finite dual objective in epoch {epoch}", trace)
        rec = EpochRecord(epoch, trace.step_dual[-1], integral_ratio=n_int / n, n_calls=n)
        if epoch == 1 or epoch == config.epochs or (config.gap_every and epoch % config.gap_every == 0):
            rec.gap, rec.primal = _gap_pass(examples, template, w, layout, blocks_w, blocks_l,
                                            lam, n, config.ad3, states)
        rec.seconds = time.perf_counter() - t0
        trace.epochs.append(rec)
        log.info("epoch %d dual %.6g gap %.4g integral %.3f (%.1fs)", epoch, rec.dual, rec.gap,
                 rec.integral_ratio, rec.seconds)
    final = w_avg if config.average else w
    return TrainResult(layout.like(final), layout.like(w), trace)
