"""Fitting complete models and choosing C by document-level cross-validation."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from ..corpus import Document
from ..evaluation import EvalReport, evaluate
from ..features import fit_template
from ..graph import VariantConfig
from .baseline import BaselineConfig, baseline_train
from .cost import CostConfig
from .model import Model
from .predict import predict_corpus
from .ssvm import C_GRID, TrainConfig, TrainTrace, bcfw_train

log = logging.getLogger(__name__)


@dataclass
class FitResult:
    model: Model
    trace: TrainTrace | None = None


def fit_structured(docs: Sequence[Document], config: TrainConfig, beta: float = 1.0,
                   min_freq: int = 2, run_config: dict | None = None) -> FitResult:
    """Template, FN cost and BCFW weights, all from ``docs`` alone."""
    template = fit_template(docs, min_freq)
    cost = CostConfig.from_corpus(docs, beta)
    res = bcfw_train(docs, template, config, cost)
    return FitResult(Model("structured", template, res.weights, config.variant, cost,
                           dict(run_config or {})), res.trace)


def fit_baseline(docs: Sequence[Document], config: BaselineConfig, variant: str = "full",
                 min_freq: int = 2, run_config: dict | None = None) -> FitResult:
    template = fit_template(docs, min_freq)
    weights = baseline_train(docs, template, config)
    cost = CostConfig.from_corpus(docs, config.beta)
    return FitResult(Model("baseline", template, weights, VariantConfig.baseline(variant), cost,
                           dict(run_config or {})))


def kfold(n: int, k: int, seed: int = 0) -> list[np.ndarray]:
    """Shuffled document indices split into k folds of near-equal size."""
    if not 2 <= k <= n:
        raise ValueError(f"need 2 <= k <= number of documents, got k={k}, n={n}")
    return np.array_split(np.random.default_rng(seed).permutation(n), k)


@dataclass
class CVRow:
    C: float
    fold: int
    link_f1: float
    prop_f1: float
    average: float


@dataclass
class CVResult:
    rows: list[CVRow] = field(default_factory=list)
    best_C: float = float("nan")

    def mean_average(self) -> dict[float, float]:
        out: dict[float, list[float]] = {}
        for r in self.rows:
            out.setdefault(r.C, []).append(r.average)
        return {c: float(np.mean(v)) for c, v in out.items()}


def select_C(rows: Sequence[CVRow]) -> float:
    """Grid value with the best mean average F1; ties go to the smaller C."""
    means = CVResult(list(rows)).mean_average()
    return min(means, key=lambda c: (-means[c], c))


def cross_validate(docs: Sequence[Document], config: TrainConfig, grid: Sequence[float] = C_GRID,
                   kind: str = "structured", mode: str = "inference", beta: float = 1.0,
                   min_freq: int = 2, jobs: int = 1) -> CVResult:
    """k-fold CV at document level; every fold fits its own template and cost."""
    folds = kfold(len(docs), config.k, config.seed)
    result = CVResult()
    for C in grid:
        for f, test_idx in enumerate(folds):
            held = set(test_idx.tolist())
            train = [d for i, d in enumerate(docs) if i not in held]
            test = [docs[i] for i in sorted(held)]
            if kind == "structured":
                model = fit_structured(train, replace(config, C=C), beta, min_freq).model
            else:
                bcfg = BaselineConfig(C=C, epochs=config.epochs, seed=config.seed, beta=beta,
                                      average=config.average)
                model = fit_baseline(train, bcfg, config.variant.variant, min_freq).model
            preds = predict_corpus(test, model, mode, ad3=config.ad3, jobs=jobs)
            rep: EvalReport = evaluate(test, [p.doc for p in preds])
            result.rows.append(CVRow(C, f, rep.link_f1, rep.prop_macro_f1, rep.average))
            log.info("C=%g fold %d average %.4f", C, f, rep.average)
    result.best_C = select_C(result.rows)
    return result
