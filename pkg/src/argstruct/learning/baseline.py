"""Independent linear classifiers for prop types and links (the baseline).

Both tasks use the multiclass hinge with l2 regularization, minimized by
Pegasos-style stochastic subgradient steps over a seeded shuffle. Links are
the two-class case with the positive class upweighted for imbalance. The
learned rows drop straight into the ``prop`` and ``link`` blocks of
``ModelWeights``; all other blocks stay zero.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from ..corpus import Document
from ..features import FeatureTemplate, doc_features
from ..weights import ModelWeights
from .cost import fn_link_cost


@dataclass(frozen=True)
class BaselineConfig:
    C: float = 0.1
    epochs: int = 20
    seed: int = 0
    class_weight: bool = True
    beta: float = 1.0
    average: bool = True

    def __post_init__(self):
        if not self.C > 0:
            raise ValueError("C must be positive")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")


def pegasos_multiclass(X: sp.csr_matrix, y: np.ndarray, n_classes: int, C: float, epochs: int,
                       rng: np.random.Generator, sample_weight: np.ndarray | None = None,
                       average: bool = True) -> np.ndarray:
    """Minimize lambda/2 ||W||^2 + 1/N sum_i c_i max(0, 1 + max_{s != y_i} W_s x_i - W_{y_i} x_i).

    lambda = 1 / (C N); step size 1 / (lambda t). Returns W (n_classes, d),
    averaged over all steps when ``average`` is set. Zero epochs give zeros.
    """
    N, d = X.shape
    W = np.zeros((n_classes, d))
    W_avg = np.zeros((n_classes, d))
    if N == 0 or epochs == 0:
        return W
    lam = 1.0 / (C * N)
    c = np.ones(N) if sample_weight is None else np.asarray(sample_weight, float)
    X = sp.csr_matrix(X)
    t = 0
    for _ in range(epochs):
        for i in rng.permutation(N):
            t += 1
            eta = 1.0 / (lam * t)
            idx = X.indices[X.indptr[i]:X.indptr[i + 1]]
            val = X.data[X.indptr[i]:X.indptr[i + 1]]
            scores = W[:, idx] @ val
            yi = y[i]
            scores_other = scores + 1.0
            scores_other[yi] = -np.inf
            s = int(np.argmax(scores_other))
            violated = scores_other[s] - scores[yi] > 0
            W *= 1.0 - eta * lam
            if violated:
                W[yi, idx] += eta * c[i] * val
                W[s, idx] -= eta * c[i] * val
            if average:
                W_avg += (W - W_avg) * (2.0 / (t + 1))
    return W_avg if average else W


def baseline_train(docs: Sequence[Document], template: FeatureTemplate,
                   config: BaselineConfig | None = None) -> ModelWeights:
    """Train the prop-type and link classifiers; returns baseline weights."""
    config = config or BaselineConfig()
    if not docs:
        raise ValueError("empty training corpus")
    rng = np.random.default_rng(config.seed)
    feats = [doc_features(template, d) for d in docs]
    P = len(template.scheme.labels)
    Xp = sp.vstack([f.prop for f in feats]).tocsr()
    yp = np.concatenate([d.gold_type_ids() for d in docs]).astype(np.int64)
    Xl = sp.vstack([f.link for f in feats]).tocsr()
    yl = np.concatenate([[int(l in d.gold_links) for l in f.links]
                         for d, f in zip(docs, feats)]).astype(np.int64)
    pos_weight = fn_link_cost(docs, config.beta) if config.class_weight else 1.0
    weights = ModelWeights.zeros(template)
    weights.prop[:] = pegasos_multiclass(Xp, yp, P, config.C, config.epochs, rng,
                                         average=config.average)
    weights.link[:] = pegasos_multiclass(Xl, yl, 2, config.C, config.epochs, rng,
                                         np.where(yl == 1, pos_weight, 1.0), config.average)
    return weights
