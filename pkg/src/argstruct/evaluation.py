"""Prop and link metrics, confusion matrices and higher-order structure scores."""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from .corpus import Document

STRUCTURE_KINDS = ("coparent", "sibling", "grandparent")


class DocumentMismatchError(ValueError):
    pass


@dataclass(frozen=True)
class PRF:
    tp: int
    n_pred: int
    n_gold: int

    @property
    def precision(self) -> float:
        return self.tp / self.n_pred if self.n_pred else 0.0

    @property
    def recall(self) -> float:
        return self.tp / self.n_gold if self.n_gold else 0.0

    @property
    def f1(self) -> float:
        # 2PR / (P + R) written over counts, so the result is a single rounding
        return 2 * self.tp / (self.n_pred + self.n_gold) if self.tp else 0.0

    @property
    def f1_exact(self) -> Fraction:
        return Fraction(2 * self.tp, self.n_pred + self.n_gold) if self.tp else Fraction(0)

    def as_dict(self) -> dict:
        return {"precision": self.precision, "recall": self.recall, "f1": self.f1,
                "tp": self.tp, "n_pred": self.n_pred, "n_gold": self.n_gold}


def set_prf(gold: set, pred: set) -> PRF:
    return PRF(len(gold & pred), len(pred), len(gold))


def structures(links: Iterable[tuple[int, int]], kind: str) -> set[tuple[int, int, int]]:
    """Second-order patterns in a link set.

    coparent (b, a, c): a -> b <- c with a < c; sibling (b, a, c):
    a <- b -> c with a < c; grandparent (a, b, c): a -> b -> c with a != c.
    """
    links = set(links)
    out_of: dict[int, list[int]] = {}
    into: dict[int, list[int]] = {}
    for a, b in links:
        out_of.setdefault(a, []).append(b)
        into.setdefault(b, []).append(a)
    found = set()
    if kind == "coparent":
        for b, srcs in into.items():
            srcs = sorted(srcs)
            found |= {(b, a, c) for i, a in enumerate(srcs) for c in srcs[i + 1:]}
    elif kind == "sibling":
        for b, trgs in out_of.items():
            trgs = sorted(trgs)
            found |= {(b, a, c) for i, a in enumerate(trgs) for c in trgs[i + 1:]}
    elif kind == "grandparent":
        for a, b in links:
            found |= {(a, b, c) for c in out_of.get(b, ()) if c != a}
    else:
        raise ValueError(f"unknown structure kind {kind!r}")
    return found


@dataclass
class EvalReport:
    labels: tuple[str, ...]
    link: PRF
    prop: dict[str, PRF]
    prop_macro_f1: float
    macro_classes: tuple[str, ...]
    confusion: np.ndarray                        # rows gold, columns predicted
    structures: dict[str, PRF] = field(default_factory=dict)

    @property
    def link_f1(self) -> float:
        return self.link.f1

    @property
    def link_precision(self) -> float:
        return self.link.precision

    @property
    def link_recall(self) -> float:
        return self.link.recall

    @property
    def prop_f1(self) -> dict[str, float]:
        return {k: v.f1 for k, v in self.prop.items()}

    def _macro_exact(self) -> Fraction:
        if not self.macro_classes:
            return Fraction(0)
        return sum((self.prop[k].f1_exact for k in self.macro_classes), Fraction(0)) / len(self.macro_classes)

    @property
    def average(self) -> float:
        return float((self.link.f1_exact + self._macro_exact()) / 2)

    @property
    def confusion_normalized(self) -> np.ndarray:
        return normalize_rows(self.confusion)

    def as_dict(self) -> dict:
        return {
            "average": self.average,
            "link": self.link.as_dict(),
            "prop_macro_f1": self.prop_macro_f1,
            "macro_classes": list(self.macro_classes),
            "prop": {k: v.as_dict() for k, v in self.prop.items()},
            "labels": list(self.labels),
            "confusion": self.confusion.tolist(),
            "structures": {k: v.as_dict() for k, v in self.structures.items()},
            "n_pred_links": self.link.n_pred,
            "n_gold_links": self.link.n_gold,
        }

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), indent=2, sort_keys=True)

    def table(self) -> str:
        """Plain-text summary laid out like a results table."""
        head = ["Average", "Link", *self.labels, "Prop(macro)"]
        vals = [self.average, self.link.f1, *(self.prop[l].f1 for l in self.labels),
                self.prop_macro_f1]
        w = max(len(h) for h in head) + 2
        lines = ["".join(h.rjust(w) for h in head),
                 "".join(f"{100 * v:.1f}".rjust(w) for v in vals),
                 "",
                 f"links: P {self.link.precision:.3f} R {self.link.recall:.3f} "
                 f"F1 {self.link.f1:.3f} (predicted {self.link.n_pred}, gold {self.link.n_gold})"]
        for k, s in self.structures.items():
            lines.append(f"{k}: P {s.precision:.3f} R {s.recall:.3f} F1 {s.f1:.3f} "
                         f"(predicted {s.n_pred}, gold {s.n_gold})")
        return "\n".join(lines) + "\n"


def normalize_rows(m: np.ndarray) -> np.ndarray:
    m = np.asarray(m, dtype=float)
    sums = m.sum(axis=1, keepdims=True)
    return np.divide(m, sums, out=np.zeros_like(m), where=sums > 0)


def _pair(gold_docs: Sequence[Document], predicted: Sequence[Document]):
    by_id = {d.doc_id: d for d in predicted}
    if len(by_id) != len(predicted) or len(predicted) != len(gold_docs):
        raise DocumentMismatchError("need exactly one prediction per gold document")
    pairs = []
    for g in gold_docs:
        p = by_id.get(g.doc_id)
        if p is None:
            raise DocumentMismatchError(f"no prediction for document {g.doc_id!r}")
        if len(p.props) != len(g.props) or p.scheme is not g.scheme:
            raise DocumentMismatchError(f"prediction for {g.doc_id!r} does not match its propositions")
        pairs.append((g, p))
    return pairs


def confusion(gold_docs: Sequence[Document], predicted: Sequence[Document]) -> tuple[np.ndarray, np.ndarray]:
    """Raw counts (rows gold, columns predicted) and the row-normalized matrix."""
    pairs = _pair(gold_docs, predicted)
    labels = gold_docs[0].labels if gold_docs else ()
    m = np.zeros((len(labels), len(labels)), dtype=np.int64)
    for g, p in pairs:
        for gp, pp in zip(g.props, p.props):
            m[labels.index(gp.gold_type), labels.index(pp.gold_type)] += 1
    return m, normalize_rows(m)


def evaluate(gold_docs: Sequence[Document], predicted: Sequence[Document]) -> EvalReport:
    """Score predictions (documents carrying predicted types and links) against gold.

    Links count as exact directed pairs, positives only. The prop macro
    average covers classes present in the gold data, plus classes that
    were predicted but never occur in gold (with F1 0); classes absent
    from both are skipped.
    """
    if not gold_docs:
        raise DocumentMismatchError("nothing to evaluate")
    pairs = _pair(gold_docs, predicted)
    labels = gold_docs[0].labels
    gold_links, pred_links = set(), set()
    gold_struct = {k: set() for k in STRUCTURE_KINDS}
    pred_struct = {k: set() for k in STRUCTURE_KINDS}
    for g, p in pairs:
        gold_links |= {(g.doc_id, *l) for l in g.gold_links}
        pred_links |= {(g.doc_id, *l) for l in p.gold_links}
        for k in STRUCTURE_KINDS:
            gold_struct[k] |= {(g.doc_id, *s) for s in structures(g.gold_links, k)}
            pred_struct[k] |= {(g.doc_id, *s) for s in structures(p.gold_links, k)}
    m, _ = confusion(gold_docs, predicted)
    prop = {}
    for i, lab in enumerate(labels):
        prop[lab] = PRF(int(m[i, i]), int(m[:, i].sum()), int(m[i, :].sum()))
    macro = tuple(l for l in labels if prop[l].n_gold > 0 or prop[l].n_pred > 0)
    rep = EvalReport(labels, set_prf(gold_links, pred_links), prop, 0.0, macro, m,
                     {k: set_prf(gold_struct[k], pred_struct[k]) for k in STRUCTURE_KINDS})
    # averages are taken over exact fractions so they round only once
    rep.prop_macro_f1 = float(rep._macro_exact())
    return rep


def confusion_csv(labels: Sequence[str], m: np.ndarray) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["gold\\predicted", *labels])
    for lab, row in zip(labels, np.asarray(m)):
        w.writerow([lab, *(f"{x:.6g}" for x in row)])
    return buf.getvalue()
