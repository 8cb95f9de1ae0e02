"""Five-document metric fixture with hand-computed expectations."""
from fractions import Fraction as F

from conftest import make_doc

# (gold types, gold links, predicted types, predicted links)
FIVE_DOCS = [
    (["fact", "value", "policy"], {(0, 1), (1, 2), (0, 2)}, ["fact", "fact", "policy"], {(0, 1), (0, 2)}),
    (["value", "policy"], {(0, 1)}, ["value", "policy"], {(1, 0)}),
    (["testimony", "fact"], set(), ["testimony", "testimony"], {(0, 1)}),
    (["policy", "value", "value"], {(1, 0), (2, 0)}, ["policy", "value", "fact"], {(1, 0), (2, 0)}),
    (["fact"], set(), ["value"], set()),
]

# rows gold, columns predicted; reference, testimony, fact, value, policy
CONFUSION = [[0, 0, 0, 0, 0],
             [0, 1, 0, 0, 0],
             [0, 1, 1, 1, 0],
             [0, 0, 2, 2, 0],
             [0, 0, 0, 0, 3]]

EXPECTED = {
    "link": (F(4, 6), F(4, 6), F(2, 3)),
    "testimony": (F(1, 2), F(1), F(2, 3)),
    "fact": (F(1, 3), F(1, 3), F(1, 3)),
    "value": (F(2, 3), F(1, 2), F(4, 7)),
    "policy": (F(1), F(1), F(1)),
    "macro": F(9, 14),
    "average": F(55, 84),
    "coparent": (F(1), F(1, 2), F(2, 3)),
    "sibling": (F(1), F(1), F(1)),
    "grandparent": (F(0), F(0), F(0)),
}


def five_doc_fixture():
    gold, pred = [], []
    for i, (gt, gl, pt, pl) in enumerate(FIVE_DOCS):
        texts = [f"p{j}" for j in range(len(gt))]
        gold.append(make_doc(texts, gt, gl, doc_id=f"f{i}"))
        pred.append(make_doc(texts, pt, pl, doc_id=f"f{i}"))
    return gold, pred
