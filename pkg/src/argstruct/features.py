"""Deterministic linear features for propositions, links and prop triples.

The extractor is a self-contained subset of the usual argument-mining
feature set: unigrams, token statistics, position, and lexical overlap.
Tokenization lowercases the text and splits on anything that is not a
letter or digit. Lexical overlap uses "content words" (alphabetic tokens
outside a small stopword list) as a stand-in for nouns.
"""
from __future__ import annotations

import hashlib
import itertools
import json
import re
import string
from collections import Counter
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .corpus import Document, Scheme, candidate_links

TEMPLATE_VERSION = 1

_TOKEN_RE = re.compile(r"[^\W_]+")

STOPWORDS = frozenset("""
a about above after again against all am an and any are as at be because been
before being below between both but by can could did do does doing down during
each few for from further had has have having he her here hers herself him
himself his how i if in into is it its itself just me more most my myself no
nor not now of off on once only or other our ours ourselves out over own same
she should so some such than that the their theirs them themselves then there
these they this those through to too under until up very was we were what when
where which while who whom why will with would you your yours yourself
yourselves
""".split())

N_BUCKETS = 5

PROP_STRUCTURAL = (
    ["bias", "token_count", "relative_position"]
    + [f"sentence_{i}" for i in range(N_BUCKETS)]
    + [f"paragraph_{i}" for i in range(N_BUCKETS)]
    + ["first_prop", "last_prop", "punctuation_count", "digit_count"]
)

LINK_STRUCTURAL = [
    "bias", "src_token_count", "trg_token_count", "props_between",
    "same_sentence", "same_paragraph", "src_precedes_trg",
    "shared_word_count", "jaccard",
]

_PAIRS = ((0, 1), (0, 2), (1, 2))
_ORDERS = tuple(itertools.permutations(range(3)))

SECOND_ORDER_NAMES = tuple(
    ["bias"]
    + ["same_sentence_all"] + [f"same_sentence_{i}{j}" for i, j in _PAIRS]
    + [f"order_{''.join(map(str, o))}" for o in _ORDERS]
    + ["jaccard_all"] + [f"jaccard_{i}{j}" for i, j in _PAIRS]
    + ["shared_any_all"] + [f"shared_any_{i}{j}" for i, j in _PAIRS]
    + [f"shared_all_over_{i}" for i in range(3)]
    + [f"shared_all_over_{i}{j}" for i, j in _PAIRS]
    + [f"shared_{i}{j}_over_{k}" for i, j in _PAIRS for k in (i, j)]
)
SECOND_ORDER_DIM = len(SECOND_ORDER_NAMES)  # 31


def tokenize(text: str) -> list[str]:
    return _TOKEN_RE.findall(text.lower())


def content_words(tokens: Sequence[str]) -> frozenset[str]:
    return frozenset(t for t in tokens if t.isalpha() and t not in STOPWORDS)


def load_lexicon(path) -> tuple[str, ...]:
    with open(path, encoding="utf-8") as fh:
        words = {w.strip().lower() for w in fh if w.strip()}
    return tuple(sorted(words))


def _jaccard(*sets: frozenset) -> float:
    union = frozenset().union(*sets)
    if not union:
        return 0.0
    return len(frozenset.intersection(*sets)) / len(union)


def _ratio(num: int, den: int) -> float:
    return num / den if den else 0.0


@dataclass(frozen=True)
class SparseVector:
    indices: np.ndarray
    values: np.ndarray
    dimension: int

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64)
        if idx.size and (np.any(np.diff(idx) <= 0) or idx[0] < 0 or idx[-1] >= self.dimension):
            raise ValueError("indices must be strictly increasing and within the dimension")
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))

    @classmethod
    def from_dense(cls, x) -> "SparseVector":
        x = np.asarray(x, dtype=float)
        nz = np.flatnonzero(x)
        return cls(nz, x[nz], x.shape[0])

    def to_dense(self) -> np.ndarray:
        out = np.zeros(self.dimension)
        out[self.indices] = self.values
        return out

    def __getitem__(self, i: int) -> float:
        pos = np.searchsorted(self.indices, i)
        if pos < len(self.indices) and self.indices[pos] == i:
            return float(self.values[pos])
        return 0.0


@dataclass(frozen=True)
class CompatFeatures:
    bias: int
    adjacency: int
    order: int

    def as_array(self) -> np.ndarray:
        return np.array([self.bias, self.adjacency, self.order], dtype=float)


def compat_features(doc: Document | int, a: int, b: int) -> CompatFeatures:
    """Bias, adjacency (no prop strictly between) and order (a precedes b)."""
    if a == b:
        raise ValueError("compat features need two distinct props")
    return CompatFeatures(1, int(abs(a - b) == 1), int(a < b))


@dataclass(frozen=True)
class FeatureTemplate:
    """Fitted vocabulary plus block layout; immutable once built."""

    scheme: Scheme
    vocabulary: dict[str, int]
    lexicon: tuple[str, ...] = ()
    min_freq: int = 2

    @property
    def n_vocab(self) -> int:
        return len(self.vocabulary)

    @property
    def prop_dim(self) -> int:
        return self.n_vocab + len(PROP_STRUCTURAL) + len(self.lexicon)

    @property
    def link_dim(self) -> int:
        return 2 * self.n_vocab + len(LINK_STRUCTURAL)

    @property
    def second_order_dim(self) -> int:
        return SECOND_ORDER_DIM

    def to_json(self) -> str:
        return json.dumps({
            "version": TEMPLATE_VERSION,
            "scheme": self.scheme.value,
            "min_freq": self.min_freq,
            "lexicon": list(self.lexicon),
            "vocabulary": sorted(self.vocabulary, key=self.vocabulary.__getitem__),
            "dims": {"prop": self.prop_dim, "link": self.link_dim,
                     "second_order": self.second_order_dim},
        }, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "FeatureTemplate":
        data = json.loads(text)
        if data.get("version") != TEMPLATE_VERSION:
            raise ValueError(f"unsupported template version {data.get('version')!r}")
        vocab = {w: i for i, w in enumerate(data["vocabulary"])}
        tpl = cls(Scheme(data["scheme"]), vocab, tuple(data["lexicon"]), data["min_freq"])
        if data["dims"] != {"prop": tpl.prop_dim, "link": tpl.link_dim,
                            "second_order": tpl.second_order_dim}:
            raise ValueError("template dimensions do not match its vocabulary")
        return tpl

    def fingerprint(self) -> str:
        return hashlib.sha256(self.to_json().encode("utf-8")).hexdigest()


def fit_template(train_docs: Sequence[Document], min_freq: int = 2,
                 lexicon: Sequence[str] = ()) -> FeatureTemplate:
    """Build the unigram vocabulary from prop texts of the training docs.

    Token ids follow sorted token order.
    """
    if not train_docs:
        raise ValueError("cannot fit a feature template on an empty corpus")
    schemes = {d.scheme for d in train_docs}
    if len(schemes) != 1:
        raise ValueError("training documents mix annotation schemes")
    counts = Counter()
    for doc in train_docs:
        for a in range(len(doc.props)):
            counts.update(tokenize(doc.prop_text(a)))
    vocab = sorted(t for t, c in counts.items() if c >= min_freq)
    return FeatureTemplate(schemes.pop(), {t: i for i, t in enumerate(vocab)},
                           tuple(sorted(set(w.lower() for w in lexicon))), min_freq)


class _DocCache:
    """Per-document token data shared by the extractors."""

    def __init__(self, doc: Document):
        self.doc = doc
        self.tokens = [tokenize(doc.prop_text(a)) for a in range(len(doc.props))]
        self.words = [content_words(t) for t in self.tokens]
        self.texts = [doc.prop_text(a) for a in range(len(doc.props))]


def _check_prop(doc: Document, *ids: int) -> None:
    for a in ids:
        if not 0 <= a < len(doc.props):
            raise IndexError(f"prop id {a} out of range for document {doc.doc_id!r}")


def _prop_dense(tpl: FeatureTemplate, c: _DocCache, a: int) -> np.ndarray:
    doc = c.doc
    n = len(doc.props)
    x = np.zeros(tpl.prop_dim)
    for t in set(c.tokens[a]):
        j = tpl.vocabulary.get(t)
        if j is not None:
            x[j] = 1.0
    off = tpl.n_vocab
    p = doc.props[a]
    s = dict.fromkeys(PROP_STRUCTURAL, 0.0)
    s["bias"] = 1.0
    s["token_count"] = len(c.tokens[a])
    s["relative_position"] = a / (n - 1) if n > 1 else 0.0
    s[f"sentence_{min(p.sentence, N_BUCKETS - 1)}"] = 1.0
    s[f"paragraph_{min(p.paragraph, N_BUCKETS - 1)}"] = 1.0
    s["first_prop"] = float(a == 0)
    s["last_prop"] = float(a == n - 1)
    s["punctuation_count"] = sum(ch in string.punctuation for ch in c.texts[a])
    s["digit_count"] = sum(ch.isdigit() for ch in c.texts[a])
    x[off:off + len(PROP_STRUCTURAL)] = list(s.values())
    off += len(PROP_STRUCTURAL)
    if tpl.lexicon:
        toks = set(c.tokens[a])
        x[off:] = [float(w in toks) for w in tpl.lexicon]
    return x


def _link_dense(tpl: FeatureTemplate, c: _DocCache, a: int, b: int) -> np.ndarray:
    doc = c.doc
    V = tpl.n_vocab
    x = np.zeros(tpl.link_dim)
    for t in set(c.tokens[a]):
        j = tpl.vocabulary.get(t)
        if j is not None:
            x[j] = 1.0
    for t in set(c.tokens[b]):
        j = tpl.vocabulary.get(t)
        if j is not None:
            x[V + j] = 1.0
    pa, pb = doc.props[a], doc.props[b]
    shared = c.words[a] & c.words[b]
    x[2 * V:] = [
        1.0,
        len(c.tokens[a]),
        len(c.tokens[b]),
        abs(a - b) - 1,
        float(pa.sentence == pb.sentence and pa.paragraph == pb.paragraph),
        float(pa.paragraph == pb.paragraph),
        float(a < b),
        len(shared),
        _jaccard(c.words[a], c.words[b]),
    ]
    return x


def _second_order_dense(c: _DocCache, a: int, b: int, cc: int) -> np.ndarray:
    ids = (a, b, cc)
    props = [c.doc.props[i] for i in ids]
    W = [c.words[i] for i in ids]
    sent = [(p.paragraph, p.sentence) for p in props]
    x = [1.0]
    x.append(float(sent[0] == sent[1] == sent[2]))
    x += [float(sent[i] == sent[j]) for i, j in _PAIRS]
    rank = tuple(int(r) for r in np.argsort(ids))
    x += [float(rank == o) for o in _ORDERS]
    x.append(_jaccard(*W))
    x += [_jaccard(W[i], W[j]) for i, j in _PAIRS]
    common = W[0] & W[1] & W[2]
    x.append(float(bool(common)))
    x += [float(bool(W[i] & W[j])) for i, j in _PAIRS]
    x += [_ratio(len(common), len(W[i])) for i in range(3)]
    x += [_ratio(len(common), len(W[i] | W[j])) for i, j in _PAIRS]
    for i, j in _PAIRS:
        shared = len(W[i] & W[j])
        x += [_ratio(shared, len(W[i])), _ratio(shared, len(W[j]))]
    return np.asarray(x)


def prop_features(template: FeatureTemplate, doc: Document, a: int) -> SparseVector:
    _check_prop(doc, a)
    return SparseVector.from_dense(_prop_dense(template, _DocCache(doc), a))


def link_features(template: FeatureTemplate, doc: Document, a: int, b: int) -> SparseVector:
    _check_prop(doc, a, b)
    if a == b:
        raise ValueError("link features need two distinct props")
    return SparseVector.from_dense(_link_dense(template, _DocCache(doc), a, b))


def second_order_features(template: FeatureTemplate, doc: Document, a: int, b: int, c: int) -> SparseVector:
    _check_prop(doc, a, b, c)
    if len({a, b, c}) != 3:
        raise ValueError("second-order features need three distinct props")
    return SparseVector.from_dense(_second_order_dense(_DocCache(doc), a, b, c))


@dataclass
class DocFeatures:
    """All feature matrices of one document, in candidate-link order."""

    prop: sp.csr_matrix                      # (n_props, prop_dim)
    link: sp.csr_matrix                      # (n_links, link_dim)
    compat: np.ndarray                       # (n_links, 3)
    links: list[tuple[int, int]]
    second_order: dict[tuple[int, int, int], np.ndarray] = field(default_factory=dict)

    def triples(self, triples: Sequence[tuple[int, int, int]]) -> np.ndarray:
        if not triples:
            return np.zeros((0, SECOND_ORDER_DIM))
        return np.stack([self.second_order[t] for t in triples])


def doc_features(template: FeatureTemplate, doc: Document,
                 triples: Sequence[tuple[int, int, int]] = (),
                 links: Sequence[tuple[int, int]] | None = None) -> DocFeatures:
    if doc.scheme is not template.scheme:
        raise ValueError("document and template schemes differ")
    cache = _DocCache(doc)
    n = len(doc.props)
    links = candidate_links(doc) if links is None else list(links)
    prop = np.stack([_prop_dense(template, cache, a) for a in range(n)]) if n else np.zeros((0, template.prop_dim))
    link = (np.stack([_link_dense(template, cache, a, b) for a, b in links])
            if links else np.zeros((0, template.link_dim)))
    compat = (np.stack([compat_features(doc, a, b).as_array() for a, b in links])
              if links else np.zeros((0, 3)))
    second = {t: _second_order_dense(cache, *t) for t in set(triples)}
    return DocFeatures(sp.csr_matrix(prop), sp.csr_matrix(link), compat, links, second)
