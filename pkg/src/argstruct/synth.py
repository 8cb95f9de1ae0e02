"""Synthetic corpora with planted type and link rules.

Each proposition is one short sentence built from type keywords plus
filler words. Links follow type-pair rules that decay with distance and
copy a word from the target into the source, so both the link unaries and
the type compatibilities carry signal. ``noise`` swaps keywords for those
of another type.
"""
from __future__ import annotations

from typing import Sequence

import numpy as np

from .corpus import LABELS, Document, Proposition, Scheme, objectivity_rank, preprocess

TYPE_WORDS = {
    "reference": ("source", "cited", "website", "article"),
    "testimony": ("experienced", "personally", "myself", "witnessed"),
    "fact": ("percent", "study", "data", "statistics"),
    "value": ("unfair", "harmful", "wrong", "beneficial"),
    "policy": ("should", "must", "require", "ought"),
    "major_claim": ("overall", "conclude", "believe", "ultimately"),
    "claim": ("therefore", "clearly", "hence", "surely"),
    "premise": ("because", "example", "since", "evidence"),
}

FILLER = tuple("""
    people city rules school money time work family health market law public
    student course system company price service water energy food travel news
    phone office market child teacher worker online customer process area plan
""".split())

CDCP_TYPE_PROBS = {"reference": 0.05, "testimony": 0.15, "fact": 0.25, "value": 0.35, "policy": 0.2}
# (source type, target type) -> link probability for adjacent props
CDCP_LINK_RULES = {
    ("fact", "value"): 0.7, ("testimony", "value"): 0.6, ("value", "policy"): 0.7,
    ("fact", "policy"): 0.3, ("reference", "fact"): 0.6, ("testimony", "policy"): 0.3,
}


def _distance_factor(a: int, b: int) -> float:
    d = abs(a - b)
    return 1.0 if d == 1 else 0.5 if d == 2 else 0.15


def _sentence(rng, label: str, labels: Sequence[str], noise: float, extra: Sequence[str] = ()):
    words = list(rng.choice(FILLER, size=int(rng.integers(3, 6))))
    n_kw = int(rng.integers(1, 3))
    for _ in range(n_kw):
        src = label
        if rng.random() < noise:
            src = labels[int(rng.integers(len(labels)))]
        words.insert(int(rng.integers(len(words) + 1)), str(rng.choice(TYPE_WORDS[src])))
    words += list(extra)
    return words


def _assemble(doc_id: str, scheme: Scheme, sentences, types, paragraphs, links) -> Document:
    """Join sentences into text (paragraphs separated by blank lines)."""
    text = ""
    props = []
    sent_in_par = 0
    for i, (words, t, par) in enumerate(zip(sentences, types, paragraphs)):
        if i > 0:
            if par != paragraphs[i - 1]:
                text += "\n\n"
                sent_in_par = 0
            else:
                text += " "
        s = " ".join(words)
        s = s[0].upper() + s[1:] + "."
        props.append(Proposition(i, len(text), len(text) + len(s) - 1, t, i, par))
        text += s
        sent_in_par += 1
    return preprocess(Document(doc_id, text, tuple(props), frozenset(links), scheme))


def _cdcp_doc(rng, doc_id: str, noise: float, min_props: int, max_props: int) -> Document:
    labels = LABELS[Scheme.CDCP]
    n = int(rng.integers(min_props, max_props + 1))
    names = list(CDCP_TYPE_PROBS)
    types = [str(t) for t in rng.choice(names, size=n, p=list(CDCP_TYPE_PROBS.values()))]
    links = set()
    for a in range(n):
        for b in range(n):
            p = CDCP_LINK_RULES.get((types[a], types[b]), 0.0)
            if a != b and p and rng.random() < p * _distance_factor(a, b):
                links.add((a, b))
    # the planted rules only go from more to less objective types, so no cycles
    assert all(objectivity_rank(types[a]) < objectivity_rank(types[b]) for a, b in links)
    shared = {b: str(rng.choice(FILLER)) for b in range(n)}
    sentences = []
    for a in range(n):
        extra = [shared[b] for s, b in sorted(links) if s == a][:1]
        sentences.append(_sentence(rng, types[a], labels, noise, extra + [shared[a]]))
    return _assemble(doc_id, Scheme.CDCP, sentences, types, [0] * n, links)


def _ukp_doc(rng, doc_id: str, noise: float, max_body: int) -> Document:
    labels = LABELS[Scheme.UKP]
    types, paragraphs = ["major_claim"], [0]
    if rng.random() < 0.5:
        types.append("claim")
        paragraphs.append(0)
    for par in range(1, int(rng.integers(2, 4))):
        k = int(rng.integers(1, max_body + 1))
        body = ["claim"] + ["premise"] * k
        if rng.random() < 0.5:
            body = body[1:] + body[:1]           # claim closes the paragraph
        types += body
        paragraphs += [par] * len(body)
    n = len(types)
    links = set()
    for par in set(paragraphs):
        members = [i for i in range(n) if paragraphs[i] == par]
        claims = [i for i in members if types[i] == "claim"]
        premises = [i for i in members if types[i] == "premise"]
        for i, a in enumerate(premises):
            if claims and (i == 0 or rng.random() < 0.6):
                links.add((a, claims[0]))
            elif i > 0:
                links.add((a, premises[int(rng.integers(i))]))
    shared = {b: str(rng.choice(FILLER)) for b in range(n)}
    sentences = []
    for a in range(n):
        extra = [shared[b] for s, b in sorted(links) if s == a]
        sentences.append(_sentence(rng, types[a], labels, noise, extra + [shared[a]]))
    return _assemble(doc_id, Scheme.UKP, sentences, types, paragraphs, links)


def synth_corpus(scheme: Scheme | str, n_docs: int, seed: int = 0, noise: float = 0.15,
                 min_props: int = 3, max_props: int = 6) -> list[Document]:
    """Planted-rule corpus; deterministic given the seed."""
    scheme = Scheme(scheme)
    rng = np.random.default_rng(seed)
    docs = []
    for i in range(n_docs):
        doc_id = f"synth-{scheme.value}-{seed}-{i:04d}"
        if scheme is Scheme.CDCP:
            docs.append(_cdcp_doc(rng, doc_id, noise, min_props, max_props))
        else:
            docs.append(_ukp_doc(rng, doc_id, noise, max(1, (max_props - 2) // 2)))
    return docs


def separable_corpus(n_docs: int, seed: int = 0) -> list[Document]:
    """Alternating fact/value props; each fact supports the value right after it.

    Types are given away by a single token, links by type plus adjacency.
    """
    rng = np.random.default_rng(seed)
    docs = []
    for i in range(n_docs):
        pairs = int(rng.integers(2, 4))
        types = ["fact", "value"] * pairs
        sentences = []
        for t in types:
            words = list(rng.choice(FILLER, size=3))
            words.insert(int(rng.integers(4)), "kw" + t)
            sentences.append(words)
        links = {(2 * j, 2 * j + 1) for j in range(pairs)}
        docs.append(_assemble(f"toy-{seed}-{i:04d}", Scheme.CDCP, sentences, types,
                              [0] * len(types), links))
    return docs
