"""Document model, JSON-lines corpus I/O and preprocessing.

A corpus file holds one document per line::

    {"doc_id": "00001", "text": "...", "scheme": "cdcp",
     "props": [{"start": 0, "end": 12, "type": "value",
                "sentence": 0, "paragraph": 0}, ...],
     "links": [{"src": 1, "trg": 0}, ...]}

Links point from the supporting proposition (``src``) to the supported
one (``trg``).
"""
from __future__ import annotations

import itertools
import json
from collections import Counter
from dataclasses import dataclass, field, replace
from enum import Enum
from graphlib import CycleError, TopologicalSorter
from typing import Iterable, Sequence


class Scheme(str, Enum):
    CDCP = "cdcp"
    UKP = "ukp"

    @property
    def labels(self) -> tuple[str, ...]:
        return LABELS[self]


# Label order doubles as the state order of proposition variables. For CDCP
# it is also the objectivity order, most objective first.
LABELS = {
    Scheme.CDCP: ("reference", "testimony", "fact", "value", "policy"),
    Scheme.UKP: ("major_claim", "claim", "premise"),
}


class CorpusError(ValueError):
    """Malformed corpus record."""


class InvariantError(ValueError):
    """A document violates a structural invariant."""

    def __init__(self, doc_id: str, message: str):
        super().__init__(f"document {doc_id!r}: {message}")
        self.doc_id = doc_id


class LinkCycleError(InvariantError):
    def __init__(self, doc_id: str, cycle: Sequence[int]):
        witness = " -> ".join(str(c) for c in cycle)
        super().__init__(doc_id, f"gold links contain a cycle: {witness}")
        self.cycle = tuple(cycle)


def objectivity_rank(label: str) -> int:
    """Position in the CDCP objectivity order (0 is most objective)."""
    try:
        return LABELS[Scheme.CDCP].index(label)
    except ValueError:
        raise ValueError(f"objectivity is defined for CDCP labels only, got {label!r}")


def at_least_as_objective(src: str, trg: str) -> bool:
    return objectivity_rank(src) <= objectivity_rank(trg)


@dataclass(frozen=True)
class Proposition:
    id: int
    start: int
    end: int
    gold_type: str | None = None
    sentence: int = 0
    paragraph: int = 0

    def overlaps(self, other: "Proposition") -> bool:
        return self.start < other.end and other.start < self.end


@dataclass(frozen=True)
class Document:
    doc_id: str
    text: str
    props: tuple[Proposition, ...]
    gold_links: frozenset[tuple[int, int]]
    scheme: Scheme

    def __post_init__(self):
        object.__setattr__(self, "props", tuple(self.props))
        object.__setattr__(self, "gold_links", frozenset(self.gold_links))
        object.__setattr__(self, "scheme", Scheme(self.scheme))

    def __len__(self) -> int:
        return len(self.props)

    @property
    def labels(self) -> tuple[str, ...]:
        return self.scheme.labels

    def prop_text(self, a: int) -> str:
        p = self.props[a]
        return self.text[p.start:p.end]

    def gold_type_ids(self) -> list[int]:
        labels = self.labels
        return [labels.index(p.gold_type) for p in self.props]


@dataclass
class CorpusStats:
    n_docs: int = 0
    n_props: int = 0
    n_links: int = 0
    n_candidate_pairs: int = 0
    type_counts: dict[str, int] = field(default_factory=dict)

    @property
    def link_positive_rate(self) -> float:
        if self.n_candidate_pairs == 0:
            return 0.0
        return self.n_links / self.n_candidate_pairs

    def as_dict(self) -> dict:
        return {
            "n_docs": self.n_docs,
            "n_props": self.n_props,
            "n_links": self.n_links,
            "n_candidate_pairs": self.n_candidate_pairs,
            "link_positive_rate": self.link_positive_rate,
            "type_counts": dict(self.type_counts),
        }


# ---------------------------------------------------------------------------
# validation

def _check_forest(doc: Document) -> None:
    out_degree = Counter(src for src, _ in doc.gold_links)
    for a, deg in out_degree.items():
        if deg > 1:
            raise InvariantError(doc.doc_id, f"prop {a} has {deg} outgoing links; UKP links must form a forest")
    _find_cycle(doc.doc_id, doc.gold_links)


def _find_cycle(doc_id: str, links: Iterable[tuple[int, int]]) -> None:
    ts = TopologicalSorter()
    for src, trg in links:
        ts.add(trg, src)
    try:
        ts.prepare()
    except CycleError as err:
        raise LinkCycleError(doc_id, err.args[1]) from None


def validate(doc: Document, *, raw: bool = False) -> Document:
    """Check ``doc`` against its invariants; return it unchanged.

    With ``raw=True`` overlapping spans and non-closed CDCP link sets are
    tolerated, as they appear before preprocessing.
    """
    n = len(doc.props)
    labels = doc.labels
    for i, p in enumerate(doc.props):
        if p.id != i:
            raise InvariantError(doc.doc_id, f"prop ids must be 0..n-1 in order, got {p.id} at {i}")
        if not 0 <= p.start < p.end <= len(doc.text):
            raise InvariantError(doc.doc_id, f"prop {i} span [{p.start}, {p.end}) out of range")
        if p.gold_type is not None and p.gold_type not in labels:
            raise InvariantError(doc.doc_id, f"prop {i} has type {p.gold_type!r} not in {doc.scheme.value} labels")
        if p.sentence < 0 or p.paragraph < 0:
            raise InvariantError(doc.doc_id, f"prop {i} has a negative sentence/paragraph index")
    if not raw:
        for p, q in zip(doc.props, doc.props[1:]):
            if q.start < p.start:
                raise InvariantError(doc.doc_id, f"props {p.id} and {q.id} are not sorted by start offset")
            if p.overlaps(q):
                raise InvariantError(doc.doc_id, f"props {p.id} and {q.id} overlap")
    for src, trg in doc.gold_links:
        if not (0 <= src < n and 0 <= trg < n):
            raise InvariantError(doc.doc_id, f"link {src}->{trg} references an unknown prop")
        if src == trg:
            raise InvariantError(doc.doc_id, f"self-link on prop {src}")
        if doc.scheme is Scheme.UKP and doc.props[src].paragraph != doc.props[trg].paragraph:
            raise InvariantError(doc.doc_id, f"link {src}->{trg} crosses paragraphs")
    if doc.scheme is Scheme.UKP:
        _check_forest(doc)
    else:
        _find_cycle(doc.doc_id, doc.gold_links)
        if not raw and transitive_closure(doc.gold_links) != set(doc.gold_links):
            raise InvariantError(doc.doc_id, "CDCP gold links are not transitively closed")
    return doc


# ---------------------------------------------------------------------------
# I/O

_DOC_KEYS = {"doc_id", "text", "scheme", "props", "links"}
_PROP_KEYS = {"start", "end", "type", "sentence", "paragraph"}
_LINK_KEYS = {"src", "trg"}


def _check_keys(record: dict, allowed: set, required: set, where: str, strict: bool) -> None:
    missing = required - record.keys()
    if missing:
        raise CorpusError(f"{where}: missing keys {sorted(missing)}")
    if strict:
        unknown = record.keys() - allowed
        if unknown:
            raise CorpusError(f"{where}: unknown keys {sorted(unknown)}")


def document_from_record(record: dict, *, strict: bool = False, where: str = "record") -> Document:
    if not isinstance(record, dict):
        raise CorpusError(f"{where}: expected a JSON object")
    _check_keys(record, _DOC_KEYS, _DOC_KEYS, where, strict)
    try:
        scheme = Scheme(record["scheme"])
    except ValueError:
        raise CorpusError(f"{where}: unknown scheme {record['scheme']!r}") from None
    props = []
    for i, rp in enumerate(record["props"]):
        _check_keys(rp, _PROP_KEYS, {"start", "end"}, f"{where}, prop {i}", strict)
        try:
            props.append(Proposition(
                id=i, start=int(rp["start"]), end=int(rp["end"]),
                gold_type=rp.get("type"),
                sentence=int(rp.get("sentence", 0)),
                paragraph=int(rp.get("paragraph", 0)),
            ))
        except (TypeError, ValueError) as err:
            raise CorpusError(f"{where}, prop {i}: {err}") from None
    links = set()
    for i, rl in enumerate(record["links"]):
        _check_keys(rl, _LINK_KEYS, _LINK_KEYS, f"{where}, link {i}", strict)
        links.add((int(rl["src"]), int(rl["trg"])))
    return Document(str(record["doc_id"]), str(record["text"]), tuple(props), frozenset(links), scheme)


def document_to_record(doc: Document) -> dict:
    return {
        "doc_id": doc.doc_id,
        "text": doc.text,
        "scheme": doc.scheme.value,
        "props": [
            {"start": p.start, "end": p.end, "type": p.gold_type,
             "sentence": p.sentence, "paragraph": p.paragraph}
            for p in doc.props
        ],
        "links": [{"src": s, "trg": t} for s, t in sorted(doc.gold_links)],
    }


def load_corpus(path, scheme: Scheme | str | None = None, *, strict: bool = False,
                raw: bool = False) -> list[Document]:
    """Read and validate a JSON-lines corpus.

    Raises CorpusError (with the 1-based line number) on malformed input and
    InvariantError when a document breaks a structural invariant.
    """
    scheme = Scheme(scheme) if scheme is not None else None
    docs = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            where = f"{path}:{lineno}"
            try:
                record = json.loads(line)
            except json.JSONDecodeError as err:
                raise CorpusError(f"{where}: {err.msg}") from None
            doc = document_from_record(record, strict=strict, where=where)
            if scheme is not None and doc.scheme is not scheme:
                raise CorpusError(f"{where}: document scheme {doc.scheme.value!r} != {scheme.value!r}")
            docs.append(validate(doc, raw=raw))
    return docs


def save_corpus(docs: Iterable[Document], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for doc in docs:
            fh.write(json.dumps(document_to_record(doc), ensure_ascii=False, sort_keys=True))
            fh.write("\n")


# ---------------------------------------------------------------------------
# preprocessing

def transitive_closure(links: Iterable[tuple[int, int]]) -> set[tuple[int, int]]:
    """Smallest superset of ``links`` closed under a->b, b->c => a->c.

    Raises LinkCycleError if the input contains a directed cycle.
    """
    links = set(links)
    _find_cycle("<links>", links)
    succ: dict[int, set[int]] = {}
    for src, trg in links:
        succ.setdefault(src, set()).add(trg)
    closed = set()
    for start in succ:
        stack = list(succ[start])
        seen = set()
        while stack:
            node = stack.pop()
            if node in seen:
                continue
            seen.add(node)
            stack.extend(succ.get(node, ()))
        closed.update((start, t) for t in seen)
    return closed


def _overlap_components(props: Sequence[Proposition]) -> list[list[int]]:
    parent = list(range(len(props)))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i, j in itertools.combinations(range(len(props)), 2):
        if props[i].overlaps(props[j]):
            parent[find(i)] = find(j)
    groups: dict[int, list[int]] = {}
    for i in range(len(props)):
        groups.setdefault(find(i), []).append(i)
    return [g for g in groups.values() if len(g) > 1]


def _maximal_independent_sets(group: list[int], props: Sequence[Proposition]) -> list[frozenset[int]]:
    sets = []
    for r in range(len(group), 0, -1):
        for combo in itertools.combinations(group, r):
            if any(props[i].overlaps(props[j]) for i, j in itertools.combinations(combo, 2)):
                continue
            s = frozenset(combo)
            if not any(s < t for t in sets):
                sets.append(s)
    return sets


def _keep_key(kept: frozenset[int], props: Sequence[Proposition]):
    return sorted((props[i].start, -(props[i].end - props[i].start)) for i in kept)


def resolve_nested(props: Sequence[Proposition], links: Iterable[tuple[int, int]],
                   max_combinations: int = 4096):
    """Remove overlapping propositions, losing as few links as possible.

    Each connected group of overlapping spans is reduced to a non-overlapping
    subset. The choice minimises the number of links touching a removed
    prop; ties prefer keeping more props, then earlier-starting and longer
    spans. Returns re-indexed ``(props, links)``.
    """
    props = list(props)
    links = set(links)
    groups = _overlap_components(props)
    if not groups:
        return props, links
    options = [_maximal_independent_sets(g, props) for g in groups]
    all_nested = set(itertools.chain.from_iterable(groups))

    def lost(removed):
        return sum(1 for s, t in links if s in removed or t in removed)

    def choose(candidates):
        best = None
        for kept_sets in candidates:
            kept = frozenset().union(*kept_sets)
            removed = all_nested - kept
            key = (lost(removed), -len(kept), _keep_key(kept, props))
            if best is None or key < best[0]:
                best = (key, removed)
        return best[1]

    n_comb = 1
    for opt in options:
        n_comb *= len(opt)
    if n_comb <= max_combinations:
        removed = choose(itertools.product(*options))
    else:
        # per-group choice scored with every other nested prop kept; exact
        # unless two groups share a link
        removed = set()
        for group, opt in zip(groups, options):
            others = frozenset(all_nested - set(group))
            removed |= choose((o, others) for o in opt)
    keep = [i for i in range(len(props)) if i not in removed]
    remap = {old: new for new, old in enumerate(keep)}
    new_props = [replace(props[old], id=new) for new, old in enumerate(keep)]
    new_links = {(remap[s], remap[t]) for s, t in links if s in remap and t in remap}
    return new_props, new_links


def preprocess(doc: Document) -> Document:
    """Nested-prop resolution followed (for CDCP) by link transitive closure."""
    props = sorted(doc.props, key=lambda p: (p.start, -(p.end - p.start)))
    order = {p.id: i for i, p in enumerate(props)}
    props = [replace(p, id=i) for i, p in enumerate(props)]
    links = {(order[s], order[t]) for s, t in doc.gold_links}
    props, links = resolve_nested(props, links)
    if doc.scheme is Scheme.CDCP:
        try:
            links = transitive_closure(links)
        except LinkCycleError as err:
            raise LinkCycleError(doc.doc_id, err.cycle) from None
    out = Document(doc.doc_id, doc.text, tuple(props), frozenset(links), doc.scheme)
    return validate(out)


# ---------------------------------------------------------------------------
# candidate links and statistics

def candidate_links(doc: Document) -> list[tuple[int, int]]:
    """All ordered pairs (CDCP) or all ordered pairs within a paragraph (UKP)."""
    n = len(doc.props)
    if doc.scheme is Scheme.CDCP:
        return [(a, b) for a in range(n) for b in range(n) if a != b]
    return [(a, b) for a in range(n) for b in range(n)
            if a != b and doc.props[a].paragraph == doc.props[b].paragraph]


def corpus_stats(corpus: Iterable[Document]) -> CorpusStats:
    stats = CorpusStats()
    types: Counter = Counter()
    for doc in corpus:
        stats.n_docs += 1
        stats.n_props += len(doc.props)
        stats.n_links += len(doc.gold_links)
        stats.n_candidate_pairs += len(candidate_links(doc))
        types.update(p.gold_type for p in doc.props if p.gold_type is not None)
    stats.type_counts = dict(sorted(types.items()))
    return stats
