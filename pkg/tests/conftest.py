import os

import pytest
from hypothesis import HealthCheck, settings

from argstruct.corpus import Document, Proposition, Scheme

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("ci", deadline=None, max_examples=200,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


def make_doc(texts, types=None, links=(), scheme="cdcp", paragraphs=None, sentences=None,
             doc_id="d0") -> Document:
    """Document whose props are the given sentences joined by single spaces."""
    scheme = Scheme(scheme)
    n = len(texts)
    types = types or [scheme.labels[0]] * n
    paragraphs = paragraphs or [0] * n
    sentences = sentences or list(range(n))
    text, props = "", []
    for i, t in enumerate(texts):
        if i:
            text += " "
        props.append(Proposition(i, len(text), len(text) + len(t), types[i], sentences[i], paragraphs[i]))
        text += t
    return Document(doc_id, text, tuple(props), frozenset(links), scheme)


@pytest.fixture
def cdcp_doc():
    return make_doc(
        ["Calls to employers should be banned.", "It is unfair to workers.",
         "Ninety percent of workers get calls.", "I got no calls to employers myself."],
        ["policy", "value", "fact", "testimony"],
        {(1, 0), (2, 1), (2, 0), (3, 2), (3, 1), (3, 0)})


@pytest.fixture
def ukp_doc():
    return make_doc(
        ["Overall school uniforms help.", "Uniforms reduce costs.", "Parents buy fewer clothes.",
         "Students focus better.", "Teachers report calmer classes."],
        ["major_claim", "claim", "premise", "claim", "premise"],
        {(2, 1), (4, 3)}, scheme="ukp", paragraphs=[0, 1, 1, 2, 2])


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
