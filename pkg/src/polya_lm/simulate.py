"""Draw documents from an urn model (synthetic collections for testing)."""

from __future__ import annotations

import numpy as np

from .corpus import Corpus, build_corpus
from .urn import ReplacementMatrix, UrnModel, step

__all__ = ["sample_document", "sample_corpus", "synthetic_collection"]


def sample_document(model: UrnModel, length: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``length`` colours sequentially, updating the urn after each draw."""
    state = model.u0.copy()
    mass = model.mass0
    out = np.empty(length, dtype=np.int64)
    for i in range(length):
        t = int(np.searchsorted(np.cumsum(state), rng.random() * mass, side="right"))
        t = min(t, model.size - 1)
        out[i] = t
        state, mass = step(state, mass, t, model.matrix)
    return out


def sample_corpus(
    model: UrnModel,
    n_docs: int,
    doc_length: int | tuple[int, int],
    rng: np.random.Generator,
    terms: list[str] | None = None,
) -> Corpus:
    """Independent documents from ``model``; ``doc_length`` may be a ``(low, high)`` range.

    Term strings default to ``"w<id>"``; the corpus vocabulary is assigned in
    first-occurrence order, so ids may differ from the model's.
    """
    if terms is None:
        terms = [f"w{i}" for i in range(model.size)]
    docs = []
    for d in range(n_docs):
        n = doc_length if isinstance(doc_length, int) else int(rng.integers(doc_length[0], doc_length[1] + 1))
        tokens = sample_document(model, n, rng)
        docs.append((str(d + 1), [terms[t] for t in tokens]))
    return build_corpus(docs)


_LETTERS = "bcdfghjklmnpqrtvwxz"  # no vowels or 's'/'y': Porter stemming leaves these words alone


def _word(i: int) -> str:
    out = ""
    i += len(_LETTERS) ** 2  # at least three letters
    while i:
        i, r = divmod(i, len(_LETTERS))
        out = _LETTERS[r] + out
    return out


def synthetic_collection(
    rng: np.random.Generator,
    vocab_size: int = 400,
    n_topics: int = 10,
    docs_per_topic: int = 20,
    doc_length: tuple[int, int] = (40, 120),
    query_length: tuple[int, int] = (3, 6),
    topic_terms: int = 15,
    topic_boost: float = 0.6,
) -> tuple[str, str, str]:
    """Cranfield-format ``(documents, queries, qrels)`` text drawn from diagonal urns.

    Term frequencies follow a Zipf-like background; each term gets its own
    self-reinforcement, with topical terms burstier than the rest. Each topic
    has one query built from its topical terms, and the topic's documents are
    the relevant set.
    """
    ranks = np.arange(1, vocab_size + 1)
    u0 = 1.0 / ranks
    u0 *= 20.0 / u0.sum()
    m = rng.lognormal(-1.0, 0.7, vocab_size)
    topics = [rng.choice(vocab_size, topic_terms, replace=False) for _ in range(n_topics)]
    for terms in topics:
        m[terms] *= rng.uniform(2.0, 6.0, terms.size)
    words = [_word(i) for i in range(vocab_size)]

    docs, qrels = [], []
    doc_no = 0
    for k, terms in enumerate(topics):
        for _ in range(docs_per_topic):
            doc_no += 1
            u = u0.copy()
            u[terms] += topic_boost * u0.sum() / terms.size * rng.uniform(0.2, 1.8, terms.size)
            model = UrnModel(u, ReplacementMatrix.diagonal(m))
            n = int(rng.integers(doc_length[0], doc_length[1] + 1))
            tokens = sample_document(model, n, rng)
            docs.append(f".I {doc_no}\n.T\ntopic document {doc_no}\n.W\n" + " ".join(words[t] for t in tokens) + "\n")
            qrels.append((k + 1, doc_no))
    order = rng.permutation(len(docs))
    doc_text = "".join(docs[i] for i in order)
    queries = []
    for k, terms in enumerate(topics):
        n = int(rng.integers(query_length[0], query_length[1] + 1))
        q = rng.choice(terms, n, replace=False)
        queries.append(f".I {k + 1}\n.W\n" + " ".join(words[t] for t in q) + "\n")
    qrels_text = "".join(f"{q} 0 {d} 1\n" for q, d in qrels)
    return doc_text, "".join(queries), qrels_text
