"""Input checks shared by the estimators."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .corpus import Corpus, build_corpus

MODEL_VARIANTS = ("mult-mle", "mult-mc", "dcm-mc", "gspud-bs", "gspud-mc")


def check_variant(variant: str) -> str:
    if variant not in MODEL_VARIANTS:
        raise ValueError(f"variant must be one of {MODEL_VARIANTS}, got {variant!r}")
    return variant


def check_corpus(X) -> Corpus:
    """Accept a :class:`Corpus` or a sequence of token lists / ``(doc_id, tokens)`` pairs."""
    if isinstance(X, Corpus):
        return X
    X = list(X)
    if not X:
        raise ValueError("empty document collection")
    if all(isinstance(x, tuple) and len(x) == 2 and isinstance(x[0], str) for x in X):
        return build_corpus(X)
    return build_corpus([(str(i), list(tokens)) for i, tokens in enumerate(X)])


def check_queries(queries, corpus: Corpus | None = None) -> list[tuple[str, np.ndarray]]:
    """Normalise queries to ``(query_id, term_ids)``.

    String tokens are mapped through ``corpus``'s vocabulary, dropping unknown terms.
    """
    out = []
    for i, q in enumerate(queries):
        if isinstance(q, tuple) and len(q) == 2 and isinstance(q[0], str):
            qid, terms = q
        else:
            qid, terms = str(i), q
        terms = list(terms)
        if terms and isinstance(terms[0], str):
            if corpus is None:
                raise ValueError("string query terms need a vocabulary")
            ids = corpus.encode(terms)
        else:
            ids = np.asarray(terms, dtype=np.int64)
        out.append((qid, ids))
    return out


def check_positive(name: str, value: float) -> float:
    if not value > 0:
        raise ValueError(f"{name} must be > 0, got {value!r}")
    return float(value)


def check_vector(name: str, values: Sequence[float], size: int) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if arr.shape != (size,):
        raise ValueError(f"{name} must have shape ({size},), got {arr.shape}")
    if not np.all(np.isfinite(arr)) or np.any(arr <= 0):
        raise ValueError(f"{name} must be finite and strictly positive")
    return arr
