"""Perplexity, average precision and paired permutation tests."""

from __future__ import annotations

import logging
import math
from typing import Sequence

import numpy as np

from .corpus import Corpus
from .retrieval import QueryRun
from .urn import UrnModel, log_likelihood

__all__ = [
    "perplexity",
    "average_precision",
    "per_query_ap",
    "mean_average_precision",
    "permutation_test",
]

log = logging.getLogger(__name__)


def perplexity(model: UrnModel, corpus: Corpus) -> float:
    """``exp(-loglik / tokens)`` with the urn restarted at ``u0`` for every document."""
    if model.size < corpus.vocab_size:
        raise ValueError("model vocabulary does not cover the corpus vocabulary")
    if corpus.total_tokens == 0:
        raise ValueError("corpus has no tokens")
    total = 0.0
    for doc in corpus.documents:
        ll = log_likelihood(model, doc.tokens)
        if not math.isfinite(ll):
            log.warning("document %s has zero probability; perplexity is infinite", doc.doc_id)
            return math.inf
        total += ll
    return math.exp(-total / corpus.total_tokens)


def average_precision(ranking: Sequence[str], relevant: set[str]) -> float:
    """Non-interpolated AP; relevant documents that are never retrieved count as zero."""
    if not relevant:
        raise ValueError("average precision is undefined without relevant documents")
    if len(set(ranking)) != len(ranking):
        raise ValueError("ranking contains duplicate documents")
    hits = 0
    total = 0.0
    for rank, doc_id in enumerate(ranking, 1):
        if doc_id in relevant:
            hits += 1
            total += hits / rank
    return total / len(relevant)


def per_query_ap(runs: Sequence[QueryRun], qrels: dict[str, set[str]]) -> dict[str, float]:
    """AP for every run whose query has at least one relevant document.

    Queries without judgements are skipped (and logged), as trec_eval does.
    """
    out = {}
    for run in runs:
        relevant = qrels.get(run.query_id)
        if not relevant:
            log.info("query %s has no relevant documents; excluded from MAP", run.query_id)
            continue
        out[run.query_id] = average_precision(run.doc_ids(), relevant)
    return out


def mean_average_precision(runs: Sequence[QueryRun], qrels: dict[str, set[str]]) -> float:
    aps = per_query_ap(runs, qrels)
    if not aps:
        raise ValueError("no evaluable queries (none has relevant documents)")
    return float(np.mean(list(aps.values())))


def permutation_test(
    ap_a: Sequence[float],
    ap_b: Sequence[float],
    n_permutations: int = 100_000,
    seed: int = 0,
) -> float:
    """Two-sided paired sign-flip test on the mean difference.

    ``p = (#{|permuted mean| >= |observed mean|} + 1) / (n_permutations + 1)``.
    """
    a = np.asarray(ap_a, dtype=np.float64)
    b = np.asarray(ap_b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("paired score vectors must have equal length")
    if a.size == 0:
        raise ValueError("need at least one paired observation")
    if n_permutations < 1:
        raise ValueError("n_permutations must be >= 1")
    diff = a - b
    observed = abs(diff.sum())
    # tolerate rounding so sign patterns equivalent to the observed one count
    threshold = observed - 1e-12 * max(1.0, np.abs(diff).sum())
    rng = np.random.default_rng(seed)
    hits = 0
    done = 0
    while done < n_permutations:
        k = min(8192, n_permutations - done)
        signs = rng.integers(0, 2, size=(k, diff.size)) * 2 - 1
        hits += int(np.count_nonzero(np.abs(signs @ diff) >= threshold))
        done += k
    return (hits + 1) / (n_permutations + 1)
