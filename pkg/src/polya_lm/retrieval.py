"""Query-likelihood ranking with background-smoothed urn document models."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy import sparse

__all__ = [
    "RetrievalModel",
    "QueryRun",
    "score",
    "run_queries",
    "sweep_mu",
    "write_trec_run",
    "read_trec_run",
    "doc_sort_key",
    "MU_GRID",
]

MU_GRID = (10, 50, 100, 200, 300, 400, 500, 1000, 10000)


def doc_sort_key(doc_id: str):
    """Numeric ids sort numerically, others lexicographically after them."""
    return (0, int(doc_id), "") if doc_id.isdigit() else (1, 0, doc_id)


@dataclass(frozen=True, eq=False)
class RetrievalModel:
    """Background urn plus one sparse initial urn per document.

    Document models are rescaled so their mass equals the document's number of
    distinct terms; that mass sets the document's weight against ``mu``.
    """

    background_u0: np.ndarray
    doc_ids: tuple[str, ...]
    doc_terms: tuple[np.ndarray, ...]
    doc_values: tuple[np.ndarray, ...]
    doc_mass: np.ndarray
    mu: float = 1000.0

    def __post_init__(self):
        if not self.mu > 0:
            raise ValueError("mu must be > 0")
        bg = np.asarray(self.background_u0, dtype=np.float64)
        if np.any(bg <= 0):
            raise ValueError("background u0 must be strictly positive")
        object.__setattr__(self, "background_u0", bg)
        mass = np.asarray(self.doc_mass, dtype=np.float64)
        object.__setattr__(self, "doc_mass", mass)
        values = []
        for terms, vals, m in zip(self.doc_terms, self.doc_values, mass):
            vals = np.asarray(vals, dtype=np.float64)
            if vals.size:
                vals = vals * (m / vals.sum())
            values.append(vals)
        object.__setattr__(self, "doc_values", tuple(values))

    @classmethod
    def from_models(
        cls,
        background_u0: np.ndarray,
        doc_models: Sequence[tuple[str, np.ndarray, np.ndarray]],
        unique_counts: Sequence[int],
        mu: float = 1000.0,
    ) -> "RetrievalModel":
        """Build from ``(doc_id, term_ids, values)`` triples and per-document distinct-term counts."""
        ids = tuple(d for d, _, _ in doc_models)
        terms = tuple(np.asarray(t, dtype=np.int64) for _, t, _ in doc_models)
        values = tuple(np.asarray(v, dtype=np.float64) for _, _, v in doc_models)
        return cls(background_u0, ids, terms, values, np.asarray(unique_counts, dtype=np.float64), mu)

    def with_mu(self, mu: float) -> "RetrievalModel":
        return RetrievalModel(
            self.background_u0, self.doc_ids, self.doc_terms, self.doc_values, self.doc_mass, mu
        )

    @property
    def vocab_size(self) -> int:
        return self.background_u0.size

    @property
    def background_prob(self) -> np.ndarray:
        return self._cache["bg"]

    @property
    def doc_prob(self) -> sparse.csc_matrix:
        """``u0^d_t / |u0^d|`` as a documents x terms sparse matrix."""
        return self._cache["docs"]

    @property
    def _cache(self) -> dict:
        cache = self.__dict__.get("_cache_store")
        if cache is None:
            rows = np.repeat(np.arange(len(self.doc_ids)), [t.size for t in self.doc_terms])
            cols = np.concatenate(self.doc_terms) if self.doc_terms else np.zeros(0, np.int64)
            vals = [v / m if v.size else v for v, m in zip(self.doc_values, self.doc_mass)]
            data = np.concatenate(vals) if vals else np.zeros(0)
            docs = sparse.csc_matrix((data, (rows, cols)), shape=(len(self.doc_ids), self.vocab_size))
            cache = {"bg": self.background_u0 / self.background_u0.sum(), "docs": docs}
            object.__setattr__(self, "_cache_store", cache)
        return cache


@dataclass
class QueryRun:
    query_id: str
    ranked: list[tuple[str, float]] = field(default_factory=list)
    flagged: bool = False  # no in-vocabulary query terms

    def doc_ids(self) -> list[str]:
        return [d for d, _ in self.ranked]


def score(
    doc_terms: np.ndarray,
    doc_values: np.ndarray,
    doc_mass: float,
    query_terms: Iterable[int],
    background_u0: np.ndarray,
    mu: float,
) -> float:
    """Smoothed query log-likelihood of one document model.

    Each query token ``t`` contributes
    ``log(mu_d/(mu_d+mu) * u_d[t]/|u_d| + mu/(mu_d+mu) * u0[t]/|u0|)``.
    """
    if not mu > 0:
        raise ValueError("mu must be > 0")
    doc_values = np.asarray(doc_values, dtype=np.float64)
    lookup = dict(zip(np.asarray(doc_terms).tolist(), (doc_values / doc_values.sum()).tolist())) if doc_values.size else {}
    bg = np.asarray(background_u0, dtype=np.float64)
    bg_mass = bg.sum()
    w_doc = doc_mass / (doc_mass + mu)
    w_bg = mu / (doc_mass + mu)
    total = 0.0
    for t in query_terms:
        total += np.log(w_doc * lookup.get(int(t), 0.0) + w_bg * bg[t] / bg_mass)
    return float(total)


def score_all(model: RetrievalModel, query_terms: np.ndarray, mu: float | None = None) -> np.ndarray:
    """Scores of every document for one query (token multiplicity counts)."""
    mu = model.mu if mu is None else mu
    if not mu > 0:
        raise ValueError("mu must be > 0")
    q = np.asarray(query_terms, dtype=np.int64)
    if q.size == 0:
        return np.zeros(len(model.doc_ids))
    uq, mult = np.unique(q, return_counts=True)
    p_doc = model.doc_prob[:, uq].toarray()
    w_doc = (model.doc_mass / (model.doc_mass + mu))[:, None]
    mix = w_doc * p_doc + (1.0 - w_doc) * model.background_prob[uq][None, :]
    return np.log(mix) @ mult.astype(np.float64)


def run_queries(
    queries: Sequence[tuple[str, np.ndarray]],
    model: RetrievalModel,
    k: int = 1000,
    multiplicity: bool = True,
) -> list[QueryRun]:
    """Rank every document for each query and keep the top ``k``.

    Out-of-vocabulary terms must already be removed; a query left with no
    terms yields an empty, flagged run. Ties break on ascending doc id.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    keys = [doc_sort_key(d) for d in model.doc_ids]
    tie_rank = np.empty(len(keys), dtype=np.int64)
    tie_rank[sorted(range(len(keys)), key=keys.__getitem__)] = np.arange(len(keys))
    runs = []
    for qid, terms in queries:
        terms = np.asarray(terms, dtype=np.int64)
        terms = terms[(terms >= 0) & (terms < model.vocab_size)]
        if not multiplicity:
            terms = np.unique(terms)
        if terms.size == 0:
            runs.append(QueryRun(qid, [], flagged=True))
            continue
        scores = score_all(model, terms)
        order = np.lexsort((tie_rank, -scores))[:k]
        runs.append(QueryRun(qid, [(model.doc_ids[i], float(scores[i])) for i in order]))
    return runs


def sweep_mu(
    values: Sequence[float],
    queries: Sequence[tuple[str, np.ndarray]],
    model: RetrievalModel,
    qrels: dict[str, set[str]],
    k: int = 1000,
) -> tuple[list[tuple[float, float]], tuple[float, float]]:
    """MAP for each ``mu``; returns the table and its best row (first maximum)."""
    from .evaluation import mean_average_precision

    if not values:
        raise ValueError("need at least one mu value")
    table = []
    for mu in values:
        runs = run_queries(queries, model.with_mu(float(mu)), k)
        table.append((float(mu), mean_average_precision(runs, qrels)))
    best = max(table, key=lambda row: row[1])
    return table, best


def write_trec_run(runs: Sequence[QueryRun], path: str | Path, run_tag: str = "polya") -> None:
    """``qid Q0 docid rank score tag`` lines, ranks starting at 1."""
    lines = []
    for run in runs:
        for rank, (doc_id, s) in enumerate(run.ranked, 1):
            lines.append(f"{run.query_id} Q0 {doc_id} {rank} {s:.10f} {run_tag}")
    Path(path).write_text("".join(line + "\n" for line in lines), encoding="utf-8")


def read_trec_run(path: str | Path) -> list[QueryRun]:
    """Parse a TREC run file, ordering each query's documents by rank."""
    by_query: dict[str, list[tuple[int, str, float]]] = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        cols = line.split()
        if not cols:
            continue
        if len(cols) < 5:
            raise ValueError(f"{path}:{lineno}: expected 'qid Q0 docid rank score [tag]'")
        by_query.setdefault(cols[0], []).append((int(cols[3]), cols[2], float(cols[4])))
    runs = []
    for qid, rows in by_query.items():
        rows.sort()
        runs.append(QueryRun(qid, [(d, s) for _, d, s in rows]))
    return runs
