"""scikit-learn style wrappers around background and document estimation."""

from __future__ import annotations

import time

import numpy as np
from joblib import Parallel, delayed
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from . import estimation as est
from ._validation import check_corpus, check_positive, check_queries, check_variant
from .corpus import Corpus, Document, burstiness_vector
from .evaluation import mean_average_precision, perplexity
from .mcmc import ChainConfig, derive_seed
from .retrieval import RetrievalModel, run_queries, score_all
from .urn import ReplacementMatrix, UrnModel, log_likelihood

__all__ = ["PolyaUrnLM", "UrnRetriever", "fit_document_models"]

_BACKGROUND = {
    "mult-mc": est.MULTINOMIAL,
    "dcm-mc": est.DCM,
    "gspud-bs": est.GSPUD_FIXED,
    "gspud-mc": est.GSPUD_ESTIMATE,
}


class PolyaUrnLM(BaseEstimator):
    """Background urn language model fitted to a document collection.

    Parameters
    ----------
    variant : {"mult-mle", "mult-mc", "dcm-mc", "gspud-bs", "gspud-mc"}
        Replacement matrix and estimation route. ``gspud-bs`` fixes the
        diagonal to each term's ``cf/df``; ``gspud-mc`` samples it.
    n_samples, burn_in, proposal_sigma, thinning, proposal_mode, block_size
        Metropolis-Hastings settings; ``proposal_sigma`` is the standard
        deviation of the log-space proposal.
    random_state : int
    jacobian : bool
        Treat the likelihood as a density over the original (not log) parameters.
    """

    def __init__(
        self,
        variant="gspud-mc",
        n_samples=500_000,
        burn_in=50_000,
        proposal_sigma=0.1,
        thinning=10,
        proposal_mode="blockwise",
        block_size=64,
        random_state=0,
        jacobian=False,
    ):
        self.variant = variant
        self.n_samples = n_samples
        self.burn_in = burn_in
        self.proposal_sigma = proposal_sigma
        self.thinning = thinning
        self.proposal_mode = proposal_mode
        self.block_size = block_size
        self.random_state = random_state
        self.jacobian = jacobian

    def chain_config(self) -> ChainConfig:
        return ChainConfig(
            n_samples=self.n_samples,
            burn_in=self.burn_in,
            proposal_sigma=self.proposal_sigma,
            rng_seed=derive_seed(self.random_state, "background", self.variant),
            thinning=self.thinning,
            proposal_mode=self.proposal_mode,
            block_size=self.block_size,
        )

    def fit(self, X, y=None):
        check_variant(self.variant)
        corpus = check_corpus(X)
        t0 = time.perf_counter()
        if self.variant == "mult-mle":
            self.model_ = UrnModel(est.mle_multinomial(corpus), ReplacementMatrix.zero(corpus.vocab_size))
            self.acceptance_rate_ = None
            self.estimate_ = None
        else:
            fixed = burstiness_vector(corpus) if self.variant == "gspud-bs" else None
            self.model_, self.estimate_ = est.background_chain(
                corpus, _BACKGROUND[self.variant], self.chain_config(), fixed, self.jacobian
            )
            self.acceptance_rate_ = self.estimate_.acceptance_rate
        self.fit_seconds_ = time.perf_counter() - t0
        self.terms_ = corpus.terms
        self.n_features_in_ = corpus.vocab_size
        return self

    def log_likelihood(self, X) -> float:
        check_is_fitted(self, "model_")
        corpus = check_corpus(X)
        return float(sum(log_likelihood(self.model_, d.tokens) for d in corpus.documents))

    def score(self, X, y=None) -> float:
        """Mean log-likelihood per token (higher is better)."""
        corpus = check_corpus(X)
        return self.log_likelihood(corpus) / corpus.total_tokens

    def perplexity(self, X) -> float:
        check_is_fitted(self, "model_")
        return perplexity(self.model_, check_corpus(X))


def _one_document(doc: Document, matrix: ReplacementMatrix | None, config: ChainConfig, seed: int):
    if len(doc) == 0:
        return np.zeros(0, np.int64), np.zeros(0), None
    if matrix is None:
        terms, values = est.mle_document(doc)
        return terms, values, None
    cfg = config.with_seed(derive_seed(seed, "document", doc.doc_id))
    terms, estimate = est.document_chain(doc, matrix, cfg)
    return terms, estimate.mean_params, estimate.acceptance_rate


def fit_document_models(
    corpus: Corpus,
    matrix: ReplacementMatrix | None,
    config: ChainConfig,
    seed: int = 0,
    n_jobs: int = 1,
) -> tuple[list[tuple[str, np.ndarray, np.ndarray]], list[float | None]]:
    """Estimate every document's model; ``matrix=None`` gives maximum-likelihood models.

    Each chain is seeded from ``(seed, doc_id)``, so results do not depend on
    ``n_jobs`` or scheduling order.
    """
    jobs = (delayed(_one_document)(d, matrix, config, seed) for d in corpus.documents)
    if n_jobs == 1:
        results = [f(*a, **kw) for f, a, kw in jobs]
    else:
        results = Parallel(n_jobs=n_jobs)(jobs)
    models = [(d.doc_id, t, v) for d, (t, v, _) in zip(corpus.documents, results)]
    return models, [r[2] for r in results]


class UrnRetriever(BaseEstimator):
    """Query-likelihood ranker over urn document models.

    ``fit`` estimates the background (unless a fitted :class:`PolyaUrnLM` is
    supplied) and one model per document under the background's replacement
    matrix; ``predict`` ranks documents for each query.
    """

    def __init__(
        self,
        variant="gspud-mc",
        mu=1000.0,
        top_k=1000,
        background=None,
        doc_samples=200_000,
        doc_burn_in=20_000,
        doc_sigma=0.5,
        doc_block_size=1,
        thinning=10,
        random_state=0,
        n_jobs=1,
        multiplicity=True,
    ):
        self.variant = variant
        self.mu = mu
        self.top_k = top_k
        self.background = background
        self.doc_samples = doc_samples
        self.doc_burn_in = doc_burn_in
        self.doc_sigma = doc_sigma
        self.doc_block_size = doc_block_size
        self.thinning = thinning
        self.random_state = random_state
        self.n_jobs = n_jobs
        self.multiplicity = multiplicity

    def doc_chain_config(self) -> ChainConfig:
        return ChainConfig(
            n_samples=self.doc_samples,
            burn_in=self.doc_burn_in,
            proposal_sigma=self.doc_sigma,
            rng_seed=self.random_state,
            thinning=self.thinning,
            block_size=self.doc_block_size,
        )

    def fit(self, X, y=None):
        check_variant(self.variant)
        check_positive("mu", self.mu)
        corpus = check_corpus(X)
        bg = self.background
        if bg is None:
            bg = PolyaUrnLM(variant=self.variant, random_state=self.random_state).fit(corpus)
        check_is_fitted(bg, "model_")
        if bg.variant != self.variant:
            raise ValueError(f"background variant {bg.variant!r} does not match {self.variant!r}")
        if bg.n_features_in_ != corpus.vocab_size:
            raise ValueError("background was fitted on a different vocabulary")
        matrix = None if self.variant == "mult-mle" else bg.model_.matrix
        models, rates = fit_document_models(
            corpus, matrix, self.doc_chain_config(), self.random_state, self.n_jobs
        )
        self.background_ = bg
        self.corpus_ = corpus
        self.doc_acceptance_ = rates
        self.retrieval_model_ = RetrievalModel.from_models(
            bg.model_.u0, models, [d.unique_term_count for d in corpus.documents], self.mu
        )
        self.n_features_in_ = corpus.vocab_size
        return self

    def _model(self) -> RetrievalModel:
        check_is_fitted(self, "retrieval_model_")
        rm = self.retrieval_model_
        return rm if rm.mu == self.mu else rm.with_mu(check_positive("mu", self.mu))

    def decision_function(self, query) -> np.ndarray:
        """Scores of all documents (in corpus order) for a single query."""
        (_, terms), = check_queries([("q", query)], self.corpus_)
        if not self.multiplicity:
            terms = np.unique(terms)
        return score_all(self._model(), terms)

    def predict(self, queries):
        """Ranked :class:`QueryRun` per query (top ``top_k``)."""
        return run_queries(
            check_queries(queries, self.corpus_), self._model(), self.top_k, self.multiplicity
        )

    def score(self, queries, qrels) -> float:
        """Mean average precision of the rankings against ``qrels``."""
        return mean_average_precision(self.predict(queries), qrels)
