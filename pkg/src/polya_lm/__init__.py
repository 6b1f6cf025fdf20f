"""Generalised Pólya urn document language models for ad hoc retrieval."""

from .corpus import Corpus, Document, build_corpus, burstiness, parse_cranfield, parse_qrels, preprocess
from .estimation import estimate_background, estimate_document, mle_multinomial
from .estimators import PolyaUrnLM, UrnRetriever
from .evaluation import average_precision, mean_average_precision, permutation_test, perplexity
from .mcmc import ChainConfig, PosteriorEstimate, mh_chain
from .retrieval import QueryRun, RetrievalModel, run_queries, score, sweep_mu
from .urn import (
    ReplacementMatrix,
    UrnModel,
    log_likelihood,
    log_likelihood_dcm,
    log_likelihood_multinomial,
    step,
)

__version__ = "0.1.0"
