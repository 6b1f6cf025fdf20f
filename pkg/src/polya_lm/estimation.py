"""Parameter estimation for urn language models.

Background models are fitted to a whole collection (each document is an
independent draw starting from ``u0``); document models are fitted to a
single document with the replacement matrix held fixed.
"""

from __future__ import annotations

import math

import numba
import numpy as np

from .corpus import Corpus, Document, burstiness_vector
from .mcmc import (
    LOG_BOUND,
    ChainConfig,
    PosteriorEstimate,
    block_partition,
    derive_seed,
    mh_chain,
    random_stream,
)
from .urn import ReplacementMatrix, UrnModel, occurrence_index

__all__ = [
    "MULTINOMIAL",
    "DCM",
    "GSPUD_FIXED",
    "GSPUD_ESTIMATE",
    "BACKGROUND_VARIANTS",
    "mle_multinomial",
    "BackgroundLikelihood",
    "background_chain",
    "estimate_background",
    "DocumentLikelihood",
    "document_chain",
    "estimate_document",
    "mle_document",
]

MULTINOMIAL, DCM, GSPUD_FIXED, GSPUD_ESTIMATE = "multinomial", "dcm", "gspud_fixed_M", "gspud_estimate_M"
BACKGROUND_VARIANTS = (MULTINOMIAL, DCM, GSPUD_FIXED, GSPUD_ESTIMATE)


def mle_multinomial(corpus: Corpus) -> np.ndarray:
    """Closed-form maximum-likelihood ``u0`` for the zero matrix: ``cf / total``."""
    if corpus.total_tokens == 0:
        raise ValueError("corpus has no tokens")
    return corpus.cf / float(corpus.total_tokens)


def _doc_start_index(lengths: np.ndarray) -> np.ndarray:
    """Flat position of the first token of each position's document."""
    starts = np.concatenate(([0], np.cumsum(lengths)[:-1]))
    return np.repeat(starts, lengths)


class BackgroundLikelihood:
    """Collection log-likelihood as a function of ``u0`` (and the diagonal of M).

    The sum over documents is regrouped so that every evaluation is a handful
    of vectorised passes:

    * numerator: ``sum_t sum_j c_t(j) log(u_t + j m_t)`` where ``c_t(j)`` counts
      documents holding more than ``j`` copies of ``t``;
    * denominator: ``sum_d sum_i log(|u0| + S_{d,i})`` where ``S_{d,i}`` is the
      mass added by the first ``i`` draws of document ``d``.
    """

    def __init__(self, corpus: Corpus, variant: str, fixed_diag: np.ndarray | None = None):
        if variant not in BACKGROUND_VARIANTS:
            raise ValueError(f"unknown background variant {variant!r}")
        self.variant = variant
        self.v = corpus.vocab_size
        self.dim = 2 * self.v if variant == GSPUD_ESTIMATE else self.v
        self.cf = corpus.cf.astype(np.float64)
        self.total = float(corpus.total_tokens)

        tokens = corpus.flat_tokens
        lengths = corpus.doc_lengths
        occ = np.concatenate([occurrence_index(d.tokens) for d in corpus.documents]) if tokens.size else tokens
        # (term, occurrence) pairs with multiplicities -> c_t(j)
        key = tokens * (int(occ.max(initial=0)) + 1) + occ
        uniq, counts = np.unique(key, return_counts=True)
        stride = int(occ.max(initial=0)) + 1
        self.e_term = uniq // stride
        self.e_j = (uniq % stride).astype(np.float64)
        self.e_count = counts.astype(np.float64)

        if variant == GSPUD_FIXED:
            if fixed_diag is None:
                raise ValueError("gspud_fixed_M needs fixed_diag")
            self.fixed_diag = np.asarray(fixed_diag, dtype=np.float64)
            if self.fixed_diag.shape != (self.v,) or np.any(self.fixed_diag <= 0):
                raise ValueError("fixed_diag must be a positive vector of vocabulary size")
        else:
            self.fixed_diag = None

        if variant == DCM:
            # S_{d,i} = i; C(i) = number of documents longer than i
            pos = np.arange(tokens.size) - _doc_start_index(lengths)
            s, c = np.unique(pos, return_counts=True)
            self.den_s, self.den_c = s.astype(np.float64), c.astype(np.float64)
        elif variant == GSPUD_FIXED:
            s = self._prefix_mass(self.fixed_diag[tokens], lengths)
            s, c = np.unique(s, return_counts=True)
            self.den_s, self.den_c = s, c.astype(np.float64)
        elif variant == GSPUD_ESTIMATE:
            self.tokens = tokens
            self.lengths = lengths
            self.start_idx = _doc_start_index(lengths)

    @staticmethod
    def _prefix_mass(m_drawn: np.ndarray, lengths: np.ndarray, start_idx: np.ndarray | None = None) -> np.ndarray:
        excl = np.cumsum(m_drawn) - m_drawn
        if start_idx is None:
            start_idx = _doc_start_index(lengths)
        return excl - excl[start_idx]

    def split(self, params: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """``(u0, diag)`` for a parameter vector of this target."""
        params = np.asarray(params, dtype=np.float64)
        if self.variant == MULTINOMIAL:
            return params, np.zeros(self.v)
        if self.variant == DCM:
            return params, np.ones(self.v)
        if self.variant == GSPUD_FIXED:
            return params, self.fixed_diag
        return params[: self.v], params[self.v :]

    def __call__(self, params: np.ndarray) -> float:
        u, m = self.split(params)
        mass = u.sum()
        if self.variant == MULTINOMIAL:
            return float(self.cf @ np.log(u) - self.total * math.log(mass))
        num = self.e_count @ np.log(u[self.e_term] + self.e_j * m[self.e_term])
        if self.variant == GSPUD_ESTIMATE:
            s = self._prefix_mass(m[self.tokens], self.lengths, self.start_idx)
            den = np.sum(np.log(mass + s))
        else:
            den = self.den_c @ np.log(mass + self.den_s)
        return float(num - den)

    def to_model(self, params: np.ndarray) -> UrnModel:
        u, m = self.split(params)
        if self.variant == MULTINOMIAL:
            return UrnModel(u, ReplacementMatrix.zero(self.v))
        if self.variant == DCM:
            return UrnModel(u, ReplacementMatrix.identity(self.v))
        return UrnModel(u, ReplacementMatrix.diagonal(m))


def _canonical_scale(variant: str, v: int):
    """Per-sample rescaling for variants whose likelihood ignores overall scale.

    Zero-matrix samples are normalized to probabilities; jointly estimated
    (u0, diag) samples are rescaled so the diagonal has geometric mean 1.
    """
    if variant == MULTINOMIAL:
        return lambda x: x / x.sum()
    if variant == GSPUD_ESTIMATE:
        return lambda x: x / math.exp(np.log(x[v:]).mean())
    return None


def background_chain(
    corpus: Corpus,
    variant: str,
    config: ChainConfig,
    fixed_diag: np.ndarray | None = None,
    jacobian: bool = False,
) -> tuple[UrnModel, PosteriorEstimate]:
    """Run the background chain and return the posterior-mean model with chain diagnostics."""
    target = BackgroundLikelihood(corpus, variant, fixed_diag)
    est = mh_chain(
        target,
        target.dim,
        config,
        jacobian=jacobian,
        sample_transform=_canonical_scale(variant, target.v),
    )
    return target.to_model(est.mean_params), est


def estimate_background(
    corpus: Corpus,
    variant: str,
    fixed_diag: np.ndarray | None = None,
    config: ChainConfig | None = None,
    jacobian: bool = False,
) -> UrnModel:
    """Posterior-mean background model for one of the four estimation variants.

    ``gspud_fixed_M`` defaults ``fixed_diag`` to the burstiness ``cf/df`` of
    every term when none is given.
    """
    if config is None:
        config = ChainConfig.background()
    if variant == GSPUD_FIXED and fixed_diag is None:
        fixed_diag = burstiness_vector(corpus)
    return background_chain(corpus, variant, config, fixed_diag, jacobian)[0]


class DocumentLikelihood:
    """Log-likelihood of one document as a function of its in-document ``u0^d``.

    ``self_reinforcement`` holds the fixed ``m_tt`` for the document's distinct
    terms (sorted term-id order, matching :attr:`terms`).
    """

    def __init__(self, doc: Document, matrix: ReplacementMatrix):
        if len(doc) == 0:
            raise ValueError(f"document {doc.doc_id!r} is empty")
        if matrix.variant == "full":
            raise ValueError("document estimation supports zero, identity and diagonal matrices only")
        self.terms, local = np.unique(doc.tokens, return_inverse=True)
        self.local = local.astype(np.int64)
        m = matrix.self_reinforcement()[self.terms]
        self.m_pos = m[self.local]
        self.occ = occurrence_index(doc.tokens).astype(np.float64)
        self.prefix = np.concatenate(([0.0], np.cumsum(self.m_pos)[:-1]))
        self.scale_free = matrix.variant == "zero"
        self.dim = self.terms.size

    def __call__(self, u: np.ndarray) -> float:
        num = np.sum(np.log(u[self.local] + self.occ * self.m_pos))
        den = np.sum(np.log(u.sum() + self.prefix))
        return float(num - den)


@numba.njit(cache=True)
def _doc_loglik(u, local, occ, m_pos, prefix):
    mass = 0.0
    for k in range(u.size):
        mass += u[k]
    total = 0.0
    for i in range(local.size):
        total += math.log(u[local[i]] + occ[i] * m_pos[i])
    den = 0.0
    for i in range(local.size):
        den += math.log(mass + prefix[i])
    return total - den


@numba.njit(cache=True)
def _doc_chain_chunk(
    theta, x, lp, local, occ, m_pos, prefix, blocks, sizes,
    block_ids, normals, log_u, sigma, bound, step0, burn_in, thin,
    mean, n_kept, scale_free,
):
    accepted = 0
    x_new = x.copy()
    for s in range(block_ids.size):
        b = block_ids[s]
        size = sizes[b]
        ok = True
        for k in range(size):
            if abs(theta[blocks[b, k]] + sigma * normals[s, k]) > bound:
                ok = False
        if ok:
            for k in range(size):
                c = blocks[b, k]
                x_new[c] = math.exp(theta[c] + sigma * normals[s, k])
            lp_new = _doc_loglik(x_new, local, occ, m_pos, prefix)
            if lp_new != lp_new:
                lp_new = -np.inf
            if log_u[s] < lp_new - lp:
                for k in range(size):
                    c = blocks[b, k]
                    theta[c] = theta[c] + sigma * normals[s, k]
                    x[c] = x_new[c]
                lp = lp_new
                accepted += 1
            else:
                for k in range(size):
                    c = blocks[b, k]
                    x_new[c] = x[c]
        i = step0 + s
        if i >= burn_in and (i - burn_in) % thin == 0:
            n_kept += 1
            norm = 1.0
            if scale_free:
                norm = 0.0
                for k in range(x.size):
                    norm += x[k]
            for k in range(x.size):
                mean[k] += (x[k] / norm - mean[k]) / n_kept
    return lp, accepted, n_kept


def document_chain(
    doc: Document,
    matrix: ReplacementMatrix,
    config: ChainConfig,
    fast: bool = True,
) -> tuple[np.ndarray, PosteriorEstimate]:
    """Posterior mean of ``u0^d`` over the document's distinct terms.

    Returns ``(term_ids, estimate)``. Zero-matrix samples are normalized to
    sum 1 since that likelihood carries no information about scale.
    ``fast=False`` runs the generic sampler on :class:`DocumentLikelihood`;
    both paths consume the same random stream.
    """
    target = DocumentLikelihood(doc, matrix)
    if not fast:
        transform = (lambda x: x / x.sum()) if target.scale_free else None
        return target.terms, mh_chain(target, target.dim, config, sample_transform=transform)

    rng = np.random.default_rng(config.rng_seed)
    theta = np.zeros(target.dim)
    x = np.ones(target.dim)
    lp = _doc_loglik(x, target.local, target.occ, target.m_pos, target.prefix)
    lp_start = lp
    blocks, sizes = block_partition(target.dim, config, rng)
    mean = np.zeros(target.dim)
    n_kept = 0
    accepted = 0
    step0 = 0
    for block_ids, normals, log_u in random_stream(rng, config.n_samples, len(sizes), blocks.shape[1]):
        lp, acc, n_kept = _doc_chain_chunk(
            theta, x, lp, target.local, target.occ, target.m_pos, target.prefix, blocks, sizes,
            block_ids, normals, log_u, config.proposal_sigma, LOG_BOUND, step0, config.burn_in,
            config.thinning, mean, n_kept, target.scale_free,
        )
        accepted += acc
        step0 += block_ids.size
    est = PosteriorEstimate(mean, accepted / config.n_samples, n_kept, lp_start, lp)
    return target.terms, est


def estimate_document(
    doc: Document,
    matrix: ReplacementMatrix,
    config: ChainConfig | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Posterior-mean document model as sparse ``(term_ids, u0^d values)``.

    Terms absent from the document have no entry (zero mass).
    """
    if config is None:
        config = ChainConfig.document()
    terms, est = document_chain(doc, matrix, config)
    return terms, est.mean_params


def mle_document(doc: Document) -> tuple[np.ndarray, np.ndarray]:
    """Maximum-likelihood multinomial document model: term frequencies over length."""
    if len(doc) == 0:
        raise ValueError(f"document {doc.doc_id!r} is empty")
    terms, counts = doc.term_counts()
    return terms, counts / float(len(doc))


def document_seed(seed: int, doc_id: str) -> int:
    return derive_seed(seed, "document", doc_id)
