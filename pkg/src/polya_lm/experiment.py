"""Experiment pipeline: ingest -> estimate -> retrieve -> evaluate.

Every artifact written under the output directory records the hash of the
configuration fields that produced it; downstream stages refuse artifacts
whose hash no longer matches the current configuration.
"""

from __future__ import annotations

import dataclasses
import hashlib
import logging
import os
import time
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from ._validation import MODEL_VARIANTS, check_variant
from .corpus import (
    Corpus,
    build_corpus,
    burstiness_vector,
    load_stopwords,
    parse_cranfield,
    parse_qrels,
    preprocess,
    read_snapshot,
    stats_report,
    write_snapshot,
)
from .estimators import PolyaUrnLM, fit_document_models
from .evaluation import per_query_ap, perplexity, permutation_test
from .mcmc import ChainConfig
from .retrieval import MU_GRID, QueryRun, RetrievalModel, read_trec_run, run_queries, write_trec_run
from .urn import load_model, save_model

log = logging.getLogger(__name__)

DATA_DIR_ENV = "POLYA_DATA_DIR"
BURSTINESS_TERMS = ("also", "dna", "refer")

# Distribution file names of the standard collections, relative to $POLYA_DATA_DIR/<name>/.
# Cranfield query ids are not sequential; its qrels number queries 1..225 in file order.
STANDARD_COLLECTIONS = {
    "medline": {"docs": "MED.ALL", "queries": "MED.QRY", "qrels": "MED.REL"},
    "cranfield": {"docs": "cran.all.1400", "queries": "cran.qry", "qrels": "cranqrel", "renumber_queries": True},
    "cisi": {"docs": "CISI.ALL", "queries": "CISI.QRY", "qrels": "CISI.REL"},
}


class StageError(RuntimeError):
    """A pipeline stage is missing an input artifact or found a stale one."""


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


@dataclass
class ExperimentConfig:
    docs: str = ""
    queries: str = ""
    qrels: str = ""
    name: str = "collection"
    out_dir: str = "polya-out"
    variants: tuple[str, ...] = MODEL_VARIANTS
    seed: int = 0
    scale: float = 1.0
    include_title: bool = False
    stopwords: str = ""
    renumber_queries: bool = False
    bg_samples: int = 500_000
    bg_burn_in: int = 50_000
    bg_sigma: float = 0.1
    doc_samples: int = 200_000
    doc_burn_in: int = 20_000
    doc_sigma: float = 0.5
    thin: int = 10
    mode: str = "blockwise"
    block_size: int = 64
    doc_block_size: int = 1
    jacobian: bool = False
    mu: float = 1000.0
    mu_sweep: tuple[float, ...] = tuple(float(m) for m in MU_GRID)
    top_k: int = 1000
    run_tag: str = "polya"
    multiplicity: bool = True
    n_permutations: int = 100_000
    n_jobs: int = field(default_factory=lambda: os.cpu_count() or 1)

    # which fields feed each stage's artifact hash
    _INGEST = ("include_title", "stopwords", "renumber_queries")
    _ESTIMATE = ("seed", "scale", "bg_samples", "bg_burn_in", "bg_sigma", "doc_samples", "doc_burn_in",
                 "doc_sigma", "thin", "mode", "block_size", "doc_block_size", "jacobian")
    _RETRIEVE = ("mu", "mu_sweep", "top_k", "run_tag", "multiplicity")

    def __post_init__(self):
        self.variants = tuple(self.variants)
        self.mu_sweep = tuple(float(m) for m in self.mu_sweep)
        for v in self.variants:
            check_variant(v)
        if self.scale <= 0:
            raise ValueError("scale must be > 0")

    # -- serialization -------------------------------------------------
    def to_text(self) -> str:
        """Flat ``key=value`` lines (sorted); :meth:`from_text` inverts it exactly."""
        lines = []
        for f in sorted(fields(self), key=lambda f: f.name):
            val = getattr(self, f.name)
            if isinstance(val, tuple):
                val = ",".join(_fmt(x) if isinstance(x, float) else str(x) for x in val)
            elif isinstance(val, float):
                val = _fmt(val)
            lines.append(f"{f.name}={val}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str, **overrides) -> "ExperimentConfig":
        raw = {}
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"config line {lineno}: expected key=value")
            key, val = (s.strip() for s in line.split("=", 1))
            raw[key] = val
        raw.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**{k: _coerce(k, v) for k, v in raw.items()})

    @classmethod
    def load(cls, path: str | Path, **overrides) -> "ExperimentConfig":
        return cls.from_text(Path(path).read_text(), **overrides)

    # -- paths and hashes ----------------------------------------------
    def resolve(self, path: str) -> Path:
        p = Path(path)
        base = os.environ.get(DATA_DIR_ENV)
        if not p.is_absolute() and base and not p.exists():
            p = Path(base) / p
        return p

    def validate_inputs(self, need_queries: bool = False) -> None:
        required = [("docs", self.docs)]
        if need_queries:
            required += [("queries", self.queries), ("qrels", self.qrels)]
        for key, path in required:
            if not path:
                raise StageError(f"no {key} file configured")
            if not self.resolve(path).is_file():
                raise StageError(f"{key} file not found: {path}")

    def _hash(self, keys, parent: str = "") -> str:
        h = hashlib.sha256(parent.encode())
        for k in keys:
            h.update(f"{k}={getattr(self, k)!r};".encode())
        return h.hexdigest()[:16]

    def ingest_hash(self) -> str:
        h = hashlib.sha256()
        for key in ("docs", "queries", "qrels", "stopwords"):
            path = getattr(self, key)
            if path and self.resolve(path).is_file():
                h.update(hashlib.sha256(self.resolve(path).read_bytes()).digest())
            else:
                h.update(b"-")
        return self._hash(self._INGEST, h.hexdigest())

    def estimate_hash(self, variant: str) -> str:
        return self._hash(self._ESTIMATE, self.ingest_hash() + variant)

    def retrieve_hash(self, variant: str) -> str:
        return self._hash(self._RETRIEVE, self.estimate_hash(variant))

    def bg_chain(self) -> ChainConfig:
        return ChainConfig(self.bg_samples, self.bg_burn_in, self.bg_sigma, self.seed, self.thin,
                           self.mode, self.block_size).scaled(self.scale)

    def doc_chain(self) -> ChainConfig:
        return ChainConfig(self.doc_samples, self.doc_burn_in, self.doc_sigma, self.seed, self.thin,
                           self.mode, self.doc_block_size).scaled(self.scale)

    # -- artifact layout ----------------------------------------------
    @property
    def out(self) -> Path:
        return Path(self.out_dir)

    def corpus_path(self) -> Path:
        return self.out / "corpus.txt"

    def queries_path(self) -> Path:
        return self.out / "queries.txt"

    def qrels_path(self) -> Path:
        return self.out / "qrels.txt"

    def model_dir(self, variant: str) -> Path:
        return self.out / "models" / variant

    def run_path(self, variant: str, mu: float) -> Path:
        return self.out / "runs" / f"{variant}.mu{_fmt(mu)}.run"


def _coerce(key: str, value: str):
    ftype = {f.name: f.type for f in fields(ExperimentConfig)}.get(key)
    if ftype is None:
        raise ValueError(f"unknown config key {key!r}")
    if not isinstance(value, str):
        return value
    if ftype == "bool":
        if value.lower() not in ("true", "false", "1", "0", "yes", "no"):
            raise ValueError(f"{key}: expected a boolean, got {value!r}")
        return value.lower() in ("true", "1", "yes")
    if ftype == "int":
        return int(value)
    if ftype == "float":
        return float(value)
    if ftype.startswith("tuple[float"):
        return tuple(float(x) for x in value.split(",") if x.strip())
    if ftype.startswith("tuple[str"):
        return tuple(x.strip() for x in value.split(",") if x.strip())
    return value


# ---------------------------------------------------------------------------
# ingest
# ---------------------------------------------------------------------------

def _read_records(cfg: ExperimentConfig, path: str, include_title: bool) -> list[tuple[str, str]]:
    raw = cfg.resolve(path).read_bytes()
    return parse_cranfield(raw, include_title=include_title)


def ingest(cfg: ExperimentConfig) -> Corpus:
    """Parse and preprocess the collection; write snapshots and the statistics table."""
    cfg.validate_inputs()
    stop = load_stopwords(cfg.resolve(cfg.stopwords) if cfg.stopwords else None)
    records = _read_records(cfg, cfg.docs, cfg.include_title)
    if not records:
        raise StageError(f"no documents found in {cfg.docs}")
    corpus = build_corpus([(doc_id, preprocess(body, stop)) for doc_id, body in records])
    if corpus.vocab_size == 0:
        raise StageError("collection is empty after preprocessing")
    cfg.out.mkdir(parents=True, exist_ok=True)
    digest = cfg.ingest_hash()
    write_snapshot(corpus, cfg.corpus_path(), digest)

    n_queries = None
    if cfg.queries:
        q_records = _read_records(cfg, cfg.queries, False)
        if cfg.renumber_queries:
            q_records = [(str(i), body) for i, (_, body) in enumerate(q_records, 1)]
        lines = [f"polya-queries config={digest}"]
        lines += [qid + "\t" + " ".join(preprocess(body, stop)) for qid, body in q_records]
        cfg.queries_path().write_text("\n".join(lines) + "\n", encoding="utf-8")
        n_queries = len(q_records)
    if cfg.qrels:
        qrels = parse_qrels(cfg.resolve(cfg.qrels).read_text())
        lines = [f"polya-qrels config={digest}"]
        lines += [f"{q} {d}" for q in sorted(qrels, key=_id_key) for d in sorted(qrels[q], key=_id_key)]
        cfg.qrels_path().write_text("\n".join(lines) + "\n", encoding="utf-8")
    (cfg.out / "collection.tsv").write_text(stats_report(corpus, cfg.name, n_queries), encoding="utf-8")
    return corpus


def _id_key(x: str):
    return (0, int(x), "") if x.isdigit() else (1, 0, x)


def _check_header(path: Path, expected: str, kind: str) -> list[str]:
    if not path.is_file():
        raise StageError(f"missing artifact {path} ({kind}); run the earlier stage first")
    lines = path.read_text(encoding="utf-8").splitlines()
    meta = dict(kv.split("=", 1) for kv in lines[0].split()[1:] if "=" in kv)
    if meta.get("config") != expected:
        raise StageError(f"stale artifact {path}: produced by config {meta.get('config')}, expected {expected}")
    return lines


def load_corpus(cfg: ExperimentConfig) -> Corpus:
    path = cfg.corpus_path()
    if not path.is_file():
        raise StageError(f"missing artifact {path} (corpus snapshot); run 'ingest' first")
    corpus, digest = read_snapshot(path)
    if digest != cfg.ingest_hash():
        raise StageError(f"stale artifact {path}: inputs or preprocessing changed; re-run 'ingest'")
    return corpus


def load_queries(cfg: ExperimentConfig, corpus: Corpus) -> list[tuple[str, np.ndarray]]:
    lines = _check_header(cfg.queries_path(), cfg.ingest_hash(), "queries")
    out = []
    for line in lines[1:]:
        qid, _, text = line.partition("\t")
        out.append((qid, corpus.encode(text.split())))
    return out


def load_qrels(cfg: ExperimentConfig) -> dict[str, set[str]]:
    lines = _check_header(cfg.qrels_path(), cfg.ingest_hash(), "qrels")
    qrels: dict[str, set[str]] = {}
    for line in lines[1:]:
        q, d = line.split()
        qrels.setdefault(q, set()).add(d)
    return qrels


# ---------------------------------------------------------------------------
# estimate
# ---------------------------------------------------------------------------

def _write_doc_models(path: Path, rm: RetrievalModel, variant: str, digest: str) -> None:
    lines = [f"polya-docmodels variant={variant} docs={len(rm.doc_ids)} config={digest}"]
    for doc_id, terms, vals, mass in zip(rm.doc_ids, rm.doc_terms, rm.doc_values, rm.doc_mass):
        entries = " ".join(f"{t}:{_fmt(v)}" for t, v in zip(terms.tolist(), vals.tolist()))
        lines.append(f"{doc_id}\t{_fmt(mass)}\t{entries}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _read_doc_models(path: Path, digest: str):
    lines = _check_header(path, digest, "document models")
    models, masses = [], []
    for line in lines[1:]:
        doc_id, mass, entries = line.split("\t")
        pairs = [e.split(":") for e in entries.split()]
        terms = np.array([int(t) for t, _ in pairs], dtype=np.int64)
        vals = np.array([float(v) for _, v in pairs])
        models.append((doc_id, terms, vals))
        masses.append(float(mass))
    return models, masses


def estimate(cfg: ExperimentConfig, variant: str, corpus: Corpus | None = None) -> PolyaUrnLM:
    """Fit the background and all document models for one variant and persist them."""
    check_variant(variant)
    corpus = load_corpus(cfg) if corpus is None else corpus
    digest = cfg.estimate_hash(variant)
    bg_cfg, doc_cfg = cfg.bg_chain(), cfg.doc_chain()
    t0 = time.perf_counter()
    lm = PolyaUrnLM(
        variant=variant, n_samples=bg_cfg.n_samples, burn_in=bg_cfg.burn_in,
        proposal_sigma=bg_cfg.proposal_sigma, thinning=bg_cfg.thinning,
        proposal_mode=bg_cfg.proposal_mode, block_size=bg_cfg.block_size,
        random_state=cfg.seed, jacobian=cfg.jacobian,
    ).fit(corpus)
    t1 = time.perf_counter()
    matrix = None if variant == "mult-mle" else lm.model_.matrix
    models, rates = fit_document_models(corpus, matrix, doc_cfg, cfg.seed, cfg.n_jobs)
    t2 = time.perf_counter()
    rm = RetrievalModel.from_models(lm.model_.u0, models, [d.unique_term_count for d in corpus.documents])

    mdir = cfg.model_dir(variant)
    mdir.mkdir(parents=True, exist_ok=True)
    save_model(lm.model_, mdir / "background.model", corpus.terms, config=digest)
    _write_doc_models(mdir / "documents.model", rm, variant, digest)

    est = lm.estimate_
    doc_rates = [r for r in rates if r is not None]
    meta = {
        "variant": variant,
        "config": digest,
        **{f"background.{k}": v for k, v in bg_cfg.as_dict().items()},
        **{f"document.{k}": v for k, v in doc_cfg.as_dict().items() if k != "rng_seed"},
        "seed": cfg.seed,
        "jacobian": cfg.jacobian,
        "background.acceptance_rate": est.acceptance_rate if est else "",
        "background.log_post_start": est.log_post_start if est else "",
        "background.log_post_end": est.log_post_end if est else "",
        "background.log_likelihood": lm.log_likelihood(corpus),
        "document.mean_acceptance_rate": float(np.mean(doc_rates)) if doc_rates else "",
        "wall_clock.background_s": round(t1 - t0, 3),
        "wall_clock.documents_s": round(t2 - t1, 3),
    }
    (mdir / "run_meta.txt").write_text("".join(f"{k}={v}\n" for k, v in meta.items()), encoding="utf-8")
    log.info("estimated %s: background %.1fs, documents %.1fs", variant, t1 - t0, t2 - t1)
    return lm


def load_variant(cfg: ExperimentConfig, variant: str):
    """Background model and retrieval model persisted for ``variant``."""
    digest = cfg.estimate_hash(variant)
    mdir = cfg.model_dir(variant)
    bg_path = mdir / "background.model"
    if not bg_path.is_file():
        raise StageError(f"missing artifact {bg_path}; run 'estimate --variant {variant}' first")
    model, _, meta = load_model(bg_path)
    if meta.get("config") != digest:
        raise StageError(f"stale artifact {bg_path}; re-run 'estimate --variant {variant}'")
    models, masses = _read_doc_models(mdir / "documents.model", digest)
    return model, RetrievalModel.from_models(model.u0, models, masses, cfg.mu)


# ---------------------------------------------------------------------------
# retrieve / evaluate
# ---------------------------------------------------------------------------

def retrieve(cfg: ExperimentConfig, variant: str, mus=None) -> dict[float, list[QueryRun]]:
    """Run all queries for each ``mu`` and write TREC run files."""
    corpus = load_corpus(cfg)
    queries = load_queries(cfg, corpus)
    _, rm = load_variant(cfg, variant)
    mus = (cfg.mu,) if mus is None else tuple(mus)
    (cfg.out / "runs").mkdir(parents=True, exist_ok=True)
    out = {}
    for mu in mus:
        runs = run_queries(queries, rm.with_mu(float(mu)), cfg.top_k, cfg.multiplicity)
        for r in runs:
            if r.flagged:
                log.warning("query %s has no in-vocabulary terms; empty ranking", r.query_id)
        write_trec_run(runs, cfg.run_path(variant, mu), f"{cfg.run_tag}-{variant}")
        out[float(mu)] = runs
    return out


def evaluate_run(run_path: str | Path, qrels: dict[str, set[str]]) -> tuple[float, dict[str, float]]:
    """MAP and per-query AP of a TREC run file."""
    runs = read_trec_run(run_path)
    aps = per_query_ap(runs, qrels)
    if not aps:
        raise StageError(f"{run_path}: no query has relevance judgements")
    return float(np.mean(list(aps.values()))), aps


def _table(header: list[str], rows: list[list]) -> str:
    def cell(x):
        return f"{x:.4f}" if isinstance(x, float) else str(x)
    return "\t".join(header) + "\n" + "".join("\t".join(cell(c) for c in row) + "\n" for row in rows)


def sweep(cfg: ExperimentConfig, variant: str, qrels=None) -> tuple[list[tuple[float, float]], dict]:
    """MAP over ``cfg.mu_sweep``; writes ``sweep_<variant>.csv`` (``mu,map``)."""
    qrels = load_qrels(cfg) if qrels is None else qrels
    runs_by_mu = retrieve(cfg, variant, cfg.mu_sweep)
    table, per_query = [], {}
    for mu, runs in runs_by_mu.items():
        aps = per_query_ap(runs, qrels)
        if not aps:
            raise StageError("no query has relevance judgements")
        table.append((mu, float(np.mean(list(aps.values())))))
        per_query[mu] = aps
    text = "mu,map\n" + "".join(f"{_fmt(mu)},{m:.6f}\n" for mu, m in table)
    (cfg.out / f"sweep_{variant}.csv").write_text(text, encoding="utf-8")
    return table, per_query


def evaluate(cfg: ExperimentConfig, variants=None) -> dict:
    """Perplexity and tuned-mu MAP per variant, the significance matrix and the mu-sweep CSVs."""
    variants = tuple(cfg.variants if variants is None else variants)
    corpus = load_corpus(cfg)
    qrels = load_qrels(cfg) if cfg.qrels else None
    ppl_rows, map_rows, best_aps, results = [], [], {}, {"perplexity": {}, "map": {}, "mu": {}}
    for variant in variants:
        model, _ = load_variant(cfg, variant)
        ppl = perplexity(model, corpus)
        results["perplexity"][variant] = ppl
        ppl_rows.append([variant, model.variant, model.size, f"{ppl:.1f}"])
        if qrels is not None:
            table, per_query = sweep(cfg, variant, qrels)
            mu, best = max(table, key=lambda r: r[1])
            results["map"][variant], results["mu"][variant] = best, mu
            best_aps[variant] = per_query[mu]
            map_rows.append([variant, _fmt(mu), f"{best:.4f}"])
    (cfg.out / "perplexity.tsv").write_text(_table(["model", "matrix", "v", cfg.name], ppl_rows), encoding="utf-8")
    if qrels is not None:
        (cfg.out / "map.tsv").write_text(_table(["model", "mu", cfg.name], map_rows), encoding="utf-8")
        results["pvalues"] = significance(cfg, best_aps)
    if "gspud-mc" in variants:
        model, _ = load_variant(cfg, "gspud-mc")
        (cfg.out / "burstiness.tsv").write_text(burstiness_table(corpus, model), encoding="utf-8")
    return results


def significance(cfg: ExperimentConfig, best_aps: dict[str, dict[str, float]]) -> dict:
    """Pairwise permutation-test p-values over the queries every run evaluated."""
    names = list(best_aps)
    common = sorted(set.intersection(*(set(a) for a in best_aps.values())), key=_id_key) if names else []
    pvals = {}
    rows = []
    for a in names:
        row = [a]
        for b in names:
            va = [best_aps[a][q] for q in common]
            vb = [best_aps[b][q] for q in common]
            p = permutation_test(va, vb, cfg.n_permutations, cfg.seed) if common else float("nan")
            pvals[(a, b)] = p
            row.append(f"{p:.5f}")
        rows.append(row)
    (cfg.out / "significance.tsv").write_text(_table(["model"] + names, rows), encoding="utf-8")
    return pvals


def burstiness_table(corpus: Corpus, model, terms=BURSTINESS_TERMS) -> str:
    """cf, df, cf/df and fitted (u0, m) for a few illustrative terms."""
    bs = burstiness_vector(corpus)
    m = model.matrix.self_reinforcement()
    rows = []
    for term in terms:
        t = corpus.term_index.get(term)
        if t is None:
            continue
        rows.append([term, int(corpus.cf[t]), int(corpus.df[t]), f"{bs[t]:.2f}", f"{model.u0[t]:.4g}", f"{m[t]:.4g}"])
    return _table(["term", "cf", "df", "bs", "u0", "m"], rows)


def reproduce(cfg: ExperimentConfig) -> dict:
    """Run every stage for every configured variant."""
    corpus = ingest(cfg)
    for variant in cfg.variants:
        estimate(cfg, variant, corpus)
    return evaluate(cfg)


def standard_config(name: str, **overrides) -> ExperimentConfig:
    """Config for one of :data:`STANDARD_COLLECTIONS` under ``$POLYA_DATA_DIR/<name>``."""
    if name not in STANDARD_COLLECTIONS:
        raise ValueError(f"unknown collection {name!r}; expected one of {sorted(STANDARD_COLLECTIONS)}")
    files = dict(STANDARD_COLLECTIONS[name])
    for key in ("docs", "queries", "qrels"):
        files[key] = f"{name}/{files[key]}"
    return ExperimentConfig(**{"name": name, "out_dir": f"polya-out/{name}", **files, **overrides})


def replace_config(cfg: ExperimentConfig, **changes) -> ExperimentConfig:
    return dataclasses.replace(cfg, **changes)
