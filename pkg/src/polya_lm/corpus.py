"""Test-collection ingestion: Cranfield-style markup, preprocessing, term statistics."""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from functools import cached_property
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from nltk.stem.porter import PorterStemmer

__all__ = [
    "CranfieldParseError",
    "Document",
    "Corpus",
    "parse_cranfield",
    "parse_qrels",
    "load_stopwords",
    "preprocess",
    "build_corpus",
    "burstiness",
    "stats_report",
    "write_snapshot",
    "read_snapshot",
    "SNAPSHOT_VERSION",
]

SNAPSHOT_VERSION = 1

_MARKER = re.compile(rb"^\.([A-Z])(?:[ \t]+(.*?))?[ \t]*\r?$")
_SPLIT = re.compile(r"[^0-9a-z]+")
_STEMMER = PorterStemmer(mode=PorterStemmer.ORIGINAL_ALGORITHM)


class CranfieldParseError(ValueError):
    """Raised on malformed Cranfield-format input."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


def normalize_id(raw: str) -> str:
    """Strip leading zeros from numeric identifiers so '001' and '1' agree."""
    raw = raw.strip()
    return str(int(raw)) if raw.isdigit() else raw


def parse_cranfield(raw: bytes | str, include_title: bool = False) -> list[tuple[str, str]]:
    """Split a Cranfield/Medline/CISI style file into ``(doc_id, body)`` records.

    A record starts at ``.I <id>``. The body is the text following ``.W`` up to
    the next field marker; with ``include_title`` the ``.T`` text is prepended.
    Other fields (``.A``, ``.B``, ``.X``, ...) are skipped.
    """
    if isinstance(raw, str):
        raw = raw.encode("utf-8")
    records: list[tuple[str, str]] = []
    current_id: str | None = None
    field_name: str | None = None
    parts: dict[str, list[str]] = {}

    def flush():
        if current_id is None:
            return
        body = parts.get("W", [])
        if include_title:
            body = parts.get("T", []) + body
        records.append((current_id, "\n".join(body).strip()))

    offset = 0
    for line in raw.splitlines(keepends=True):
        m = _MARKER.match(line.rstrip(b"\n"))
        if m:
            tag = m.group(1).decode()
            if tag == "I":
                flush()
                arg = (m.group(2) or b"").decode("utf-8", "replace")
                if not arg.strip():
                    raise CranfieldParseError(".I marker without an identifier", offset)
                current_id = normalize_id(arg)
                parts = {}
                field_name = None
            else:
                if current_id is None:
                    raise CranfieldParseError(f".{tag} field before any .I record", offset)
                field_name = tag
                parts.setdefault(tag, [])
                rest = m.group(2)
                if rest:
                    parts[tag].append(rest.decode("utf-8", "replace"))
        else:
            text = line.decode("utf-8", "replace").rstrip("\r\n")
            if current_id is None:
                if text.strip():
                    raise CranfieldParseError("text before any .I record", offset)
            elif field_name is not None:
                parts[field_name].append(text)
        offset += len(line)
    flush()
    return records


def parse_qrels(text: str) -> dict[str, set[str]]:
    """Read relevance judgements.

    Accepted line layouts (whitespace separated):

    * ``qid docid``
    * ``qid docid grade`` (Cranfield; grade -1 marks a non-relevant pair)
    * ``qid 0 docid rel`` (TREC; rel > 0 is relevant)
    * ``qid docid x y`` (CISI; second column is never ``0``)
    """
    qrels: dict[str, set[str]] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        cols = line.split()
        if not cols:
            continue
        if len(cols) == 2:
            qid, did, rel = cols[0], cols[1], 1.0
        elif len(cols) == 3:
            qid, did, rel = cols[0], cols[1], float(cols[2])
        elif len(cols) == 4 and cols[1] in ("0", "Q0"):
            qid, did, rel = cols[0], cols[2], float(cols[3])
        elif len(cols) == 4:
            qid, did, rel = cols[0], cols[1], 1.0
        else:
            raise ValueError(f"qrels line {lineno}: cannot parse {line!r}")
        qid = normalize_id(qid)
        bucket = qrels.setdefault(qid, set())
        if rel > 0:
            bucket.add(normalize_id(did))
    return qrels


def load_stopwords(path: str | Path | None = None) -> frozenset[str]:
    """Load a one-word-per-line stopword list; defaults to the bundled SMART list."""
    if path is None:
        text = resources.files("polya_lm").joinpath("data/smart_stopwords.txt").read_text()
    else:
        text = Path(path).read_text()
    words = (w.strip().lower() for w in text.splitlines())
    return frozenset(w for w in words if w and not w.startswith("#"))


def preprocess(raw_body: str, stopwords: Iterable[str] = ()) -> list[str]:
    """Lowercase, split on non-alphanumerics, drop numbers and stopwords, Porter-stem."""
    stop = stopwords if isinstance(stopwords, (set, frozenset)) else set(stopwords)
    out = []
    for tok in _SPLIT.split(raw_body.lower()):
        if not tok or tok.isdigit() or tok in stop:
            continue
        out.append(_STEMMER.stem(tok))
    return out


@dataclass(frozen=True, eq=False)
class Document:
    doc_id: str
    tokens: np.ndarray  # int64 term ids, observed order

    def __post_init__(self):
        tokens = np.asarray(self.tokens, dtype=np.int64)
        tokens.setflags(write=False)
        object.__setattr__(self, "tokens", tokens)

    def __len__(self) -> int:
        return len(self.tokens)

    @cached_property
    def unique_term_count(self) -> int:
        return int(np.unique(self.tokens).size)

    def term_counts(self) -> tuple[np.ndarray, np.ndarray]:
        """Distinct term ids (sorted) and their in-document counts."""
        return np.unique(self.tokens, return_counts=True)


@dataclass(frozen=True, eq=False)
class Corpus:
    """Immutable tokenized collection with vocabulary and per-term statistics."""

    documents: tuple[Document, ...]
    terms: tuple[str, ...]
    cf: np.ndarray
    df: np.ndarray
    total_tokens: int
    term_index: dict[str, int] = field(repr=False, default_factory=dict)

    def __post_init__(self):
        if not self.term_index:
            object.__setattr__(self, "term_index", {t: i for i, t in enumerate(self.terms)})
        for arr in (self.cf, self.df):
            arr.setflags(write=False)

    @property
    def vocab_size(self) -> int:
        return len(self.terms)

    @property
    def n_docs(self) -> int:
        return len(self.documents)

    @cached_property
    def doc_index(self) -> dict[str, int]:
        return {d.doc_id: i for i, d in enumerate(self.documents)}

    def encode(self, tokens: Sequence[str], drop_unknown: bool = True) -> np.ndarray:
        """Map term strings to ids; unknown terms are dropped (or raise KeyError)."""
        if drop_unknown:
            ids = [self.term_index[t] for t in tokens if t in self.term_index]
        else:
            ids = [self.term_index[t] for t in tokens]
        return np.asarray(ids, dtype=np.int64)

    @cached_property
    def doc_lengths(self) -> np.ndarray:
        return np.array([len(d) for d in self.documents], dtype=np.int64)

    @cached_property
    def flat_tokens(self) -> np.ndarray:
        """All documents' tokens concatenated in document order."""
        if not self.documents:
            return np.zeros(0, dtype=np.int64)
        return np.concatenate([d.tokens for d in self.documents])


def build_corpus(docs: Sequence[tuple[str, Sequence[str]]]) -> Corpus:
    """Assign dense term ids in first-occurrence order and count cf/df."""
    if not docs:
        raise ValueError("build_corpus needs at least one document")
    index: dict[str, int] = {}
    documents = []
    seen_ids = set()
    for doc_id, tokens in docs:
        if doc_id in seen_ids:
            raise ValueError(f"duplicate document id {doc_id!r}")
        seen_ids.add(doc_id)
        ids = [index.setdefault(tok, len(index)) for tok in tokens]
        documents.append(Document(doc_id, np.asarray(ids, dtype=np.int64)))
    v = len(index)
    cf = np.zeros(v, dtype=np.int64)
    df = np.zeros(v, dtype=np.int64)
    for d in documents:
        np.add.at(cf, d.tokens, 1)
        df[np.unique(d.tokens)] += 1
    return Corpus(
        documents=tuple(documents),
        terms=tuple(index),
        cf=cf,
        df=df,
        total_tokens=int(cf.sum()),
        term_index=index,
    )


def burstiness(corpus: Corpus, t: int | str) -> float:
    """Average within-document frequency of a term given it occurs: cf / df."""
    if isinstance(t, str):
        if t not in corpus.term_index:
            raise KeyError(f"unknown term {t!r}")
        t = corpus.term_index[t]
    if not 0 <= t < corpus.vocab_size:
        raise KeyError(f"term id {t} outside vocabulary of size {corpus.vocab_size}")
    return float(corpus.cf[t]) / float(corpus.df[t])


def burstiness_vector(corpus: Corpus) -> np.ndarray:
    return corpus.cf.astype(np.float64) / corpus.df.astype(np.float64)


def stats_report(corpus: Corpus, name: str = "collection", n_queries: int | None = None) -> str:
    """Tab-separated collection statistics, one row per quantity."""
    rows = [
        ("Collection", name),
        ("# docs", corpus.n_docs),
        ("# vocab (v)", corpus.vocab_size),
        ("# tokens", corpus.total_tokens),
    ]
    if n_queries is not None:
        rows.append(("# qrys", n_queries))
    return "".join(f"{k}\t{v}\n" for k, v in rows)


def write_snapshot(corpus: Corpus, path: str | Path, config_hash: str = "") -> None:
    """Persist a corpus as plain text; output is byte-identical for identical input."""
    lines = [
        f"polya-corpus version={SNAPSHOT_VERSION} docs={corpus.n_docs} "
        f"vocab={corpus.vocab_size} tokens={corpus.total_tokens} config={config_hash or '-'}"
    ]
    lines.extend(corpus.terms)
    for d in corpus.documents:
        lines.append(d.doc_id + "\t" + " ".join(map(str, d.tokens.tolist())))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_snapshot(path: str | Path) -> tuple[Corpus, str]:
    """Load a snapshot written by :func:`write_snapshot`; returns ``(corpus, config_hash)``."""
    lines = Path(path).read_text(encoding="utf-8").split("\n")
    header = lines[0].split()
    if not header or header[0] != "polya-corpus":
        raise ValueError(f"{path}: not a corpus snapshot")
    meta = dict(kv.split("=", 1) for kv in header[1:])
    if int(meta["version"]) != SNAPSHOT_VERSION:
        raise ValueError(f"{path}: unsupported snapshot version {meta['version']}")
    v, n = int(meta["vocab"]), int(meta["docs"])
    terms = lines[1 : 1 + v]
    docs = []
    for line in lines[1 + v : 1 + v + n]:
        doc_id, _, ids = line.partition("\t")
        docs.append((doc_id, [terms[int(i)] for i in ids.split()]))
    corpus = build_corpus(docs)
    if corpus.terms != tuple(terms):
        raise ValueError(f"{path}: vocabulary order mismatch")
    config = meta.get("config", "-")
    return corpus, "" if config == "-" else config
