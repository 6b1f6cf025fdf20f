"""Generalised Pólya urn: replacement matrices, urn state updates and sequence likelihoods."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.special import gammaln

__all__ = [
    "ZERO",
    "IDENTITY",
    "DIAGONAL",
    "FULL",
    "ReplacementMatrix",
    "UrnModel",
    "step",
    "log_likelihood",
    "log_likelihood_multinomial",
    "log_likelihood_dcm",
    "occurrence_index",
    "save_model",
    "load_model",
]

ZERO, IDENTITY, DIAGONAL, FULL = "zero", "identity", "diagonal", "full"
VARIANTS = (ZERO, IDENTITY, DIAGONAL, FULL)


@dataclass(frozen=True, eq=False)
class ReplacementMatrix:
    """Row ``t`` lists the balls added to the urn after a ball of colour ``t`` is drawn.

    Only the diagonal and full variants carry data; zero and identity are
    described by the vocabulary size alone.
    """

    variant: str
    size: int
    diag: np.ndarray | None = None
    rows: np.ndarray | None = None

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown replacement matrix variant {self.variant!r}")
        if self.size < 1:
            raise ValueError("vocabulary size must be positive")
        if self.variant == DIAGONAL:
            diag = np.array(self.diag, dtype=np.float64)
            if diag.shape != (self.size,):
                raise ValueError(f"diagonal must have shape ({self.size},), got {diag.shape}")
            if not np.all(np.isfinite(diag)) or np.any(diag <= 0):
                raise ValueError("diagonal replacement entries must be finite and > 0")
            diag.setflags(write=False)
            object.__setattr__(self, "diag", diag)
        elif self.variant == FULL:
            rows = np.array(self.rows, dtype=np.float64)
            if rows.shape != (self.size, self.size):
                raise ValueError(f"full matrix must be {self.size}x{self.size}, got {rows.shape}")
            if not np.all(np.isfinite(rows)) or np.any(rows.sum(axis=1) <= 0):
                raise ValueError("every row of a full replacement matrix must sum to > 0")
            rows.setflags(write=False)
            object.__setattr__(self, "rows", rows)

    @classmethod
    def zero(cls, size: int) -> "ReplacementMatrix":
        return cls(ZERO, size)

    @classmethod
    def identity(cls, size: int) -> "ReplacementMatrix":
        return cls(IDENTITY, size)

    @classmethod
    def diagonal(cls, diag: Sequence[float]) -> "ReplacementMatrix":
        diag = np.asarray(diag, dtype=np.float64)
        return cls(DIAGONAL, diag.size, diag=diag)

    @classmethod
    def full(cls, rows) -> "ReplacementMatrix":
        rows = np.asarray(rows, dtype=np.float64)
        return cls(FULL, rows.shape[0], rows=rows)

    def self_reinforcement(self) -> np.ndarray:
        """``m[t,t]`` for every term (zeros for the zero matrix)."""
        if self.variant == ZERO:
            return np.zeros(self.size)
        if self.variant == IDENTITY:
            return np.ones(self.size)
        if self.variant == DIAGONAL:
            return self.diag
        return np.diag(self.rows).copy()

    def row_sums(self) -> np.ndarray:
        if self.variant == FULL:
            return self.rows.sum(axis=1)
        return self.self_reinforcement()

    def dense(self) -> np.ndarray:
        if self.variant == FULL:
            return self.rows.copy()
        return np.diag(self.self_reinforcement())


@dataclass(frozen=True, eq=False)
class UrnModel:
    """Initial urn contents ``u0`` together with the dynamics ``matrix``."""

    u0: np.ndarray
    matrix: ReplacementMatrix
    mass0: float = field(init=False)

    def __post_init__(self):
        u0 = np.array(self.u0, dtype=np.float64)
        if u0.ndim != 1 or u0.size != self.matrix.size:
            raise ValueError(f"u0 must be a vector of length {self.matrix.size}")
        if not np.all(np.isfinite(u0)) or np.any(u0 <= 0):
            raise ValueError("initial urn masses must be finite and > 0")
        u0.setflags(write=False)
        object.__setattr__(self, "u0", u0)
        object.__setattr__(self, "mass0", float(u0.sum()))

    @property
    def size(self) -> int:
        return self.u0.size

    @property
    def variant(self) -> str:
        return self.matrix.variant


def step(state: np.ndarray, mass: float, t: int, matrix: ReplacementMatrix) -> tuple[np.ndarray, float]:
    """Return the urn state after drawing colour ``t``: ``state + e_t M``."""
    state = np.array(state, dtype=np.float64)
    v = matrix.variant
    if v == ZERO:
        return state, mass
    if v == IDENTITY:
        state[t] += 1.0
        return state, mass + 1.0
    if v == DIAGONAL:
        state[t] += matrix.diag[t]
        return state, mass + float(matrix.diag[t])
    row = matrix.rows[t]
    state += row
    return state, mass + float(row.sum())


def occurrence_index(tokens: np.ndarray) -> np.ndarray:
    """For each position, how many earlier positions hold the same term."""
    tokens = np.asarray(tokens)
    n = tokens.size
    if n == 0:
        return np.zeros(0, dtype=np.int64)
    order = np.argsort(tokens, kind="stable")
    sorted_tok = tokens[order]
    starts = np.r_[0, np.flatnonzero(sorted_tok[1:] != sorted_tok[:-1]) + 1]
    run_start = np.repeat(starts, np.diff(np.r_[starts, n]))
    out = np.empty(n, dtype=np.int64)
    out[order] = np.arange(n) - run_start
    return out


def _check_tokens(tokens, size: int) -> np.ndarray:
    tokens = np.asarray(tokens, dtype=np.int64)
    if tokens.ndim != 1:
        raise ValueError("token sequence must be one-dimensional")
    if tokens.size and (tokens.min() < 0 or tokens.max() >= size):
        raise ValueError(f"token id out of range for vocabulary of size {size}")
    return tokens


def log_likelihood(model: UrnModel, tokens) -> float:
    """Natural-log probability of the ordered sequence ``tokens`` under the urn.

    Each draw contributes ``log(u_i[t_i] / |u_i|)`` with the state advanced by
    row ``t_i`` of the replacement matrix after every draw.
    """
    tokens = _check_tokens(tokens, model.size)
    if tokens.size == 0:
        return 0.0
    matrix = model.matrix
    if matrix.variant == FULL:
        return _log_likelihood_full(model, tokens)
    m = matrix.self_reinforcement()
    m_drawn = m[tokens]
    # Diagonal dynamics only touch the drawn coordinate: numerator is
    # u0[t] + (earlier draws of t) * m[t]; the mass grows by the drawn m.
    num = model.u0[tokens] + occurrence_index(tokens) * m_drawn
    den = model.mass0 + np.concatenate(([0.0], np.cumsum(m_drawn[:-1])))
    return float(np.sum(np.log(num)) - np.sum(np.log(den)))


def _log_likelihood_full(model: UrnModel, tokens: np.ndarray) -> float:
    rows = model.matrix.rows
    state = model.u0.copy()
    mass = model.mass0
    total = 0.0
    for i, t in enumerate(tokens):
        if state[t] <= 0 or mass <= 0:
            raise ValueError(f"urn coordinate {t} is non-positive when drawn at position {i}")
        total += np.log(state[t] / mass)
        state += rows[t]
        mass += rows[t].sum()
        if np.any(state <= 0):
            raise ValueError(f"urn state became non-positive after position {i}")
    return float(total)


def log_likelihood_multinomial(u0, counts) -> float:
    """Order-free log-likelihood under the zero matrix (fixed urn)."""
    u0 = np.asarray(u0, dtype=np.float64)
    counts = np.asarray(counts, dtype=np.float64)
    if np.any(u0 <= 0):
        raise ValueError("u0 must be strictly positive")
    nz = counts > 0
    return float(np.sum(counts[nz] * np.log(u0[nz] / u0.sum())))


def log_likelihood_dcm(u0, counts, n: int | None = None) -> float:
    """Closed-form sequence log-probability under the identity matrix.

    Uses log-gamma ratios; no multinomial coefficient is included, so the
    value is the probability of one particular ordering.
    """
    u0 = np.asarray(u0, dtype=np.float64)
    counts = np.asarray(counts, dtype=np.float64)
    if np.any(u0 <= 0):
        raise ValueError("u0 must be strictly positive")
    if n is None:
        n = counts.sum()
    mass = u0.sum()
    return float(
        np.sum(gammaln(u0 + counts) - gammaln(u0)) - (gammaln(mass + n) - gammaln(mass))
    )


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def save_model(model: UrnModel, path: str | Path, terms: Sequence[str] | None = None, **meta) -> None:
    """Write the line-oriented model format.

    Header ``polya-model v=<v> variant=<variant> [key=value ...]``, then one
    ``term<TAB>u0[<TAB>m]`` line per term; full matrices append a
    ``matrix-rows`` marker followed by ``v`` rows of tab-separated values.
    """
    v = model.size
    if terms is None:
        terms = [str(i) for i in range(v)]
    if len(terms) != v:
        raise ValueError("terms must match model size")
    extra = "".join(f" {k}={val}" for k, val in sorted(meta.items()))
    lines = [f"polya-model v={v} variant={model.variant}{extra}"]
    if model.variant == DIAGONAL:
        for t, u, m in zip(terms, model.u0, model.matrix.diag):
            lines.append(f"{t}\t{_fmt(u)}\t{_fmt(m)}")
    else:
        for t, u in zip(terms, model.u0):
            lines.append(f"{t}\t{_fmt(u)}")
    if model.variant == FULL:
        lines.append("matrix-rows")
        for row in model.matrix.rows:
            lines.append("\t".join(map(_fmt, row)))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_model(path: str | Path) -> tuple[UrnModel, list[str], dict[str, str]]:
    """Read a model file; returns ``(model, terms, header_metadata)``."""
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    header = lines[0].split()
    if not header or header[0] != "polya-model":
        raise ValueError(f"{path}: not a polya-model file")
    meta = dict(kv.split("=", 1) for kv in header[1:])
    v, variant = int(meta.pop("v")), meta.pop("variant")
    terms, u0, diag = [], [], []
    for line in lines[1 : 1 + v]:
        cols = line.split("\t")
        terms.append(cols[0])
        u0.append(float(cols[1]))
        if variant == DIAGONAL:
            diag.append(float(cols[2]))
    if variant == ZERO:
        matrix = ReplacementMatrix.zero(v)
    elif variant == IDENTITY:
        matrix = ReplacementMatrix.identity(v)
    elif variant == DIAGONAL:
        matrix = ReplacementMatrix.diagonal(diag)
    else:
        if lines[1 + v] != "matrix-rows":
            raise ValueError(f"{path}: missing matrix-rows block")
        rows = [[float(x) for x in line.split("\t")] for line in lines[2 + v : 2 + 2 * v]]
        matrix = ReplacementMatrix.full(rows)
    return UrnModel(np.asarray(u0), matrix), terms, meta
