"""Random-walk Metropolis-Hastings in log-parameter space."""

from __future__ import annotations

import hashlib
import math
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Iterator

import numpy as np

__all__ = [
    "ChainConfig",
    "PosteriorEstimate",
    "mh_chain",
    "derive_seed",
    "block_partition",
    "random_stream",
    "LOG_BOUND",
]

# Log-parameters are confined to [-LOG_BOUND, LOG_BOUND]; proposals outside are rejected.
LOG_BOUND = 30.0
JOINT, BLOCKWISE = "joint", "blockwise"
_CHUNK = 4096


@dataclass(frozen=True)
class ChainConfig:
    n_samples: int = 500_000
    burn_in: int = 50_000
    proposal_sigma: float = 0.1
    rng_seed: int = 0
    thinning: int = 10
    proposal_mode: str = BLOCKWISE
    block_size: int = 64

    def __post_init__(self):
        if self.n_samples < 1:
            raise ValueError("n_samples must be >= 1")
        if not 0 <= self.burn_in < self.n_samples:
            raise ValueError("burn_in must satisfy 0 <= burn_in < n_samples")
        if not self.proposal_sigma > 0:
            raise ValueError("proposal_sigma must be > 0")
        if self.thinning < 1:
            raise ValueError("thinning must be >= 1")
        if self.proposal_mode not in (JOINT, BLOCKWISE):
            raise ValueError(f"proposal_mode must be {JOINT!r} or {BLOCKWISE!r}")
        if self.block_size < 1:
            raise ValueError("block_size must be >= 1")

    @classmethod
    def background(cls, **overrides) -> "ChainConfig":
        """500k samples, 50k burn-in, proposal variance 0.01."""
        return cls(**{"n_samples": 500_000, "burn_in": 50_000, "proposal_sigma": 0.1, **overrides})

    @classmethod
    def document(cls, **overrides) -> "ChainConfig":
        """200k samples, 20k burn-in, proposal variance 0.25, single-coordinate updates."""
        defaults = {"n_samples": 200_000, "burn_in": 20_000, "proposal_sigma": 0.5, "block_size": 1}
        return cls(**{**defaults, **overrides})

    def scaled(self, scale: float) -> "ChainConfig":
        """Shrink chain length and burn-in by ``scale`` (for quick runs)."""
        if scale <= 0:
            raise ValueError("scale must be > 0")
        n = max(2, int(round(self.n_samples * scale)))
        burn = min(int(round(self.burn_in * scale)), n - 1)
        return replace(self, n_samples=n, burn_in=burn)

    def with_seed(self, seed: int) -> "ChainConfig":
        return replace(self, rng_seed=seed)

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass
class PosteriorEstimate:
    mean_params: np.ndarray
    acceptance_rate: float
    n_retained: int
    log_post_start: float = float("nan")
    log_post_end: float = float("nan")
    extra: dict = field(default_factory=dict)


def derive_seed(seed: int, *labels: object) -> int:
    """Deterministic 63-bit seed from a base seed and labels (stage name, doc id, ...)."""
    h = hashlib.sha256(repr((int(seed),) + tuple(str(x) for x in labels)).encode())
    return int.from_bytes(h.digest()[:8], "little") >> 1


def block_partition(dim: int, config: ChainConfig, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Split coordinates into blocks after a seeded shuffle.

    Returns a ``(n_blocks, width)`` index array padded with -1 and the block sizes.
    Joint mode is a single block containing every coordinate.
    """
    if config.proposal_mode == JOINT or config.block_size >= dim:
        return np.arange(dim, dtype=np.int64)[None, :], np.array([dim], dtype=np.int64)
    perm = rng.permutation(dim)
    n_blocks = math.ceil(dim / config.block_size)
    blocks = np.full((n_blocks, config.block_size), -1, dtype=np.int64)
    sizes = np.empty(n_blocks, dtype=np.int64)
    for b, chunk in enumerate(np.array_split(perm, n_blocks)):
        blocks[b, : chunk.size] = chunk
        sizes[b] = chunk.size
    return blocks, sizes


def random_stream(
    rng: np.random.Generator, n_steps: int, n_blocks: int, width: int, chunk: int = _CHUNK
) -> Iterator[tuple[np.ndarray, np.ndarray, np.ndarray]]:
    """Per-step randomness in chunks: block choice, standard normals, log-uniforms."""
    done = 0
    while done < n_steps:
        k = min(chunk, n_steps - done)
        block_ids = rng.integers(n_blocks, size=k)
        normals = rng.standard_normal((k, width))
        log_u = np.log(rng.random(k))
        yield block_ids, normals, log_u
        done += k


def _safe(lp: float) -> float:
    return lp if lp == lp else -math.inf  # NaN -> -inf


def mh_chain(
    log_posterior: Callable[[np.ndarray], float],
    dim: int,
    config: ChainConfig,
    *,
    start: np.ndarray | None = None,
    jacobian: bool = False,
    sample_transform: Callable[[np.ndarray], np.ndarray] | None = None,
    on_sample: Callable[[np.ndarray], None] | None = None,
) -> PosteriorEstimate:
    """Posterior mean of positive parameters by random-walk Metropolis on their logs.

    The walk targets ``exp(log_posterior(exp(theta)))`` as a density over
    ``theta``. With ``jacobian=True`` the log-Jacobian ``sum(theta)`` is added,
    so ``log_posterior`` is read as a density over the original parameters.
    ``sample_transform`` maps each retained sample (original scale) before it
    enters the running mean, e.g. to remove a non-identified overall scale.
    ``on_sample`` is called with every retained (transformed) sample.
    """
    if dim <= 0:
        raise ValueError("dim must be positive")
    rng = np.random.default_rng(config.rng_seed)
    theta = np.zeros(dim) if start is None else np.log(np.asarray(start, dtype=np.float64))
    x = np.exp(theta)
    lp = _safe(float(log_posterior(x)))
    if not math.isfinite(lp):
        raise ValueError("log posterior is not finite at the starting point")
    lp_start = lp
    jac = float(theta.sum()) if jacobian else 0.0

    blocks, sizes = block_partition(dim, config, rng)
    width = blocks.shape[1]
    sigma = config.proposal_sigma
    mean = np.zeros(dim)
    n_kept = 0
    accepted = 0
    i = 0
    for block_ids, normals, log_u in random_stream(rng, config.n_samples, len(sizes), width):
        for b, z, lu in zip(block_ids, normals, log_u):
            idx = blocks[b, : sizes[b]]
            new_theta = theta[idx] + sigma * z[: idx.size]
            if np.all(np.abs(new_theta) <= LOG_BOUND):
                x_new = x.copy()
                x_new[idx] = np.exp(new_theta)
                lp_new = _safe(float(log_posterior(x_new)))
                jac_new = jac + float(new_theta.sum() - theta[idx].sum()) if jacobian else 0.0
                if lu < (lp_new + jac_new) - (lp + jac):
                    theta[idx] = new_theta
                    x = x_new
                    lp, jac = lp_new, jac_new
                    accepted += 1
            if i >= config.burn_in and (i - config.burn_in) % config.thinning == 0:
                sample = x if sample_transform is None else sample_transform(x)
                n_kept += 1
                mean += (sample - mean) / n_kept
                if on_sample is not None:
                    on_sample(sample)
            i += 1
    return PosteriorEstimate(
        mean_params=mean,
        acceptance_rate=accepted / config.n_samples,
        n_retained=n_kept,
        log_post_start=lp_start,
        log_post_end=lp,
    )
