"""Decentralized random walk: normalize the visited vertex's column, then its row, then step."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K_
from .errors import DomainError, InvariantViolation
from .matrix import EQ_TOL, Axis, NonNegMatrix, ScheduleStep, as_matrix, distances, normalize_step
from .support import is_irreducible, positive_part

_CHUNK = 1 << 16


@dataclass(frozen=True)
class DrwConfig:
    W0: NonNegMatrix
    total_steps: int
    seed: int
    start_vertex: int = 1

    def __post_init__(self):
        W0 = as_matrix(self.W0)
        object.__setattr__(self, "W0", W0)
        if int(self.total_steps) < 1:
            raise DomainError("drw needs total_steps >= 1")
        if not 1 <= int(self.start_vertex) <= W0.n:
            raise DomainError(f"start vertex {self.start_vertex} out of range 1..{W0.n}")
        if not 0 <= int(self.seed) < 2**64:
            raise DomainError("drw seed must be an unsigned 64-bit integer")
        if not is_irreducible(positive_part(W0)):
            raise DomainError("positive supported part of W0 is not irreducible")


@dataclass
class DrwResult:
    visit_counts: np.ndarray
    final_matrix: NonNegMatrix
    d_B_trace: np.ndarray
    trajectory_hash: int
    edge_counts: np.ndarray = field(repr=False, default=None)

    @property
    def total_steps(self) -> int:
        return int(self.visit_counts.sum())


def _sample_row(row: np.ndarray, u: float) -> int:
    """Inverse CDF over the row in ascending column order; returns a 0-based column."""
    acc = 0.0
    last = -1
    for j, w in enumerate(row):
        if w > 0.0:
            last = j
            acc += w
            if u < acc:
                return j
    return last


def drw_step(W, v: int, rng: np.random.Generator) -> tuple[NonNegMatrix, int]:
    """One walk step from vertex ``v`` (1-based) using a single uniform draw."""
    W = as_matrix(W)
    if not 1 <= v <= W.n:
        raise DomainError(f"vertex {v} out of range 1..{W.n}")
    W, _ = normalize_step(W, ScheduleStep(Axis.COL, v))
    W, _ = normalize_step(W, ScheduleStep(Axis.ROW, v))
    j = _sample_row(W.entries[v - 1], rng.random())
    if j < 0:
        raise InvariantViolation(f"row {v} vanished after normalization")
    return W, j + 1


def drw_run(cfg: DrwConfig) -> DrwResult:
    """Walk ``cfg.total_steps`` steps; deterministic given the seed.

    ``d_B_trace`` starts with d_B(W0) and then samples every N steps. The
    trajectory hash is an 8-byte BLAKE2b digest of the 1-based visit
    sequence stored as little-endian int32.
    """
    n = cfg.W0.n
    rng = np.random.Generator(np.random.PCG64(cfg.seed))
    W = cfg.W0.entries.copy()
    counts = np.zeros(n, dtype=np.int64)
    edges = np.zeros((n, n), dtype=np.int64)
    digest = hashlib.blake2b(digest_size=8)
    samples = [np.array([distances(W)[2]])]
    v = cfg.start_vertex - 1
    done = 0
    while done < cfg.total_steps:
        k = min(_CHUNK, cfg.total_steps - done)
        uniforms = rng.random(k)
        visits = np.empty(k, dtype=np.int32)
        db = np.empty(k // n + 1)
        v, written = K_.drw_chunk(W, v, uniforms, visits, counts, edges, db, done)
        if v < 0:
            raise InvariantViolation("walk reached a vertex with no outgoing weight")
        digest.update((visits + 1).astype("<i4").tobytes())
        samples.append(db[:written])
        done += k
    trace = np.concatenate(samples)
    if np.any(np.diff(trace) > EQ_TOL):
        raise InvariantViolation("d_B increased along the walk")
    return DrwResult(
        visit_counts=counts,
        final_matrix=NonNegMatrix._wrap(W),
        d_B_trace=trace,
        trajectory_hash=int.from_bytes(digest.digest(), "big"),
        edge_counts=edges,
    )


def visitation_report(res: DrwResult, N: int) -> tuple[float, np.ndarray]:
    """Empirical visit frequencies and their largest gap from ``1/N``."""
    counts = np.asarray(res.visit_counts if isinstance(res, DrwResult) else res, dtype=np.float64)
    freq = counts / counts.sum()
    return float(np.max(np.abs(freq - 1.0 / N))), freq
