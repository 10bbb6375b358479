"""Positivity-pattern analysis: supports, K-diagonals and sub-matrix Birkhoff decompositions.

Functions here take any square nonnegative array. Null lines are allowed
(a Gibbs kernel after underflow may have them); they simply admit no
positive diagonal. An entry is positive iff it is ``> 0.0`` exactly.

Public indices (``KSpec`` members, ``KDiagonal`` cells) are 1-based.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Iterator

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components, maximum_bipartite_matching, maximum_flow

from .errors import DomainError, InvariantViolation
from .matrix import Axis, col_sums, row_sums

HYPOTHESIS_TOL = 1e-10
EQ_WEIGHT_TOL = 1e-12
# residue below this is roundoff from repeated subtraction, not mass
_DECOMP_ZERO = 1e-14


@dataclass(frozen=True)
class KSpec:
    """A set of rows and columns (1-based) that a K-diagonal must cover exactly once."""

    rows: frozenset[int] = field(default_factory=frozenset)
    cols: frozenset[int] = field(default_factory=frozenset)

    def __post_init__(self):
        for name in ("rows", "cols"):
            values = frozenset(int(v) for v in getattr(self, name))
            if any(v < 1 for v in values):
                raise DomainError(f"KSpec {name} indices must be >= 1")
            object.__setattr__(self, name, values)

    @classmethod
    def full(cls, n: int) -> "KSpec":
        return cls(frozenset(range(1, n + 1)), frozenset(range(1, n + 1)))

    @classmethod
    def from_json(cls, obj: dict) -> "KSpec":
        unknown = set(obj) - {"rows", "cols"}
        if unknown:
            raise DomainError(f"unknown KSpec keys: {sorted(unknown)}")
        return cls(frozenset(obj.get("rows", ())), frozenset(obj.get("cols", ())))

    def to_json(self) -> dict:
        return {"rows": sorted(self.rows), "cols": sorted(self.cols)}

    def check(self, n: int) -> None:
        bad = [v for v in self.rows | self.cols if v > n]
        if bad:
            raise DomainError(f"KSpec index {max(bad)} out of range 1..{n}")

    def is_full(self, n: int) -> bool:
        return len(self.rows) == n and len(self.cols) == n

    def __len__(self):
        return len(self.rows) + len(self.cols)

    def elements(self) -> list[tuple[Axis, int]]:
        """Members in the fixed order: rows ascending, then columns ascending."""
        return [(Axis.ROW, i) for i in sorted(self.rows)] + [(Axis.COL, j) for j in sorted(self.cols)]

    def without(self, elem: tuple[Axis, int]) -> "KSpec":
        axis, idx = elem
        if axis is Axis.ROW:
            return KSpec(self.rows - {idx}, self.cols)
        return KSpec(self.rows, self.cols - {idx})

    def __contains__(self, elem) -> bool:
        axis, idx = elem
        axis = Axis.parse(axis)
        return idx in (self.rows if axis is Axis.ROW else self.cols)


@dataclass(frozen=True)
class KDiagonal:
    """A set of 1-based ``(row, col)`` cells."""

    cells: frozenset[tuple[int, int]]

    def __len__(self):
        return len(self.cells)

    def __iter__(self) -> Iterator[tuple[int, int]]:
        return iter(sorted(self.cells))

    def matrix(self, n: int) -> np.ndarray:
        """The K-permutation matrix: ones on the cells, zeros elsewhere."""
        P = np.zeros((n, n))
        for i, j in self.cells:
            P[i - 1, j - 1] = 1.0
        return P

    def to_json(self) -> list[list[int]]:
        return [[i, j] for i, j in self]


def is_k_diagonal(cells: Iterable[tuple[int, int]], K: KSpec) -> bool:
    """Check exact coverage of K members and that every cell touches K."""
    cells = list(cells)
    if len(set(cells)) != len(cells):
        return False
    row_hits = [i for i, _ in cells]
    col_hits = [j for _, j in cells]
    if any(row_hits.count(i) != 1 for i in K.rows):
        return False
    if any(col_hits.count(j) != 1 for j in K.cols):
        return False
    return all(i in K.rows or j in K.cols for i, j in cells)


@dataclass(frozen=True)
class BirkhoffDecomposition:
    terms: tuple[tuple[float, KDiagonal], ...]

    @property
    def weights(self) -> np.ndarray:
        return np.array([w for w, _ in self.terms])

    def reconstruct(self, n: int) -> np.ndarray:
        out = np.zeros((n, n))
        for w, diag in self.terms:
            out += w * diag.matrix(n)
        return out

    def to_json(self) -> list[dict]:
        return [{"weight": w, "cells": d.to_json()} for w, d in self.terms]


def _square(W) -> np.ndarray:
    a = np.asarray(W, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] == 0:
        raise DomainError(f"matrix must be square and nonempty, got shape {a.shape}")
    if np.any(a < 0) or not np.all(np.isfinite(a)):
        raise DomainError("matrix entries must be finite and nonnegative")
    return a


def _perfect_matching(pattern: np.ndarray) -> np.ndarray | None:
    """Column matched to each row, or None when no perfect matching exists."""
    n = pattern.shape[0]
    if not (pattern.any(axis=1).all() and pattern.any(axis=0).all()):
        return None
    match = maximum_bipartite_matching(csr_matrix(pattern.astype(np.int8)), perm_type="column")
    if np.any(match < 0) or len(match) != n:
        return None
    return np.asarray(match)


def has_support(W) -> bool:
    """True iff some permutation picks only positive entries."""
    return _perfect_matching(_square(W) > 0) is not None


def positive_part(W) -> np.ndarray:
    """Zero every entry that lies on no positive diagonal.

    An edge lies on a perfect matching iff it is matched or closes an
    alternating cycle, i.e. its endpoints share a strongly connected component
    in the digraph orienting unmatched edges row->col and matched ones col->row.
    """
    a = _square(W)
    n = a.shape[0]
    pattern = a > 0
    match = _perfect_matching(pattern)
    if match is None:
        return np.zeros_like(a)
    rows, cols = np.nonzero(pattern)
    matched = match[rows] == cols
    src = np.where(matched, n + cols, rows)
    dst = np.where(matched, rows, n + cols)
    graph = csr_matrix((np.ones(len(src), dtype=np.int8), (src, dst)), shape=(2 * n, 2 * n))
    _, labels = connected_components(graph, directed=True, connection="strong")
    keep = matched | (labels[rows] == labels[n + cols])
    out = np.zeros_like(a)
    out[rows[keep], cols[keep]] = a[rows[keep], cols[keep]]
    return out


def has_total_support(W) -> bool:
    a = _square(W)
    pattern = a > 0
    return bool(pattern.any()) and bool(np.array_equal(positive_part(a) > 0, pattern))


def _vertex_components(pattern: np.ndarray) -> np.ndarray:
    graph = csr_matrix(pattern.astype(np.int8))
    _, labels = connected_components(graph, directed=True, connection="strong")
    return labels


def closed_classes_check(W) -> bool:
    """True iff no edge of the positivity digraph leaves its strongly connected class."""
    pattern = _square(W) > 0
    labels = _vertex_components(pattern)
    i, j = np.nonzero(pattern)
    return bool(np.all(labels[i] == labels[j]))


def is_irreducible(W) -> bool:
    pattern = _square(W) > 0
    return len(np.unique(_vertex_components(pattern))) == 1


class _KFlow:
    """Integral flow model whose feasible flows are exactly the positive K-diagonals.

    source -> row i carries exactly one unit when i is in K.rows, else 0..N;
    col j -> sink likewise; row i -> col j has capacity one when the entry is
    positive and the cell touches K. Lower bounds are removed by the usual
    circulation reduction with a super source and super sink.
    """

    def __init__(self, pattern: np.ndarray, K: KSpec):
        n = pattern.shape[0]
        K.check(n)
        self.n = n
        self.K = K
        in_k_row = np.zeros(n, dtype=bool)
        in_k_col = np.zeros(n, dtype=bool)
        in_k_row[[i - 1 for i in K.rows]] = True
        in_k_col[[j - 1 for j in K.cols]] = True
        allowed = pattern & (in_k_row[:, None] | in_k_col[None, :])
        self.arc_rows, self.arc_cols = np.nonzero(allowed)
        self.in_k_row, self.in_k_col = in_k_row, in_k_col

    def solve(self, forced: tuple[int, int] | None = None) -> frozenset[tuple[int, int]] | None:
        n = self.n
        S, T, SS, TT = 0, 2 * n + 1, 2 * n + 2, 2 * n + 3
        row_node = lambda i: 1 + i  # noqa: E731
        col_node = lambda j: 1 + n + j  # noqa: E731
        excess = np.zeros(2 * n + 4, dtype=np.int64)
        edges: dict[tuple[int, int], int] = {}

        def add(u, v, lower, upper):
            if upper - lower > 0:
                edges[(u, v)] = edges.get((u, v), 0) + upper - lower
            excess[v] += lower
            excess[u] -= lower

        for i in range(n):
            if self.in_k_row[i]:
                add(S, row_node(i), 1, 1)
            else:
                add(S, row_node(i), 0, n)
        for j in range(n):
            if self.in_k_col[j]:
                add(col_node(j), T, 1, 1)
            else:
                add(col_node(j), T, 0, n)
        forced_seen = False
        for i, j in zip(self.arc_rows, self.arc_cols):
            if forced is not None and (i, j) == forced:
                add(row_node(i), col_node(j), 1, 1)
                forced_seen = True
            else:
                add(row_node(i), col_node(j), 0, 1)
        if forced is not None and not forced_seen:
            return None
        add(T, S, 0, n * n + 1)

        demand = 0
        for v in range(2 * n + 2):
            if excess[v] > 0:
                edges[(SS, v)] = int(excess[v])
                demand += int(excess[v])
            elif excess[v] < 0:
                edges[(v, TT)] = int(-excess[v])
        if demand == 0:
            cells = [] if forced is None else [forced]
            return frozenset((int(i) + 1, int(j) + 1) for i, j in cells)

        keys = np.array(list(edges.keys()), dtype=np.int64)
        caps = np.fromiter(edges.values(), dtype=np.int32, count=len(edges))
        graph = csr_matrix((caps, (keys[:, 0], keys[:, 1])), shape=(2 * n + 4, 2 * n + 4))
        result = maximum_flow(graph, SS, TT)
        if result.flow_value != demand:
            return None
        flow = result.flow.tocsr()
        cells = []
        for i, j in zip(self.arc_rows, self.arc_cols):
            if (forced is not None and (i, j) == forced) or flow[row_node(i), col_node(j)] > 0:
                cells.append((int(i) + 1, int(j) + 1))
        return frozenset(cells)


def find_k_diagonal(W, K: KSpec) -> KDiagonal | None:
    """A positive K-diagonal of ``W``, or None when none exists."""
    cells = _KFlow(_square(W) > 0, K).solve()
    return None if cells is None else KDiagonal(cells)


def has_k_diagonal(W, K: KSpec) -> bool:
    return find_k_diagonal(W, K) is not None


def k_positive_part(W, K: KSpec) -> np.ndarray:
    """Keep the entries that lie on at least one positive K-diagonal."""
    a = _square(W)
    model = _KFlow(a > 0, K)
    out = np.zeros_like(a)
    if model.solve() is None:
        return out
    for i, j in zip(model.arc_rows, model.arc_cols):
        if model.solve(forced=(i, j)) is not None:
            out[i, j] = a[i, j]
    return out


def blocker_crossings(W, K: KSpec) -> list[tuple[int, int]]:
    """Positive entries joining a K row to a non-K column, or a non-K row to a K column."""
    pattern = _square(W) > 0
    n = pattern.shape[0]
    K.check(n)
    bad = []
    for l in sorted(K.rows):
        bad.extend((l, j) for j in range(1, n + 1) if j not in K.cols and pattern[l - 1, j - 1])
    for l in sorted(K.cols):
        bad.extend((i, l) for i in range(1, n + 1) if i not in K.rows and pattern[i - 1, l - 1])
    return bad


def minimal_blocking_subset(W, K: KSpec) -> KSpec:
    """Shrink ``K`` to a minimal subset that still admits no positive diagonal.

    Members are dropped greedily in :meth:`KSpec.elements` order whenever the
    remainder is still blocked, so removing any single member of the result
    admits a positive diagonal.

    The result need not be closed under crossings: for
    ``[[0,1,0],[1,1,1],[0,1,0]]`` every minimal blocker of the full set has a
    positive entry leaving it. Use :func:`blocker_crossings` to inspect this.

    Raises:
        DomainError: if ``W`` has a positive K-diagonal.
    """
    a = _square(W)
    if has_k_diagonal(a, K):
        raise DomainError("minimal_blocking_subset requires that no positive K-diagonal exists")
    current = K
    for elem in K.elements():
        candidate = current.without(elem)
        if not has_k_diagonal(a, candidate):
            current = candidate
    return current


def w_star(W, K: KSpec) -> np.ndarray:
    """``W`` restricted to entries whose row or column belongs to ``K``."""
    a = _square(W)
    n = a.shape[0]
    K.check(n)
    mask = np.zeros((n, n), dtype=bool)
    for i in K.rows:
        mask[i - 1, :] = True
    for j in K.cols:
        mask[:, j - 1] = True
    return np.where(mask, a, 0.0)


def birkhoff_decompose(W, K: KSpec) -> BirkhoffDecomposition:
    """Write the K-part of ``W`` as a convex combination of K-permutation matrices.

    Each round takes a positive K-diagonal of the residual and removes its
    smallest entry times the diagonal's indicator, which zeroes at least one
    entry. Requires every row and column listed in ``K`` to sum to one.

    Raises:
        DomainError: if a line in ``K`` does not sum to one within 1e-10.
        InvariantViolation: if no K-diagonal is found while mass remains.
    """
    a = _square(W)
    n = a.shape[0]
    K.check(n)
    rs, cs = row_sums(a), col_sums(a)
    for i in sorted(K.rows):
        if abs(rs[i - 1] - 1.0) > HYPOTHESIS_TOL:
            raise DomainError(f"row {i} is in K but sums to {rs[i - 1]!r}, not 1")
    for j in sorted(K.cols):
        if abs(cs[j - 1] - 1.0) > HYPOTHESIS_TOL:
            raise DomainError(f"column {j} is in K but sums to {cs[j - 1]!r}, not 1")
    if len(K) == 0:
        return BirkhoffDecomposition(((1.0, KDiagonal(frozenset())),))

    residual = w_star(a, K)
    terms: list[tuple[float, KDiagonal]] = []
    removed = 0.0
    budget = int(np.count_nonzero(residual)) + 1
    while np.any(residual > 0):
        if len(terms) >= budget:
            raise InvariantViolation("Birkhoff decomposition exceeded its iteration bound")
        diag = find_k_diagonal(residual, K)
        if diag is None:
            if 1.0 - removed <= EQ_WEIGHT_TOL:
                break
            raise InvariantViolation(
                f"no positive K-diagonal left with remaining mass {1.0 - removed:.3g}"
            )
        idx = tuple(np.array(sorted(diag.cells)).T - 1)
        values = residual[idx]
        k = int(np.argmin(values))
        w = float(values[k])
        residual[idx] -= w
        residual[idx[0][k], idx[1][k]] = 0.0
        residual[residual < _DECOMP_ZERO] = 0.0
        terms.append((w, diag))
        removed += w
    total = sum(w for w, _ in terms)
    if abs(total - 1.0) > EQ_WEIGHT_TOL:
        raise InvariantViolation(f"decomposition weights sum to {total!r}")
    return BirkhoffDecomposition(tuple(terms))

