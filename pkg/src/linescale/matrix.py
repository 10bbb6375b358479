"""Nonnegative matrices, marginal deviations and single-line normalization.

All line sums are accumulated in ascending index order (``np.cumsum``) so that
results are reproducible and a row sum of ``W`` is bit-identical to the
corresponding column sum of ``W.T``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, InvariantViolation

EQ_TOL = 1e-12
RECON_TOL = 1e-9
CONV_TOL = 1e-10
# acc/matrix mismatch beyond this is treated as corrupted state, not roundoff
STATE_TOL = 1e-6


class Axis(enum.Enum):
    ROW = "r"
    COL = "c"

    @classmethod
    def parse(cls, value: "Axis | str") -> "Axis":
        if isinstance(value, Axis):
            return value
        key = str(value).strip().lower()
        if key in ("r", "row"):
            return cls.ROW
        if key in ("c", "col", "column"):
            return cls.COL
        raise DomainError(f"unknown axis {value!r}; expected 'r' or 'c'")


@dataclass(frozen=True, order=True)
class ScheduleStep:
    """One normalization action: ``axis`` line number ``index`` (1-based)."""

    axis: Axis
    index: int

    def __post_init__(self):
        object.__setattr__(self, "axis", Axis.parse(self.axis))
        if int(self.index) != self.index or self.index < 1:
            raise DomainError(f"schedule step index must be a positive integer, got {self.index!r}")
        object.__setattr__(self, "index", int(self.index))

    def check(self, n: int) -> None:
        if self.index > n:
            raise DomainError(f"step index {self.index} out of range 1..{n}")

    def __str__(self):
        return f"{self.axis.value}{self.index}"


def _validate(a: np.ndarray) -> None:
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] == 0:
        raise DomainError(f"matrix must be square and nonempty, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise DomainError("matrix entries must be finite")
    if np.any(a < 0):
        raise DomainError("matrix entries must be nonnegative")
    null_rows = np.flatnonzero(~np.any(a > 0, axis=1))
    if null_rows.size:
        raise DomainError(f"row {null_rows[0] + 1} is null (no-null-line invariant)")
    null_cols = np.flatnonzero(~np.any(a > 0, axis=0))
    if null_cols.size:
        raise DomainError(f"column {null_cols[0] + 1} is null (no-null-line invariant)")


class NonNegMatrix:
    """Immutable square nonnegative matrix without null rows or columns."""

    __slots__ = ("_a",)

    def __init__(self, entries):
        a = np.array(entries, dtype=np.float64)
        _validate(a)
        a.setflags(write=False)
        self._a = a

    @classmethod
    def _wrap(cls, a: np.ndarray) -> "NonNegMatrix":
        # caller guarantees the invariants; used on hot paths
        obj = cls.__new__(cls)
        a.setflags(write=False)
        obj._a = a
        return obj

    @property
    def n(self) -> int:
        return self._a.shape[0]

    @property
    def entries(self) -> np.ndarray:
        return self._a

    @property
    def T(self) -> "NonNegMatrix":
        return NonNegMatrix._wrap(np.ascontiguousarray(self._a.T))

    def __array__(self, dtype=None, copy=None):
        if dtype is None or np.dtype(dtype) == self._a.dtype:
            return self._a.copy() if copy else self._a
        return self._a.astype(dtype)

    def __repr__(self):
        return f"NonNegMatrix({self._a.tolist()!r})"


def as_matrix(W) -> NonNegMatrix:
    return W if isinstance(W, NonNegMatrix) else NonNegMatrix(W)


def row_sums(a) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    return np.cumsum(a, axis=1)[:, -1]


def col_sums(a) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    return np.cumsum(a, axis=0)[-1, :]


def _abs_total(v: np.ndarray) -> float:
    return float(np.cumsum(np.abs(v))[-1])


def marginal_deviation(W, axis, l: int) -> float:
    """Sum of row (or column) ``l`` minus one; ``l`` is 1-based."""
    a = np.asarray(W, dtype=np.float64)
    step = ScheduleStep(axis, l)
    step.check(a.shape[0])
    line = a[l - 1, :] if step.axis is Axis.ROW else a[:, l - 1]
    return float(np.cumsum(line)[-1]) - 1.0


def distances(W) -> tuple[float, float, float]:
    """L1 distances ``(d_R, d_C, d_B)`` to the row-, column- and doubly stochastic sets."""
    a = np.asarray(W, dtype=np.float64)
    d_r = _abs_total(row_sums(a) - 1.0)
    d_c = _abs_total(col_sums(a) - 1.0)
    return d_r, d_c, d_r + d_c


def d_B(W) -> float:
    return distances(W)[2]


def transpose_duality_check(W) -> bool:
    a = np.asarray(W, dtype=np.float64)
    d_r = distances(a)[0]
    d_c_transposed = distances(np.ascontiguousarray(a.T))[1]
    return d_r == d_c_transposed


def normalize_step(W, step: ScheduleStep) -> tuple[NonNegMatrix, float]:
    """Normalize one line of ``W``.

    Returns the new matrix and the scaling factor ``1 / (1 + deviation)``
    applied to the line. All other entries are copied unchanged.
    """
    W = as_matrix(W)
    step.check(W.n)
    out = W.entries.copy()
    i = step.index - 1
    if step.axis is Axis.ROW:
        s = float(np.cumsum(out[i, :])[-1])
        out[i, :] = out[i, :] / s
    else:
        s = float(np.cumsum(out[:, i])[-1])
        out[:, i] = out[:, i] / s
    return NonNegMatrix._wrap(out), 1.0 / s


# factors are kept as mantissa * 2**exponent once they leave [2**-500, 2**500]
GAUGE_EXP = 500


@dataclass(frozen=True)
class DiagonalAccumulator:
    """Running diagonal scalings with ``W_t = diag(r) W_0 diag(c)``.

    Factor ``i`` is ``row_factors[i] * 2**row_exp[i]`` (likewise for
    columns). The exponents stay zero unless a factor drifts out of binary64
    range, which happens on matrices without support.
    """

    row_factors: np.ndarray
    col_factors: np.ndarray
    row_exp: np.ndarray = None
    col_exp: np.ndarray = None

    def __post_init__(self):
        for name in ("row_factors", "col_factors"):
            v = np.array(getattr(self, name), dtype=np.float64)
            if v.ndim != 1:
                raise DomainError(f"{name} must be one-dimensional")
            if not np.all(np.isfinite(v) & (v > 0)):
                raise InvariantViolation(f"{name} must be finite and strictly positive")
            v.setflags(write=False)
            object.__setattr__(self, name, v)
        if self.row_factors.shape != self.col_factors.shape:
            raise DomainError("row and column factor vectors differ in length")
        for name, ref in (("row_exp", self.row_factors), ("col_exp", self.col_factors)):
            e = getattr(self, name)
            e = np.zeros(ref.shape, dtype=np.int64) if e is None else np.array(e, dtype=np.int64)
            if e.shape != ref.shape:
                raise DomainError(f"{name} does not match the factor vector")
            e.setflags(write=False)
            object.__setattr__(self, name, e)

    @classmethod
    def identity(cls, n: int) -> "DiagonalAccumulator":
        return cls(np.ones(n), np.ones(n))

    def log2_factors(self) -> tuple[np.ndarray, np.ndarray]:
        return (np.log2(self.row_factors) + self.row_exp, np.log2(self.col_factors) + self.col_exp)

    def reconstruct(self, W0) -> np.ndarray:
        a = np.asarray(W0, dtype=np.float64)
        core = self.row_factors[:, None] * a * self.col_factors[None, :]
        # cells whose true value leaves binary64 saturate to 0 or inf
        with np.errstate(over="ignore", under="ignore"):
            return np.ldexp(core, self.row_exp[:, None] + self.col_exp[None, :])

    def relative_residual(self, W0, W) -> float:
        """Largest entrywise relative gap between the reconstruction and ``W``."""
        return relative_gap(self.reconstruct(W0), np.asarray(W, dtype=np.float64))

    def scaled(self, step: ScheduleStep, factor: float) -> "DiagonalAccumulator":
        f = [self.row_factors.copy(), self.col_factors.copy()]
        e = [self.row_exp.copy(), self.col_exp.copy()]
        k = 0 if step.axis is Axis.ROW else 1
        i = step.index - 1
        f[k][i] *= factor
        m, ex = np.frexp(f[k][i])
        if abs(int(ex)) > GAUGE_EXP:
            f[k][i] = m
            e[k][i] += int(ex)
        return DiagonalAccumulator(f[0], f[1], e[0], e[1])


def relative_gap(approx: np.ndarray, exact: np.ndarray, floor: float = 0.0) -> float:
    """Largest entrywise relative difference; pairs both within ``floor`` of zero are skipped."""
    approx = np.asarray(approx, dtype=np.float64)
    exact = np.asarray(exact, dtype=np.float64)
    live = (np.abs(approx) > floor) | (np.abs(exact) > floor)
    if np.any(live & (exact == 0)):
        return float("inf")
    live &= exact != 0
    if not np.any(live):
        return 0.0
    return float(np.max(np.abs(approx[live] - exact[live]) / np.abs(exact[live])))


def apply_step(W0, acc: DiagonalAccumulator, W, step: ScheduleStep):
    """Normalize one line of ``W`` and fold the factor into ``acc``.

    Raises:
        InvariantViolation: if ``acc`` does not reconstruct ``W`` from ``W0``.
    """
    W0, W = as_matrix(W0), as_matrix(W)
    residual = acc.relative_residual(W0, W)
    if residual > STATE_TOL:
        raise InvariantViolation(
            f"accumulator does not reconstruct the current matrix (relative residual {residual:.3g})"
        )
    W_next, factor = normalize_step(W, step)
    return W_next, acc.scaled(step, factor)
