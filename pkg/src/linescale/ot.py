"""Entropic optimal transport between Beta-mixture marginals, with no log-domain stabilization.

The Gibbs kernel is evaluated plainly in binary64 so that underflow to exact
zero (and the resulting loss of support) shows up as it would in practice.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .engine import Schedule, StopReason, run_scaling
from .errors import DomainError, InfeasibleError, NumericError
from .matrix import NonNegMatrix
from .special import SOURCE_MIXTURE, TARGET_MIXTURE, BetaMixture, mixture_quantile_grid
from .support import has_support, has_total_support, positive_part

COST_TOL = 1e-15
DEFAULT_EPS_GRID = np.logspace(0, -6, 60)
MARGINAL_SUM_TOL = 1e-12


def build_cost(p_grid, q_grid) -> np.ndarray:
    """Quadratic cost ``C[i, j] = (p_i - q_j)**2``."""
    p = np.asarray(p_grid, dtype=np.float64).ravel()
    q = np.asarray(q_grid, dtype=np.float64).ravel()
    if p.shape != q.shape:
        raise DomainError(f"grid lengths differ: {p.size} vs {q.size}")
    return (p[:, None] - q[None, :]) ** 2


@dataclass(frozen=True)
class OtProblem:
    p_grid: np.ndarray
    q_grid: np.ndarray
    cost: np.ndarray
    epsilon: float

    def __post_init__(self):
        if not self.epsilon > 0:
            raise DomainError(f"epsilon must be positive, got {self.epsilon}")
        for name in ("p_grid", "q_grid"):
            g = np.asarray(getattr(self, name), dtype=np.float64)
            if np.any(np.diff(g) < 0):
                raise DomainError(f"{name} must be nondecreasing")
            if np.any((g < 0) | (g > 1)):
                raise DomainError(f"{name} must lie in [0, 1]")
        expected = build_cost(self.p_grid, self.q_grid)
        if np.asarray(self.cost).shape != expected.shape or np.max(np.abs(self.cost - expected)) > COST_TOL:
            raise DomainError("cost is not the quadratic cost of the two grids")

    @classmethod
    def from_mixtures(cls, source: BetaMixture, target: BetaMixture, n: int, epsilon: float) -> "OtProblem":
        p = mixture_quantile_grid(source, n)
        q = mixture_quantile_grid(target, n)
        return cls(p, q, build_cost(p, q), float(epsilon))

    @classmethod
    def reference(cls, n: int = 1000, epsilon: float = 1e-2) -> "OtProblem":
        """The two-Beta-mixture benchmark problem."""
        p, q = reference_grids(n)
        return cls(p, q, build_cost(p, q), float(epsilon))


@lru_cache(maxsize=4)
def _grids(n: int) -> tuple[np.ndarray, np.ndarray]:
    return mixture_quantile_grid(SOURCE_MIXTURE, n), mixture_quantile_grid(TARGET_MIXTURE, n)


def reference_grids(n: int = 1000) -> tuple[np.ndarray, np.ndarray]:
    p, q = _grids(int(n))
    return p.copy(), q.copy()


@dataclass(frozen=True)
class GibbsKernel:
    """``xi = exp(-C / eps)``; may contain exact zeros and even null lines."""

    xi: np.ndarray
    zero_count: int
    has_support: bool
    has_total_support: bool

    @property
    def n(self) -> int:
        return self.xi.shape[0]


def gibbs_kernel(cost, epsilon: float) -> GibbsKernel:
    if not epsilon > 0:
        raise DomainError(f"epsilon must be positive, got {epsilon}")
    C = np.asarray(cost, dtype=np.float64)
    if C.ndim != 2 or C.shape[0] != C.shape[1]:
        raise DomainError("cost must be a square matrix")
    with np.errstate(under="ignore"):
        xi = np.exp(-C / epsilon)
    xi.setflags(write=False)
    return GibbsKernel(
        xi=xi,
        zero_count=int(np.count_nonzero(xi == 0.0)),
        has_support=has_support(xi),
        has_total_support=has_total_support(xi),
    )


@dataclass
class OtSolution:
    u: np.ndarray
    v: np.ndarray
    coupling: np.ndarray
    marginal_err: float
    iterations: int
    converged: bool

    def to_json(self, include_arrays: bool = False) -> dict:
        out = {
            "marginal_err": self.marginal_err,
            "iterations": self.iterations,
            "converged": self.converged,
            "coupling_mass": float(self.coupling.sum()),
            "u_range": [float(self.u.min()), float(self.u.max())],
            "v_range": [float(self.v.min()), float(self.v.max())],
        }
        if include_arrays:
            out.update(u=self.u.tolist(), v=self.v.tolist(), coupling=self.coupling.tolist())
        return out


def _check_marginal(m, n: int, name: str) -> np.ndarray:
    m = np.asarray(m, dtype=np.float64).ravel()
    if m.size != n:
        raise DomainError(f"marginal {name} has length {m.size}, expected {n}")
    if not np.all(m > 0):
        raise DomainError(f"marginal {name} must be strictly positive")
    if abs(math.fsum(m) - 1.0) > MARGINAL_SUM_TOL:
        raise DomainError(f"marginal {name} must sum to 1")
    return m


def sinkhorn_ot(kernel: GibbsKernel, a, b, tol: float = 1e-10, max_iter: int = 100_000) -> OtSolution:
    """Alternate ``u = a / (xi v)`` and ``v = b / (xi.T u)`` starting from ``v = 1``.

    Raises:
        InfeasibleError: a row or column of ``xi`` is null while its marginal is positive.
        NumericError: the scalings overflow or become non-finite.
    """
    xi = kernel.xi
    n = xi.shape[0]
    a = _check_marginal(a, n, "a")
    b = _check_marginal(b, n, "b")
    null_rows = np.flatnonzero(~np.any(xi > 0, axis=1))
    if null_rows.size:
        raise InfeasibleError(f"row {null_rows[0] + 1} of xi is null but its marginal is positive; no solution is achievable")
    null_cols = np.flatnonzero(~np.any(xi > 0, axis=0))
    if null_cols.size:
        raise InfeasibleError(f"column {null_cols[0] + 1} of xi is null but its marginal is positive; no solution is achievable")

    v = np.ones(n)
    err = math.inf
    it = 0
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        while it < max_iter:
            it += 1
            u = a / (xi @ v)
            v = b / (xi.T @ u)
            if not (np.all(np.isfinite(u)) and np.all(np.isfinite(v))):
                raise NumericError(f"non-finite scaling vector at iteration {it}")
            # columns match exactly after the v update; rows carry the error
            err = float(np.max(np.abs(u * (xi @ v) - a)))
            if err <= tol:
                break
    coupling = u[:, None] * xi * v[None, :]
    err = max(
        float(np.max(np.abs(coupling.sum(axis=1) - a))),
        float(np.max(np.abs(coupling.sum(axis=0) - b))),
    )
    return OtSolution(u=u, v=v, coupling=coupling, marginal_err=err, iterations=it, converged=err <= tol)


def uniform_sinkhorn(kernel: GibbsKernel, tol: float = 1e-10, max_iter: int = 100_000) -> OtSolution:
    n = kernel.n
    m = np.full(n, 1.0 / n)
    return sinkhorn_ot(kernel, m, m, tol, max_iter)


# ---- support-loss sweep ----

@dataclass(frozen=True)
class SweepRow:
    epsilon: float
    zero_count: int
    has_support: bool
    has_total_support: bool
    positive_part_null: bool
    log10_min_positive_entry: float

    def csv_fields(self) -> list:
        return [self.epsilon, self.zero_count, int(self.has_support), int(self.has_total_support),
                self.log10_min_positive_entry]


CSV_HEADER = ["epsilon", "zero_count", "has_support", "has_total_support", "log10_min_positive_entry"]


@dataclass
class SweepReport:
    rows: list[SweepRow]
    eps_ok: float | None
    eps_fail: float | None
    monotone: bool

    def to_json(self) -> dict:
        return {
            "eps_ok": self.eps_ok,
            "eps_fail": self.eps_fail,
            "monotone": self.monotone,
            "rows": [r.__dict__ for r in self.rows],
        }


def sweep_row(cost: np.ndarray, eps: float) -> SweepRow:
    k = gibbs_kernel(cost, eps)
    pos = k.xi[k.xi > 0]
    pp = positive_part(k.xi)
    return SweepRow(
        epsilon=float(eps),
        zero_count=k.zero_count,
        has_support=k.has_support,
        has_total_support=k.has_total_support,
        positive_part_null=not bool(np.any(pp > 0)),
        log10_min_positive_entry=float(np.log10(pos.min())) if pos.size else math.nan,
    )


def epsilon_support_threshold(cost, eps_grid=DEFAULT_EPS_GRID, jobs: int = 1) -> SweepReport:
    """Per-epsilon support diagnostics along a strictly descending grid.

    ``eps_fail`` is the largest grid value at which support is lost and
    ``eps_ok`` the grid value just before it (``None`` when not applicable).
    """
    eps = np.asarray(eps_grid, dtype=np.float64).ravel()
    if eps.size == 0 or not np.all(eps > 0):
        raise DomainError("epsilon grid must be nonempty and strictly positive")
    if np.any(np.diff(eps) >= 0):
        raise DomainError("epsilon grid must be strictly descending")
    cost = np.asarray(cost, dtype=np.float64)
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(sweep_row, [cost] * eps.size, eps.tolist()))
    else:
        rows = [sweep_row(cost, e) for e in eps]

    first_fail = next((k for k, r in enumerate(rows) if not r.has_support), None)
    eps_fail = rows[first_fail].epsilon if first_fail is not None else None
    eps_ok = rows[first_fail - 1].epsilon if first_fail else None
    monotone = first_fail is None or not any(r.has_support for r in rows[first_fail:])
    return SweepReport(rows=rows, eps_ok=eps_ok, eps_fail=eps_fail, monotone=monotone)


def scaling_outcome(xi, max_steps: int = 100_000, tol: float = 1e-8) -> dict:
    """Try cyclic scaling of ``N * xi``; reports a null line instead of running when the domain forbids it."""
    xi = np.asarray(xi, dtype=np.float64)
    try:
        W0 = NonNegMatrix(xi.shape[0] * xi)
    except DomainError as exc:
        return {"status": "null_line", "reason": str(exc), "converged": False, "d_B_final": None, "steps": 0}
    res = run_scaling(W0, Schedule.cyclic(), max_steps=max_steps, tol=tol, detect_stall=False, record=False)
    return {
        "status": "converged" if res.stop_reason is StopReason.TOLERANCE else "not_converged",
        "reason": res.stop_reason.value,
        "converged": res.converged,
        "d_B_final": res.d_B_final,
        "steps": res.steps_taken,
    }


# ---- density data ----

def density_table(n_points: int = 1001) -> dict[str, np.ndarray]:
    x = np.linspace(0.0, 1.0, int(n_points))
    return {
        "x": x,
        "source_pdf": np.array([SOURCE_MIXTURE.pdf(t) for t in x]),
        "target_pdf": np.array([TARGET_MIXTURE.pdf(t) for t in x]),
        "source_cdf": np.array([SOURCE_MIXTURE.cdf(t) for t in x]),
        "target_cdf": np.array([TARGET_MIXTURE.cdf(t) for t in x]),
    }


def quantile_table(n: int = 1000) -> dict[str, np.ndarray]:
    p, q = reference_grids(n)
    return {"n": np.arange(1, n + 1), "level": (np.arange(1, n + 1) - 0.5) / n, "source_quantile": p, "target_quantile": q}
