"""Regularized incomplete beta function, Beta quantiles and Beta mixtures."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, NumericError

CF_TOL = 1e-14
CF_MAX_TERMS = 300
QUANTILE_MAX_ITER = 200
_FPMIN = 1e-300


def _check_shape(alpha: float, beta: float) -> None:
    if not (alpha > 0 and beta > 0 and math.isfinite(alpha) and math.isfinite(beta)):
        raise DomainError(f"Beta parameters must be positive and finite, got ({alpha}, {beta})")


def ln_beta(alpha: float, beta: float) -> float:
    return math.lgamma(alpha) + math.lgamma(beta) - math.lgamma(alpha + beta)


def _betacf(a: float, b: float, x: float) -> float:
    """Modified Lentz evaluation of the incomplete beta continued fraction."""
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _FPMIN:
        d = _FPMIN
    d = 1.0 / d
    h = d
    for m in range(1, CF_MAX_TERMS + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _FPMIN:
            d = _FPMIN
        c = 1.0 + aa / c
        if abs(c) < _FPMIN:
            c = _FPMIN
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _FPMIN:
            d = _FPMIN
        c = 1.0 + aa / c
        if abs(c) < _FPMIN:
            c = _FPMIN
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < CF_TOL:
            return h
    raise NumericError(f"incomplete beta continued fraction did not converge for a={a}, b={b}, x={x}")


def beta_tails(alpha: float, beta: float, x: float) -> tuple[float, float]:
    """``(I_x(alpha, beta), 1 - I_x(alpha, beta))``, the smaller one computed directly."""
    _check_shape(alpha, beta)
    if not 0.0 <= x <= 1.0:
        raise DomainError(f"beta_cdf needs x in [0, 1], got {x}")
    if x == 0.0:
        return 0.0, 1.0
    if x == 1.0:
        return 1.0, 0.0
    log_front = alpha * math.log(x) + beta * math.log1p(-x) - ln_beta(alpha, beta)
    front = math.exp(log_front)
    # the fraction converges fast only on this side of the mode
    if x < (alpha + 1.0) / (alpha + beta + 2.0):
        lower = front * _betacf(alpha, beta, x) / alpha
        return lower, 1.0 - lower
    upper = front * _betacf(beta, alpha, 1.0 - x) / beta
    return 1.0 - upper, upper


def beta_cdf(alpha: float, beta: float, x: float) -> float:
    """Regularized incomplete beta ``I_x(alpha, beta)``."""
    return beta_tails(alpha, beta, x)[0]


def beta_sf(alpha: float, beta: float, x: float) -> float:
    return beta_tails(alpha, beta, x)[1]


def beta_pdf(alpha: float, beta: float, x: float) -> float:
    _check_shape(alpha, beta)
    if not 0.0 <= x <= 1.0:
        return 0.0
    if x == 0.0 or x == 1.0:
        edge = alpha if x == 0.0 else beta
        if edge < 1.0:
            return math.inf
        if edge > 1.0:
            return 0.0
        return math.exp(-ln_beta(alpha, beta))
    return math.exp((alpha - 1.0) * math.log(x) + (beta - 1.0) * math.log1p(-x) - ln_beta(alpha, beta))


def _invert(tails, pdf, u: float, x0: float) -> float:
    """Solve ``cdf(x) = u`` by safeguarded Newton steps.

    The search runs on ``s = x`` for lower levels and ``s = 1 - x`` for upper
    ones, so the relevant tail probability increases with ``s`` and behaves
    like a power of ``s`` near zero. Newton then acts on ``log(tail)`` against
    ``log(s)``, which is close to linear even for levels like ``1e-200``.
    Steps leaving the bracket fall back to bisection in log scale.
    """
    lower = u <= 0.5
    target = math.log(u) if lower else math.log1p(-u)
    s_lo, s_hi = 0.0, 1.0
    s = x0 if lower else 1.0 - x0
    for _ in range(QUANTILE_MAX_ITER):
        x = s if lower else 1.0 - s
        cdf, sf = tails(x)
        tail = cdf if lower else sf
        g = math.log(tail) - target if tail > 0.0 else -math.inf
        if abs(g) <= 1e-15:
            return x
        if g < 0:
            s_lo = s
        else:
            s_hi = s
        dens = pdf(x)
        s_new = math.nan
        if tail > 0.0 and 0.0 < dens < math.inf:
            elasticity = s * dens / tail
            step = -g / elasticity
            if step < 700.0:
                s_new = s * math.exp(step)
        if not s_lo < s_new < s_hi:
            s_new = math.sqrt(max(s_lo, 1e-300) * s_hi) if s_hi / max(s_lo, 1e-300) > 4 else 0.5 * (s_lo + s_hi)
        if s_new == s or s_hi - s_lo <= 4 * math.ulp(s):
            return s_new if lower else 1.0 - s_new
        s = s_new
    raise NumericError(f"quantile search did not converge for u={u}")


def beta_quantile(alpha: float, beta: float, u: float) -> float:
    """The ``x`` with ``beta_cdf(alpha, beta, x) == u``.

    Raises:
        DomainError: unless ``0 < u < 1``.
        NumericError: if the search fails to settle within 200 iterations.
    """
    _check_shape(alpha, beta)
    if not 0.0 < u < 1.0:
        raise DomainError(f"beta_quantile needs u in (0, 1), got {u}")
    return _invert(
        lambda x: beta_tails(alpha, beta, x),
        lambda x: beta_pdf(alpha, beta, x),
        u,
        alpha / (alpha + beta),
    )


@dataclass(frozen=True)
class BetaMixture:
    """Finite mixture of Beta laws given as ``(alpha, beta, weight)`` triples."""

    components: tuple[tuple[float, float, float], ...]

    def __post_init__(self):
        comps = tuple((float(a), float(b), float(w)) for a, b, w in self.components)
        if not comps:
            raise DomainError("a Beta mixture needs at least one component")
        for a, b, w in comps:
            _check_shape(a, b)
            if not w > 0:
                raise DomainError("mixture weights must be positive")
        if abs(math.fsum(w for _, _, w in comps) - 1.0) > 1e-12:
            raise DomainError("mixture weights must sum to 1")
        object.__setattr__(self, "components", comps)

    def tails(self, x: float) -> tuple[float, float]:
        lower = upper = 0.0
        for a, b, w in self.components:
            c, s = beta_tails(a, b, x)
            lower += w * c
            upper += w * s
        return lower, upper

    def cdf(self, x: float) -> float:
        return self.tails(x)[0]

    def sf(self, x: float) -> float:
        return self.tails(x)[1]

    def pdf(self, x: float) -> float:
        return sum(w * beta_pdf(a, b, x) for a, b, w in self.components)

    def mean(self) -> float:
        return sum(w * a / (a + b) for a, b, w in self.components)

    def quantile(self, u: float) -> float:
        if not 0.0 < u < 1.0:
            raise DomainError(f"quantile level must lie in (0, 1), got {u}")
        return _invert(self.tails, self.pdf, u, self.mean())


SOURCE_MIXTURE = BetaMixture(((20, 150, 0.5), (300, 900, 0.5)))
TARGET_MIXTURE = BetaMixture(((120, 100, 0.5), (85, 25, 0.5)))

GRID_TOL = 1e-10


def mixture_quantile_grid(mix: BetaMixture, N: int) -> np.ndarray:
    """Quantiles at the midpoint levels ``(n - 1/2) / N`` for ``n = 1..N``.

    Raises:
        NumericError: if the grid is not strictly increasing or misses a level by more than 1e-10.
    """
    if int(N) < 2:
        raise DomainError("quantile grid needs N >= 2")
    levels = (np.arange(1, N + 1) - 0.5) / N
    grid = np.empty(N)
    for k, u in enumerate(levels):
        grid[k] = mix.quantile(float(u))
        miss = abs(mix.cdf(grid[k]) - u)
        if miss > GRID_TOL:
            raise NumericError(f"quantile at level {u} misses by {miss:.3g}")
    if np.any(np.diff(grid) <= 0):
        raise NumericError("quantile grid is not strictly increasing")
    return grid
