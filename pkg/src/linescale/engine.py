"""Normalized sequences under arbitrary row/column schedules."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K_
from .errors import DomainError, Inconclusive, InvariantViolation, ScheduleExhausted
from .matrix import (
    CONV_TOL,
    STATE_TOL,
    Axis,
    DiagonalAccumulator,
    NonNegMatrix,
    ScheduleStep,
    as_matrix,
    distances,
    relative_gap,
)
from .support import KSpec, has_k_diagonal, k_positive_part

PRNG_NAME = "PCG64"
_CHUNK = 1 << 16


class ScheduleKind(enum.Enum):
    CYCLIC = "cyclic"
    RANDOM = "random"
    GREEDY = "greedy"
    TRACE = "trace"


class StopReason(enum.Enum):
    TOLERANCE = "tolerance"
    MAX_STEPS = "max_steps"
    STALLED = "stalled"
    EXHAUSTED = "exhausted"


@dataclass(frozen=True)
class Schedule:
    """Which line to normalize next.

    ``RANDOM`` draws i.i.d. uniformly from ``recurrent`` (all lines when None)
    using numpy's PCG64 seeded with ``seed``. ``TRACE`` replays a finite list.
    """

    kind: ScheduleKind
    seed: int | None = None
    recurrent: KSpec | None = None
    trace: tuple[ScheduleStep, ...] = ()

    @classmethod
    def cyclic(cls) -> "Schedule":
        return cls(ScheduleKind.CYCLIC)

    @classmethod
    def greedy(cls) -> "Schedule":
        return cls(ScheduleKind.GREEDY)

    @classmethod
    def random(cls, seed: int, recurrent: KSpec | None = None) -> "Schedule":
        if seed is None or int(seed) < 0 or int(seed) >= 2**64:
            raise DomainError("random schedule needs an unsigned 64-bit seed")
        return cls(ScheduleKind.RANDOM, seed=int(seed), recurrent=recurrent)

    @classmethod
    def from_trace(cls, steps) -> "Schedule":
        return cls(ScheduleKind.TRACE, trace=tuple(steps))

    def recurrent_set(self, n: int) -> KSpec:
        if self.kind is ScheduleKind.TRACE:
            return KSpec()
        if self.kind is ScheduleKind.RANDOM and self.recurrent is not None:
            return self.recurrent
        return KSpec.full(n)

    def start(self, n: int) -> "ScheduleState":
        return ScheduleState(self, n)


class ScheduleState:
    """Cursor over a schedule for a matrix of order ``n``."""

    def __init__(self, schedule: Schedule, n: int):
        self.schedule = schedule
        self.n = n
        self.t = 0
        self._rng = None
        self._choices: list[tuple[Axis, int]] = []
        if schedule.kind is ScheduleKind.RANDOM:
            rec = schedule.recurrent_set(n)
            rec.check(n)
            self._choices = rec.elements()
            if not self._choices:
                raise DomainError("random schedule needs a nonempty recurrent set")
            self._rng = np.random.Generator(np.random.PCG64(schedule.seed))
        elif schedule.kind is ScheduleKind.TRACE:
            for step in schedule.trace:
                step.check(n)

    def _cyclic(self, t: np.ndarray):
        phase = (t - 1) // self.n
        return (phase % 2).astype(np.int64), ((t - 1) % self.n).astype(np.int64)

    def block(self, k: int) -> tuple[np.ndarray, np.ndarray]:
        """The next ``k`` steps as 0-based (axis, index) arrays; shorter when a trace runs out."""
        kind = self.schedule.kind
        if kind is ScheduleKind.CYCLIC:
            axes, idxs = self._cyclic(np.arange(self.t + 1, self.t + k + 1))
        elif kind is ScheduleKind.RANDOM:
            m = len(self._choices)
            pick = np.minimum((self._rng.random(k) * m).astype(np.int64), m - 1)
            table_axes = np.array([0 if a is Axis.ROW else 1 for a, _ in self._choices], dtype=np.int64)
            table_idxs = np.array([i - 1 for _, i in self._choices], dtype=np.int64)
            axes, idxs = table_axes[pick], table_idxs[pick]
        elif kind is ScheduleKind.TRACE:
            steps = self.schedule.trace[self.t : self.t + k]
            axes = np.array([0 if s.axis is Axis.ROW else 1 for s in steps], dtype=np.int64)
            idxs = np.array([s.index - 1 for s in steps], dtype=np.int64)
        else:
            raise DomainError("greedy steps depend on the matrix; use next_step")
        self.t += len(axes)
        return axes, idxs


def next_step(state: ScheduleState, W=None) -> ScheduleStep:
    """Advance the cursor by one step.

    Cyclic schedules give rows 1..N then columns 1..N, repeating. Greedy picks
    the line with the largest absolute deviation, rows before columns and then
    the lowest index on ties.

    Raises:
        ScheduleExhausted: when a trace schedule has no steps left.
    """
    kind = state.schedule.kind
    if kind is ScheduleKind.GREEDY:
        if W is None:
            raise DomainError("greedy schedule needs the current matrix")
        a = np.asarray(W, dtype=np.float64)
        rs, cs = np.empty(state.n), np.empty(state.n)
        K_.line_sums(a, rs, cs)
        axis, idx = K_.greedy_choice(rs, cs)
        state.t += 1
        return ScheduleStep(Axis.ROW if axis == 0 else Axis.COL, int(idx) + 1)
    if kind is ScheduleKind.TRACE and state.t >= len(state.schedule.trace):
        raise ScheduleExhausted(f"trace schedule exhausted after {state.t} steps")
    axes, idxs = state.block(1)
    return ScheduleStep(Axis.ROW if axes[0] == 0 else Axis.COL, int(idxs[0]) + 1)


@dataclass
class RunResult:
    """Outcome of :func:`run_scaling`.

    ``d_B_trace[0]`` is d_B of the initial matrix and ``d_B_trace[t]`` the value
    after step ``t``. ``step_deviations[t-1]`` is the deviation the step at
    ``t`` removed, read before normalizing, so ``product_bound`` equals the
    product of all applied step factors. Without recording only the first and
    last trace values are kept.

    The accumulator holds the products of step factors. On matrices without
    support the factors diverge geometrically, so a factor that leaves
    [2**-500, 2**500] has its binary exponent moved into the accumulator's
    integer exponent arrays; this is exact.
    """

    final_matrix: NonNegMatrix
    accumulator: DiagonalAccumulator
    steps_taken: int
    d_B_trace: np.ndarray
    step_deviations: np.ndarray
    product_bound: float
    converged: bool
    stop_reason: StopReason
    step_axes: np.ndarray = field(repr=False, default=None)
    step_indices: np.ndarray = field(repr=False, default=None)
    deviation_sum: float = 0.0
    max_abs_partial_sum: float = 0.0
    min_partial_product: float = 1.0
    entry_min: np.ndarray = field(repr=False, default=None)
    w_lo: float = 0.0
    w_hi: float = 1.0

    @property
    def d_B_final(self) -> float:
        return float(self.d_B_trace[-1])

    def steps(self) -> list[ScheduleStep]:
        return [
            ScheduleStep(Axis.ROW if a == 0 else Axis.COL, int(i) + 1)
            for a, i in zip(self.step_axes, self.step_indices)
        ]

    def entry_floor(self, W0) -> float:
        """Lower bound on entries lying on a positive diagonal of a supported ``W0``."""
        n = np.asarray(W0).shape[0]
        d0 = float(self.d_B_trace[0])
        return self.w_lo * (self.w_lo / self.w_hi) ** (n - 1) * math.exp(-2.0 * d0)

    def trace_records(self):
        """Per-step dicts matching the JSON-lines trace format."""
        for t in range(len(self.step_deviations)):
            yield {
                "t": t + 1,
                "axis": "r" if self.step_axes[t] == 0 else "c",
                "index": int(self.step_indices[t]) + 1,
                "d_t": float(self.step_deviations[t]),
                "d_B": float(self.d_B_trace[t + 1]),
            }

    def to_json(self) -> dict:
        return {
            "final_matrix": self.final_matrix.entries.tolist(),
            "accumulator": {
                "row_factors": self.accumulator.row_factors.tolist(),
                "col_factors": self.accumulator.col_factors.tolist(),
                "row_exponents": self.accumulator.row_exp.tolist(),
                "col_exponents": self.accumulator.col_exp.tolist(),
            },
            "steps_taken": self.steps_taken,
            "d_B_initial": float(self.d_B_trace[0]),
            "d_B_final": self.d_B_final,
            "product_bound": self.product_bound,
            "deviation_sum": self.deviation_sum,
            "max_abs_partial_sum": self.max_abs_partial_sum,
            "min_partial_product": self.min_partial_product,
            "w_lo": self.w_lo,
            "w_hi": self.w_hi,
            "converged": self.converged,
            "stop_reason": self.stop_reason.value,
        }


def run_scaling(
    W0,
    sched: Schedule,
    max_steps: int = 100_000,
    tol: float = CONV_TOL,
    *,
    detect_stall: bool = True,
    record: bool = True,
) -> RunResult:
    """Iterate single-line normalizations until ``d_B <= tol`` or the budget runs out.

    A run stalls when d_B drops by less than 1e-16 over 10*N consecutive
    steps; pass ``detect_stall=False`` to always spend the full budget.

    Raises:
        DomainError: on a bad budget or tolerance.
        InvariantViolation: if d_B increases by more than 1e-12 in one step,
            or the diagonal factors stop reconstructing the iterate.
    """
    W0 = as_matrix(W0)
    if int(max_steps) < 1:
        raise DomainError("run_scaling requires max_steps >= 1")
    if not tol > 0:
        raise DomainError("run_scaling requires tol > 0")
    n = W0.n
    state = sched.start(n)
    W = W0.entries.copy()
    rs, cs = np.empty(n), np.empty(n)
    K_.line_sums(W, rs, cs)
    rf, cf = np.ones(n), np.ones(n)
    rexp, cexp = np.zeros(n, dtype=np.int64), np.zeros(n, dtype=np.int64)
    entry_min = W.copy()
    d0 = distances(W0)[2]
    ring = np.zeros(10 * n if detect_stall else 0)
    if detect_stall:
        ring[0] = d0
    istate = np.zeros(3, dtype=np.int64)
    fstate = np.array([d0, 1.0, 0.0, 0.0, 1.0])
    greedy = sched.kind is ScheduleKind.GREEDY

    rec_axes, rec_idxs, rec_dt, rec_db = [], [], [], []
    stop = StopReason.MAX_STEPS
    if d0 <= tol:
        stop = StopReason.TOLERANCE
    while stop is StopReason.MAX_STEPS and istate[K_.T_DONE] < max_steps:
        k = int(min(_CHUNK, max_steps - istate[K_.T_DONE]))
        if greedy:
            axes = idxs = np.zeros(0, dtype=np.int64)
        else:
            axes, idxs = state.block(k)
            if len(axes) == 0:
                stop = StopReason.EXHAUSTED
                break
            k = len(axes)
        size = k if record else 0
        ra, ri = np.empty(size, dtype=np.int64), np.empty(size, dtype=np.int64)
        rd, rb = np.empty(size), np.empty(size)
        done = K_.scale_chunk(W, rs, cs, rf, cf, rexp, cexp, entry_min, axes, idxs, greedy, k, tol,
                              ring, istate, fstate, ra, ri, rd, rb, record)
        if record:
            rec_axes.append(ra[:done])
            rec_idxs.append(ri[:done])
            rec_dt.append(rd[:done])
            rec_db.append(rb[:done])
        code = istate[K_.STOP]
        if code == K_.NOT_MONOTONE:
            raise InvariantViolation(
                f"d_B increased by more than 1e-12 at step {istate[K_.T_DONE]}"
            )
        if code == K_.TOLERANCE:
            stop = StopReason.TOLERANCE
        elif code == K_.STALLED:
            stop = StopReason.STALLED
    if greedy:
        state.t = int(istate[K_.T_DONE])

    acc = DiagonalAccumulator(rf, cf, rexp, cexp)
    gap = relative_gap(acc.reconstruct(W0), W, floor=1e-290)
    if gap > STATE_TOL:
        raise InvariantViolation(f"diagonal factors no longer reconstruct the iterate (gap {gap:.3g})")

    d_final = float(fstate[K_.DB])
    if record:
        d_trace = np.concatenate([[d0], *rec_db])
        devs = np.concatenate([np.zeros(0), *rec_dt])
        axes_all = np.concatenate([np.zeros(0, dtype=np.int64), *rec_axes])
        idxs_all = np.concatenate([np.zeros(0, dtype=np.int64), *rec_idxs])
    else:
        d_trace = np.array([d0, d_final])
        devs = np.zeros(0)
        axes_all = idxs_all = np.zeros(0, dtype=np.int64)
    positive = W0.entries[W0.entries > 0]
    return RunResult(
        final_matrix=NonNegMatrix._wrap(W),
        accumulator=acc,
        steps_taken=int(istate[K_.T_DONE]),
        d_B_trace=d_trace,
        step_deviations=devs,
        product_bound=float(fstate[K_.PROD]),
        converged=stop is StopReason.TOLERANCE,
        stop_reason=stop,
        step_axes=axes_all,
        step_indices=idxs_all,
        deviation_sum=float(fstate[K_.PSUM]),
        max_abs_partial_sum=float(fstate[K_.MAX_ABS_PSUM]),
        min_partial_product=float(fstate[K_.MIN_PROD]),
        entry_min=entry_min,
        w_lo=float(positive.min()),
        w_hi=float(max(positive.max(), 1.0)),
    )


def predict_asymptotics(W0, K0: KSpec) -> bool:
    """True iff every line in ``K0`` is driven to deviation zero by schedules recurring on ``K0``."""
    return has_k_diagonal(W0, K0)


@dataclass(frozen=True)
class LimitReport:
    is_doubly_stochastic: bool
    pattern_matches_k_part: bool
    cross_ratio_max_error: float
    predicted_convergent: bool
    k_full: bool = True

    def passed(self, tol: float) -> bool:
        ok = self.pattern_matches_k_part and self.cross_ratio_max_error <= tol
        return ok and (self.is_doubly_stochastic or not self.k_full)

    def to_json(self) -> dict:
        return {
            "is_doubly_stochastic": self.is_doubly_stochastic,
            "pattern_matches_k_part": self.pattern_matches_k_part,
            "cross_ratio_max_error": self.cross_ratio_max_error,
            "predicted_convergent": self.predicted_convergent,
        }


def cross_ratio_error(A: np.ndarray, B: np.ndarray, mask: np.ndarray) -> float:
    """Largest gap between the 2x2 cross-ratios of ``A`` and ``B`` over cells in ``mask``."""
    n = A.shape[0]
    worst = 0.0
    for i in range(n):
        for i2 in range(i + 1, n):
            cols = np.flatnonzero(mask[i] & mask[i2])
            if len(cols) < 2:
                continue
            ra = A[i, cols] / A[i2, cols]
            rb = B[i, cols] / B[i2, cols]
            ca = ra[:, None] / ra[None, :]
            cb = rb[:, None] / rb[None, :]
            worst = max(worst, float(np.max(np.abs(ca - cb))))
    return worst


def verify_limit_class(W0, K0: KSpec, A, tol: float) -> LimitReport:
    """Check that ``A`` is diagonally equivalent to the K0-positive part of ``W0``.

    Entries of ``A`` at or below ``tol`` count as zero for the pattern check.
    """
    W0 = as_matrix(W0)
    A = np.asarray(A, dtype=np.float64)
    if A.shape != (W0.n, W0.n):
        raise DomainError(f"limit matrix shape {A.shape} does not match order {W0.n}")
    part = k_positive_part(W0, K0)
    a_pos = A > tol
    k_pos = part > 0
    pattern_ok = bool(np.array_equal(a_pos, k_pos))
    err = cross_ratio_error(A, W0.entries, a_pos & k_pos)
    return LimitReport(
        is_doubly_stochastic=distances(A)[2] <= tol,
        pattern_matches_k_part=pattern_ok,
        cross_ratio_max_error=err,
        predicted_convergent=predict_asymptotics(W0, K0),
        k_full=K0.is_full(W0.n),
    )


def schedule_independence_check(W0, sched1: Schedule, sched2: Schedule, tol: float,
                                max_steps: int = 10_000_000) -> bool:
    """Run both schedules to ``tol / 10`` and compare the limits entrywise.

    Raises:
        Inconclusive: when either run misses the tolerance within ``max_steps``.
    """
    W0 = as_matrix(W0)
    finals = []
    for sched in (sched1, sched2):
        run = run_scaling(W0, sched, max_steps, tol / 10, detect_stall=False, record=False)
        if not run.converged:
            raise Inconclusive(
                f"{sched.kind.value} schedule reached d_B={run.d_B_final:.3g} after "
                f"{run.steps_taken} steps, above {tol / 10:.3g}"
            )
        finals.append(run.final_matrix.entries)
    return bool(np.max(np.abs(finals[0] - finals[1])) <= tol)
