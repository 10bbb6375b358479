"""Compiled inner loops for long scaling runs and decentralized random walks.

Indices are 0-based here. Line sums of the axis not being normalized are
updated incrementally and refreshed in full every ``n`` steps.
"""

import math

import numpy as np
from numba import njit

# istate slots
T_DONE, STOP, SINCE_REFRESH = 0, 1, 2
# fstate slots
DB, PROD, PSUM, MAX_ABS_PSUM, MIN_PROD = 0, 1, 2, 3, 4

RUNNING, TOLERANCE, STALLED, NOT_MONOTONE = 0, 1, 3, 4

MONO_TOL = 1e-12
STALL_DECREASE = 1e-16
# factors outside [2**-GAUGE_EXP, 2**GAUGE_EXP] move their binary exponent
# into a separate integer array (extended-range accumulator)
GAUGE_EXP = 500


@njit(cache=True)
def rebase(f, e, k):
    """Fold the binary exponent of ``f[k]`` into ``e[k]`` when it leaves the gauge window."""
    ex = math.frexp(f[k])[1]
    if ex > GAUGE_EXP or ex < -GAUGE_EXP:
        f[k] = math.ldexp(f[k], -ex)
        e[k] += ex


@njit(cache=True)
def line_sums(W, rs, cs):
    n = W.shape[0]
    for i in range(n):
        s = 0.0
        for j in range(n):
            s += W[i, j]
        rs[i] = s
    for j in range(n):
        s = 0.0
        for i in range(n):
            s += W[i, j]
        cs[j] = s


@njit(cache=True)
def db_from_sums(rs, cs):
    total = 0.0
    for i in range(rs.shape[0]):
        total += abs(rs[i] - 1.0)
    for j in range(cs.shape[0]):
        total += abs(cs[j] - 1.0)
    return total


@njit(cache=True)
def greedy_choice(rs, cs):
    """Largest |deviation|, rows before columns, lowest index on ties.

    Inside ``scale_chunk`` the sums are maintained incrementally, so once d_B
    is down at roundoff level a near-tie may resolve differently than it
    would on freshly summed lines.
    """
    n = rs.shape[0]
    best_axis, best_idx, best = 0, 0, -1.0
    for i in range(n):
        d = abs(rs[i] - 1.0)
        if d > best:
            best_axis, best_idx, best = 0, i, d
    for j in range(n):
        d = abs(cs[j] - 1.0)
        if d > best:
            best_axis, best_idx, best = 1, j, d
    return best_axis, best_idx


@njit(cache=True)
def scale_chunk(W, rs, cs, rf, cf, rexp, cexp, entry_min, axes, idxs, greedy, n_steps, tol,
                ring, istate, fstate, rec_axis, rec_idx, rec_dt, rec_db, record):
    """Apply up to ``n_steps`` normalizations; returns the number applied."""
    n = W.shape[0]
    window = ring.shape[0]
    done = 0
    for k in range(n_steps):
        if greedy:
            axis, l = greedy_choice(rs, cs)
        else:
            axis, l = axes[k], idxs[k]
        if axis == 0:
            s = 0.0
            for j in range(n):
                s += W[l, j]
            new_sum = 0.0
            for j in range(n):
                old = W[l, j]
                new = old / s
                W[l, j] = new
                new_sum += new
                cs[j] += new - old
                if new < entry_min[l, j]:
                    entry_min[l, j] = new
            rs[l] = new_sum
            rf[l] *= 1.0 / s
            rebase(rf, rexp, l)
        else:
            s = 0.0
            for i in range(n):
                s += W[i, l]
            new_sum = 0.0
            for i in range(n):
                old = W[i, l]
                new = old / s
                W[i, l] = new
                new_sum += new
                rs[i] += new - old
                if new < entry_min[i, l]:
                    entry_min[i, l] = new
            cs[l] = new_sum
            cf[l] *= 1.0 / s
            rebase(cf, cexp, l)
        istate[SINCE_REFRESH] += 1
        if istate[SINCE_REFRESH] >= n:
            line_sums(W, rs, cs)
            istate[SINCE_REFRESH] = 0

        d = s - 1.0
        fstate[PROD] *= 1.0 / s
        fstate[PSUM] += d
        if abs(fstate[PSUM]) > fstate[MAX_ABS_PSUM]:
            fstate[MAX_ABS_PSUM] = abs(fstate[PSUM])
        if fstate[PROD] < fstate[MIN_PROD]:
            fstate[MIN_PROD] = fstate[PROD]

        prev = fstate[DB]
        db = db_from_sums(rs, cs)
        fstate[DB] = db
        t = istate[T_DONE] + 1
        istate[T_DONE] = t
        if record:
            rec_axis[k] = axis
            rec_idx[k] = l
            rec_dt[k] = d
            rec_db[k] = db
        done += 1
        if db > prev + MONO_TOL:
            istate[STOP] = NOT_MONOTONE
            return done
        if db <= tol:
            istate[STOP] = TOLERANCE
            return done
        if window > 0:
            slot = t % window
            if t >= window and ring[slot] - db < STALL_DECREASE:
                istate[STOP] = STALLED
                return done
            ring[slot] = db
    return done


@njit(cache=True)
def drw_chunk(W, v, uniforms, visits, counts, edge_counts, db_samples, t0):
    """Run ``len(uniforms)`` DRW steps from vertex ``v``; returns the final vertex.

    ``db_samples`` receives d_B after every ``n``-th global step; the
    number of samples written is returned as the second value.
    """
    n = W.shape[0]
    written = 0
    for k in range(uniforms.shape[0]):
        s = 0.0
        for i in range(n):
            s += W[i, v]
        for i in range(n):
            W[i, v] = W[i, v] / s
        s = 0.0
        for j in range(n):
            s += W[v, j]
        for j in range(n):
            W[v, j] = W[v, j] / s
        u = uniforms[k]
        acc = 0.0
        nxt = -1
        last_pos = -1
        for j in range(n):
            w = W[v, j]
            if w > 0.0:
                last_pos = j
                acc += w
                if u < acc:
                    nxt = j
                    break
        if nxt < 0:
            nxt = last_pos
        if nxt < 0:
            return -1, written
        edge_counts[v, nxt] += 1
        v = nxt
        visits[k] = v
        counts[v] += 1
        if (t0 + k + 1) % n == 0:
            total = 0.0
            for i in range(n):
                r = 0.0
                for j in range(n):
                    r += W[i, j]
                total += abs(r - 1.0)
            for j in range(n):
                c = 0.0
                for i in range(n):
                    c += W[i, j]
                total += abs(c - 1.0)
            db_samples[written] = total
            written += 1
    return v, written
