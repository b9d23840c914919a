"""Compiled inner loops for the score-table traversal.

Contingency tables are held as a pair of parallel arrays: mixed-radix codes
(one int64 per distinct projected row, most significant digit = lowest
variable index, so ascending code order is lexicographic row order) and
their counts.  Tables are always kept sorted by code; dropping a variable
is a counting-bucket pass plus a k-way merge that preserves that order,
which also yields the per-parent-configuration totals needed for scoring.

The summation order of every score is fixed: groups in ascending parent
configuration, cells in ascending child value, the Dirichlet group term
after its cells.  The pure-Python scorer follows the same order, so both
routes produce bit-identical doubles.
"""

import math

import numpy as np
from numba import njit

KIND_BDE = 0
KIND_BIC = 1
KIND_AIC = 2


@njit(cache=True)
def lgamma(x):
    """libm log-gamma; exported so non-compiled code agrees bitwise."""
    return math.lgamma(x)


@njit(cache=True)
def _popcount(x):
    c = 0
    while x:
        x &= x - 1
        c += 1
    return c


@njit(cache=True)
def _reduce_score(codes, counts, m, stride, radix, kind, alpha, beta, penalty,
                  out_codes, out_counts, order, rcbuf, digitbuf, bucket, cur, cellbuf):
    """Drop one digit from a sorted table; return (rows kept, local score).

    The reduced table lands in out_codes/out_counts, again sorted.  alpha and
    beta are the Dirichlet group/cell pseudo-counts (bde only); penalty is
    subtracted from the log-likelihood for bic/aic.
    """
    wide = stride * radix
    for i in range(m):
        hi = codes[i] // stride
        d = hi - (hi // radix) * radix
        digitbuf[i] = d
        rcbuf[i] = (codes[i] // wide) * stride + (codes[i] - hi * stride)
    for d in range(radix + 1):
        bucket[d] = 0
    for i in range(m):
        bucket[digitbuf[i] + 1] += 1
    for d in range(radix):
        bucket[d + 1] += bucket[d]
    for d in range(radix):
        cur[d] = bucket[d]
    for i in range(m):
        d = digitbuf[i]
        order[cur[d]] = i
        cur[d] += 1
    for d in range(radix):
        cur[d] = bucket[d]

    n_out = 0
    score = 0.0
    while True:
        best_code = np.int64(-1)
        for d in range(radix):
            if cur[d] < bucket[d + 1]:
                rc = rcbuf[order[cur[d]]]
                if best_code < 0 or rc < best_code:
                    best_code = rc
        if best_code < 0:
            break
        ncell = 0
        group_total = np.int64(0)
        for d in range(radix):
            p = cur[d]
            if p < bucket[d + 1] and rcbuf[order[p]] == best_code:
                c = counts[order[p]]
                cellbuf[ncell] = c
                ncell += 1
                group_total += c
                cur[d] = p + 1
        if kind == KIND_BDE:
            for t in range(ncell):
                c = cellbuf[t]
                score += math.lgamma(beta + c) - math.lgamma(beta)
            score += math.lgamma(alpha) - math.lgamma(alpha + group_total)
        else:
            for t in range(ncell):
                c = cellbuf[t]
                score += c * math.log(c / group_total)
        out_codes[n_out] = best_code
        out_counts[n_out] = group_total
        n_out += 1
    if kind != KIND_BDE:
        score = score - penalty
    return n_out, score


@njit(cache=True)
def run_job(codes0, counts0, root_mask, root_removable, arities, kind, ess,
            table, flat_out, use_flat):
    """Depth-first traversal of one score job.

    Scores every (variable, rest-of-table) pair of the root table, recursing
    into the reduced table whenever the dropped variable is marked removable
    (children may then drop only lower-numbered variables, so each variable
    subset is visited exactly once across a full plan).

    Scores are either scattered into ``table`` (full (n, 2^(n-1)) array,
    indexed by variable and collapsed parent mask) or appended to
    ``flat_out`` in traversal order.  Returns (emitted, peak live tables).
    """
    n = arities.shape[0]
    m0 = codes0.shape[0]
    total = np.int64(0)
    for i in range(m0):
        total += counts0[i]
    log_total = math.log(total)

    maxr = np.int64(1)
    for v in range(n):
        if arities[v] > maxr:
            maxr = arities[v]

    lvl_codes = np.empty((n + 1, m0), np.int64)
    lvl_counts = np.empty((n + 1, m0), np.int64)
    lvl_codes[0, :m0] = codes0
    lvl_counts[0, :m0] = counts0

    stack_mask = np.empty(n + 1, np.int64)
    stack_removable = np.empty(n + 1, np.int64)
    stack_m = np.empty(n + 1, np.int64)
    stack_vptr = np.empty(n + 1, np.int64)
    stack_mask[0] = root_mask
    stack_removable[0] = root_removable
    stack_m[0] = m0
    stack_vptr[0] = 0

    order = np.empty(m0, np.int64)
    rcbuf = np.empty(m0, np.int64)
    digitbuf = np.empty(m0, np.int64)
    bucket = np.empty(maxr + 1, np.int64)
    cur = np.empty(maxr, np.int64)
    cellbuf = np.empty(maxr, np.int64)

    emitted = np.int64(0)
    peak_live = np.int64(1)
    level = 0
    while level >= 0:
        mask = stack_mask[level]
        vp = stack_vptr[level]
        v = -1
        while vp < n:
            if (mask >> vp) & 1:
                v = vp
                break
            vp += 1
        if v < 0:
            level -= 1
            continue
        stack_vptr[level] = v + 1

        # digit layout of the current table: lowest variable index is the
        # most significant digit, so v's stride is the product of the
        # arities of the higher-numbered members
        stride = np.int64(1)
        u = v + 1
        while u < n:
            if (mask >> u) & 1:
                stride *= arities[u]
            u += 1
        radix = arities[v]

        q = 1.0
        u = 0
        while u < n:
            if u != v and (mask >> u) & 1:
                q *= arities[u]
            u += 1

        alpha = 0.0
        beta = 0.0
        penalty = 0.0
        if kind == KIND_BDE:
            alpha = ess / q
            beta = ess / (q * radix)
        else:
            free_params = q * (radix - 1)
            if kind == KIND_BIC:
                penalty = 0.5 * log_total * free_params
            else:
                penalty = free_params
        if level + 2 > peak_live:
            peak_live = level + 2
        m = stack_m[level]
        n_out, score = _reduce_score(
            lvl_codes[level], lvl_counts[level], m, stride, radix, kind,
            alpha, beta, penalty,
            lvl_codes[level + 1], lvl_counts[level + 1],
            order, rcbuf, digitbuf, bucket, cur, cellbuf,
        )

        rest = mask & ~(np.int64(1) << v)
        if use_flat:
            flat_out[emitted] = score
        else:
            low = rest & ((np.int64(1) << v) - 1)
            idx = low | ((rest >> (v + 1)) << v)
            table[v, idx] = score
        emitted += 1

        if (stack_removable[level] >> v) & 1 and _popcount(mask) > 1:
            level += 1
            stack_mask[level] = rest
            stack_removable[level] = (np.int64(1) << v) - 1
            stack_m[level] = n_out
            stack_vptr[level] = 0
    return emitted, peak_live
