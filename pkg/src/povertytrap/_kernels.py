"""Compiled hot paths for CPT evaluation and the multi-start simplex search.

The return matrix handed to these kernels is compressed: ``rows`` holds the
distinct scenario rows and ``counts`` their multiplicities, so an empirical
matrix with thousands of two-point draws collapses to at most 2**P rows.
Decision weights are recovered from cumulative sums of the probability
weighting function, which keeps each evaluation O(U log U) in the number of
distinct rows instead of O(N).
"""

import numpy as np
from numba import njit


@njit(cache=True)
def weight_table(n, delta):
    """w(s/n) for s = 0..n."""
    out = np.empty(n + 1)
    for s in range(n + 1):
        p = s / n
        if p <= 0.0:
            out[s] = 0.0
        elif p >= 1.0:
            out[s] = 1.0
        else:
            a = p**delta
            out[s] = a / (a + (1.0 - p) ** delta) ** (1.0 / delta)
    return out


@njit(cache=True)
def repair_index(wt):
    """Prefix argmin of the weight increments g(s) = wt[s+1] - wt[s].

    ``pos[k]`` is the minimiser of g over s in [0, k]; ties resolve to the
    largest s, which is the smallest rank j = n_side - s in the unpadded
    decision-weight vector (first occurrence of the minimum).
    """
    n = wt.shape[0] - 1
    pos = np.empty(n, dtype=np.int64)
    best = 0
    for s in range(n):
        if wt[s + 1] - wt[s] <= wt[best + 1] - wt[best]:
            best = s
        pos[s] = best
    return pos


@njit(cache=True)
def cum_weight(k, n_side, wt, pos):
    """Sum of the first ``k`` repaired decision weights on one side."""
    if k <= 0:
        return 0.0
    lo = n_side - k
    hi = n_side - 1
    star = pos[hi]
    gmin = wt[star + 1] - wt[star]
    total = 0.0
    if lo <= star:
        total += wt[star + 1] - wt[lo]
        total += (hi - star) * gmin
    else:
        total += (hi - lo + 1) * gmin
    return total


@njit(cache=True)
def cpt_value_buf(rows, counts, n_total, p, gamma_plus, gamma_minus, wt_plus, pos_plus, wt_minus, pos_minus,
                  x, order):
    n_rows, n_assets = rows.shape
    n_neg = 0
    for r in range(n_rows):
        acc = 0.0
        for a in range(n_assets):
            acc += rows[r, a] * p[a]
        x[r] = acc
        if acc < 0.0:
            n_neg += counts[r]
        # insertion sort keeps small row sets cheap and allocation free
        q = r
        while q > 0 and x[order[q - 1]] > acc:
            order[q] = order[q - 1]
            q -= 1
        order[q] = r
    n_pos = n_total - n_neg

    total = 0.0
    if n_pos > 0:
        hi = n_pos - 1
        star = pos_plus[hi]
        gmin = wt_plus[star + 1] - wt_plus[star]
        top = wt_plus[star + 1] + (hi - star) * gmin
        k = 0
        prev = 0.0
        for q in range(n_rows):
            r = order[q]
            if x[r] < 0.0:
                continue
            k += counts[r]
            lo = n_pos - k
            cur = top - wt_plus[lo] if lo <= star else (hi - lo + 1) * gmin
            total += (cur - prev) * (1.0 - np.exp(-gamma_plus * x[r]))
            prev = cur

    # losses are ranked from the smallest magnitude to the largest
    if n_neg > 0:
        hi = n_neg - 1
        star = pos_minus[hi]
        gmin = wt_minus[star + 1] - wt_minus[star]
        top = wt_minus[star + 1] + (hi - star) * gmin
        k = 0
        prev = 0.0
        for q in range(n_rows - 1, -1, -1):
            r = order[q]
            if x[r] >= 0.0:
                continue
            k += counts[r]
            lo = n_neg - k
            cur = top - wt_minus[lo] if lo <= star else (hi - lo + 1) * gmin
            total += (cur - prev) * (np.exp(gamma_minus * x[r]) - 1.0)
            prev = cur
    return total


@njit(cache=True)
def cpt_value(rows, counts, n_total, p, gamma_plus, gamma_minus, wt_plus, pos_plus, wt_minus, pos_minus):
    n_rows = rows.shape[0]
    return cpt_value_buf(rows, counts, n_total, p, gamma_plus, gamma_minus, wt_plus, pos_plus, wt_minus,
                         pos_minus, np.empty(n_rows), np.empty(n_rows, dtype=np.int64))


@njit(cache=True)
def local_search(rows, counts, n_total, start, gamma_plus, gamma_minus, wt_plus, pos_plus,
                 wt_minus, pos_minus, step0, min_step, min_gain, shrink):
    """Pairwise weight-transfer hill climb with a geometrically shrinking step."""
    n_assets = start.shape[0]
    n_rows = rows.shape[0]
    x = np.empty(n_rows)
    order = np.empty(n_rows, dtype=np.int64)
    p = start.copy()
    cur = cpt_value_buf(rows, counts, n_total, p, gamma_plus, gamma_minus, wt_plus, pos_plus, wt_minus,
                        pos_minus, x, order)
    trial = p.copy()
    step = step0
    while step >= min_step:
        improved = True
        while improved:
            improved = False
            for i in range(n_assets):
                if p[i] <= 0.0:
                    continue
                for j in range(n_assets):
                    if i == j:
                        continue
                    amt = min(step, p[i])
                    trial[i] = p[i] - amt
                    if trial[i] < 1e-15:
                        trial[i] = 0.0
                    trial[j] = p[j] + amt
                    val = cpt_value_buf(rows, counts, n_total, trial, gamma_plus, gamma_minus,
                                        wt_plus, pos_plus, wt_minus, pos_minus, x, order)
                    if val >= cur + min_gain:
                        cur = val
                        p[i] = trial[i]
                        p[j] = trial[j]
                        improved = True
                        if p[i] <= 0.0:
                            break
                    else:
                        trial[i] = p[i]
                        trial[j] = p[j]
        step *= shrink
    return p, cur


@njit(cache=True)
def multi_start(rows, counts, n_total, starts, gamma_plus, gamma_minus, delta_plus, delta_minus,
                step0, min_step, min_gain, shrink):
    wt_plus = weight_table(n_total, delta_plus)
    wt_minus = weight_table(n_total, delta_minus)
    pos_plus = repair_index(wt_plus)
    pos_minus = repair_index(wt_minus)
    n_starts = starts.shape[0]
    best_p = starts[0].copy()
    best_v = -np.inf
    for s in range(n_starts):
        p, v = local_search(rows, counts, n_total, starts[s], gamma_plus, gamma_minus, wt_plus, pos_plus,
                            wt_minus, pos_minus, step0, min_step, min_gain, shrink)
        if v > best_v:
            best_v = v
            best_p = p
    return best_p, best_v


@njit(cache=True)
def evaluate(rows, counts, n_total, p, gamma_plus, gamma_minus, delta_plus, delta_minus):
    wt_plus = weight_table(n_total, delta_plus)
    wt_minus = weight_table(n_total, delta_minus)
    return cpt_value(rows, counts, n_total, p, gamma_plus, gamma_minus,
                     wt_plus, repair_index(wt_plus), wt_minus, repair_index(wt_minus))
