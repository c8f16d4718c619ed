"""Slow, literal reference implementations used only as test oracles.

None of these share code with the package: they follow the textbook
definitions step by step so that disagreements point at the fast paths.
"""

import itertools
from collections import Counter

import numpy as np


def weight(q, delta):
    q = float(q)
    if q <= 0:
        return 0.0
    if q >= 1:
        return 1.0
    a = q**delta
    return a / (a + (1 - q) ** delta) ** (1 / delta)


def side_weights(n_side, n, delta):
    raw = [weight((n_side - j + 1) / n, delta) - weight((n_side - j) / n, delta) for j in range(1, n_side + 1)]
    if not raw:
        return []
    m = raw.index(min(raw))
    return [raw[m]] * m + raw[m:]


def cpt_literal(p, r, gp, gm, dp, dm):
    """Sort, split by sign, weight and sum; one scenario at a time."""
    x = sorted(float(v) for v in np.asarray(r, dtype=float) @ np.asarray(p, dtype=float))
    n = len(x)
    n_neg = sum(1 for v in x if v < 0)
    n_pos = n - n_neg
    pi_plus = [0.0] * n_neg + side_weights(n_pos, n, dp)
    pi_minus = [0.0] * n_pos + side_weights(n_neg, n, dm)
    u = [1 - np.exp(-gp * v) if v >= 0 else np.exp(gm * v) - 1 for v in x]
    phi_plus = sorted(max(0.0, v) for v in u)
    phi_minus = sorted(-min(0.0, v) for v in u)
    return sum(a * b for a, b in zip(pi_plus, phi_plus)) - sum(a * b for a, b in zip(pi_minus, phi_minus))


def cpt_grouped(p, r, gp, gm, dp, dm):
    """Vectorised form of :func:`cpt_literal` for many scenarios."""
    x = np.sort(np.asarray(r, dtype=float) @ np.asarray(p, dtype=float))
    n = len(x)
    n_neg = int(np.sum(x < 0))
    n_pos = n - n_neg
    pi_plus = np.concatenate([np.zeros(n_neg), side_weights_np(n_pos, n, dp)])
    pi_minus = np.concatenate([np.zeros(n_pos), side_weights_np(n_neg, n, dm)])
    with np.errstate(over="ignore"):
        u = np.where(x >= 0, 1 - np.exp(-gp * x), np.exp(gm * np.minimum(x, 0)) - 1)
    return float(pi_plus @ np.sort(np.maximum(u, 0)) - pi_minus @ np.sort(-np.minimum(u, 0)))


def _w(q, delta):
    q = np.asarray(q, dtype=float)
    a = q**delta
    with np.errstate(divide="ignore", invalid="ignore"):
        out = a / (a + (1 - q) ** delta) ** (1 / delta)
    return np.where(q <= 0, 0.0, np.where(q >= 1, 1.0, out))


def side_weights_np(n_side, n, delta):
    if n_side == 0:
        return np.zeros(0)
    j = np.arange(1, n_side + 1)
    raw = _w((n_side - j + 1) / n, delta) - _w((n_side - j) / n, delta)
    m = int(np.argmin(raw))
    raw[:m] = raw[m]
    return raw


def simplex_grid(n_assets, step):
    k = int(round(1 / step))
    pts = [c for c in itertools.product(range(k + 1), repeat=n_assets - 1) if sum(c) <= k]
    return np.array([[*c, k - sum(c)] for c in pts], dtype=float) / k


def grid_best(r, gp, gm, dp, dm, step):
    """Exhaustive search over the simplex lattice with spacing ``step``."""
    grid = simplex_grid(r.shape[1], step)
    vals = [cpt_grouped(p, r, gp, gm, dp, dm) for p in grid]
    i = int(np.argmax(vals))
    return grid[i], vals[i]


def synchronous_lpa(adj, max_iter=100):
    """Plain synchronous label propagation, ties to the smallest label."""
    labels = list(range(len(adj)))
    for _ in range(max_iter):
        new = []
        for v, nbrs in enumerate(adj):
            if not nbrs:
                new.append(labels[v])
                continue
            counts = Counter(labels[u] for u in nbrs)
            top = max(counts.values())
            best = sorted(lab for lab, c in counts.items() if c == top)
            new.append(labels[v] if labels[v] in best else best[0])
        if new == labels:
            break
        labels = new
    return labels


def partition(labels):
    groups = {}
    for v, lab in enumerate(labels):
        groups.setdefault(lab, set()).add(v)
    return sorted(map(frozenset, groups.values()), key=min)


def gini_pairwise(v):
    v = np.asarray(v, dtype=float)
    n = len(v)
    if v.mean() == 0:
        return 0.0
    return float(np.abs(v[:, None] - v[None, :]).sum() / (2 * n * n * v.mean()))
