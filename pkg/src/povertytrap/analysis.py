"""Inequality metrics, regime statistics, Sobol indices and appendix demonstrations.

Functions here work on plain arrays or on the JSON-ready run records produced
by :mod:`povertytrap.experiments`, so they can be applied to a saved result
store without rerunning any simulation.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .economy import PARAMETER_BOUNDS
from .rng import as_generator

REGIMES = ("AllPoor", "SomeRich", "AllRich")


@dataclass(frozen=True)
class GiniReport:
    value: float
    population: str = "agents"

    def __float__(self) -> float:
        return self.value


def gini(values, population: str = "agents") -> GiniReport:
    """Mean absolute difference over twice the mean; 0 for an all-zero vector."""
    v = np.asarray(values, dtype=float).ravel()
    if v.size == 0:
        raise ValueError("gini of an empty vector is undefined")
    if not np.all(np.isfinite(v)):
        raise ValueError("values must be finite")
    if np.any(v < 0):
        raise ValueError("gini requires non-negative values")
    total = v.sum()
    if total == 0:
        return GiniReport(0.0, population)
    s = np.sort(v)
    n = s.size
    k = np.arange(n)
    # sum_{i,j} |v_i - v_j| = 2 * sum_k (2k - n + 1) s_k
    g = float(np.sum((2 * k - n + 1) * s) / (n * total))
    return GiniReport(min(max(g, 0.0), 1.0), population)


@dataclass(frozen=True)
class InequalityReport:
    horizontal: float
    vertical: float
    community_totals: np.ndarray
    community_ginis: np.ndarray


def horizontal_vertical_inequality(final_wealth, members: Sequence[np.ndarray]) -> InequalityReport:
    """Between-community Gini of totals and the size-weighted mean within-community Gini.

    ``members`` is the core partition (each agent in exactly one community).
    """
    w = np.asarray(final_wealth, dtype=float)
    totals = np.array([w[m].sum() for m in members])
    within = np.array([gini(w[m]).value for m in members])
    sizes = np.array([len(m) for m in members], dtype=float)
    return InequalityReport(
        horizontal=gini(totals, "communities").value,
        vertical=float(np.dot(sizes, within) / sizes.sum()),
        community_totals=totals,
        community_ginis=within,
    )


@dataclass(frozen=True)
class CorrelationReport:
    r: float
    n: int
    defined: bool


def pearson(x, y) -> CorrelationReport:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("need two 1-D samples of equal length")
    if len(x) < 2:
        raise ValueError("need at least two pairs")
    dx, dy = x - x.mean(), y - y.mean()
    sxx, syy = float(dx @ dx), float(dy @ dy)
    if sxx == 0 or syy == 0:
        return CorrelationReport(float("nan"), len(x), False)
    r = float(dx @ dy / np.sqrt(sxx * syy))
    return CorrelationReport(min(max(r, -1.0), 1.0), len(x), True)


def wealth_gini_correlation(records: Iterable[Mapping]) -> CorrelationReport:
    """Pearson r of (total final wealth, final Gini) over SomeRich runs."""
    pairs = [(r["total_final_wealth"], r["final_gini"]) for r in records
             if r.get("individual_regime") == "SomeRich"]
    if len(pairs) < 3:
        raise ValueError(f"need at least 3 SomeRich records, got {len(pairs)}")
    x, y = np.array(pairs).T
    return pearson(x, y)


@dataclass
class SobolReport:
    names: tuple[str, ...]
    first: np.ndarray
    total: np.ndarray
    first_ci: np.ndarray  # (D, 2)
    total_ci: np.ndarray
    first_boot: np.ndarray = field(repr=False)  # (n_boot, D)
    total_boot: np.ndarray = field(repr=False)
    variance: float = 0.0

    def total_gap_ci(self, i: int, j: int, level: float = 0.95) -> tuple[float, float]:
        """Bootstrap interval for total[i] - total[j]."""
        gap = self.total_boot[:, i] - self.total_boot[:, j]
        lo, hi = np.quantile(gap, [(1 - level) / 2, (1 + level) / 2])
        return float(lo), float(hi)


def _jansen(fa, fb, fab):
    var = np.var(np.concatenate([fa, fb]))
    if var == 0:
        d = fab.shape[1]
        return np.zeros(d), np.zeros(d), 0.0
    first = 1.0 - np.mean((fb[:, None] - fab) ** 2, axis=0) / (2 * var)
    total = np.mean((fa[:, None] - fab) ** 2, axis=0) / (2 * var)
    return first, total, float(var)


def sobol_indices(design, qoi, n_boot: int = 500, level: float = 0.95, seed=0) -> SobolReport:
    """Jansen first- and total-order indices with a bootstrap over base samples.

    ``design`` lays out each base sample as D+2 consecutive rows
    ``[A, AB_1, ..., AB_D, B]``; ``qoi`` holds one value per (row, rep) in
    row-major order and repetitions are averaged before estimation.
    """
    if n_boot < 200:
        raise ValueError("use at least 200 bootstrap resamples")
    names = tuple(design.names)
    d = len(names)
    n_rows = design.rows.shape[0]
    y = np.asarray(qoi, dtype=float).ravel()
    if y.size != n_rows * design.rep_count:
        raise ValueError(f"expected {n_rows * design.rep_count} qoi values, got {y.size}")
    if not np.all(np.isfinite(y)):
        raise ValueError("qoi has non-finite entries")
    blocks = y.reshape(n_rows, design.rep_count).mean(axis=1).reshape(-1, d + 2)
    fa, fab, fb = blocks[:, 0], blocks[:, 1:-1], blocks[:, -1]
    first, total, var = _jansen(fa, fb, fab)

    rng = as_generator(seed)
    n = len(fa)
    fb_s = np.empty((n_boot, d))
    tb_s = np.empty((n_boot, d))
    for b in range(n_boot):
        idx = rng.integers(0, n, n)
        fb_s[b], tb_s[b], _ = _jansen(fa[idx], fb[idx], fab[idx])
    q = [(1 - level) / 2, (1 + level) / 2]
    return SobolReport(names, first, total, np.quantile(fb_s, q, axis=0).T, np.quantile(tb_s, q, axis=0).T,
                       fb_s, tb_s, var)


def normalize_params(params: Mapping[str, float], bounds=PARAMETER_BOUNDS) -> dict[str, float]:
    """Min-max scale each parameter so its Table 1 range maps onto [0, 1]."""
    return {k: (params[k] - lo) / (hi - lo) for k, (lo, hi) in bounds.items()}


@dataclass
class RegimeProfile:
    mean: dict[str, dict[str, float]]
    sd: dict[str, dict[str, float]]
    count: dict[str, int]
    missing: list[str]


def regime_parameter_profile(records: Iterable[Mapping], level: str = "individual",
                             bounds=PARAMETER_BOUNDS) -> RegimeProfile:
    key = f"{level}_regime"
    groups: dict[str, list] = {r: [] for r in REGIMES}
    for rec in records:
        tag = rec.get(key)
        if tag in groups:
            groups[tag].append(normalize_params(rec["params"], bounds))
    mean, sd, count, missing = {}, {}, {}, []
    for tag, rows in groups.items():
        if not rows:
            missing.append(tag)
            continue
        mat = np.array([[row[k] for k in bounds] for row in rows])
        mean[tag] = dict(zip(bounds, mat.mean(axis=0).tolist()))
        sd[tag] = dict(zip(bounds, mat.std(axis=0).tolist()))
        count[tag] = len(rows)
    return RegimeProfile(mean, sd, count, missing)


def project_return_summary(records: Iterable[Mapping]) -> dict[str, np.ndarray]:
    """Per-project mean realised factor over the run, pooled by individual regime.

    Unfunded steps count as factor 0, so a never-funded project averages 0.
    """
    out: dict[str, list] = {r: [] for r in REGIMES}
    for rec in records:
        tag = rec.get("individual_regime")
        if tag in out:
            out[tag].extend(rec["details"]["project_mean_factor"])
    return {k: np.array(v, dtype=float) for k, v in out.items()}


def mean_project_factor(project_returns) -> np.ndarray:
    """Row means of a (projects, steps) factor matrix."""
    return np.asarray(project_returns, dtype=float).mean(axis=1)


@dataclass
class BimodalDemo:
    sample: np.ndarray
    counts: np.ndarray
    edges: np.ndarray
    mode_means: np.ndarray  # (k, 2)
    mode_sds: np.ndarray


def bimodal_sum_demo(k: int, seed=None, draws_per_mode: int = 1000, bins: int = 100) -> BimodalDemo:
    """Pool ``k`` two-component normal samples and histogram the result.

    Each sample takes ``draws_per_mode`` draws from two normals whose means
    are U(500, 800) and whose sds are U(10, 50).
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    rng = as_generator(seed)
    means = rng.uniform(500, 800, size=(k, 2))
    sds = rng.uniform(10, 50, size=(k, 2))
    sample = rng.normal(means[:, :, None], sds[:, :, None], size=(k, 2, draws_per_mode)).ravel()
    counts, edges = np.histogram(sample, bins=bins)
    return BimodalDemo(sample, counts, edges, means, sds)


def degree_wealth_summary(membership_counts, final_wealth,
                          quantiles: Sequence[float] = (0.1, 0.25, 0.5, 0.75, 0.9)) -> dict[int, np.ndarray]:
    """Final-wealth quantiles for agents grouped by extended-membership count."""
    m = np.asarray(membership_counts)
    w = np.asarray(final_wealth, dtype=float)
    return {int(d): np.quantile(w[m == d], quantiles) for d in np.unique(m)}


def degree_wealth_by_regime(records: Iterable[Mapping], quantiles=(0.1, 0.25, 0.5, 0.75, 0.9)):
    """Pool agents across runs of each individual regime, then group by degree."""
    pooled: dict[str, tuple[list, list]] = {}
    for rec in records:
        tag = rec.get("individual_regime")
        if tag not in REGIMES:
            continue
        m, w = pooled.setdefault(tag, ([], []))
        m.extend(rec["details"]["membership_counts"])
        w.extend(rec["details"]["final_wealth"])
    return {tag: degree_wealth_summary(m, w, quantiles) for tag, (m, w) in pooled.items()}


def regime_counts(records: Iterable[Mapping]) -> dict[tuple[str, str], int]:
    """Joint (community, individual) regime counts over successful runs."""
    table = {(c, i): 0 for c in REGIMES for i in REGIMES}
    for rec in records:
        if rec.get("error"):
            continue
        table[(rec["community_regime"], rec["individual_regime"])] += 1
    return table


def median_gini_by_regime(records: Iterable[Mapping]) -> dict[str, float]:
    pooled: dict[str, list] = {}
    for rec in records:
        if not rec.get("error"):
            pooled.setdefault(rec["individual_regime"], []).append(rec["final_gini"])
    return {k: float(np.median(v)) for k, v in pooled.items()}
