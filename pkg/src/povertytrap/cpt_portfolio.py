"""Cumulative prospect theory utility, portfolio optimisation and attention updates.

Returns are *net* (factor - 1): a project that loses 10% enters as -0.10 and an
unfunded project as -1.0. The safe asset is always the last column.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .rng import as_generator


@dataclass(frozen=True)
class CptParams:
    gamma_plus: float
    gamma_minus: float
    delta_plus: float
    delta_minus: float

    def __post_init__(self):
        if not self.gamma_minus > self.gamma_plus > 0:
            raise ValueError("need gamma_minus > gamma_plus > 0")
        for d in (self.delta_plus, self.delta_minus):
            if not 0 < d <= 1:
                raise ValueError("probability-weighting exponents must lie in (0, 1]")


@dataclass(frozen=True)
class OptimizerSettings:
    """Search budget for :func:`optimize_portfolio`."""

    n_random: int = 20
    initial_step: float = 0.25
    min_step: float = 1e-4
    min_gain: float = 1e-9
    shrink: float = 0.25

    def __post_init__(self):
        if self.n_random < 20:
            raise ValueError("at least 20 random starting points are required")


DEFAULT_OPTIMIZER = OptimizerSettings()


def prospect_utility(x, params: CptParams):
    """Piecewise exponential utility: concave for gains, convex for losses."""
    x = np.asarray(x, dtype=float)
    with np.errstate(over="ignore"):
        gain = 1.0 - np.exp(-x * params.gamma_plus)
        loss = np.exp(np.minimum(x, 0.0) * params.gamma_minus) - 1.0
    out = np.where(x >= 0, gain, loss)
    return out if out.ndim else float(out)


def probability_weight(p, delta: float):
    p = np.asarray(p, dtype=float)
    if np.any((p < 0) | (p > 1)):
        raise ValueError("probabilities must lie in [0, 1]")
    if not 0 < delta <= 1:
        raise ValueError("delta must lie in (0, 1]")
    a = p**delta
    with np.errstate(divide="ignore", invalid="ignore"):
        out = a / (a + (1.0 - p) ** delta) ** (1.0 / delta)
    out = np.where(p == 0, 0.0, np.where(p == 1, 1.0, out))
    return out if out.ndim else float(out)


def _side_weights(n_side: int, n_total: int, delta: float) -> np.ndarray:
    if n_side == 0:
        return np.zeros(0)
    j = np.arange(1, n_side + 1)
    upper = probability_weight((n_side - j + 1) / n_total, delta)
    lower = probability_weight((n_side - j) / n_total, delta)
    raw = upper - lower
    m = int(np.argmin(raw))
    raw[:m] = raw[m]
    return raw


def decision_weights(n_pos: int, n_neg: int, params: CptParams) -> tuple[np.ndarray, np.ndarray]:
    """Zero-padded, monotone-repaired rank weights ``(pi_plus, pi_minus)``.

    ``pi_plus`` multiplies the ascending-sorted gain utilities and
    ``pi_minus`` the ascending-sorted loss magnitudes; both have length
    ``n_pos + n_neg`` and are non-decreasing.
    """
    n = n_pos + n_neg
    if n_pos < 0 or n_neg < 0 or n < 1:
        raise ValueError("need n_pos, n_neg >= 0 with n_pos + n_neg >= 1")
    plus = _side_weights(n_pos, n, params.delta_plus)
    minus = _side_weights(n_neg, n, params.delta_minus)
    return np.concatenate([np.zeros(n_neg), plus]), np.concatenate([np.zeros(n_pos), minus])


def compress_returns(r: np.ndarray) -> tuple[np.ndarray, np.ndarray, int]:
    """Distinct scenario rows, their multiplicities and the total row count."""
    r = np.ascontiguousarray(r, dtype=float)
    if r.ndim != 2 or r.shape[0] < 1:
        raise ValueError("return matrix must be 2-D with at least one scenario")
    rows, counts = np.unique(r, axis=0, return_counts=True)
    return np.ascontiguousarray(rows), counts.astype(np.int64), r.shape[0]


def _check_portfolio(p, n_assets: int) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if p.shape != (n_assets,):
        raise ValueError(f"portfolio has {p.shape} weights, return matrix has {n_assets} assets")
    if np.any(p < -1e-12) or abs(p.sum() - 1.0) > 1e-9:
        raise ValueError("portfolio must lie on the probability simplex")
    return p


def cpt_utility(p, r, params: CptParams) -> float:
    """CPT value of portfolio ``p`` under the empirical net-return matrix ``r``."""
    r = np.asarray(r, dtype=float)
    if not np.all(np.isfinite(r)):
        raise ValueError("return matrix has non-finite entries")
    p = _check_portfolio(p, r.shape[1])
    rows, counts, n = compress_returns(r)
    return float(_kernels.evaluate(rows, counts, n, p, params.gamma_plus, params.gamma_minus,
                                   params.delta_plus, params.delta_minus))


def candidate_starts(n_assets: int, rng: np.random.Generator, n_random: int = 20) -> np.ndarray:
    """Vertices, the uniform portfolio, then ``n_random`` Dirichlet(1) points."""
    eye = np.eye(n_assets)
    uniform = np.full((1, n_assets), 1.0 / n_assets)
    rand = rng.dirichlet(np.ones(n_assets), size=n_random)
    return np.ascontiguousarray(np.vstack([eye, uniform, rand]))


def optimize_compressed(rows, counts, n_total, params: CptParams, rng: np.random.Generator,
                        settings: OptimizerSettings = DEFAULT_OPTIMIZER) -> tuple[np.ndarray, float]:
    starts = candidate_starts(rows.shape[1], rng, settings.n_random)
    p, v = _kernels.multi_start(rows, counts, n_total, starts, params.gamma_plus, params.gamma_minus,
                                params.delta_plus, params.delta_minus, settings.initial_step,
                                settings.min_step, settings.min_gain, settings.shrink)
    p = np.clip(p, 0.0, None)
    return p / p.sum(), float(v)


def optimize_portfolio(r, params: CptParams, seed=None,
                       settings: OptimizerSettings = DEFAULT_OPTIMIZER) -> np.ndarray:
    """Maximise CPT utility over the simplex by multi-start local search.

    Every vertex, the uniform portfolio and ``settings.n_random`` random
    simplex points are refined; the best refined point is returned, so the
    result never scores below any of those candidates.
    """
    r = np.asarray(r, dtype=float)
    if r.ndim != 2 or r.shape[1] < 2:
        raise ValueError("need at least two assets")
    if not np.all(np.isfinite(r)):
        raise ValueError("return matrix has non-finite entries")
    rng = as_generator(seed)
    rows, counts, n = compress_returns(r)
    p, _ = optimize_compressed(rows, counts, n, params, rng, settings)
    return p


def attention_update(initial, observed_opt, a: float) -> np.ndarray:
    initial = np.asarray(initial, dtype=float)
    observed_opt = np.asarray(observed_opt, dtype=float)
    if initial.shape != observed_opt.shape:
        raise ValueError("portfolios have different asset dimensions")
    if not 0 <= a <= 1:
        raise ValueError("attention must lie in [0, 1]")
    return (1.0 - a) * initial + a * observed_opt


def sample_update_times(lam: float, horizon: int, seed=None, warmup: int = 5) -> list[int]:
    """Update steps from cumulative Poisson(lam) gaps, kept in (warmup, horizon].

    Zero gaps are bumped to 1 so an agent never updates twice in one step.
    """
    if lam <= 0:
        raise ValueError("lam must be positive")
    rng = as_generator(seed)
    times = []
    t = 0
    while True:
        t += max(1, int(rng.poisson(lam)))
        if t > horizon:
            break
        if t > warmup:
            times.append(t)
    return times
