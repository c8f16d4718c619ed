"""Saltelli designs, seeded ensembles, regime classification and capital injections."""

from __future__ import annotations

import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Iterator, Mapping

import numpy as np
from scipy.stats import qmc

from .analysis import gini, horizontal_vertical_inequality, mean_project_factor
from .economy import (FREE_PARAMETERS, PARAMETER_BOUNDS, FixedParams, SimParams, SimulationResult, simulate,
                      write_result)
from .rng import child_seed
from .social_graph import ConvergenceError

ALL_POOR, SOME_RICH, ALL_RICH = "AllPoor", "SomeRich", "AllRich"


@dataclass(frozen=True)
class RegimeLabel:
    level: str  # "individual" or "community"
    tag: str


@dataclass(frozen=True)
class ExperimentDesign:
    rows: np.ndarray  # (base_sample_count * (D + 2), D)
    base_sample_count: int
    rep_count: int
    master_seed: int
    names: tuple[str, ...] = FREE_PARAMETERS

    def __post_init__(self):
        d = len(self.names)
        if self.rows.shape != (self.base_sample_count * (d + 2), d):
            raise ValueError(f"design has shape {self.rows.shape}, expected "
                             f"({self.base_sample_count * (d + 2)}, {d})")
        if self.rep_count < 1:
            raise ValueError("rep_count must be at least 1")

    @property
    def n_rows(self) -> int:
        return self.rows.shape[0]

    def params(self, row: int) -> SimParams:
        return SimParams(**dict(zip(self.names, map(float, self.rows[row]))))

    def jobs(self) -> Iterator[tuple[int, int]]:
        for row in range(self.n_rows):
            for rep in range(self.rep_count):
                yield row, rep


def saltelli_design(base_n: int, bounds: Mapping[str, tuple[float, float]] = PARAMETER_BOUNDS,
                    master_seed: int = 0, rep_count: int = 1) -> ExperimentDesign:
    """Saltelli layout built on a scrambled 2D-dimensional Sobol' sequence.

    Column halves of each low-discrepancy point give the A and B samples;
    every base sample expands to D+2 consecutive rows [A, AB_1..AB_D, B],
    where AB_i is A with column i taken from B.
    """
    if base_n < 1 or base_n & (base_n - 1):
        raise ValueError(f"base_n={base_n} must be a power of 2 to keep the Sobol' sequence balanced")
    names = tuple(bounds)
    d = len(names)
    lo = np.array([bounds[k][0] for k in names])
    hi = np.array([bounds[k][1] for k in names])
    base = qmc.Sobol(d=2 * d, scramble=True, seed=master_seed).random(base_n)
    a, b = base[:, :d], base[:, d:]
    blocks = np.empty((base_n, d + 2, d))
    blocks[:, 0] = a
    for i in range(d):
        blocks[:, i + 1] = a
        blocks[:, i + 1, i] = b[:, i]
    blocks[:, -1] = b
    rows = lo + blocks.reshape(-1, d) * (hi - lo)
    return ExperimentDesign(rows, base_n, rep_count, master_seed, names)


def regime_from_flags(richer) -> str:
    richer = np.asarray(richer, dtype=bool)
    if richer.all():
        return ALL_RICH
    if not richer.any():
        return ALL_POOR
    return SOME_RICH


def classify_individual(result: SimulationResult) -> RegimeLabel:
    """AllRich if every agent ends strictly richer, AllPoor if none does."""
    if result.wealth.shape[1] < 2:
        raise ValueError("need at least one simulated step")
    return RegimeLabel("individual", regime_from_flags(result.final_wealth > result.initial_wealth))


def classify_community(result: SimulationResult, members=None) -> RegimeLabel:
    """Same trichotomy on community totals over the core partition."""
    members = result.communities.members if members is None else members
    w0, wk = result.initial_wealth, result.final_wealth
    richer = [wk[m].sum() > w0[m].sum() for m in members]
    return RegimeLabel("community", regime_from_flags(richer))


def summarize(result: SimulationResult, row_id: int, rep: int) -> dict:
    """JSON-ready record of one run; per-agent vectors go under ``details``."""
    ind = classify_individual(result).tag
    com = classify_community(result).tag
    # a community cannot gain in total if every one of its members lost
    assert not (com == ALL_RICH and ind == ALL_POOR), "community AllRich with individual AllPoor"
    w0, wk = result.initial_wealth, result.final_wealth
    ineq = horizontal_vertical_inequality(wk, result.communities.members)
    return {
        "row_id": row_id,
        "rep": rep,
        "seed": result.seed,
        "params": result.params.as_dict(),
        "individual_regime": ind,
        "community_regime": com,
        "final_gini": gini(wk).value,
        "total_final_wealth": float(wk.sum()),
        "total_initial_wealth": float(w0.sum()),
        "fraction_richer": float(np.mean(wk > w0)),
        "horizontal_gini": ineq.horizontal,
        "vertical_gini": ineq.vertical,
        "n_communities": result.communities.n_communities,
        "error": None,
        "details": {
            "project_mean_factor": mean_project_factor(result.project_returns).tolist(),
            "project_funded_fraction": result.funded.mean(axis=1).tolist(),
            "project_expected_factor": [p.expected_factor for p in result.projects],
            "community_sizes": [len(m) for m in result.communities.members],
            "membership_counts": result.communities.membership_counts().tolist(),
            "final_wealth": wk.tolist(),
        },
    }


def _failed(row_id: int, rep: int, seed: int, params: SimParams, exc: BaseException) -> dict:
    kind = "convergence" if isinstance(exc, ConvergenceError) else "exception"
    return {"row_id": row_id, "rep": rep, "seed": seed, "params": params.as_dict(),
            "individual_regime": None, "community_regime": None, "error": f"{kind}: {exc}"}


def run_one(params: SimParams, fixed: FixedParams, master_seed: int, row_id: int, rep: int,
            keep_result: bool = False, wealth_dir=None):
    seed = child_seed(master_seed, row_id, rep)
    try:
        result = simulate(params, fixed, seed)
        rec = summarize(result, row_id, rep)
        if wealth_dir is not None:
            result.regimes = {"individual": rec["individual_regime"], "community": rec["community_regime"]}
            write_result(result, wealth_dir, f"row{row_id:05d}_rep{rep:02d}")
    except Exception as exc:  # recorded, never fatal to an ensemble
        rec = _failed(row_id, rep, seed, params, exc)
        rec["traceback"] = traceback.format_exc(limit=3)
        result = None
    return (rec, result) if keep_result else rec


def _job(args):
    return run_one(*args)


def run_ensemble(design: ExperimentDesign, fixed: FixedParams = FixedParams(), workers: int = 1,
                 skip: Iterable[tuple[int, int]] = (),
                 on_record: Callable[[dict], None] | None = None, wealth_dir=None) -> list[dict]:
    """Simulate every (row, rep) of ``design`` not listed in ``skip``.

    Each run is seeded from (master_seed, row, rep) alone, so the records do
    not depend on scheduling; they are returned sorted by (row_id, rep).
    ``on_record`` sees each record as soon as it completes; with
    ``wealth_dir`` every run's wealth matrix is also written there.
    """
    done = set(map(tuple, skip))
    jobs = [(design.params(r), fixed, design.master_seed, r, k, False, wealth_dir)
            for r, k in design.jobs() if (r, k) not in done]
    out = []
    if workers <= 1:
        results = map(_job, jobs)
        for rec in results:
            out.append(rec)
            if on_record:
                on_record(rec)
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for rec in pool.map(_job, jobs, chunksize=4):
                out.append(rec)
                if on_record:
                    on_record(rec)
    out.sort(key=lambda r: (r["row_id"], r["rep"]))
    return out


@dataclass(frozen=True)
class InterventionSpec:
    inject_step: int = 100
    amount: float = 10.0
    target_count: int = 100
    extra_steps: int = 100
    reps: int = 20

    def __post_init__(self):
        if self.inject_step < 1 or self.target_count < 1 or self.extra_steps < 1 or self.reps < 1:
            raise ValueError("intervention counts must be positive")
        if self.amount < 0:
            raise ValueError("amount must be non-negative")


@dataclass
class InterventionRep:
    rep: int
    seed: int
    targets: np.ndarray
    poverty_line: float
    escape_fraction: float
    target_final_wealth: np.ndarray
    wealth: np.ndarray = field(repr=False)


@dataclass
class InterventionReport:
    params: SimParams
    spec: InterventionSpec
    reps: list[InterventionRep]

    @property
    def escape_fractions(self) -> np.ndarray:
        return np.array([r.escape_fraction for r in self.reps])


def escape_fraction(final_wealth, targets, target_count: int) -> tuple[float, float]:
    """Share of ``targets`` strictly above the poverty line, and the line itself.

    The line is the wealth of the richest of the ``target_count`` poorest
    agents in the whole population at the final step.
    """
    w = np.asarray(final_wealth, dtype=float)
    line = float(np.sort(w)[target_count - 1])
    return float(np.mean(w[targets] > line)), line


def poorest(w, count: int) -> np.ndarray:
    """Indices of the ``count`` poorest agents; ties go to the lower id."""
    return np.lexsort((np.arange(len(w)), w))[:count]


def run_intervention(params: SimParams, spec: InterventionSpec = InterventionSpec(), master_seed: int = 0,
                     fixed: FixedParams = FixedParams(), row_id: int = 0) -> InterventionReport:
    """Inject ``spec.amount`` into the poorest agents after ``spec.inject_step`` steps.

    Repetition ``k`` uses the same seed as ensemble run (row_id, k), so with
    amount 0 it reproduces that run extended to the longer horizon.
    """
    if spec.target_count > fixed.n_agents:
        raise ValueError("target_count exceeds the number of agents")
    fixed = fixed.replace(n_steps=spec.inject_step + spec.extra_steps)
    reps = []
    for k in range(spec.reps):
        seed = child_seed(master_seed, row_id, k)
        chosen = {}

        def inject(t, w):
            if t == spec.inject_step + 1:
                idx = poorest(w, spec.target_count)
                w[idx] += spec.amount
                chosen["targets"] = idx

        result = simulate(params, fixed, seed, before_step=inject)
        targets = np.sort(chosen["targets"])
        frac, line = escape_fraction(result.final_wealth, targets, spec.target_count)
        reps.append(InterventionRep(k, seed, targets, line, frac, result.final_wealth[targets], result.wealth))
    return InterventionReport(params, spec, reps)
