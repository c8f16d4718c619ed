"""Community projects, the safe asset and the wealth recursion."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import cpt_portfolio as cpt
from .rng import as_generator, stream
from .social_graph import (
    CommunityAssignment,
    SocialGraph,
    build_sda_graph,
    detect_communities,
    extended_membership,
    sample_initial_wealth,
)


FREE_PARAMETERS = ("ell", "g_upper", "beta", "theta", "alpha")

# Ranges of the five swept parameters.
PARAMETER_BOUNDS = {
    "ell": (0.30, 0.45),
    "g_upper": (1.70, 8.00),
    "beta": (0.70, 0.80),
    "theta": (0.01, 0.20),
    "alpha": (2.00, 12.00),
}


@dataclass(frozen=True)
class FixedParams:
    n_agents: int = 1225
    n_steps: int = 100
    update_rate: float = 10.0
    wealth_mean: float = 10.0
    wealth_sd: float = 1.0
    n_initial_returns: int = 2000
    loss_lower: float = 0.90
    loss_upper: float = 0.95
    gain_lower: float = 1.60
    g_safe: float = 1.10
    gamma_plus: tuple[float, float] = (5.0, 30.0)
    gamma_minus: tuple[float, float] = (31.0, 70.0)
    delta_plus: tuple[float, float] = (0.50, 0.70)
    delta_minus: tuple[float, float] = (0.71, 0.90)
    warmup_steps: int = 5
    optimizer: cpt.OptimizerSettings = cpt.DEFAULT_OPTIMIZER

    def replace(self, **kw) -> "FixedParams":
        d = {f: getattr(self, f) for f in self.__dataclass_fields__}
        d.update(kw)
        return FixedParams(**d)


@dataclass(frozen=True)
class SimParams:
    ell: float
    g_upper: float
    beta: float
    theta: float
    alpha: float

    def as_dict(self) -> dict:
        return asdict(self)

    def check_bounds(self) -> None:
        for name, (lo, hi) in PARAMETER_BOUNDS.items():
            v = getattr(self, name)
            if not lo <= v <= hi:
                raise ValueError(f"{name}={v} outside [{lo}, {hi}]")


@dataclass(frozen=True)
class RiskyProject:
    community_id: int
    p_loss: float
    loss_factor: float
    gain_factor: float
    min_investment: float

    @property
    def expected_factor(self) -> float:
        return (1.0 - self.p_loss) * self.gain_factor + self.p_loss * self.loss_factor


@dataclass(frozen=True)
class SafeAsset:
    gain_factor: float = 1.10

    def __post_init__(self):
        if not self.gain_factor > 1:
            raise ValueError("safe asset must have a gain factor above 1")


@dataclass
class AgentProfile:
    id: int
    cpt_params: cpt.CptParams
    attention: float
    update_times: list[int]
    accessible_assets: tuple[int, ...]  # project ids; the safe asset is implied last
    initial_portfolio: np.ndarray
    current_portfolio: np.ndarray


@dataclass
class SimulationResult:
    wealth: np.ndarray  # (N, K+1); column 0 holds initial wealth
    project_returns: np.ndarray  # (P, K) realised factors, 0 when unfunded
    funded: np.ndarray  # (P, K) bool
    projects: list[RiskyProject]
    safe: SafeAsset
    graph: SocialGraph
    communities: CommunityAssignment
    agents: list[AgentProfile]
    params: SimParams
    seed: int | None
    regimes: dict = field(default_factory=dict)

    @property
    def initial_wealth(self) -> np.ndarray:
        return self.wealth[:, 0]

    @property
    def final_wealth(self) -> np.ndarray:
        return self.wealth[:, -1]


def generate_project(ell: float, g_upper: float, community_total_initial_wealth: float, theta: float,
                     seed=None, community_id: int = 0, fixed: FixedParams = FixedParams()) -> RiskyProject:
    if not 0.30 <= ell <= 0.45:
        raise ValueError(f"ell={ell} outside [0.30, 0.45]")
    if not g_upper > fixed.gain_lower:
        raise ValueError(f"g_upper={g_upper} must exceed {fixed.gain_lower}")
    if not 0 < theta < 1:
        raise ValueError(f"theta={theta} outside (0, 1)")
    rng = as_generator(seed)
    p_loss = rng.uniform(ell, 1.0 - ell)
    loss = rng.uniform(fixed.loss_lower, fixed.loss_upper)
    gain = rng.uniform(fixed.gain_lower, g_upper)
    project = RiskyProject(community_id, float(p_loss), float(loss), float(gain),
                           float(theta * community_total_initial_wealth))
    # the parameter bounds guarantee this; see worst-case check in the tests
    assert project.expected_factor >= fixed.g_safe, project
    return project


def project_step_return(p: RiskyProject, pooled_investment: float, seed=None) -> float:
    if pooled_investment < 0:
        raise ValueError("pooled investment must be non-negative")
    if pooled_investment < p.min_investment:
        return 0.0
    u = as_generator(seed).random()
    return p.loss_factor if u < p.p_loss else p.gain_factor


def sample_initial_returns(projects: list[RiskyProject], safe: SafeAsset, m: int, seed=None) -> np.ndarray:
    """(m, P+1) gross factors; funding thresholds are not applied here."""
    if m < 1:
        raise ValueError("m must be at least 1")
    rng = as_generator(seed)
    p_loss = np.array([p.p_loss for p in projects])
    loss = np.array([p.loss_factor for p in projects])
    gain = np.array([p.gain_factor for p in projects])
    u = rng.random((m, len(projects)))
    risky = np.where(u < p_loss, loss, gain)
    return np.column_stack([risky, np.full(m, safe.gain_factor)])


def consume(w, beta: float):
    """Split wealth into (consumed, invested) with invested = beta * w."""
    if not 0 < beta < 1:
        raise ValueError("beta must lie in (0, 1)")
    w = np.asarray(w, dtype=float)
    if np.any(w < 0):
        raise ValueError("wealth must be non-negative")
    invested = beta * w
    consumed = w - invested
    if invested.ndim == 0:
        return float(consumed), float(invested)
    return consumed, invested


StepHook = Callable[[int, np.ndarray], None]


def _draw_cpt(rng: np.random.Generator, fixed: FixedParams) -> cpt.CptParams:
    return cpt.CptParams(
        gamma_plus=float(rng.uniform(*fixed.gamma_plus)),
        gamma_minus=float(rng.uniform(*fixed.gamma_minus)),
        delta_plus=float(rng.uniform(*fixed.delta_plus)),
        delta_minus=float(rng.uniform(*fixed.delta_minus)),
    )


def simulate(params: SimParams, fixed: FixedParams = FixedParams(), seed: int = 0,
             before_step: StepHook | None = None) -> SimulationResult:
    """Run the full model for ``fixed.n_steps`` steps.

    ``before_step(t, w)`` is called at the start of step ``t`` (1-based) with
    the current wealth vector, which it may modify in place; the change is
    recorded in the wealth matrix.
    """
    n, k_steps = fixed.n_agents, fixed.n_steps
    safe = SafeAsset(fixed.g_safe)

    w0 = sample_initial_wealth(n, fixed.wealth_mean, fixed.wealth_sd, stream(seed, "wealth"))
    graph = build_sda_graph(w0, params.alpha, stream(seed, "graph"))
    communities = extended_membership(graph, detect_communities(graph, stream(seed, "communities")))

    n_proj = communities.n_communities
    proj_rng = stream(seed, "projects")
    projects = []
    for c in range(n_proj):
        eligible = communities.eligible_agents(c)
        projects.append(generate_project(params.ell, params.g_upper, float(w0[eligible].sum()), params.theta,
                                         proj_rng, community_id=c, fixed=fixed))
    min_inv = np.array([p.min_investment for p in projects])
    p_loss = np.array([p.p_loss for p in projects])
    loss_f = np.array([p.loss_factor for p in projects])
    gain_f = np.array([p.gain_factor for p in projects])

    initial_net = sample_initial_returns(projects, safe, fixed.n_initial_returns,
                                         stream(seed, "initial_returns")) - 1.0

    agent_rng = stream(seed, "agents")
    opt_rng = stream(seed, "optimizer")
    compressed: dict[tuple, tuple] = {}
    agents = []
    weights = np.zeros((n, n_proj + 1))
    for i in range(n):
        params_i = _draw_cpt(agent_rng, fixed)
        attention = float(agent_rng.uniform(0.0, 1.0))
        times = cpt.sample_update_times(fixed.update_rate, k_steps, agent_rng, fixed.warmup_steps)
        access = communities.extended_membership[i]
        if access not in compressed:
            cols = list(access) + [n_proj]
            compressed[access] = cpt.compress_returns(initial_net[:, cols])
        port, _ = cpt.optimize_compressed(*compressed[access], params_i, opt_rng, fixed.optimizer)
        agents.append(AgentProfile(i, params_i, attention, times, access, port, port.copy()))
        weights[i, list(access)] = port[:-1]
        weights[i, n_proj] = port[-1]

    updates_at: dict[int, list[int]] = {}
    for a in agents:
        for t in a.update_times:
            updates_at.setdefault(t, []).append(a.id)

    outcome_rng = stream(seed, "outcomes")
    wealth = np.empty((n, k_steps + 1))
    wealth[:, 0] = w0
    realised = np.empty((k_steps, n_proj + 1))
    realised[:, n_proj] = safe.gain_factor
    funded = np.zeros((n_proj, k_steps), dtype=bool)
    w = w0.copy()
    for t in range(1, k_steps + 1):
        if before_step is not None:
            before_step(t, w)
            wealth[:, t - 1] = w
        if t > fixed.warmup_steps:
            observed: dict[tuple, tuple] = {}  # agents sharing an access set see the same history
            for i in updates_at.get(t, ()):
                a = agents[i]
                if a.accessible_assets not in observed:
                    cols = list(a.accessible_assets) + [n_proj]
                    observed[a.accessible_assets] = cpt.compress_returns(realised[: t - 1][:, cols] - 1.0)
                observed_opt, _ = cpt.optimize_compressed(*observed[a.accessible_assets], a.cpt_params, opt_rng,
                                                          fixed.optimizer)
                a.current_portfolio = cpt.attention_update(a.initial_portfolio, observed_opt, a.attention)
                weights[i, list(a.accessible_assets)] = a.current_portfolio[:-1]
                weights[i, n_proj] = a.current_portfolio[-1]

        _, invested = consume(w, params.beta)
        pooled = invested @ weights[:, :n_proj]
        draws = outcome_rng.random(n_proj)
        ok = pooled >= min_inv
        factor = np.where(ok, np.where(draws < p_loss, loss_f, gain_f), 0.0)
        funded[:, t - 1] = ok
        realised[t - 1, :n_proj] = factor
        w = invested * (weights @ realised[t - 1])
        wealth[:, t] = w

    return SimulationResult(
        wealth=wealth,
        project_returns=realised[:, :n_proj].T.copy(),
        funded=funded,
        projects=projects,
        safe=safe,
        graph=graph,
        communities=communities,
        agents=agents,
        params=params,
        seed=seed,
    )


def write_result(result: SimulationResult, directory, stem: str = "run", extra: dict | None = None) -> None:
    """Wealth matrix as CSV (rows = agents, cols = steps) plus a JSON-lines metadata record."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    np.savetxt(directory / f"{stem}_wealth.csv", result.wealth, delimiter=",", fmt="%.17g")
    meta = {
        "params": result.params.as_dict(),
        "seed": result.seed,
        "projects": [asdict(p) for p in result.projects],
        "regimes": result.regimes,
    }
    if extra:
        meta.update(extra)
    with open(directory / f"{stem}_meta.jsonl", "w") as fh:
        fh.write(json.dumps(meta, sort_keys=True) + "\n")
