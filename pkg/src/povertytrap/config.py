"""Run configuration: flat ``key = value`` files, presets and provenance digests."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, fields, replace
from pathlib import Path

from .economy import PARAMETER_BOUNDS, FixedParams
from .experiments import InterventionSpec

_TABLE1 = FixedParams()

# keys that change where or how fast things run, not what they compute
_NON_SEMANTIC = {"workers", "out"}


@dataclass(frozen=True)
class RunConfig:
    preset: str = "desk"
    master_seed: int | None = None
    workers: int = 1
    out: str = "out"
    unsafe: bool = False

    n_agents: int = 225
    n_steps: int = 100
    update_rate: float = _TABLE1.update_rate
    n_initial_returns: int = _TABLE1.n_initial_returns
    warmup_steps: int = _TABLE1.warmup_steps
    wealth_mean: float = _TABLE1.wealth_mean
    wealth_sd: float = _TABLE1.wealth_sd
    loss_lower: float = _TABLE1.loss_lower
    loss_upper: float = _TABLE1.loss_upper
    gain_lower: float = _TABLE1.gain_lower
    g_safe: float = _TABLE1.g_safe
    gamma_plus: tuple[float, float] = _TABLE1.gamma_plus
    gamma_minus: tuple[float, float] = _TABLE1.gamma_minus
    delta_plus: tuple[float, float] = _TABLE1.delta_plus
    delta_minus: tuple[float, float] = _TABLE1.delta_minus

    ell: tuple[float, float] = PARAMETER_BOUNDS["ell"]
    g_upper: tuple[float, float] = PARAMETER_BOUNDS["g_upper"]
    beta: tuple[float, float] = PARAMETER_BOUNDS["beta"]
    theta: tuple[float, float] = PARAMETER_BOUNDS["theta"]
    alpha: tuple[float, float] = PARAMETER_BOUNDS["alpha"]

    base_n: int = 64
    reps: int = 5

    inject_step: int = 100
    inject_amount: float = 10.0
    target_count: int = 100
    extra_steps: int = 100
    intervention_reps: int = 20

    sobol_bootstrap: int = 500

    def fixed(self) -> FixedParams:
        return _TABLE1.replace(
            n_agents=self.n_agents, n_steps=self.n_steps, update_rate=self.update_rate,
            n_initial_returns=self.n_initial_returns, warmup_steps=self.warmup_steps,
            wealth_mean=self.wealth_mean, wealth_sd=self.wealth_sd, loss_lower=self.loss_lower,
            loss_upper=self.loss_upper, gain_lower=self.gain_lower, g_safe=self.g_safe,
            gamma_plus=self.gamma_plus, gamma_minus=self.gamma_minus,
            delta_plus=self.delta_plus, delta_minus=self.delta_minus,
        )

    def bounds(self) -> dict[str, tuple[float, float]]:
        return {k: getattr(self, k) for k in PARAMETER_BOUNDS}

    def intervention(self) -> InterventionSpec:
        return InterventionSpec(self.inject_step, self.inject_amount, self.target_count,
                                self.extra_steps, self.intervention_reps)

    def validate(self) -> None:
        if self.base_n < 1 or self.base_n & (self.base_n - 1):
            raise ValueError(f"base_n={self.base_n} must be a power of 2")
        if self.reps < 1 or self.workers < 1 or self.n_agents < 2 or self.n_steps < 1:
            raise ValueError("reps, workers, n_steps must be >= 1 and n_agents >= 2")
        for name in ("gamma_plus", "gamma_minus", "delta_plus", "delta_minus", *PARAMETER_BOUNDS):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ValueError(f"{name}: lower bound {lo} exceeds upper bound {hi}")
        if self.unsafe:
            return
        table1 = {**PARAMETER_BOUNDS, **{k: getattr(_TABLE1, k)
                                         for k in ("gamma_plus", "gamma_minus", "delta_plus", "delta_minus")}}
        for name, (lo, hi) in table1.items():
            v_lo, v_hi = getattr(self, name)
            if v_lo < lo or v_hi > hi:
                raise ValueError(f"{name}=({v_lo}, {v_hi}) leaves the Table 1 range ({lo}, {hi}); "
                                 "set unsafe = true to allow")
        for name in ("loss_lower", "loss_upper", "gain_lower", "g_safe"):
            if getattr(self, name) != getattr(_TABLE1, name):
                raise ValueError(f"{name} differs from Table 1; set unsafe = true to allow")

    def canonical(self) -> str:
        lines = []
        for f in fields(self):
            if f.name in _NON_SEMANTIC:
                continue
            lines.append(f"{f.name}={_format(getattr(self, f.name))}")
        return "\n".join(lines) + "\n"

    def digest(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()[:16]

    def provenance(self) -> dict:
        return {"config_digest": self.digest(), "master_seed": self.master_seed}


PRESETS = {
    "desk": {"n_agents": 225, "base_n": 64, "reps": 5},
    "paper": {"n_agents": 1225, "base_n": 1024, "reps": 20},
}


def _format(v) -> str:
    if isinstance(v, tuple):
        return ",".join(repr(float(x)) for x in v)
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _parse(name: str, raw: str):
    kinds = {f.name: f.type for f in fields(RunConfig)}
    if name not in kinds:
        raise ValueError(f"unknown config key {name!r}")
    kind = kinds[name]
    raw = raw.strip()
    if kind.startswith("tuple"):
        parts = [float(x) for x in raw.split(",")]
        if len(parts) != 2:
            raise ValueError(f"{name} needs two comma-separated numbers")
        return tuple(parts)
    if kind == "bool":
        if raw.lower() not in ("true", "false", "1", "0", "yes", "no"):
            raise ValueError(f"{name} must be true or false")
        return raw.lower() in ("true", "1", "yes")
    if kind.startswith("int"):
        return None if raw.lower() == "none" else int(raw)
    if kind == "float":
        return float(raw)
    return raw


def parse_config_text(text: str) -> dict:
    out = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ValueError(f"line {lineno}: expected key = value")
        key = key.strip()
        try:
            out[key] = _parse(key, value)
        except ValueError as exc:
            raise ValueError(f"line {lineno}: {exc}") from None
    return out


def load_config(path=None, preset: str | None = None, **overrides) -> RunConfig:
    """Preset, then file values, then explicit overrides (``None`` means unset)."""
    values = {}
    if path is not None:
        values = parse_config_text(Path(path).read_text())
    name = preset or values.get("preset", "desk")
    if name not in PRESETS:
        raise ValueError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    cfg = replace(RunConfig(preset=name), **PRESETS[name])
    cfg = replace(cfg, **{k: v for k, v in values.items() if k != "preset"})
    cfg = replace(cfg, **{k: v for k, v in overrides.items() if v is not None})
    cfg.validate()
    return cfg
