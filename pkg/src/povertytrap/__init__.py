"""Agent-based poverty-trap model: homophilous networks, community projects and CPT investors."""

from .analysis import gini, sobol_indices
from .cpt_portfolio import CptParams, cpt_utility, optimize_portfolio
from .economy import FixedParams, SimParams, simulate
from .experiments import (InterventionSpec, classify_community, classify_individual, run_ensemble,
                          run_intervention, saltelli_design)

__all__ = [
    "CptParams", "FixedParams", "InterventionSpec", "SimParams", "classify_community", "classify_individual",
    "cpt_utility", "gini", "optimize_portfolio", "run_ensemble", "run_intervention", "saltelli_design",
    "simulate", "sobol_indices",
]
__version__ = "0.1.0"
