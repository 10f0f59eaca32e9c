"""Truthful mechanisms for capacitated facility location on a line, with exact
solvers, manipulation audits and approximation-ratio checks."""

from capflp.model import (
    AgentProfile,
    CostReport,
    EquiCap,
    Placement,
    TwoAbundant,
    normalize,
    profile,
    social_cost,
    validate_placement,
)
from capflp.mechanisms import MechanismId, bind, place
from capflp.solvers import Objective, brute_force_optimal, optimal

__all__ = [
    "AgentProfile",
    "CostReport",
    "EquiCap",
    "MechanismId",
    "Objective",
    "Placement",
    "TwoAbundant",
    "bind",
    "brute_force_optimal",
    "normalize",
    "optimal",
    "place",
    "profile",
    "social_cost",
    "validate_placement",
]
