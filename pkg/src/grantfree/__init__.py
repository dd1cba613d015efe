"""Optimal preamble length for grant-free random access with massive MIMO."""

from .analytic import (
    DomainError,
    SystemConfig,
    ase_derivatives,
    asymptotic_sinr,
    average_se,
    collision_free_prob,
    p1_stationary_point,
    spectral_efficiency,
)
from .montecarlo import CampaignSummary, run_campaign
from .optimizer import OptimumReport, grid_oracle, optimize_grant_free, optimize_granted

__all__ = [
    "CampaignSummary",
    "DomainError",
    "OptimumReport",
    "SystemConfig",
    "ase_derivatives",
    "asymptotic_sinr",
    "average_se",
    "collision_free_prob",
    "grid_oracle",
    "optimize_grant_free",
    "optimize_granted",
    "p1_stationary_point",
    "run_campaign",
    "spectral_efficiency",
]
