"""Simulator for frugal online incentive mechanisms in mobile crowd sensing."""

from .model import AuctionOutcome, DeclaredProfile, UserProfile, declare_truthfully, utility
from .mechanisms import (HeteroOMG, HeteroOMZ, HomoOMZ, MechanismSpec, build_stage_schedule,
                         hetero_omg, hetero_omz, homo_omz, make_mechanism)
from .generators import Dist, InstanceConfig, generate_instance
from .baselines import offline_optimal, random_baseline_average
from .metrics import frugality_report
from .harness import deviation_sweep, run_experiment

__all__ = [
    "AuctionOutcome", "DeclaredProfile", "UserProfile", "declare_truthfully", "utility",
    "HeteroOMG", "HeteroOMZ", "HomoOMZ", "MechanismSpec", "build_stage_schedule",
    "hetero_omg", "hetero_omz", "homo_omz", "make_mechanism",
    "Dist", "InstanceConfig", "generate_instance", "offline_optimal", "random_baseline_average",
    "frugality_report", "deviation_sweep", "run_experiment",
]
