"""Coordinated home energy management.

Deferrable appliances are scheduled by finite-horizon dynamic programming;
residences coordinate through a consensus-subgradient dual method so that the
neighborhood load tracks the retailer's day-ahead supply.
"""

from ._validation import ContractError, InputError, ScenarioParseError
from .appliance import ApplianceSpec, ApplianceState, LoadProfile, OperationMode, RequestModel
from .coordinator import CoHEMParams, CommGraph, metropolis_weights, run_algorithm1
from .estimators import CoHEMScheduler, JointProcurementScheduler, SelfishHEM, UnscheduledBaseline
from .market import PriceSet, SupplyPlan, deviation_cost, realtime_cost
from .mdp import PolicyTable, brute_force_policy, solve_policy
from .scenario import Neighborhood, Residence, ScenarioConfig, load_scenario, save_scenario, synthesize

__version__ = "0.1.0"

__all__ = [
    "ApplianceSpec",
    "ApplianceState",
    "CoHEMParams",
    "CoHEMScheduler",
    "CommGraph",
    "ContractError",
    "InputError",
    "JointProcurementScheduler",
    "LoadProfile",
    "Neighborhood",
    "OperationMode",
    "PolicyTable",
    "PriceSet",
    "RequestModel",
    "Residence",
    "ScenarioConfig",
    "ScenarioParseError",
    "SelfishHEM",
    "SupplyPlan",
    "UnscheduledBaseline",
    "brute_force_policy",
    "deviation_cost",
    "load_scenario",
    "metropolis_weights",
    "realtime_cost",
    "run_algorithm1",
    "save_scenario",
    "solve_policy",
    "synthesize",
]
