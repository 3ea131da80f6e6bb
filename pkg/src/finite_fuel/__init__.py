"""Finite-fuel irreversible investment: simulation, closed-form policies and optimality checks."""

from .dp import build_lattice, dp_solve, make_fuel_grid, oracle_gap
from .errors import (BudgetExceeded, FuelError, InfeasibleInitialization, IntegrabilityViolation,
                     InvalidArgument, TailBoundError, UnstableDiscretization, UnsupportedModel)
from .estimate import Estimate, MonteCarlo
from .functionals import (KktSettings, MarkovState, kkt_report, lagrange_density, net_profit,
                          realized_value, snell_at_optimum, supergradient, tracking_cost)
from .nested import NestedBudget
from .paths import (AffineDeterministic, ArithmeticBrownian, Constant, GeometricBrownian,
                    RunningMaxGeometric, make_grid, simulate_fuel, simulate_shock)
from .scenarios import OPTIMAL, PERTURBATIONS, PolicyRule, Scenario, default_scenario, realize

__version__ = "0.1.0"

__all__ = [
    "AffineDeterministic", "ArithmeticBrownian", "BudgetExceeded", "Constant", "Estimate",
    "FuelError", "GeometricBrownian", "InfeasibleInitialization", "IntegrabilityViolation",
    "InvalidArgument", "KktSettings", "MarkovState", "MonteCarlo", "NestedBudget", "OPTIMAL",
    "PERTURBATIONS", "PolicyRule", "RunningMaxGeometric", "Scenario", "TailBoundError",
    "UnstableDiscretization", "UnsupportedModel", "build_lattice", "default_scenario",
    "dp_solve", "kkt_report", "lagrange_density", "make_fuel_grid", "make_grid", "net_profit",
    "oracle_gap", "realize", "realized_value", "simulate_fuel", "simulate_shock",
    "snell_at_optimum", "supergradient", "tracking_cost",
]
