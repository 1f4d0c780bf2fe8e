"""PQ-flexibility aggregation at HV-EHV interconnections via AC-PTDF linear programs."""

__version__ = "0.1.0"

from .grid_model import (Branch, Bus, CaseError, GridCase, NodeFlexibility, OperatingLimits,  # noqa: E402
                         build_admittance, load_grid_case, read_grid_case, validate_case)
from .powerflow import ConvergenceError, PowerFlowSolution, solve_newton_raphson  # noqa: E402
from .sensitivity import SensitivityBundle, compute_sensitivities  # noqa: E402
from .lp_core import LinearProgram, LPSolution, assemble_for_lp, solve_lp  # noqa: E402
from .for_engine import (FORBoundary, Scenario, ScenarioConfig, extract_boundaries,  # noqa: E402
                         load_scenario_config, run_for_determination)

__all__ = [
    "Branch", "Bus", "CaseError", "GridCase", "NodeFlexibility", "OperatingLimits", "build_admittance",
    "load_grid_case", "read_grid_case", "validate_case", "ConvergenceError", "PowerFlowSolution",
    "solve_newton_raphson", "SensitivityBundle", "compute_sensitivities", "LinearProgram", "LPSolution",
    "assemble_for_lp", "solve_lp", "FORBoundary", "Scenario", "ScenarioConfig", "extract_boundaries",
    "load_scenario_config", "run_for_determination",
]
