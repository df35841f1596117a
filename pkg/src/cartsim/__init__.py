"""Tumor / CAR T cell population model.

Three populations: tumor cells ``x1``, active CAR T cells ``x2`` and the
non-active CAR T pool ``x3``. The package covers the vector field,
equilibrium analysis, a backstepping controller with its Lyapunov
certificate, and simulation of dosing schedules.
"""

from .control import BacksteppingDesign, Region, design_backstepping, estimate_k, pd_condition, select_xi
from .equilibria import EquilibriumKind, EquilibriumReport, Stability, analyze_equilibria, controlled_equilibrium
from .errors import (
    CartsimError,
    DegenerateParameterError,
    IntegrationError,
    InvalidInputError,
    NegativeStateError,
    PreconditionError,
    StiffnessError,
)
from .integrators import IntegratorConfig
from .model import ControlLaw, ModelParams, State, jacobian, vector_field
from .scenario import Scenario, load, load_bundled, loads
from .simulate import DoseEvent, OutcomeReport, Trajectory, analyze_outcome, integrate

__all__ = [
    "BacksteppingDesign", "Region", "design_backstepping", "estimate_k", "pd_condition", "select_xi",
    "EquilibriumKind", "EquilibriumReport", "Stability", "analyze_equilibria", "controlled_equilibrium",
    "CartsimError", "DegenerateParameterError", "IntegrationError", "InvalidInputError",
    "NegativeStateError", "PreconditionError", "StiffnessError",
    "IntegratorConfig", "ControlLaw", "ModelParams", "State", "jacobian", "vector_field",
    "Scenario", "load", "load_bundled", "loads",
    "DoseEvent", "OutcomeReport", "Trajectory", "analyze_outcome", "integrate",
]
