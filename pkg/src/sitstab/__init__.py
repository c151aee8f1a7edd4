"""Feedback stabilization of a sterile-insect release model.

Submodules:

model
    parameters, vector fields, offspring numbers, equilibria
controllers
    constant, backstepping and linear release laws
integrate
    fixed-step RK4 with intervention time and cost
certificates
    Lyapunov functions, decay rates and the invariant set
experiments
    scenarios, comparison tables, robustness and stability evidence
io
    YAML run documents and CSV files
"""

from .controllers import Backstepping, Constant, LinearTotalMales, LinearWildMales
from .integrate import IntegratorConfig, Trajectory, control_cost, detect_intervention_time, simulate
from .model import TABLE1, ModelParams, persistence_equilibrium

__all__ = [
    "ModelParams",
    "TABLE1",
    "persistence_equilibrium",
    "Constant",
    "Backstepping",
    "LinearTotalMales",
    "LinearWildMales",
    "IntegratorConfig",
    "Trajectory",
    "simulate",
    "detect_intervention_time",
    "control_cost",
]

__version__ = "0.1.0"
