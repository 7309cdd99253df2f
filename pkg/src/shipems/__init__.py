"""Energy management for fuel-cell/battery ship power systems.

Plant and cost models, a dense active-set QP solver, filter/ECMS/MPC
controllers, a gradient-boosted load forecaster and a mission simulator.
"""

from ._kernels import BACKEND as KERNEL_BACKEND
from .costs import CostParams, DegradationParams, build_static_cost_model, degradation_cost_constant
from .plant import Aging, BatteryParams, FuelCellParams, OperatingLimits, calibrate_fc_params
from .qp import QpSettings, QuadraticProgram, solve_qp
from .system import ShipSystem

__version__ = "0.1.0"

__all__ = [
    "KERNEL_BACKEND", "Aging", "BatteryParams", "CostParams", "DegradationParams", "FuelCellParams",
    "OperatingLimits", "QpSettings", "QuadraticProgram", "ShipSystem", "build_static_cost_model",
    "calibrate_fc_params", "degradation_cost_constant", "solve_qp", "__version__",
]
