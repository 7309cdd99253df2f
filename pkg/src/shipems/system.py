"""Parameter bundle for one ship power system and the derived controller models."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

from .costs import CostParams, DegradationParams, StaticCostModel, build_static_cost_model
from .ems import LambdaCurve, build_lambda
from .plant import Aging, BatteryParams, FuelCellParams, OperatingLimits, fc_power_peak_current


@dataclass(frozen=True)
class ShipSystem:
    fc: FuelCellParams = field(default_factory=FuelCellParams)
    bat: BatteryParams = field(default_factory=BatteryParams)
    limits: OperatingLimits = field(default_factory=OperatingLimits)
    deg: DegradationParams = field(default_factory=DegradationParams)
    costs: CostParams = field(default_factory=CostParams)
    xi_ref: float = 0.5
    p_fc_ref_ratio: float = 0.4  # P_fc_ref as a fraction of P_fc_max
    k_soc: float = 2000.0  # filter SoC gain, kW per unit SoC
    mu_fraction: float = 0.01  # ECMS dynamic cost relative to the degradation coefficient
    mpc_dyn_weight: float = 1.0

    def P_fc_max(self, aging: Aging | str) -> float:
        return self.limits.P_fc_max(aging)

    def P_fc_ref(self, aging: Aging | str) -> float:
        return self.p_fc_ref_ratio * self.P_fc_max(aging)

    def cost_model(self, aging: Aging | str) -> StaticCostModel:
        return _cost_model(self, Aging.parse(aging))

    def lambda_curve(self, aging: Aging | str) -> LambdaCurve:
        return _lambda_curve(self, Aging.parse(aging))

    def kernel_params(self, aging: Aging | str, T_sim: float = 1.0):
        """Flat tuples consumed by the integration kernel."""
        aging = Aging.parse(aging)
        fc, bat, d = self.fc, self.bat, self.deg
        P_max = self.P_fc_max(aging)
        i_top = min(fc.i_rated, fc_power_peak_current(fc, aging))
        fc_t = (fc.E_oc_fc, fc.tafel_voltage, fc.exchange_current, fc.resistance(aging),
                fc.alpha_aux, i_top, fc.N_s_fc, fc.beta_xover, P_max)
        bat_t = (bat.E_oc, bat.R_i_bat, bat.C_bat, bat.I_bat_max, self.limits.SoC_min, self.limits.SoC_max)
        deg_t = (d.p_lo, d.p_hi, d.w_blend, d.dv_lo, d.dv_base, d.dv_hi, d.dyn_coefficient(P_max))
        return fc_t, bat_t, deg_t


@lru_cache(maxsize=64)
def _cost_model(system: ShipSystem, aging: Aging) -> StaticCostModel:
    return build_static_cost_model(system.fc, system.limits, system.deg, system.costs, aging)


@lru_cache(maxsize=64)
def _lambda_curve(system: ShipSystem, aging: Aging) -> LambdaCurve:
    return build_lambda(system.cost_model(aging), system.limits, system.xi_ref, system.P_fc_ref(aging))
