"""Fuel cell and battery models plus the two-state control model.

Units throughout: power in kW, current in A, voltage in V, energy in kWh,
time in s unless a name says otherwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum

import numpy as np


class Aging(str, Enum):
    BOL = "bol"
    EOL = "eol"

    @classmethod
    def parse(cls, value: "Aging | str") -> "Aging":
        if isinstance(value, Aging):
            return value
        return cls(str(value).lower())


class DomainError(ValueError):
    """Argument outside the domain of a component model."""


class InfeasiblePowerError(ValueError):
    """Requested power cannot be delivered by the source."""


class CalibrationError(RuntimeError):
    def __init__(self, message: str, residuals: dict | None = None):
        super().__init__(message)
        self.residuals = residuals or {}


@dataclass(frozen=True)
class FuelCellParams:
    """Generic PEM stack model (open-circuit + Tafel + ohmic) with system losses.

    ``i_rated`` is the rated stack current, i.e. the top of the admissible
    operating range. ``E_oc_fc``, ``alpha_aux`` and ``i_rated`` are outputs of
    :func:`calibrate_fc_params`; the defaults below are the calibrated values
    for the 4150 kW / 0.615 V-per-cell targets.
    """

    E_oc_fc: float = 785.8818717012136
    N_s_fc: float = 670.0
    E_ts: float = 0.06
    I_0: float = 1.0
    T_d: float = 1.0
    R_i_fc_bol: float = 0.0232
    R_i_fc_eol: float = 0.0280
    alpha_aux: float = 0.04966983209269893
    beta_xover: float = 0.01
    i_rated: float = 9538.194444444438

    def __post_init__(self):
        for name in ("E_oc_fc", "N_s_fc", "E_ts", "I_0", "T_d", "R_i_fc_bol", "R_i_fc_eol", "i_rated"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be strictly positive")
        if self.R_i_fc_eol < self.R_i_fc_bol:
            raise ValueError("EOL resistance must not be below BOL resistance")
        if not 0 <= self.alpha_aux < 1:
            raise ValueError("alpha_aux must lie in [0, 1)")
        if not 0 <= self.beta_xover < 0.2:
            raise ValueError("beta_xover must lie in [0, 0.2)")

    def resistance(self, aging: Aging | str) -> float:
        return self.R_i_fc_eol if Aging.parse(aging) is Aging.EOL else self.R_i_fc_bol

    @property
    def tafel_voltage(self) -> float:
        """Stack-level Tafel slope N_s * E_ts (V)."""
        return self.N_s_fc * self.E_ts

    @property
    def exchange_current(self) -> float:
        return self.N_s_fc * self.I_0


@dataclass(frozen=True)
class BatteryParams:
    C_bat: float = 3125.0
    R_i_bat: float = 0.0024
    E_oc: float = 400.0
    I_bat_max: float = 9400.0

    def __post_init__(self):
        for name in ("C_bat", "R_i_bat", "E_oc", "I_bat_max"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be strictly positive")
        if not self.E_oc**2 / (4 * self.R_i_bat) > self.E_oc * self.I_bat_max:
            raise ValueError("discharge limit exceeds the source model's power maximum")

    @property
    def energy_kwh(self) -> float:
        return self.E_oc * self.C_bat / 1000.0

    @property
    def p_bat_max(self) -> float:
        """Battery power at the current limit under the flat-voltage model (kW)."""
        return self.E_oc * self.I_bat_max / 1000.0

    @property
    def loss_coeff(self) -> float:
        """k such that ohmic loss in kW equals k * p_bat**2 (p_bat in kW)."""
        return 1000.0 * self.R_i_bat / self.E_oc**2


@dataclass(frozen=True)
class OperatingLimits:
    P_fc_max_bol: float = 4150.0
    eol_power_ratio: float = 0.9
    Pdot_fc_max: float = 212.5
    SoC_min: float = 0.2
    SoC_max: float = 0.8

    def __post_init__(self):
        if not self.P_fc_max_bol > 0 or not self.Pdot_fc_max > 0:
            raise ValueError("power limits must be positive")
        if not 0 < self.eol_power_ratio <= 1:
            raise ValueError("eol_power_ratio must lie in (0, 1]")
        if not 0 < self.SoC_min < self.SoC_max <= 1:
            raise ValueError("need 0 < SoC_min < SoC_max <= 1")

    def P_fc_max(self, aging: Aging | str) -> float:
        if Aging.parse(aging) is Aging.EOL:
            return self.eol_power_ratio * self.P_fc_max_bol
        return self.P_fc_max_bol


@dataclass(frozen=True)
class SystemState:
    p_fc: float
    xi: float


@dataclass(frozen=True)
class StateSpaceModel:
    """x+ = A x + B u + B_d d with x = (p_fc [kW], xi [-]), u in kW/s, d in kW."""

    A: np.ndarray
    B: np.ndarray
    B_d: np.ndarray
    T_s: float

    @classmethod
    def from_battery(cls, bat: BatteryParams, T_s: float) -> "StateSpaceModel":
        # SoC change per kW of battery power held for one step
        kappa = 1000.0 * T_s / (bat.E_oc * bat.C_bat * 3600.0)
        A = np.array([[1.0, 0.0], [kappa, 1.0]])
        B = np.array([T_s, kappa * T_s / 2.0])
        B_d = np.array([0.0, -kappa])
        for arr in (A, B, B_d):
            arr.setflags(write=False)
        return cls(A=A, B=B, B_d=B_d, T_s=float(T_s))


# -- fuel cell -----------------------------------------------------------------


def _activation(i_fc: float, fc: FuelCellParams) -> float:
    return fc.tafel_voltage * math.log(i_fc / fc.exchange_current)


def fc_voltage(i_fc: float, fc: FuelCellParams, aging: Aging | str = Aging.BOL) -> float:
    """Steady-state stack voltage on the polarization curve."""
    if not i_fc > 0:
        raise DomainError(f"stack current must be positive, got {i_fc}")
    return fc.E_oc_fc - _activation(i_fc, fc) - fc.resistance(aging) * i_fc


def fc_voltage_lagged(
    i_fc: float,
    fc: FuelCellParams,
    aging: Aging | str,
    activation_prev: float,
    dt: float,
) -> tuple[float, float]:
    """Stack voltage with the activation term passed through a T_d/3 first-order lag.

    Returns ``(voltage, activation_state)``; feed the state back on the next call.
    """
    if not i_fc > 0:
        raise DomainError(f"stack current must be positive, got {i_fc}")
    target = _activation(i_fc, fc)
    w = 1.0 - math.exp(-dt / (fc.T_d / 3.0))
    act = activation_prev + w * (target - activation_prev)
    return fc.E_oc_fc - act - fc.resistance(aging) * i_fc, act


def fc_net_power(i_fc: float, fc: FuelCellParams, aging: Aging | str = Aging.BOL) -> float:
    """Net delivered power (stack minus auxiliaries) in kW."""
    return (1.0 - fc.alpha_aux) * fc_voltage(i_fc, fc, aging) * i_fc / 1000.0


def fc_power_peak_current(fc: FuelCellParams, aging: Aging | str = Aging.BOL) -> float:
    """Current at which the unconstrained net-power curve peaks."""
    A = fc.tafel_voltage
    R = fc.resistance(aging)
    i0 = fc.exchange_current

    def slope(i):
        return fc.E_oc_fc - A * math.log(i / i0) - A - 2.0 * R * i

    lo, hi = 1e-9, fc.E_oc_fc / R + i0
    while slope(hi) > 0:
        hi *= 2.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if slope(mid) > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def fc_max_net_power(fc: FuelCellParams, aging: Aging | str = Aging.BOL) -> float:
    """Largest net power over the admissible current range (0, i_rated]."""
    i_top = min(fc.i_rated, fc_power_peak_current(fc, aging))
    return fc_net_power(i_top, fc, aging)


def fc_current_from_power(p_net: float, fc: FuelCellParams, aging: Aging | str = Aging.BOL) -> float:
    """Invert the net-power curve on its ascending branch.

    Returns 0 for ``p_net == 0``. Raises :class:`InfeasiblePowerError` above the
    achievable maximum.
    """
    from ._kernels import fc_current_scalar

    if p_net < 0:
        raise DomainError(f"net power must be non-negative, got {p_net}")
    aging = Aging.parse(aging)
    i_top = min(fc.i_rated, fc_power_peak_current(fc, aging))
    p_top = fc_net_power(i_top, fc, aging)
    if p_net > p_top * (1 + 1e-12):
        raise InfeasiblePowerError(f"{p_net:.3f} kW exceeds achievable {p_top:.3f} kW")
    if p_net == 0:
        return 0.0
    return fc_current_scalar(
        min(p_net, p_top), fc.E_oc_fc, fc.tafel_voltage, fc.exchange_current,
        fc.resistance(aging), fc.alpha_aux, i_top,
    )


@dataclass(frozen=True)
class CalibrationTargets:
    P_fc_max_bol: float = 4150.0
    P_fc_max_eol: float = 3735.0
    v_cell_min: float = 0.615


def calibrate_fc_params(
    targets: CalibrationTargets = CalibrationTargets(),
    base: FuelCellParams = FuelCellParams(),
) -> tuple[FuelCellParams, dict]:
    """Pin ``E_oc_fc``, ``alpha_aux`` and ``i_rated`` to the rated-power targets.

    At rated current the EOL stack must deliver ``P_eol / P_bol`` of the BOL
    power with ``v_cell_min`` per cell. The BOL/EOL difference is purely ohmic,
    so the rated current, open-circuit voltage and auxiliary fraction follow in
    closed form. Returns the calibrated parameters and a JSON-ready report.
    """
    t = targets
    if not (t.P_fc_max_bol > 0 and t.P_fc_max_eol > 0 and t.v_cell_min > 0):
        raise CalibrationError("targets must be positive")
    if t.P_fc_max_eol >= t.P_fc_max_bol:
        raise CalibrationError("EOL power target must be below the BOL target")
    ratio = t.P_fc_max_eol / t.P_fc_max_bol
    dR = base.R_i_fc_eol - base.R_i_fc_bol
    if not dR > 0:
        raise CalibrationError("EOL resistance must exceed BOL resistance to calibrate an aging ratio")

    v_eol = base.N_s_fc * t.v_cell_min
    # dR * i = (1 - ratio) * v_bol and v_bol = v_eol + dR * i
    i_rated = (1.0 - ratio) * v_eol / (ratio * dR)
    v_bol = v_eol + dR * i_rated
    E_oc = v_eol + base.tafel_voltage * math.log(i_rated / base.exchange_current) + base.R_i_fc_eol * i_rated
    alpha = 1.0 - 1000.0 * t.P_fc_max_bol / (v_bol * i_rated)

    residuals = {"i_rated": i_rated, "E_oc_fc": E_oc, "alpha_aux": alpha}
    if not 0 <= alpha < 1:
        raise CalibrationError(
            f"no auxiliary fraction in [0, 1) reproduces the targets (alpha = {alpha:.4f}); "
            "adjust N_s_fc", residuals,
        )
    params = replace(base, E_oc_fc=E_oc, alpha_aux=alpha, i_rated=i_rated)
    if fc_power_peak_current(params, Aging.EOL) < i_rated:
        raise CalibrationError("rated current lies beyond the EOL power peak", residuals)

    p_bol = fc_max_net_power(params, Aging.BOL)
    p_eol = fc_max_net_power(params, Aging.EOL)
    v_cell = fc_voltage(i_rated, params, Aging.EOL) / params.N_s_fc
    report = {
        "E_oc_fc": E_oc,
        "alpha_aux": alpha,
        "i_rated": i_rated,
        "achieved": {"P_fc_max_bol": p_bol, "P_fc_max_eol": p_eol, "v_cell_min": v_cell},
        "targets": {"P_fc_max_bol": t.P_fc_max_bol, "P_fc_max_eol": t.P_fc_max_eol, "v_cell_min": t.v_cell_min},
        "relative_error": {
            "P_fc_max_bol": p_bol / t.P_fc_max_bol - 1.0,
            "P_fc_max_eol": p_eol / t.P_fc_max_eol - 1.0,
            "v_cell_min": v_cell / t.v_cell_min - 1.0,
        },
    }
    return params, report


# -- battery ---------------------------------------------------------------------


def battery_current(p_bat: float, bat: BatteryParams, mode: str = "exact") -> float:
    """Battery current in A for power ``p_bat`` in kW (positive = discharge)."""
    if mode == "linear":
        return 1000.0 * p_bat / bat.E_oc
    if mode != "exact":
        raise ValueError(f"unknown battery current mode {mode!r}")
    half = bat.E_oc / (2.0 * bat.R_i_bat)
    disc = half * half - 1000.0 * p_bat / bat.R_i_bat
    if disc < 0:
        raise InfeasiblePowerError(f"discharge power {p_bat:.1f} kW beyond the source maximum")
    return half - math.sqrt(disc)


def step_state(x: SystemState, u: float, d: float, m: StateSpaceModel) -> SystemState:
    vec = m.A @ np.array([x.p_fc, x.xi]) + m.B * u + m.B_d * d
    return SystemState(p_fc=float(vec[0]), xi=float(vec[1]))


def implied_battery_power(x: SystemState, u: float, d: float, T_s: float) -> float:
    """Battery power balancing load ``d`` over a step with FC gradient ``u``."""
    return d - x.p_fc - 0.5 * T_s * u
