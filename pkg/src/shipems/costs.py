"""Hydrogen and degradation models, their convex quadratic fits, euro pricing.

Degradation is counted in microvolts of per-cell voltage loss.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .plant import (
    Aging,
    DomainError,
    FuelCellParams,
    OperatingLimits,
    fc_current_from_power,
)

M_H2 = 2.016e-3  # kg/mol
FARADAY = 96485.0  # C/mol


class SingularFitError(ValueError):
    """Too few distinct abscissae for a quadratic fit."""


@dataclass(frozen=True)
class DegradationParams:
    p_lo: float = 0.2
    p_hi: float = 0.8
    dv_lo: float = 8.6
    dv_hi: float = 10.0
    dv_base: float = 2.0
    dv_dyn: float = 9.5
    dt_dyn: float = 10.0
    w_blend: float = 0.05

    def __post_init__(self):
        if not 0 < self.p_lo < self.p_hi < 1:
            raise ValueError("need 0 < p_lo < p_hi < 1")
        if min(self.dv_lo, self.dv_hi, self.dv_base, self.dv_dyn) < 0:
            raise ValueError("degradation rates must be non-negative")
        if self.dv_lo < self.dv_base or self.dv_hi < self.dv_base:
            raise ValueError("region rates must not be below the base rate")
        if not self.dt_dyn > 0:
            raise ValueError("dt_dyn must be positive")
        if not 0 <= self.w_blend < min(self.p_lo, (self.p_hi - self.p_lo) / 2, 1 - self.p_hi):
            raise ValueError("blend bands must not overlap each other or the range ends")

    def dyn_coefficient(self, P_fc_max: float) -> float:
        """uV per (kW/s)^2 per second of ramping."""
        return self.dt_dyn * self.dv_dyn / P_fc_max**2


@dataclass(frozen=True)
class CostParams:
    """Euro prices. ``V_fc_min`` is the total stack voltage at rated current at EOL.

    ``c_deg`` (EUR per uV of cell voltage loss) is derived from the other fields
    with the rated BOL power ``P_fc_rated``.
    """

    c_h2: float = 8.0
    c_fc_capex: float = 1500.0
    r_fc_stack: float = 0.5
    r_eol: float = 0.1
    V_fc_min: float = 670.0 * 0.615
    N_s: float = 670.0
    P_fc_rated: float = 4150.0
    c_deg: float = field(init=False)

    def __post_init__(self):
        for name in ("c_h2", "c_fc_capex", "r_eol", "V_fc_min", "N_s", "P_fc_rated"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.r_fc_stack < 0:
            raise ValueError("r_fc_stack must be non-negative")
        object.__setattr__(self, "c_deg", degradation_cost_constant(self, self.P_fc_rated))


def degradation_cost_constant(c: CostParams, P_fc_max: float) -> float:
    """Stack replacement cost share per microvolt of cell voltage loss (EUR/uV)."""
    eur_per_volt = c.r_fc_stack * c.c_fc_capex * P_fc_max * c.N_s / (c.r_eol * c.V_fc_min)
    return eur_per_volt * 1e-6


def h2_mass_rate(i_fc, fc: FuelCellParams):
    """Hydrogen consumption in kg/h including crossover losses (Faraday's law)."""
    i = np.asarray(i_fc, dtype=float)
    if np.any(i < 0):
        raise DomainError("stack current must be non-negative")
    rate = 3600.0 * fc.N_s_fc * i * M_H2 / (2.0 * FARADAY) * (1.0 + fc.beta_xover)
    return float(rate) if rate.ndim == 0 else rate


def static_degradation_rate(p_fc, P_fc_max: float, d: DegradationParams, *, tol: float = 1e-9):
    """Static voltage decay (uV/h) with linear transitions around the region limits."""
    p = np.asarray(p_fc, dtype=float)
    if np.any(p < -tol * P_fc_max) or np.any(p > P_fc_max * (1 + tol)):
        raise DomainError("power outside [0, P_fc_max]")
    x = p / P_fc_max
    w = d.w_blend
    if w > 0:
        xs = [d.p_lo - w, d.p_lo + w, d.p_hi - w, d.p_hi + w]
        ys = [d.dv_lo, d.dv_base, d.dv_base, d.dv_hi]
        rate = np.interp(x, xs, ys)
    else:
        rate = np.where(x < d.p_lo, d.dv_lo, np.where(x > d.p_hi, d.dv_hi, d.dv_base))
    return float(rate) if rate.ndim == 0 else rate


def dynamic_degradation_rate(pdot_fc, P_fc_max: float, d: DegradationParams):
    """Voltage decay rate (uV/h) caused by a power gradient ``pdot_fc`` in kW/s."""
    pdot = np.asarray(pdot_fc, dtype=float)
    rate = 3600.0 * d.dyn_coefficient(P_fc_max) * pdot**2
    return float(rate) if rate.ndim == 0 else rate


@dataclass(frozen=True)
class QuadraticCurve:
    a: float
    b: float
    c: float

    def __post_init__(self):
        if self.a < 0:
            raise ValueError("quadratic curve must be convex (a >= 0)")

    def __call__(self, p):
        p = np.asarray(p, dtype=float)
        out = (self.a * p + self.b) * p + self.c
        return float(out) if out.ndim == 0 else out

    def derivative(self, p):
        p = np.asarray(p, dtype=float)
        out = 2.0 * self.a * p + self.b
        return float(out) if out.ndim == 0 else out

    def scaled(self, k: float) -> "QuadraticCurve":
        return QuadraticCurve(k * self.a, k * self.b, k * self.c)

    def __add__(self, other: "QuadraticCurve") -> "QuadraticCurve":
        return QuadraticCurve(self.a + other.a, self.b + other.b, self.c + other.c)


def fit_convex_quadratic(p, y) -> QuadraticCurve:
    """Least-squares quadratic with the leading coefficient constrained to a >= 0.

    The objective is convex in (a, b, c), so if the free fit is concave the
    constrained optimum lies on a = 0 and an affine refit gives it.
    """
    p = np.asarray(p, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if p.shape != y.shape:
        raise ValueError("abscissae and ordinates differ in length")
    if np.unique(p).size < 3:
        raise SingularFitError("need at least three distinct abscissae")
    # centre and scale for conditioning, then map back
    m, s = p.mean(), np.ptp(p)
    x = (p - m) / s
    a_s, b_s, c_s = np.linalg.lstsq(np.vander(x, 3), y, rcond=None)[0]
    if a_s < 0:
        b_s, c_s = np.linalg.lstsq(np.vander(x, 2), y, rcond=None)[0]
        a_s = 0.0
    a = a_s / s**2
    b = b_s / s - 2.0 * a_s * m / s**2
    c = c_s - b_s * m / s + a_s * m**2 / s**2
    return QuadraticCurve(float(max(a, 0.0)), float(b), float(c))


@dataclass(frozen=True)
class StaticCostModel:
    """Quadratic surrogates over [0, P_fc_max] used by the optimizing controllers.

    ``total`` is in EUR/h: ``c_h2 * h2_fit + c_deg * deg_fit``.
    """

    h2_fit: QuadraticCurve
    deg_fit: QuadraticCurve
    total: QuadraticCurve
    aging: Aging
    P_fc_max: float
    c_h2: float
    c_deg: float

    def cost_rate(self, p):
        return self.total(p)

    def marginal(self, p):
        """d(total)/dp in EUR/kWh."""
        return self.total.derivative(p)

    def to_dict(self) -> dict:
        return {
            "aging": self.aging.value,
            "P_fc_max_kw": self.P_fc_max,
            "c_h2_eur_per_kg": self.c_h2,
            "c_deg_eur_per_uv": self.c_deg,
            "h2_kg_per_h": asdict(self.h2_fit),
            "deg_uv_per_h": asdict(self.deg_fit),
            "total_eur_per_h": asdict(self.total),
        }


def build_static_cost_model(
    fc: FuelCellParams,
    limits: OperatingLimits,
    d: DegradationParams,
    c: CostParams,
    aging: Aging | str = Aging.BOL,
    n_grid: int = 101,
) -> StaticCostModel:
    aging = Aging.parse(aging)
    P_max = limits.P_fc_max(aging)
    grid = np.linspace(0.0, P_max, n_grid)
    h2 = np.array([h2_mass_rate(fc_current_from_power(p, fc, aging), fc) for p in grid])
    deg = static_degradation_rate(grid, P_max, d)
    h2_fit = fit_convex_quadratic(grid, h2)
    deg_fit = fit_convex_quadratic(grid, deg)
    total = h2_fit.scaled(c.c_h2) + deg_fit.scaled(c.c_deg)
    return StaticCostModel(h2_fit, deg_fit, total, aging, P_max, c.c_h2, c.c_deg)
