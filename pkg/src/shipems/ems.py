"""Energy management strategies: low-pass filter split, ECMS and receding-horizon MPC.

Controllers decide an FC power gradient ``u`` (kW/s) that is held for their
period ``T``. Over a held interval the FC ramps linearly, so the interval-mean
FC power is ``p + u*T/2`` and the battery covers ``p_bat = p_load - p - u*T/2``.
The optimizing controllers price FC operation at that interval-mean power.

Cost rates are in EUR/h; horizon sums weight them by the step length in hours.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .costs import DegradationParams, StaticCostModel
from .plant import BatteryParams, OperatingLimits, SystemState
from .qp import QpSettings, QuadraticProgram, solve_qp

log = logging.getLogger(__name__)


class DegenerateAnchorsError(ValueError):
    """The four conditions defining the equivalence-cost cubic are singular."""


@dataclass
class ControlDecision:
    pdot_fc: float
    planned: np.ndarray | None = None
    diagnostics: dict = field(default_factory=dict)
    emergency: bool = False


def _clamp(x: float, lo: float, hi: float) -> float:
    return lo if x < lo else hi if x > hi else x


# -- filter benchmark ---------------------------------------------------------------


@dataclass(frozen=True)
class FilterConfig:
    """Low-pass power split with proportional SoC correction.

    ``k_soc`` is in kW per unit SoC deviation (2000 kW = 20 kW per %SoC).
    """

    tau_fd: float = 600.0
    k_soc: float = 2000.0
    xi_ref: float = 0.5

    def __post_init__(self):
        if not self.tau_fd > 0:
            raise ValueError("tau_fd must be positive")
        if self.k_soc < 0:
            raise ValueError("k_soc must be non-negative")


class FilterController:
    """FC follows the low-passed load, i.e. 1/(tau s + 1), discretized exactly."""

    def __init__(self, cfg: FilterConfig, limits: OperatingLimits, P_fc_max: float, T: float = 1.0):
        self.cfg = cfg
        self.limits = limits
        self.P_fc_max = P_fc_max
        self.period = T
        self._decay = math.exp(-T / cfg.tau_fd)
        self._lpf: float | None = None

    def reset(self) -> None:
        self._lpf = None

    def step(self, state: SystemState, p_load: float) -> ControlDecision:
        cfg, T = self.cfg, self.period
        if self._lpf is None:
            self._lpf = state.p_fc  # bumpless start from the present operating point
        self._lpf = p_load + (self._lpf - p_load) * self._decay
        target = _clamp(self._lpf + cfg.k_soc * (cfg.xi_ref - state.xi), 0.0, self.P_fc_max)
        u = _clamp((target - state.p_fc) / T, -self.limits.Pdot_fc_max, self.limits.Pdot_fc_max)
        return ControlDecision(u, diagnostics={"target": target, "filtered_load": self._lpf})

    def decide(self, k, state, p_load_now, preview) -> ControlDecision:
        return self.step(state, p_load_now)


# -- equivalence cost --------------------------------------------------------------


@dataclass(frozen=True)
class LambdaCurve:
    """Cubic equivalence cost of stored energy, EUR/kWh as a function of SoC."""

    coeffs: tuple[float, float, float, float]  # c0 + c1 x + c2 x^2 + c3 x^3

    def __call__(self, xi: float) -> float:
        c0, c1, c2, c3 = self.coeffs
        return ((c3 * xi + c2) * xi + c1) * xi + c0

    def derivative(self, xi: float) -> float:
        _, c1, c2, c3 = self.coeffs
        return (3.0 * c3 * xi + 2.0 * c2) * xi + c1


def build_lambda(
    model: StaticCostModel,
    limits: OperatingLimits,
    xi_ref: float = 0.5,
    P_fc_ref: float | None = None,
) -> LambdaCurve:
    """Cubic through the FC marginal cost at max power (SoC_min), reference power
    (xi_ref, with zero slope) and zero power (SoC_max)."""
    lo, hi = limits.SoC_min, limits.SoC_max
    P_max = model.P_fc_max
    if P_fc_ref is None:
        P_fc_ref = 0.4 * P_max
    if not lo < xi_ref < hi:
        raise ValueError("xi_ref must lie strictly inside the SoC limits")
    if not 0 <= P_fc_ref <= P_max:
        raise ValueError("P_fc_ref must lie in [0, P_fc_max]")
    A = np.array(
        [
            [1.0, xi_ref, xi_ref**2, xi_ref**3],
            [1.0, lo, lo**2, lo**3],
            [1.0, hi, hi**2, hi**3],
            [0.0, 1.0, 2.0 * xi_ref, 3.0 * xi_ref**2],
        ]
    )
    rhs = np.array([model.marginal(P_fc_ref), model.marginal(P_max), model.marginal(0.0), 0.0])
    if np.linalg.cond(A) > 1e12:
        raise DegenerateAnchorsError("anchor SoC values are (nearly) coincident")
    return LambdaCurve(tuple(float(c) for c in np.linalg.solve(A, rhs)))


# -- ECMS ----------------------------------------------------------------------------


@dataclass(frozen=True)
class EcmsConfig:
    """``mu`` is in uV*s/kW^2 like the dynamic degradation coefficient; the
    controller prices it with c_deg so the penalty is c_deg*3600*mu*u^2 EUR/h."""

    lambda_curve: LambdaCurve
    mu: float
    xi_ref: float = 0.5
    P_fc_ref: float = 1660.0
    T_ecms: float = 5.0
    soc_adaptation: bool = True
    include_battery_losses: bool = True

    def __post_init__(self):
        if self.mu < 0:
            raise ValueError("mu must be non-negative")
        if not self.T_ecms > 0:
            raise ValueError("T_ecms must be positive")

    def lam(self, xi: float) -> float:
        return self.lambda_curve(xi if self.soc_adaptation else self.xi_ref)


def default_mu(d: DegradationParams, P_fc_max: float, fraction: float = 0.01) -> float:
    return fraction * d.dyn_coefficient(P_fc_max)


def loss_weight(lam: float) -> float:
    """Equivalence cost applied to battery losses; never a reward."""
    return max(lam, 0.0)


@dataclass(frozen=True)
class EcmsProblem:
    """Scalar quadratic J(u) = A2 u^2 + A1 u + A0 (EUR/h) on [u_lo, u_hi]."""

    A2: float
    A1: float
    A0: float
    u_lo: float
    u_hi: float
    soc_lo: float
    soc_hi: float
    feasible: bool

    def __call__(self, u):
        return (self.A2 * u + self.A1) * u + self.A0


def ecms_problem(
    state: SystemState,
    p_load: float,
    model: StaticCostModel,
    cfg: EcmsConfig,
    limits: OperatingLimits,
    bat: BatteryParams,
    T: float | None = None,
) -> EcmsProblem:
    T = cfg.T_ecms if T is None else T
    lam = cfg.lam(state.xi)
    k = bat.loss_coeff if cfg.include_battery_losses else 0.0
    wl = loss_weight(lam) * k
    a, b, c = model.total.a, model.total.b, model.total.c
    p = state.p_fc
    r = p_load - p
    h = 0.5 * T  # p_mid = p + h u, p_bat = r - h u
    mu_cost = model.c_deg * 3600.0 * cfg.mu
    A2 = a * h * h + wl * h * h + mu_cost
    A1 = (2.0 * a * p + b) * h - lam * h - 2.0 * wl * r * h
    A0 = (a * p + b) * p + c + lam * r + wl * r * r

    u_lo, u_hi = -limits.Pdot_fc_max, limits.Pdot_fc_max
    P_max = model.P_fc_max
    u_lo, u_hi = max(u_lo, -p / T), min(u_hi, (P_max - p) / T)
    # next-step SoC with the linear battery model: xi+ = xi - kappa * (r - h u)
    kappa = T / (3600.0 * bat.energy_kwh)
    s_lo = (limits.SoC_min - state.xi + kappa * r) / (kappa * h)
    s_hi = (limits.SoC_max - state.xi + kappa * r) / (kappa * h)
    # |p_bat| <= E_oc * I_max
    pb = bat.p_bat_max
    b_lo, b_hi = (r - pb) / h, (r + pb) / h
    lo, hi = max(u_lo, s_lo, b_lo), min(u_hi, s_hi, b_hi)
    feasible = lo <= hi
    if not feasible:
        # FC limits are hard, battery power next, SoC last
        lo2, hi2 = max(u_lo, b_lo), min(u_hi, b_hi)
        if lo2 > hi2:
            x = _clamp(b_lo if b_lo > u_hi else b_hi, u_lo, u_hi)
            lo, hi = x, x
        else:
            x = _clamp(s_lo if s_lo > hi2 else s_hi, lo2, hi2)
            lo, hi = x, x
    return EcmsProblem(A2, A1, A0, lo, hi, s_lo, s_hi, feasible)


def ecms_solve(prob: EcmsProblem) -> float:
    if prob.A2 > 0:
        return _clamp(-prob.A1 / (2.0 * prob.A2), prob.u_lo, prob.u_hi)
    return prob.u_lo if prob(prob.u_lo) <= prob(prob.u_hi) else prob.u_hi


def ecms_step(
    state: SystemState,
    p_load: float,
    model: StaticCostModel,
    cfg: EcmsConfig,
    limits: OperatingLimits,
    bat: BatteryParams,
    T: float | None = None,
) -> ControlDecision:
    prob = ecms_problem(state, p_load, model, cfg, limits, bat, T)
    u = ecms_solve(prob)
    diag = {"objective": prob(u), "lambda": cfg.lam(state.xi), "interval": (prob.u_lo, prob.u_hi)}
    if not prob.feasible:
        log.debug("ECMS: no input keeps SoC within limits at xi=%.4f; emergency decision", state.xi)
    return ControlDecision(u, diagnostics=diag, emergency=not prob.feasible)


class EcmsController:
    def __init__(self, model, cfg: EcmsConfig, limits, bat):
        self.model, self.cfg, self.limits, self.bat = model, cfg, limits, bat
        self.period = cfg.T_ecms

    def reset(self) -> None:
        pass

    def decide(self, k, state, p_load_now, preview) -> ControlDecision:
        return ecms_step(state, p_load_now, self.model, self.cfg, self.limits, self.bat)


# -- MPC -----------------------------------------------------------------------------


@dataclass(frozen=True)
class MpcConfig:
    N_mpc: int = 30
    T_mpc: float = 30.0
    include_battery_losses: bool = True
    soc_adaptation: bool = True
    terminal_value: bool = True
    dyn_weight: float = 1.0  # multiple of the dynamic degradation coefficient
    xi_ref: float = 0.5

    def __post_init__(self):
        if self.N_mpc < 1:
            raise ValueError("N_mpc must be at least 1")
        if not self.T_mpc > 0:
            raise ValueError("T_mpc must be positive")

    @property
    def horizon_s(self) -> float:
        return self.N_mpc * self.T_mpc


@dataclass(frozen=True)
class MpcProblem:
    qp: QuadraticProgram
    scale: float  # qp objective = scale * (EUR objective - constant)
    n_u: int
    soft: bool


def _horizon_maps(N: int, T: float):
    L_incl = np.tril(np.ones((N, N)))
    M = T * (L_incl - 0.5 * np.eye(N))  # interval-mean FC power increments
    return L_incl, M


def mpc_build_qp(
    state: SystemState,
    load_forecast,
    model: StaticCostModel,
    cfg: MpcConfig,
    lam_now: float,
    limits: OperatingLimits,
    bat: BatteryParams,
    d: DegradationParams,
    soft_soc: bool = False,
) -> MpcProblem:
    """Condensed horizon problem over u(0..N-1).

    p_mid(n) = p0 + M u, p_bat(n) = L(n) - p_mid(n), xi(n+1) = xi0 - kappa * cumsum(p_bat).
    Objective (EUR): sum_n T_h [f(p_mid) + W u^2 + lam_loss*k*p_bat^2] - lam*Q*xi(N).
    With ``soft_soc`` a per-step slack relaxes the SoC rows at a steep price.
    """
    N, T = cfg.N_mpc, cfg.T_mpc
    L = np.asarray(load_forecast, dtype=float)
    if L.shape[0] < N:
        raise ValueError(f"forecast has {L.shape[0]} steps, horizon needs {N}")
    L = L[:N]
    Th = T / 3600.0
    a, b = model.total.a, model.total.b
    p0, xi0 = state.p_fc, state.xi
    P_max = model.P_fc_max
    L_incl, M = _horizon_maps(N, T)
    r = L - p0
    ones = np.ones(N)
    W = model.c_deg * 3600.0 * cfg.dyn_weight * d.dyn_coefficient(P_max)
    kloss = loss_weight(lam_now) * bat.loss_coeff if cfg.include_battery_losses else 0.0
    kappa = T / (3600.0 * bat.energy_kwh)

    H = 2.0 * Th * (a + kloss) * (M.T @ M) + 2.0 * Th * W * np.eye(N)
    g = Th * ((2.0 * a * p0 + b) * (M.T @ ones) - 2.0 * kloss * (M.T @ r))
    if cfg.terminal_value:
        # -lam*Q*xi(N) = const - lam*Th*sum(M u)
        g = g - lam_now * Th * (M.T @ ones)

    # p(n+1) = p0 + T * L_incl u within [0, P_max]
    P = T * L_incl
    # xi(n+1) = xi0 - kappa * L_incl (r - M u)
    S = kappa * (L_incl @ M)
    s0 = xi0 - kappa * (L_incl @ r)
    rows = [P, -P, -M, M]  # p_bat = r - M u within [-pb, pb]
    rhs = [np.full(N, P_max - p0), np.full(N, p0), bat.p_bat_max - r, bat.p_bat_max + r]
    soc_rows = [S, -S]
    soc_rhs = [limits.SoC_max - s0, s0 - limits.SoC_min]

    lb = np.full(N, -limits.Pdot_fc_max)
    ub = np.full(N, limits.Pdot_fc_max)
    scale = 1.0 / max(float(np.abs(np.diag(H)).max()), 1e-300)
    if soft_soc:
        # slack sigma >= 0 per step, penalty rho*(sigma + sigma^2)
        rho = 100.0 * model.marginal(P_max) * bat.energy_kwh
        Z = np.zeros((N, N))
        C = np.vstack([np.hstack([R_, Z]) for R_ in rows] + [np.hstack([R_, -np.eye(N)]) for R_ in soc_rows])
        H = np.block([[H, Z], [Z, 2.0 * rho * np.eye(N)]])
        g = np.r_[g, rho * ones]
        lb = np.r_[lb, np.zeros(N)]
        ub = np.r_[ub, np.full(N, np.inf)]
    else:
        C = np.vstack(rows + soc_rows)
    dvec = np.concatenate(rhs + soc_rhs)
    H = 0.5 * (H + H.T) * scale
    return MpcProblem(QuadraticProgram(H, g * scale, lb, ub, C, dvec), scale, N, soft_soc)


def mpc_objective_eur(
    u, state: SystemState, load_forecast, model: StaticCostModel, cfg: MpcConfig,
    lam_now: float, bat: BatteryParams, d: DegradationParams,
) -> float:
    """Full horizon objective in EUR for an input sequence (reference evaluation)."""
    N, T = cfg.N_mpc, cfg.T_mpc
    u = np.asarray(u, dtype=float)[:N]
    L = np.asarray(load_forecast, dtype=float)[:N]
    Th = T / 3600.0
    _, M = _horizon_maps(N, T)
    p_mid = state.p_fc + M @ u
    p_bat = L - p_mid
    W = model.c_deg * 3600.0 * cfg.dyn_weight * d.dyn_coefficient(model.P_fc_max)
    kloss = loss_weight(lam_now) * bat.loss_coeff if cfg.include_battery_losses else 0.0
    stage = model.total(p_mid) + W * u**2 + kloss * p_bat**2
    J = Th * float(np.sum(stage))
    if cfg.terminal_value:
        xi_N = state.xi - T / (3600.0 * bat.energy_kwh) * float(np.sum(p_bat))
        J -= lam_now * bat.energy_kwh * xi_N
    return J


def downsample_forecast(values, ratio: int) -> np.ndarray:
    """Means over consecutive windows of ``ratio`` samples (trailing remainder dropped)."""
    v = np.asarray(values, dtype=float)
    if ratio < 1:
        raise ValueError("ratio must be a positive integer")
    n = v.shape[0] // ratio
    return v[: n * ratio].reshape(n, ratio).mean(axis=1)


class MpcController:
    """Receding-horizon controller; ``preview(k, n_steps, T)`` returns per-step mean loads."""

    def __init__(
        self,
        model: StaticCostModel,
        cfg: MpcConfig,
        lambda_curve: LambdaCurve,
        limits: OperatingLimits,
        bat: BatteryParams,
        d: DegradationParams,
        qp_settings: QpSettings | None = None,
    ):
        self.model, self.cfg, self.lambda_curve = model, cfg, lambda_curve
        self.limits, self.bat, self.d = limits, bat, d
        self.period = cfg.T_mpc
        self.qp_settings = qp_settings or QpSettings()
        self._fallback = EcmsConfig(
            lambda_curve=lambda_curve,
            mu=cfg.dyn_weight * d.dyn_coefficient(model.P_fc_max),
            xi_ref=cfg.xi_ref,
            T_ecms=cfg.T_mpc,
            soc_adaptation=cfg.soc_adaptation,
            include_battery_losses=cfg.include_battery_losses,
        )
        self.reset()

    def reset(self) -> None:
        self._warm: np.ndarray | None = None
        self.n_fallbacks = 0
        self.n_soft = 0

    def lam_now(self, xi: float) -> float:
        return self.lambda_curve(xi if self.cfg.soc_adaptation else self.cfg.xi_ref)

    def step(self, state: SystemState, forecast) -> ControlDecision:
        cfg = self.cfg
        lam = self.lam_now(state.xi)
        prob = mpc_build_qp(state, forecast, self.model, cfg, lam, self.limits, self.bat, self.d)
        warm = None
        if self._warm is not None:
            warm = np.r_[self._warm[1:], self._warm[-1:]]
        sol = solve_qp(prob.qp, self.qp_settings, warm_start=warm)
        soft = False
        if sol.status == "infeasible":
            soft = True
            prob = mpc_build_qp(state, forecast, self.model, cfg, lam, self.limits, self.bat, self.d, soft_soc=True)
            ws = None if warm is None else np.r_[warm, np.zeros(cfg.N_mpc)]
            sol = solve_qp(prob.qp, self.qp_settings, warm_start=ws)
            self.n_soft += 1
        if not sol.ok:
            self.n_fallbacks += 1
            self._warm = None
            log.warning("MPC solve failed (%s); falling back to ECMS", sol.status)
            p_now = float(np.asarray(forecast, dtype=float)[0])
            dec = ecms_step(state, p_now, self.model, self._fallback, self.limits, self.bat)
            dec.diagnostics["fallback"] = sol.status
            return dec
        u_plan = sol.z[: cfg.N_mpc].copy()
        self._warm = u_plan
        u0 = _clamp(float(u_plan[0]), -self.limits.Pdot_fc_max, self.limits.Pdot_fc_max)
        # keep the held ramp inside [0, P_max] exactly
        T = cfg.T_mpc
        u0 = _clamp(u0, -state.p_fc / T, (self.model.P_fc_max - state.p_fc) / T)
        diag = {
            "objective_scaled": sol.objective,
            "kkt": sol.kkt_residual,
            "iterations": sol.iterations,
            "lambda": lam,
            "soft_soc": soft,
            "active": len(sol.active),
        }
        return ControlDecision(u0, planned=u_plan, diagnostics=diag, emergency=soft)

    def decide(self, k, state, p_load_now, preview) -> ControlDecision:
        return self.step(state, preview(k, self.cfg.N_mpc, self.cfg.T_mpc))


def with_horizon(cfg: MpcConfig, minutes: float) -> MpcConfig:
    steps = minutes * 60.0 / cfg.T_mpc
    if abs(steps - round(steps)) > 1e-9:
        raise ValueError("horizon must be a multiple of T_mpc")
    return replace(cfg, N_mpc=int(round(steps)))
