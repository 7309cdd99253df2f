"""Mission simulation at 1 s with controllers scheduled at their own periods."""

from __future__ import annotations

import csv
import io
import json
import math
import re
import time
from dataclasses import asdict, dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .. import _kernels
from ..ems import (
    EcmsConfig,
    EcmsController,
    FilterConfig,
    FilterController,
    MpcConfig,
    MpcController,
    default_mu,
    downsample_forecast,
    with_horizon,
)
from ..plant import Aging, SystemState
from ..system import ShipSystem
from .missions import MissionProfile

STRATEGY_ORDER = ("mpc-perfect", "mpc-data", "ecms", "filter600", "filter60")
_FILTER_RE = re.compile(r"^filter(\d+(?:\.\d+)?)$")


class SimulationError(RuntimeError):
    pass


@dataclass(frozen=True)
class StrategySpec:
    """A named strategy plus the switches varied in the experiments."""

    name: str
    soc_adaptation: bool = True
    battery_losses: bool = True
    horizon_min: float | None = None  # MPC only; None keeps N_mpc

    def __post_init__(self):
        if not (self.kind in ("ecms", "mpc") or _FILTER_RE.match(self.name)):
            raise ValueError(f"unknown strategy {self.name!r}")
        if self.name == "mpc":
            raise ValueError("choose mpc-perfect or mpc-data")

    @property
    def kind(self) -> str:
        if self.name.startswith("mpc-"):
            if self.name not in ("mpc-perfect", "mpc-data"):
                raise ValueError(f"unknown MPC preview mode in {self.name!r}")
            return "mpc"
        if self.name == "ecms":
            return "ecms"
        return "filter"

    @property
    def tau_fd(self) -> float:
        m = _FILTER_RE.match(self.name)
        if not m:
            raise ValueError(f"{self.name} is not a filter strategy")
        return float(m.group(1))

    @property
    def label(self) -> str:
        s = self.name
        if self.horizon_min is not None:
            s += f"@{self.horizon_min:g}min"
        if not self.soc_adaptation:
            s += "-noadapt"
        if not self.battery_losses:
            s += "-nolosses"
        return s

    @classmethod
    def parse(cls, value) -> "StrategySpec":
        if isinstance(value, StrategySpec):
            return value
        if isinstance(value, dict):
            return cls(**value)
        return cls(str(value))


@dataclass(frozen=True)
class SimConfig:
    T_sim: float = 1.0
    T_ecms: float = 5.0
    T_mpc: float = 30.0
    N_mpc: int = 30
    xi_init: float = 0.5
    p_fc_init: float | str = "load"  # kW, "load" (first load sample) or "ref" (P_fc_ref)
    aging: str = "bol"
    strategy: StrategySpec = StrategySpec("ecms")
    exact_battery: bool = True

    def __post_init__(self):
        for name in ("T_ecms", "T_mpc"):
            ratio = getattr(self, name) / self.T_sim
            if not self.T_sim > 0 or abs(ratio - round(ratio)) > 1e-9 or round(ratio) < 1:
                raise ValueError(f"{name} must be a positive integer multiple of T_sim")
        if not isinstance(self.p_fc_init, (int, float)) and self.p_fc_init not in ("load", "ref"):
            raise ValueError("p_fc_init must be a number, 'load' or 'ref'")
        Aging.parse(self.aging)
        object.__setattr__(self, "strategy", StrategySpec.parse(self.strategy))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["strategy"] = asdict(self.strategy)
        return d


@dataclass
class SimResult:
    mission_id: str
    strategy: str
    aging: str
    t: np.ndarray
    p_load: np.ndarray
    p_fc: np.ndarray
    p_bat: np.ndarray
    xi: np.ndarray  # SoC at the start of each step
    u: np.ndarray
    h2_cum: np.ndarray  # kg at the end of each step
    deg_cum: np.ndarray  # uV at the end of each step
    xi_final: float
    p_fc_final: float
    h2_kg: float
    deg_static_uv: float
    deg_dynamic_uv: float
    cost_eur: float
    violations: dict
    config: dict
    run_info: dict = field(default_factory=dict)

    @property
    def deg_uv(self) -> float:
        return self.deg_static_uv + self.deg_dynamic_uv

    @property
    def duration_h(self) -> float:
        return self.t.size * (self.t[1] - self.t[0] if self.t.size > 1 else 1.0) / 3600.0

    def metrics(self) -> dict:
        return {
            "mission_id": self.mission_id,
            "strategy": self.strategy,
            "aging": self.aging,
            "duration_h": self.duration_h,
            "h2_kg": self.h2_kg,
            "deg_static_uv": self.deg_static_uv,
            "deg_dynamic_uv": self.deg_dynamic_uv,
            "deg_uv": self.deg_uv,
            "cost_eur": self.cost_eur,
            "xi_final": self.xi_final,
            "xi_min": float(min(self.xi.min(), self.xi_final)),
            "xi_max": float(max(self.xi.max(), self.xi_final)),
            "p_fc_min": float(self.p_fc.min()),
            "p_fc_max": float(self.p_fc.max()),
            "violations": self.violations,
        }

    def to_json(self, include_run_info: bool = True) -> str:
        d = {"metrics": self.metrics(), "config": self.config}
        if include_run_info:
            d["run_info"] = self.run_info
        return json.dumps(d, indent=2, sort_keys=True)

    def trace_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t_s", "p_load_kw", "p_fc_kw", "p_bat_kw", "soc", "pdot_fc_kw_s", "h2_cum_kg", "deg_cum_uv"])
        cols = (self.t, self.p_load, self.p_fc, self.p_bat, self.xi, self.u, self.h2_cum, self.deg_cum)
        for row in zip(*cols):
            w.writerow([repr(float(x)) for x in row])
        return buf.getvalue()

    def write(self, out_dir) -> tuple[Path, Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        rj, tc = out / "result.json", out / "trace.csv"
        rj.write_text(self.to_json() + "\n")
        tc.write_text(self.trace_csv())
        return rj, tc


# -- load previews ----------------------------------------------------------------------


class PerfectPreview:
    """Per-step mean of the true 1 s load; beyond the mission end the last value is held."""

    def __init__(self, load_1s: np.ndarray, T_sim: float):
        self.load = load_1s
        self.T_sim = T_sim
        self._csum = np.r_[0.0, np.cumsum(load_1s)]

    def __call__(self, k: int, n_steps: int, T: float) -> np.ndarray:
        w = int(round(T / self.T_sim))
        n = self.load.size
        edges = k + w * np.arange(n_steps + 1)
        inside = np.minimum(edges, n)
        sums = np.diff(self._csum[inside]) + (np.diff(edges) - np.diff(inside)) * self.load[-1]
        return sums / w


class ForecastPreview:
    """MPC preview from a recursive forecaster run on the mission's 5 s covariates.

    Forecasts for all decision instants are computed up front in one batch.
    Before a full lookback window exists the present load is held.
    """

    def __init__(self, model, mission: MissionProfile, decision_steps, T_sim: float, T_mpc: float, n_steps: int):
        from ..forecast import frame_from_mission, gbt_paths

        frame = frame_from_mission(mission)
        ratio = int(round(T_mpc / mission.dt))
        if abs(T_mpc / mission.dt - ratio) > 1e-9:
            raise ValueError("T_mpc must be a multiple of the mission sample period")
        horizon = n_steps * ratio
        origins = np.array([int(math.floor(k * T_sim / mission.dt + 1e-9)) for k in decision_steps], dtype=np.int64)
        origins = np.minimum(origins, len(frame) - 1)
        self.paths = {}
        ok = origins >= model.n_lags - 1
        if ok.any():
            P = gbt_paths(model, frame, origins[ok], horizon)
            for k, row in zip(np.asarray(decision_steps)[ok], P):
                self.paths[int(k)] = downsample_forecast(row, ratio)
        self.frame = frame
        self.origins = dict(zip((int(k) for k in decision_steps), origins))
        self.n_steps = n_steps

    def __call__(self, k: int, n_steps: int, T: float) -> np.ndarray:
        path = self.paths.get(int(k))
        if path is None:
            return np.full(n_steps, float(self.frame.target[self.origins[int(k)]]))
        if path.size < n_steps:
            path = np.r_[path, np.full(n_steps - path.size, path[-1])]
        return path[:n_steps]


def _no_preview(k, n_steps, T):
    raise SimulationError("this controller does not use a load preview")


# -- controller factory ---------------------------------------------------------------------


def make_controller(spec: StrategySpec, cfg: SimConfig, system: ShipSystem):
    aging = Aging.parse(cfg.aging)
    P_max = system.P_fc_max(aging)
    if spec.kind == "filter":
        fcfg = FilterConfig(spec.tau_fd, system.k_soc, system.xi_ref)
        return FilterController(fcfg, system.limits, P_max, cfg.T_sim)
    model = system.cost_model(aging)
    lam = system.lambda_curve(aging)
    if spec.kind == "ecms":
        ecfg = EcmsConfig(
            lambda_curve=lam,
            mu=default_mu(system.deg, P_max, system.mu_fraction),
            xi_ref=system.xi_ref,
            P_fc_ref=system.P_fc_ref(aging),
            T_ecms=cfg.T_ecms,
            soc_adaptation=spec.soc_adaptation,
            include_battery_losses=spec.battery_losses,
        )
        return EcmsController(model, ecfg, system.limits, system.bat)
    mcfg = MpcConfig(
        N_mpc=cfg.N_mpc,
        T_mpc=cfg.T_mpc,
        include_battery_losses=spec.battery_losses,
        soc_adaptation=spec.soc_adaptation,
        dyn_weight=system.mpc_dyn_weight,
        xi_ref=system.xi_ref,
    )
    if spec.horizon_min is not None:
        mcfg = with_horizon(mcfg, spec.horizon_min)
    return MpcController(model, mcfg, lam, system.limits, system.bat, system.deg)


def initial_state(m: MissionProfile, cfg: SimConfig, system: ShipSystem, load_1s: np.ndarray) -> SystemState:
    aging = Aging.parse(cfg.aging)
    P_max = system.P_fc_max(aging)
    if cfg.p_fc_init == "load":
        p0 = float(load_1s[0])
    elif cfg.p_fc_init == "ref":
        p0 = system.P_fc_ref(aging)
    else:
        p0 = float(cfg.p_fc_init)
    return SystemState(min(max(p0, 0.0), P_max), cfg.xi_init)


# -- main loop ------------------------------------------------------------------------------


def run_mission(
    m: MissionProfile,
    cfg: SimConfig = SimConfig(),
    system: ShipSystem | None = None,
    forecaster=None,
    controller=None,
) -> SimResult:
    """Simulate one mission.

    The controller is consulted every period; in between, the FC ramps at the
    commanded gradient and the battery supplies the instantaneous residual.
    ``forecaster`` is required for the ``mpc-data`` strategy.
    """
    wall0 = time.perf_counter()
    system = system or ShipSystem()
    spec = cfg.strategy
    aging = Aging.parse(cfg.aging)
    load = np.ascontiguousarray(m.load_at(cfg.T_sim))
    n = load.size
    if n == 0:
        raise SimulationError("mission is shorter than one simulation step")
    ctrl = controller or make_controller(spec, cfg, system)
    period_steps = int(round(ctrl.period / cfg.T_sim))
    decision_steps = range(0, n, period_steps)

    preview = _no_preview
    if spec.kind == "mpc":
        if spec.name == "mpc-perfect":
            preview = PerfectPreview(load, cfg.T_sim)
        else:
            if forecaster is None:
                raise SimulationError("mpc-data needs a trained forecaster")
            preview = ForecastPreview(forecaster, m, decision_steps, cfg.T_sim, ctrl.period, ctrl.cfg.N_mpc)

    fc_t, bat_t, deg_t = system.kernel_params(aging, cfg.T_sim)
    out = {k: np.empty(n) for k in ("p_fc", "p_bat", "xi", "u", "h2", "deg")}
    state = initial_state(m, cfg, system, load)
    xi0 = state.xi
    h2 = dst = ddy = gap = soc_viol = soc_viol_unflagged = 0.0
    n_viol = n_emerg = 0
    limits = system.limits
    for k in decision_steps:
        dec = ctrl.decide(k, state, float(load[k]), preview)
        u = dec.pdot_fc
        if not abs(u) <= limits.Pdot_fc_max * (1 + 1e-12):
            raise SimulationError(f"controller commanded |u| = {abs(u)} above the gradient limit")
        n_emerg += bool(dec.emergency)
        hold = min(period_steps, n - k)
        p, xi, dh, ds, dd, nv, dg, sv = _kernels.integrate_hold(
            state.p_fc, state.xi, u, k, hold, cfg.T_sim, load,
            out["p_fc"], out["p_bat"], out["xi"], out["u"], out["h2"], out["deg"],
            fc_t, bat_t, deg_t, cfg.exact_battery,
        )
        seg = slice(k, k + hold)
        resid = np.abs(out["p_fc"][seg] + out["p_bat"][seg] - load[seg]).max()
        if resid > 1e-9:
            raise SimulationError(f"power balance violated by {resid} kW at step {k}")
        h2 += dh
        dst += ds
        ddy += dd
        gap += dg
        soc_viol += sv
        if not dec.emergency:
            soc_viol_unflagged += sv
        n_viol += nv
        state = SystemState(p, xi)

    c_h2, c_deg = system.costs.c_h2, system.costs.c_deg
    violations = {
        "battery_current_steps": int(n_viol),
        "energy_gap_kwh": gap,
        "soc_violation_s": soc_viol,
        "soc_violation_unflagged_s": soc_viol_unflagged,
        "emergency_decisions": int(n_emerg),
        "mpc_fallbacks": int(getattr(ctrl, "n_fallbacks", 0)),
        "mpc_soft_soc": int(getattr(ctrl, "n_soft", 0)),
    }
    run_info = {
        "wall_clock_s": time.perf_counter() - wall0,
        "finished_utc": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        "kernel_backend": _kernels.BACKEND,
    }
    config = {
        "sim": cfg.to_dict(),
        "strategy_label": spec.label,
        "mission": {"id": m.mission_id, "duration_s": m.duration_s, "dt": m.dt},
        "xi_init": xi0,
        "P_fc_max": system.P_fc_max(aging),
        "P_fc_ref": system.P_fc_ref(aging),
        "xi_ref": system.xi_ref,
    }
    return SimResult(
        mission_id=m.mission_id,
        strategy=spec.label,
        aging=aging.value.lower(),
        t=np.arange(n) * cfg.T_sim,
        p_load=load,
        p_fc=out["p_fc"],
        p_bat=out["p_bat"],
        xi=out["xi"],
        u=out["u"],
        h2_cum=np.cumsum(out["h2"]),
        deg_cum=np.cumsum(out["deg"]),
        xi_final=state.xi,
        p_fc_final=state.p_fc,
        h2_kg=h2,
        deg_static_uv=dst,
        deg_dynamic_uv=ddy,
        cost_eur=c_h2 * h2 + c_deg * (dst + ddy),
        violations=violations,
        config=config,
        run_info=run_info,
    )


def with_strategy(cfg: SimConfig, strategy, aging=None) -> SimConfig:
    return replace(cfg, strategy=StrategySpec.parse(strategy), aging=cfg.aging if aging is None else aging)
