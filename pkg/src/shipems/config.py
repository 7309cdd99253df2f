"""Toolkit configuration: one structured file with plant, cost, strategy, forecaster and simulation sections.

Files are JSON or YAML (YAML is a superset, so one loader serves both). Every
section may be partial; missing keys keep their defaults and unknown keys are
rejected. :func:`reference` lists each default with the source it came from.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import yaml

from .costs import CostParams, DegradationParams
from .plant import BatteryParams, FuelCellParams, OperatingLimits
from .sim.runner import SimConfig, StrategySpec
from .system import ShipSystem

SCHEMA = "shipems.config/1"

_FC_TABLE = "table: fuel cell and battery parameters"
_DEG_TABLE = "table: FC degradation parameters (per cell)"
_COST_TABLE = "table: cost parameters"
_SIM_TABLE = "table: simulation settings"
_HYPER_TABLE = "table: hyperparameter search space (shallow tree model)"
_CALIB = "derived: calibrated to 4150 kW BOL / 3735 kW EOL net power and 0.615 V per cell"
_CHOSEN = "toolkit choice"

SOURCES = {
    "plant.fuel_cell.E_oc_fc": _CALIB,
    "plant.fuel_cell.N_s_fc": "derived: 0.615 V per cell anchor and the EOL stack voltage",
    "plant.fuel_cell.E_ts": "toolkit choice: generic PEM Tafel slope per cell",
    "plant.fuel_cell.I_0": "toolkit choice: generic PEM exchange current",
    "plant.fuel_cell.T_d": "toolkit choice: voltage lag time constant",
    "plant.fuel_cell.R_i_fc_bol": _FC_TABLE,
    "plant.fuel_cell.R_i_fc_eol": _FC_TABLE,
    "plant.fuel_cell.alpha_aux": _CALIB,
    "plant.fuel_cell.beta_xover": "toolkit choice: hydrogen crossover and purge fraction",
    "plant.fuel_cell.i_rated": _CALIB,
    "plant.battery.C_bat": _FC_TABLE,
    "plant.battery.R_i_bat": _FC_TABLE,
    "plant.battery.E_oc": "derived: 1250 kWh installed energy over the table capacity",
    "plant.battery.I_bat_max": _FC_TABLE,
    "limits.P_fc_max_bol": _FC_TABLE,
    "limits.eol_power_ratio": _COST_TABLE + " (10% power loss at EOL)",
    "limits.Pdot_fc_max": _FC_TABLE,
    "limits.SoC_min": "derived: 60% depth of discharge centred on 50%",
    "limits.SoC_max": "derived: 60% depth of discharge centred on 50%",
    "costs.degradation.p_lo": _DEG_TABLE,
    "costs.degradation.p_hi": _DEG_TABLE,
    "costs.degradation.dv_lo": _DEG_TABLE,
    "costs.degradation.dv_hi": _DEG_TABLE,
    "costs.degradation.dv_base": _DEG_TABLE,
    "costs.degradation.dv_dyn": _DEG_TABLE,
    "costs.degradation.dt_dyn": _DEG_TABLE,
    "costs.degradation.w_blend": "toolkit choice: width of the smoothing band at region edges",
    "costs.prices.c_h2": _COST_TABLE,
    "costs.prices.c_fc_capex": _COST_TABLE,
    "costs.prices.r_fc_stack": _COST_TABLE,
    "costs.prices.r_eol": _COST_TABLE,
    "costs.prices.V_fc_min": "derived: 670 cells at 0.615 V, inverted from the degradation cost of 50.6 EUR/uV",
    "costs.prices.N_s": "derived: 0.615 V per cell anchor",
    "costs.prices.P_fc_rated": _FC_TABLE,
    "strategy.name": _CHOSEN,
    "strategy.soc_adaptation": _CHOSEN,
    "strategy.battery_losses": _CHOSEN,
    "strategy.horizon_min": _SIM_TABLE + " (null keeps N_mpc x T_mpc)",
    "strategy.xi_ref": _SIM_TABLE + " (initial SoC used as the reference)",
    "strategy.p_fc_ref_ratio": "toolkit choice: ECMS reference FC power as a fraction of P_fc_max",
    "strategy.k_soc": "toolkit choice: filter SoC feedback gain, kW per unit SoC",
    "strategy.mu_fraction": _SIM_TABLE,
    "strategy.mpc_dyn_weight": _CHOSEN,
    "forecaster.delta_minus": "table: input and output of the forecast problem",
    "forecaster.delta_plus": "table: input and output of the forecast problem",
    "forecaster.grid": _HYPER_TABLE + " ('default' is a 4-point subset, 'full' the whole space)",
    "forecaster.seed": _CHOSEN,
    "forecaster.train_missions": _CHOSEN,
    "forecaster.train_hours": _CHOSEN,
    "forecaster.train_seed0": _CHOSEN,
    "forecaster.model_path": _CHOSEN,
    "simulation.T_sim": _SIM_TABLE,
    "simulation.T_ecms": _SIM_TABLE,
    "simulation.T_mpc": _SIM_TABLE,
    "simulation.N_mpc": _SIM_TABLE,
    "simulation.xi_init": _SIM_TABLE,
    "simulation.p_fc_init": _CHOSEN,
    "simulation.aging": _CHOSEN,
    "simulation.exact_battery": _CHOSEN,
}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ForecasterSettings:
    delta_minus: float = 60.0
    delta_plus: float = 900.0
    grid: str = "default"  # default | full
    seed: int = 0
    train_missions: int = 20
    train_hours: float = 2.0
    train_seed0: int = 10_000
    model_path: str | None = None

    def __post_init__(self):
        if self.grid not in ("default", "full"):
            raise ValueError("grid must be 'default' or 'full'")
        if self.train_missions < 2 or not self.train_hours > 0:
            raise ValueError("need at least two training missions of positive length")

    def hyper_grid(self):
        from .forecast import default_grid, paper_grid

        return default_grid() if self.grid == "default" else paper_grid()


@dataclass(frozen=True)
class StrategySettings:
    name: str = "mpc-perfect"
    soc_adaptation: bool = True
    battery_losses: bool = True
    horizon_min: float | None = None
    xi_ref: float = 0.5
    p_fc_ref_ratio: float = 0.4
    k_soc: float = 2000.0
    mu_fraction: float = 0.01
    mpc_dyn_weight: float = 1.0

    def spec(self) -> StrategySpec:
        return StrategySpec(self.name, self.soc_adaptation, self.battery_losses, self.horizon_min)


@dataclass(frozen=True)
class SimulationSettings:
    T_sim: float = 1.0
    T_ecms: float = 5.0
    T_mpc: float = 30.0
    N_mpc: int = 30
    xi_init: float = 0.5
    p_fc_init: float | str = "load"
    aging: str = "bol"
    exact_battery: bool = True


@dataclass(frozen=True)
class ToolkitConfig:
    fuel_cell: FuelCellParams = field(default_factory=FuelCellParams)
    battery: BatteryParams = field(default_factory=BatteryParams)
    limits: OperatingLimits = field(default_factory=OperatingLimits)
    degradation: DegradationParams = field(default_factory=DegradationParams)
    prices: CostParams = field(default_factory=CostParams)
    strategy: StrategySettings = field(default_factory=StrategySettings)
    forecaster: ForecasterSettings = field(default_factory=ForecasterSettings)
    simulation: SimulationSettings = field(default_factory=SimulationSettings)

    def system(self) -> ShipSystem:
        s = self.strategy
        return ShipSystem(self.fuel_cell, self.battery, self.limits, self.degradation, self.prices,
                          s.xi_ref, s.p_fc_ref_ratio, s.k_soc, s.mu_fraction, s.mpc_dyn_weight)

    def sim_config(self, strategy=None, aging=None, horizon_min=None) -> SimConfig:
        spec = self.strategy.spec() if strategy is None else StrategySpec.parse(strategy)
        if horizon_min is not None:
            spec = replace(spec, horizon_min=float(horizon_min))
        sim = asdict(self.simulation)
        if aging is not None:
            sim["aging"] = aging
        return SimConfig(strategy=spec, **sim)

    def to_dict(self) -> dict:
        return {
            "schema": SCHEMA,
            "plant": {"fuel_cell": _public(self.fuel_cell), "battery": _public(self.battery)},
            "limits": _public(self.limits),
            "costs": {"degradation": _public(self.degradation), "prices": _public(self.prices)},
            "strategy": _public(self.strategy),
            "forecaster": _public(self.forecaster),
            "simulation": _public(self.simulation),
        }


def _public(obj) -> dict:
    return {f.name: getattr(obj, f.name) for f in fields(obj) if f.init}


# section path in the file -> (ToolkitConfig attribute, dataclass)
_LAYOUT = {
    ("plant", "fuel_cell"): ("fuel_cell", FuelCellParams),
    ("plant", "battery"): ("battery", BatteryParams),
    ("limits",): ("limits", OperatingLimits),
    ("costs", "degradation"): ("degradation", DegradationParams),
    ("costs", "prices"): ("prices", CostParams),
    ("strategy",): ("strategy", StrategySettings),
    ("forecaster",): ("forecaster", ForecasterSettings),
    ("simulation",): ("simulation", SimulationSettings),
}


def config_from_dict(d: dict) -> ToolkitConfig:
    if not isinstance(d, dict):
        raise ConfigError("configuration must be a mapping")
    schema = d.get("schema", SCHEMA)
    if schema != SCHEMA:
        raise ConfigError(f"unsupported schema {schema!r}; expected {SCHEMA!r}")
    _reject_unknown(d, {"schema", "plant", "limits", "costs", "strategy", "forecaster", "simulation"}, "")
    _reject_unknown(d.get("plant") or {}, {"fuel_cell", "battery"}, "plant.")
    _reject_unknown(d.get("costs") or {}, {"degradation", "prices"}, "costs.")
    kwargs = {}
    for path, (attr, cls) in _LAYOUT.items():
        section = d
        for key in path:
            section = (section or {}).get(key) or {}
        if not isinstance(section, dict):
            raise ConfigError(f"section {'.'.join(path)} must be a mapping")
        allowed = {f.name for f in fields(cls) if f.init}
        _reject_unknown(section, allowed, ".".join(path) + ".")
        try:
            kwargs[attr] = cls(**section)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{'.'.join(path)}: {exc}") from exc
    cfg = ToolkitConfig(**kwargs)
    try:
        cfg.sim_config()
    except ValueError as exc:
        raise ConfigError(f"simulation/strategy: {exc}") from exc
    return cfg


def _reject_unknown(section: dict, allowed: set, prefix: str) -> None:
    if not isinstance(section, dict):
        raise ConfigError(f"section {prefix.rstrip('.') or '<root>'} must be a mapping")
    unknown = sorted(set(section) - allowed)
    if unknown:
        raise ConfigError(f"unknown keys: {', '.join(prefix + k for k in unknown)}")


def load_config(path) -> ToolkitConfig:
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"config file not found: {p}")
    try:
        data = yaml.safe_load(p.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"{p}: cannot parse: {exc}") from exc
    return config_from_dict(data or {})


def dump_config(cfg: ToolkitConfig, path=None, fmt: str = "json") -> str:
    d = cfg.to_dict()
    text = json.dumps(d, indent=2) + "\n" if fmt == "json" else yaml.safe_dump(d, sort_keys=False)
    if path is not None:
        Path(path).write_text(text)
    return text


def _leaves(d: dict, prefix: str = ""):
    for k, v in d.items():
        if k == "schema":
            continue
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            yield from _leaves(v, key + ".")
        else:
            yield key, v


def reference(cfg: ToolkitConfig | None = None) -> list[dict]:
    """Every configurable key with its default and the source of that default."""
    cfg = cfg or ToolkitConfig()
    return [{"key": k, "default": v, "source": SOURCES.get(k)} for k, v in _leaves(cfg.to_dict())]


def reference_markdown(cfg: ToolkitConfig | None = None) -> str:
    lines = [f"# Configuration reference ({SCHEMA})", "", "| key | default | source |", "|---|---|---|"]
    for r in reference(cfg):
        lines.append(f"| `{r['key']}` | `{json.dumps(r['default'])}` | {r['source']} |")
    return "\n".join(lines) + "\n"
