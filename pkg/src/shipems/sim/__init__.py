"""Mission simulation, scenario generation and experiment sweeps."""

from .missions import (
    DEFAULT_REGIMES,
    DEFAULT_TRANSITIONS,
    GeneratorSettings,
    MissionProfile,
    Regime,
    energy_bursts,
    generate_rectangular_mission,
    generate_synthetic_mission,
    regime_codes,
    synthetic_corpus,
)
from .runner import (
    STRATEGY_ORDER,
    ForecastPreview,
    PerfectPreview,
    SimConfig,
    SimResult,
    SimulationError,
    StrategySpec,
    make_controller,
    run_mission,
    with_strategy,
)
from .experiments import (
    FORECAST_SEED_OFFSET,
    HorizonRow,
    SweepResult,
    horizon_csv,
    horizon_sweep,
    run_many,
    sweep,
    train_preview_forecaster,
)
