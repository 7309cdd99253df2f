"""Load forecasting from lagged operational covariates."""

from .core import (
    LOOKBACK_GRID,
    ArModel,
    Forecast,
    ForecastRequest,
    SingularDesignError,
    ar_forecast,
    evaluation_origins,
    fit_ar,
    persistence_forecast,
    persistence_paths,
    recursive_paths,
    truth_paths,
)
from .frame import COLUMNS, HEADER, IngestError, IngestReport, TimeSeriesFrame, frame_from_mission, read_external, read_frames, split_frames, temporal_split
from .gbt import GbtHyper, GbtModel, default_grid, external_paths_from_series, gbt_fit, gbt_paths, gbt_predict, leakage_audit, paper_grid
from .backtest import REPORT_HORIZONS_S, Backtest, backtest
from .metrics import ForecastMetrics, evaluate_metrics, horizon_metrics

__all__ = [
    "LOOKBACK_GRID", "ArModel", "Forecast", "ForecastRequest", "SingularDesignError", "ar_forecast",
    "evaluation_origins", "fit_ar", "persistence_forecast", "persistence_paths", "recursive_paths", "truth_paths",
    "COLUMNS", "HEADER", "IngestError", "IngestReport", "TimeSeriesFrame", "frame_from_mission", "read_external",
    "read_frames", "split_frames", "temporal_split", "GbtHyper", "GbtModel", "default_grid", "external_paths_from_series",
    "gbt_fit", "gbt_paths", "gbt_predict", "leakage_audit", "paper_grid", "ForecastMetrics", "evaluate_metrics",
    "horizon_metrics", "REPORT_HORIZONS_S", "Backtest", "backtest",
]
