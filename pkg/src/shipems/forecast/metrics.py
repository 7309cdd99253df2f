"""Point-forecast error metrics."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class ForecastMetrics:
    mae: float
    mape: float | None  # percent; None when every truth value is below the floor
    ppmcc: float | None  # None when either series is constant
    ppmcc_status: str = "ok"
    n: int = 0
    n_mape: int = 0
    per_horizon: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = {
            "mae": self.mae,
            "mape": self.mape,
            "ppmcc": self.ppmcc,
            "ppmcc_status": self.ppmcc_status,
            "n": self.n,
            "n_mape": self.n_mape,
        }
        if self.per_horizon:
            d["per_horizon"] = {str(k): v.to_dict() for k, v in self.per_horizon.items()}
        return d


def evaluate_metrics(pred, truth, mape_floor: float | None = None) -> ForecastMetrics:
    """MAE, MAPE and Pearson correlation.

    MAPE ignores samples with |truth| below ``mape_floor`` (default: 1% of the
    mean absolute truth).
    """
    p = np.asarray(getattr(pred, "values", pred), dtype=float).ravel()
    y = np.asarray(truth, dtype=float).ravel()
    if p.shape != y.shape:
        raise ValueError(f"prediction has {p.size} values, truth has {y.size}")
    if p.size == 0:
        raise ValueError("empty series")
    err = p - y
    mae = float(np.mean(np.abs(err)))
    floor = 0.01 * float(np.mean(np.abs(y))) if mape_floor is None else mape_floor
    ok = np.abs(y) >= floor
    if floor <= 0:
        ok &= y != 0
    mape = float(100.0 * np.mean(np.abs(err[ok]) / np.abs(y[ok]))) if ok.any() else None
    sp, sy = p.std(), y.std()
    scale = max(float(np.max(np.abs(y))), float(np.max(np.abs(p))), 1.0)
    if sp <= 1e-12 * scale or sy <= 1e-12 * scale:
        r, status = None, "undefined: constant series"
    else:
        r = float(np.clip(np.mean((p - p.mean()) * (y - y.mean())) / (sp * sy), -1.0, 1.0))
        status = "ok"
    return ForecastMetrics(mae, mape, r, status, int(p.size), int(ok.sum()))


def horizon_metrics(pred_paths, truth_paths, steps, mape_floor: float | None = None) -> ForecastMetrics:
    """Overall metrics over all paths plus a breakdown at the given 1-based horizon steps."""
    P = np.asarray(pred_paths, dtype=float)
    Y = np.asarray(truth_paths, dtype=float)
    if P.shape != Y.shape:
        raise ValueError("prediction and truth paths differ in shape")
    floor = 0.01 * float(np.mean(np.abs(Y))) if mape_floor is None else mape_floor
    overall = evaluate_metrics(P, Y, floor)
    for s in steps:
        if not 1 <= s <= P.shape[1]:
            raise ValueError(f"horizon step {s} outside 1..{P.shape[1]}")
        overall.per_horizon[int(s)] = evaluate_metrics(P[:, s - 1], Y[:, s - 1], floor)
    return overall
