"""Forecast requests, lag features, the recursive multi-step engine and the linear baselines."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .frame import COLUMNS, TARGET, TimeSeriesFrame, temporal_split

LOOKBACK_GRID = (5, 10, 30, 60, 350, 600, 1800)


@dataclass(frozen=True)
class ForecastRequest:
    t0: int = 0  # index of the last observed sample
    delta_minus: float = 60.0
    delta_plus: float = 900.0
    dt: float = 5.0

    def __post_init__(self):
        if self.delta_minus not in LOOKBACK_GRID:
            raise ValueError(f"delta_minus must be one of {LOOKBACK_GRID} s")
        if not self.delta_plus > 0 or abs(self.delta_plus / self.dt - round(self.delta_plus / self.dt)) > 1e-9:
            raise ValueError("delta_plus must be a positive multiple of dt")
        if self.t0 < 0:
            raise ValueError("t0 must be non-negative")

    @property
    def horizon(self) -> int:
        return int(round(self.delta_plus / self.dt))

    @property
    def n_lags(self) -> int:
        """Samples in the closed window [t0 - delta_minus, t0]."""
        return int(np.ceil(self.delta_minus / self.dt - 1e-9)) + 1

    def at(self, t0: int) -> "ForecastRequest":
        return ForecastRequest(t0, self.delta_minus, self.delta_plus, self.dt)


@dataclass
class Forecast:
    values: np.ndarray  # predictions for t0+dt ... t0+delta_plus
    source: str
    t0: int = 0
    dt: float = 5.0

    def __post_init__(self):
        self.values = np.maximum(np.asarray(self.values, dtype=float), 0.0)
        if self.source not in ("persistence", "ar", "gbt", "external", "perfect"):
            raise ValueError(f"unknown forecast source {self.source!r}")


# -- features -------------------------------------------------------------------------


def frame_columns(frame: TimeSeriesFrame, columns=None) -> tuple[str, ...]:
    cols = tuple(c for c in COLUMNS if c in frame.columns) if columns is None else tuple(columns)
    if cols[0] != TARGET:
        raise ValueError("the target must be the first feature column")
    missing = [c for c in cols if c not in frame.columns]
    if missing:
        raise ValueError(f"frame lacks columns {missing}")
    return cols


def lag_windows(frame: TimeSeriesFrame, columns, n_lags: int, origins) -> np.ndarray:
    """Array (n_origins, n_columns, n_lags); entry j holds the value at origin - j."""
    origins = np.asarray(origins, dtype=np.int64)
    if origins.size and (origins.min() < n_lags - 1 or origins.max() >= len(frame)):
        raise ValueError("origins need a full lookback window inside the frame")
    idx = origins[:, None] - np.arange(n_lags)[None, :]
    return np.stack([frame.columns[c][idx] for c in columns], axis=1)


def one_step_dataset(frame: TimeSeriesFrame, columns, n_lags: int, external=None, ages=None):
    """Lag features at every admissible t and the next-sample increment of the target.

    With ``ages`` (one integer per admissible t, or a scalar) the covariate
    windows are taken that many samples earlier and the age is appended as a
    feature, mimicking covariates frozen at a forecast origin.
    """
    origins = np.arange(n_lags - 1, len(frame) - 1)
    if ages is not None:
        ages = np.broadcast_to(np.asarray(ages, dtype=np.int64), origins.shape)
        keep = origins - ages >= n_lags - 1
        origins, ages = origins[keep], ages[keep]
    P = lag_windows(frame, columns[:1], n_lags, origins).reshape(len(origins), -1)
    blocks = [P]
    if len(columns) > 1:
        cov_at = origins if ages is None else origins - ages
        blocks.append(lag_windows(frame, columns[1:], n_lags, cov_at).reshape(len(origins), -1))
    if ages is not None:
        blocks.append(ages[:, None].astype(float))
    p_now = frame.target[origins]
    if external is not None:
        ext = np.asarray(external, dtype=float)[origins + 1]
        blocks.append(external_features(ext, p_now))
    y = frame.target[origins + 1] - p_now
    return np.hstack(blocks), y


def external_features(ext_next, p_now) -> np.ndarray:
    return np.column_stack([ext_next, ext_next - p_now])


def recursive_paths(predict_delta, frame: TimeSeriesFrame, columns, n_lags: int, origins, horizon: int,
                    external=None, age_feature: bool = False) -> np.ndarray:
    """Roll a one-step model forward ``horizon`` steps from each origin.

    Predicted target values replace the target history. Covariate windows stay
    as observed at the origin; with ``age_feature`` the number of steps since
    the origin is supplied alongside. ``external`` is (n_origins, horizon).
    """
    origins = np.asarray(origins, dtype=np.int64)
    n = origins.size
    hist = lag_windows(frame, columns[:1], n_lags, origins).reshape(n, n_lags).copy()
    cov = lag_windows(frame, columns[1:], n_lags, origins).reshape(n, -1) if len(columns) > 1 else np.zeros((n, 0))
    out = np.empty((n, horizon))
    if external is not None:
        external = np.asarray(external, dtype=float)
        if external.shape != (n, horizon):
            raise ValueError(f"external forecast must have shape {(n, horizon)}, got {external.shape}")
    for h in range(horizon):
        blocks = [hist, cov]
        if age_feature:
            blocks.append(np.full((n, 1), float(h)))
        p_now = hist[:, 0]
        if external is not None:
            blocks.append(external_features(external[:, h], p_now))
        p_next = np.maximum(p_now + predict_delta(np.hstack(blocks)), 0.0)
        out[:, h] = p_next
        hist[:, 1:] = hist[:, :-1]
        hist[:, 0] = p_next
    return out


def truth_paths(frame: TimeSeriesFrame, origins, horizon: int) -> np.ndarray:
    origins = np.asarray(origins, dtype=np.int64)
    if origins.size and origins.max() + horizon >= len(frame):
        raise ValueError("horizon runs past the end of the frame")
    return frame.target[origins[:, None] + 1 + np.arange(horizon)[None, :]]


def evaluation_origins(frame: TimeSeriesFrame, n_lags: int, horizon: int, stride: int = 1) -> np.ndarray:
    return np.arange(n_lags - 1, len(frame) - horizon, max(int(stride), 1))


# -- baselines ------------------------------------------------------------------------


def persistence_forecast(frame: TimeSeriesFrame, req: ForecastRequest) -> Forecast:
    if not 0 <= req.t0 < len(frame):
        raise ValueError("t0 outside the frame")
    return Forecast(np.full(req.horizon, frame.target[req.t0]), "persistence", req.t0, req.dt)


def persistence_paths(frame: TimeSeriesFrame, origins, horizon: int) -> np.ndarray:
    origins = np.asarray(origins, dtype=np.int64)
    return np.repeat(frame.target[origins][:, None], horizon, axis=1)


class SingularDesignError(ValueError):
    pass


@dataclass
class ArModel:
    """Ridge regression of the next target value on standardized lag features."""

    columns: tuple[str, ...]
    n_lags: int
    ridge: float
    mean: np.ndarray
    std: np.ndarray
    beta: np.ndarray  # on standardized features; zero for constant columns
    intercept: float
    dropped: list[int] = field(default_factory=list)

    @property
    def coef(self) -> np.ndarray:
        """Coefficients in original units, shaped (n_columns, n_lags)."""
        c = np.where(self.std > 0, self.beta / np.where(self.std > 0, self.std, 1.0), 0.0)
        return c.reshape(len(self.columns), self.n_lags)

    def predict_level(self, X) -> np.ndarray:
        Z = (X - self.mean) / np.where(self.std > 0, self.std, 1.0)
        return self.intercept + Z @ self.beta

    def predict_delta(self, X) -> np.ndarray:
        return self.predict_level(X) - X[:, 0]


def fit_ar(frames, delta_minus: float = 60.0, ridge: float = 1e-6, columns=None, dt: float = 5.0) -> ArModel:
    if ridge < 0:
        raise ValueError("ridge must be non-negative")
    frames = [frames] if isinstance(frames, TimeSeriesFrame) else list(frames)
    n_lags = ForecastRequest(0, delta_minus, dt, dt).n_lags
    cols = frame_columns(frames[0], columns)
    Xs, ys = [], []
    for fr in frames:
        if len(fr) <= n_lags:
            continue
        X, dy = one_step_dataset(fr, cols, n_lags)
        Xs.append(X)
        ys.append(dy + X[:, 0])  # level target
    if not Xs:
        raise ValueError("no frame is long enough for the lookback window")
    X, y = np.vstack(Xs), np.concatenate(ys)
    mean, std = X.mean(axis=0), X.std(axis=0)
    live = std > 1e-12 * np.maximum(np.abs(mean), 1.0)
    std = np.where(live, std, 0.0)
    Z = (X[:, live] - mean[live]) / std[live]
    yc = y - y.mean()
    G = Z.T @ Z
    if ridge == 0.0 and Z.shape[1] and np.linalg.matrix_rank(Z) < Z.shape[1]:
        raise SingularDesignError("lag design matrix is rank deficient; use ridge > 0")
    beta_live = np.linalg.solve(G + ridge * np.eye(G.shape[0]), Z.T @ yc) if Z.shape[1] else np.zeros(0)
    beta = np.zeros(X.shape[1])
    beta[live] = beta_live
    return ArModel(cols, n_lags, ridge, mean, std, beta, float(y.mean()), list(np.flatnonzero(~live)))


def ar_forecast(frame: TimeSeriesFrame, req: ForecastRequest, ridge: float = 1e-6, model: ArModel | None = None
                ) -> Forecast:
    """Recursive ridge-AR forecast; fits on the frame's training split unless a model is given."""
    if model is None:
        model = fit_ar(temporal_split(frame)[0], req.delta_minus, ridge, dt=req.dt)
    path = recursive_paths(model.predict_delta, frame, model.columns, model.n_lags, [req.t0], req.horizon)
    return Forecast(path[0], "ar", req.t0, req.dt)
