"""Gradient-boosted trees one-step model with recursive multi-step prediction.

Tree fitting is delegated to xgboost; feature construction, grid selection on
recursive validation error, the external-covariate hook and persistence are
handled here.
"""

from __future__ import annotations

import itertools
import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import xgboost as xgb

from .core import (
    Forecast,
    ForecastRequest,
    evaluation_origins,
    frame_columns,
    one_step_dataset,
    recursive_paths,
    truth_paths,
)
from .frame import TimeSeriesFrame

log = logging.getLogger(__name__)

MODEL_SCHEMA = "shipems.gbt/1"
_OBJECTIVES = {"squared": "reg:squarederror", "absolute": "reg:absoluteerror", "huber": "reg:pseudohubererror"}


@dataclass(frozen=True)
class GbtHyper:
    learning_rate: float = 0.1
    max_depth: int = 5
    min_split_loss: float = 0.0
    subsample: float = 0.8  # fraction of rows per tree
    colsample_bynode: float = 0.8  # fraction of features per split
    max_trees: int = 1000
    early_stopping: int = 30
    loss: str = "huber"  # squared | absolute | huber
    huber_slope: float = 300.0  # kW, about the sample-to-sample load noise in assist

    def __post_init__(self):
        if not 0 < self.learning_rate <= 1:
            raise ValueError("learning_rate must be in (0, 1]")
        if self.max_depth < 1 or self.max_trees < 1:
            raise ValueError("max_depth and max_trees must be positive")
        if not (0 < self.subsample <= 1 and 0 < self.colsample_bynode <= 1):
            raise ValueError("sampling fractions must be in (0, 1]")
        if self.loss not in _OBJECTIVES:
            raise ValueError(f"loss must be one of {sorted(_OBJECTIVES)}")

    def xgb_params(self, seed: int) -> dict:
        params = {
            "objective": _OBJECTIVES[self.loss],
            "eval_metric": "mae",
            "tree_method": "hist",
            "eta": self.learning_rate,
            "max_depth": self.max_depth,
            "gamma": self.min_split_loss,
            "subsample": self.subsample,
            "colsample_bynode": self.colsample_bynode,
            "seed": seed,
            "nthread": 1,
            "verbosity": 0,
        }
        if self.loss == "huber":
            params["huber_slope"] = self.huber_slope
        return params


def paper_grid(max_trees: int = 1000) -> list[GbtHyper]:
    """Full search space of the shallow model: 5 x 3 x 3 x 3 x 3 points."""
    return [
        GbtHyper(lr, d, ml, nb, nf, max_trees)
        for lr, d, ml, nb, nf in itertools.product(
            (0.1, 0.05, 0.01, 0.005, 0.001), (3, 5, 10), (0.0, 0.1, 0.2), (0.6, 0.8, 1.0), (0.5, 0.8, 1.0)
        )
    ]


def default_grid() -> list[GbtHyper]:
    """Small subset of :func:`paper_grid` that fits a desk-scale time budget."""
    return [GbtHyper(lr, d, 0.0, 0.8, 0.8) for lr in (0.1, 0.05) for d in (3, 5)]


@dataclass
class GbtModel:
    booster: xgb.Booster
    hyper: GbtHyper
    n_trees: int
    columns: tuple[str, ...]
    n_lags: int
    dt: float
    delta_minus: float
    uses_external: bool = False
    seed: int = 0
    val_score: float | None = None
    grid_scores: list = field(default_factory=list)
    age_feature: bool = False  # covariates frozen at the origin, with their age as a feature

    def predict_delta(self, X) -> np.ndarray:
        return self.booster.inplace_predict(np.ascontiguousarray(X, dtype=np.float64),
                                            iteration_range=(0, self.n_trees))

    @property
    def n_features(self) -> int:
        return len(self.columns) * self.n_lags + int(self.age_feature) + (2 if self.uses_external else 0)

    def paths(self, frame: TimeSeriesFrame, origins, horizon: int, external=None) -> np.ndarray:
        return recursive_paths(self.predict_delta, frame, self.columns, self.n_lags, origins, horizon, external,
                               self.age_feature)

    def to_json(self) -> dict:
        trees = json.loads(bytes(self.booster.save_raw(raw_format="json")).decode())
        return {
            "schema": MODEL_SCHEMA,
            "hyper": asdict(self.hyper),
            "n_trees": self.n_trees,
            "columns": list(self.columns),
            "n_lags": self.n_lags,
            "dt": self.dt,
            "delta_minus": self.delta_minus,
            "uses_external": self.uses_external,
            "seed": self.seed,
            "val_score": self.val_score,
            "grid_scores": self.grid_scores,
            "age_feature": self.age_feature,
            "trees": trees,
        }

    @classmethod
    def from_json(cls, d: dict) -> "GbtModel":
        if d.get("schema") != MODEL_SCHEMA:
            raise ValueError(f"unsupported model schema {d.get('schema')!r}")
        booster = xgb.Booster()
        booster.load_model(bytearray(json.dumps(d["trees"]).encode()))
        return cls(booster, GbtHyper(**d["hyper"]), int(d["n_trees"]), tuple(d["columns"]), int(d["n_lags"]),
                   float(d["dt"]), float(d["delta_minus"]), bool(d["uses_external"]), int(d["seed"]),
                   d.get("val_score"), d.get("grid_scores", []), bool(d.get("age_feature", False)))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json()))

    @classmethod
    def load(cls, path) -> "GbtModel":
        return cls.from_json(json.loads(Path(path).read_text()))


def _as_list(frames) -> list[TimeSeriesFrame]:
    return [frames] if isinstance(frames, TimeSeriesFrame) else list(frames)


def _stack(frames, columns, n_lags, externals, max_age=0, rng=None):
    """One-step rows; with ``max_age`` > 0 each row appears twice, once with
    current covariates and once with covariates 1..max_age-1 samples stale."""
    Xs, ys = [], []
    for i, fr in enumerate(frames):
        if len(fr) <= n_lags:
            continue
        ext = None if externals is None else externals[i]
        if max_age <= 0:
            X, y = one_step_dataset(fr, columns, n_lags, ext)
            Xs.append(X)
            ys.append(y)
            continue
        n_rows = len(fr) - n_lags
        for ages in (0, rng.integers(1, max(max_age, 2), size=n_rows)):
            X, y = one_step_dataset(fr, columns, n_lags, ext, ages)
            Xs.append(X)
            ys.append(y)
    if not Xs:
        raise ValueError("no frame is long enough for the lookback window")
    return np.vstack(Xs), np.concatenate(ys)


def external_paths_from_series(series, origins, horizon: int) -> np.ndarray:
    """Future values issued at each origin from an aligned external series."""
    series = np.asarray(series, dtype=float)
    origins = np.asarray(origins, dtype=np.int64)
    return series[origins[:, None] + 1 + np.arange(horizon)[None, :]]


def recursive_mae(model_predict, frames, columns, n_lags, horizon, stride, externals=None,
                  age_feature: bool = False) -> float:
    total, count = 0.0, 0
    for i, fr in enumerate(frames):
        origins = evaluation_origins(fr, n_lags, horizon, stride)
        if origins.size == 0:
            continue
        ext = None if externals is None else external_paths_from_series(externals[i], origins, horizon)
        P = recursive_paths(model_predict, fr, columns, n_lags, origins, horizon, ext, age_feature)
        Y = truth_paths(fr, origins, horizon)
        total += float(np.abs(P - Y).sum())
        count += P.size
    if count == 0:
        raise ValueError("validation frames are too short for the requested horizon")
    return total / count


def gbt_fit(
    train,
    val,
    grid=None,
    req: ForecastRequest = ForecastRequest(),
    *,
    external_train=None,
    external_val=None,
    seed: int = 0,
    val_stride: int = 12,
    refit: bool = True,
    columns=None,
    stale_covariates: bool = True,
) -> GbtModel:
    """Fit one model per grid point with early stopping on one-step validation
    loss, select by recursive validation MAE over the request horizon, then
    (optionally) refit the winner on train + validation with its tree count.

    With ``stale_covariates`` the training rows also show covariate windows up
    to one horizon old, tagged with their age, which is what the recursion
    feeds the model once it runs past the origin."""
    grid = default_grid() if grid is None else list(grid)
    if not grid:
        raise ValueError("hyperparameter grid is empty")
    train, val = _as_list(train), _as_list(val)
    if not train or not val:
        raise ValueError("train and validation splits must be non-empty")
    if (external_train is None) != (external_val is None):
        raise ValueError("external series must be given for both train and validation or neither")
    uses_ext = external_train is not None
    cols = frame_columns(train[0], columns)
    n_lags = req.n_lags
    age = stale_covariates and len(cols) > 1
    max_age = req.horizon if age else 0
    rng = np.random.default_rng(seed)
    Xtr, ytr = _stack(train, cols, n_lags, external_train, max_age, rng)
    Xva, yva = _stack(val, cols, n_lags, external_val, max_age, rng)
    dtrain = xgb.DMatrix(Xtr, label=ytr)
    dval = xgb.DMatrix(Xva, label=yva)

    best = None
    scores = []
    for hp in grid:
        booster = xgb.train(hp.xgb_params(seed), dtrain, num_boost_round=hp.max_trees,
                            evals=[(dval, "val")], early_stopping_rounds=hp.early_stopping, verbose_eval=False)
        n_trees = int(booster.best_iteration) + 1
        cand = GbtModel(booster, hp, n_trees, cols, n_lags, req.dt, req.delta_minus, uses_ext, seed, age_feature=age)
        score = recursive_mae(cand.predict_delta, val, cols, n_lags, req.horizon, val_stride, external_val, age)
        scores.append({"hyper": asdict(hp), "n_trees": n_trees, "val_mae": score})
        log.info("gbt grid point %s: %d trees, recursive val MAE %.3f", hp, n_trees, score)
        if best is None or score < best[0]:
            best = (score, cand)
    score, model = best
    model.val_score = score
    model.grid_scores = scores
    if refit:
        dall = xgb.DMatrix(np.vstack([Xtr, Xva]), label=np.concatenate([ytr, yva]))
        model.booster = xgb.train(model.hyper.xgb_params(seed), dall, num_boost_round=model.n_trees,
                                  verbose_eval=False)
    return model


def gbt_predict(model: GbtModel, frame: TimeSeriesFrame, req: ForecastRequest, external: Forecast | None = None
                ) -> Forecast:
    ext = None
    if external is not None:
        if not model.uses_external:
            raise ValueError("model was trained without an external covariate")
        ext_vals = np.asarray(external.values, dtype=float)
        if ext_vals.shape != (req.horizon,):
            raise ValueError(f"external forecast has {ext_vals.size} values, horizon needs {req.horizon}")
        ext = ext_vals[None, :]
    elif model.uses_external:
        raise ValueError("model requires an external forecast")
    return Forecast(model.paths(frame, [req.t0], req.horizon, ext)[0], "gbt", req.t0, req.dt)


def gbt_paths(model: GbtModel, frame: TimeSeriesFrame, origins, horizon: int, external=None) -> np.ndarray:
    return model.paths(frame, origins, horizon, external)


def leakage_audit(columns, n_lags: int, horizon: int, uses_external: bool = False, n: int = 400,
                  age_feature: bool = False) -> dict:
    """Run the feature and recursion code on a frame whose values are their own
    sample indices; any feature or predicted value later than the origin is a leak."""
    cols = {c: np.arange(n, dtype=float) for c in columns}
    fr = TimeSeriesFrame(cols, 5.0)
    n_obs = len(columns) * n_lags
    ext_series = np.full(n, -1.0) if uses_external else None
    ages = np.arange(n - n_lags) % horizon if age_feature else None
    X, _ = one_step_dataset(fr, columns, n_lags, ext_series, ages)
    origins_1 = X[:, 0]  # the newest target lag carries the row's own time index
    lead_train = float((X[:, :n_obs].max(axis=1) - origins_1).max())

    def seen_max(Xr):  # next "prediction" = latest timestamp visible to the model
        return Xr[:, :n_obs].max(axis=1) - Xr[:, 0]

    origins = evaluation_origins(fr, n_lags, horizon, stride=7)
    ext = np.full((origins.size, horizon), -1.0) if uses_external else None
    P = recursive_paths(seen_max, fr, columns, n_lags, origins, horizon, ext, age_feature)
    lead_rec = float((P.max(axis=1) - origins).max())
    return {
        "ok": lead_train <= 0 and lead_rec <= 0,
        "max_lead_one_step": lead_train,
        "max_lead_recursive": lead_rec,
        "n_origins": int(origins.size),
        "external": "future covariate issued at the origin" if uses_external else None,
    }
