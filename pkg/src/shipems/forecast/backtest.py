"""Rolling-origin backtests on held-out frames, reported at fixed lead times."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import evaluation_origins, persistence_paths, truth_paths
from .gbt import GbtModel, external_paths_from_series
from .metrics import evaluate_metrics

REPORT_HORIZONS_S = (5, 60, 900, 1800)


@dataclass
class Backtest:
    horizon: int  # steps
    dt: float
    truth: np.ndarray  # (n_origins, horizon)
    times: np.ndarray  # (n_origins,) origin time in s
    paths: dict = field(default_factory=dict)  # source -> (n_origins, horizon)

    def metrics(self, horizons_s=REPORT_HORIZONS_S) -> dict:
        """{source: {"<h>s": metrics dict or None}} for every requested lead time."""
        out = {}
        floor = 0.01 * float(np.mean(np.abs(self.truth))) if self.truth.size else 0.0
        for src, P in self.paths.items():
            per = {}
            for h_s in horizons_s:
                step = int(round(h_s / self.dt))
                if step < 1 or step > self.horizon or self.truth.shape[0] == 0:
                    per[f"{h_s:g}s"] = None
                    continue
                per[f"{h_s:g}s"] = evaluate_metrics(P[:, step - 1], self.truth[:, step - 1], floor).to_dict()
            out[src] = per
        return out

    def at(self, source: str, lead_s: float):
        """(target times, predicted, real) for one lead time."""
        step = int(round(lead_s / self.dt))
        return self.times + step * self.dt, self.paths[source][:, step - 1], self.truth[:, step - 1]


def backtest(frames, horizon: int, n_lags: int, stride: int = 1, model: GbtModel | None = None,
             externals=None) -> Backtest:
    """Forecast from every ``stride``-th admissible origin of each frame.

    Persistence is always included. ``externals`` holds one aligned issued
    series per frame; it is scored on its own and, if the model was trained
    with it, fed to the model.
    """
    frames = list(frames)
    if not frames:
        raise ValueError("no frames to evaluate")
    if model is not None and model.uses_external and externals is None:
        raise ValueError("model requires an external series")
    dt = frames[0].dt
    Ys, Ts, paths = [], [], {"persistence": []}
    if model is not None:
        paths["gbt"] = []
    if externals is not None:
        paths["external"] = []
    for i, fr in enumerate(frames):
        origins = evaluation_origins(fr, n_lags, horizon, stride)
        if origins.size == 0:
            continue
        Ys.append(truth_paths(fr, origins, horizon))
        Ts.append(fr.t[origins])
        paths["persistence"].append(persistence_paths(fr, origins, horizon))
        ext = None
        if externals is not None:
            ext = external_paths_from_series(externals[i], origins, horizon)
            paths["external"].append(ext)
        if model is not None:
            paths["gbt"].append(model.paths(fr, origins, horizon, ext if model.uses_external else None))
    if not Ys:
        return Backtest(horizon, dt, np.zeros((0, horizon)), np.zeros(0), {k: np.zeros((0, horizon)) for k in paths})
    return Backtest(horizon, dt, np.vstack(Ys), np.concatenate(Ts), {k: np.vstack(v) for k, v in paths.items()})
