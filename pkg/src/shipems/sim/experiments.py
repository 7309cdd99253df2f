"""Corpus sweeps across strategies, aging states and MPC horizons."""

from __future__ import annotations

import csv
import io
import logging
import os
import time
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

from ..system import ShipSystem
from .missions import MissionProfile, synthetic_corpus
from .runner import STRATEGY_ORDER, SimConfig, StrategySpec, run_mission, with_strategy

log = logging.getLogger(__name__)

FORECAST_SEED_OFFSET = 10_000  # forecaster training corpus never overlaps evaluation seeds


@dataclass
class SweepResult:
    rows: list[dict]  # one per (aging, strategy, mission), metrics of run_mission
    aggregates: list[dict]  # one per (aging, strategy)
    failures: list[dict] = field(default_factory=list)
    wall_clock_s: float = 0.0

    def aggregate(self, strategy: str, aging: str) -> dict:
        for a in self.aggregates:
            if a["strategy"] == strategy and a["aging"] == aging:
                return a
        raise KeyError((strategy, aging))

    def aggregates_csv(self) -> str:
        return _csv(self.aggregates, AGG_FIELDS)

    def rows_csv(self) -> str:
        return _csv(self.rows, ROW_FIELDS)


AGG_FIELDS = ("aging", "strategy", "n_missions", "hours", "h2_t", "deg_uv", "deg_static_uv", "deg_dynamic_uv",
              "cost_eur", "soc_violation_s", "soc_violation_unflagged_s", "mpc_fallbacks", "pareto")
ROW_FIELDS = ("aging", "strategy", "mission_id", "duration_h", "h2_kg", "deg_uv", "deg_static_uv",
              "deg_dynamic_uv", "cost_eur", "xi_final", "xi_min", "xi_max")


def _csv(rows, fields) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=fields, extrasaction="ignore", lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in r.items()})
    return buf.getvalue()


def _job(args):
    m, cfg, system, forecaster = args
    try:
        res = run_mission(m, cfg, system, forecaster)
        return {"ok": True, "metrics": res.metrics()}
    except Exception as exc:  # noqa: BLE001 - a failing mission must not stop the sweep
        return {"ok": False, "mission_id": m.mission_id, "strategy": cfg.strategy.label, "aging": cfg.aging,
                "error": f"{type(exc).__name__}: {exc}", "traceback": traceback.format_exc(limit=3)}


def _strategy_rank(label: str) -> tuple:
    base = label.split("@")[0].split("-noadapt")[0].split("-nolosses")[0]
    return (STRATEGY_ORDER.index(base) if base in STRATEGY_ORDER else len(STRATEGY_ORDER), label)


def default_jobs() -> int:
    return len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else (os.cpu_count() or 1)


def run_many(tasks, jobs: int | None = None) -> list[dict]:
    """Evaluate (mission, cfg, system, forecaster) tuples, in order, across worker processes."""
    jobs = default_jobs() if jobs is None else max(int(jobs), 1)
    if jobs == 1 or len(tasks) <= 1:
        return [_job(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_job, tasks, chunksize=max(1, len(tasks) // (4 * jobs))))


def sweep(
    missions: list[MissionProfile],
    strategies=STRATEGY_ORDER,
    agings=("bol", "eol"),
    cfg: SimConfig = SimConfig(),
    system: ShipSystem | None = None,
    jobs: int | None = None,
    forecaster=None,
) -> SweepResult:
    """Run every mission under every (strategy, aging) pair and total the results.

    Per-mission failures are collected in ``failures`` and excluded from the
    totals. Aggregation order depends only on mission ids, so the result is
    the same for any worker count.
    """
    if not missions:
        raise ValueError("the mission list is empty")
    specs = [StrategySpec.parse(s) for s in strategies]
    if not specs or not agings:
        raise ValueError("strategies and agings must be non-empty")
    ids = [m.mission_id for m in missions]
    if len(set(ids)) != len(ids):
        raise ValueError("mission ids must be unique")
    if forecaster is None and any(s.name == "mpc-data" for s in specs):
        raise ValueError("mpc-data needs a trained forecaster")
    system = system or ShipSystem()
    t0 = time.perf_counter()
    ordered = sorted(missions, key=lambda m: m.mission_id)
    tasks = [(m, with_strategy(cfg, s, a), system, forecaster if s.name == "mpc-data" else None)
             for a in agings for s in specs for m in ordered]
    outcomes = run_many(tasks, jobs)

    rows, failures = [], []
    for out in outcomes:
        if out["ok"]:
            rows.append(out["metrics"])
        else:
            log.warning("mission %s (%s, %s) failed: %s", out["mission_id"], out["strategy"], out["aging"], out["error"])
            failures.append(out)
    aggregates = []
    for a in agings:
        aging = a.lower()
        for s in sorted(specs, key=lambda s: _strategy_rank(s.label)):
            sel = [r for r in rows if r["aging"] == aging and r["strategy"] == s.label]
            aggregates.append(_totals(sel, s.label, aging))
    _flag_pareto(aggregates)
    return SweepResult(rows, aggregates, failures, time.perf_counter() - t0)


def _totals(rows: list[dict], strategy: str, aging: str) -> dict:
    def total(key):
        return float(sum(r[key] for r in rows))

    def vtotal(key):
        return float(sum(r["violations"][key] for r in rows))

    return {
        "aging": aging,
        "strategy": strategy,
        "n_missions": len(rows),
        "hours": total("duration_h"),
        "h2_t": total("h2_kg") / 1000.0,
        "deg_uv": total("deg_uv"),
        "deg_static_uv": total("deg_static_uv"),
        "deg_dynamic_uv": total("deg_dynamic_uv"),
        "cost_eur": total("cost_eur"),
        "soc_violation_s": vtotal("soc_violation_s"),
        "soc_violation_unflagged_s": vtotal("soc_violation_unflagged_s"),
        "mpc_fallbacks": int(vtotal("mpc_fallbacks")),
        "pareto": False,
    }


def _flag_pareto(aggregates: list[dict]) -> None:
    """Mark points not dominated in (H2, degradation) within their aging state."""
    for a in aggregates:
        peers = [b for b in aggregates if b["aging"] == a["aging"] and b is not a and b["n_missions"]]
        a["pareto"] = bool(a["n_missions"]) and not any(
            b["h2_t"] <= a["h2_t"] and b["deg_uv"] <= a["deg_uv"]
            and (b["h2_t"] < a["h2_t"] or b["deg_uv"] < a["deg_uv"])
            for b in peers
        )


@dataclass
class HorizonRow:
    horizon_min: float
    h2_t: float
    deg_uv: float
    n_missions: int
    wall_clock_s: float
    failures: int


def horizon_sweep(
    missions: list[MissionProfile],
    horizons=(15, 30, 45, 60),
    cfg: SimConfig = SimConfig(),
    system: ShipSystem | None = None,
    jobs: int | None = None,
    aging: str = "bol",
    strategy: str = "mpc-perfect",
    forecaster=None,
) -> list[HorizonRow]:
    """MPC totals as a function of the prediction horizon (minutes)."""
    out = []
    for h in horizons:
        if abs(h * 60.0 / cfg.T_mpc - round(h * 60.0 / cfg.T_mpc)) > 1e-9:
            raise ValueError(f"horizon {h} min is not a multiple of T_mpc")
        res = sweep(missions, [StrategySpec(strategy, horizon_min=float(h))], (aging,), cfg, system, jobs,
                    forecaster)
        agg = res.aggregates[0]
        out.append(HorizonRow(float(h), agg["h2_t"], agg["deg_uv"], agg["n_missions"], res.wall_clock_s,
                              len(res.failures)))
    return out


def horizon_csv(rows: list[HorizonRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["horizon_min", "h2_t", "deg_uv", "n_missions", "wall_clock_s", "failures"])
    for r in rows:
        w.writerow([repr(r.horizon_min), repr(r.h2_t), repr(r.deg_uv), r.n_missions, repr(r.wall_clock_s),
                    r.failures])
    return buf.getvalue()


def train_preview_forecaster(n_missions: int = 20, hours: float = 2.0, seed0: int = FORECAST_SEED_OFFSET,
                             delta_minus: float = 60.0, delta_plus: float = 900.0, grid=None, seed: int = 0,
                             settings=None):
    """GBT forecaster for ``mpc-data`` trained on a synthetic corpus disjoint from the evaluation seeds.

    Missions are split 80/20 by count into training and validation sets.
    """
    from ..forecast import ForecastRequest, frame_from_mission, gbt_fit

    frames = [frame_from_mission(m) for m in synthetic_corpus(n_missions, seed0, hours, settings)]
    n_val = max(1, round(0.2 * len(frames)))
    if len(frames) - n_val < 1:
        raise ValueError("need at least two missions to train a forecaster")
    req = ForecastRequest(0, delta_minus, delta_plus)
    return gbt_fit(frames[:-n_val], frames[-n_val:], grid, req, seed=seed, val_stride=24)


def mpc_horizon_config(cfg: SimConfig, minutes: float) -> SimConfig:
    spec = replace(cfg.strategy, horizon_min=float(minutes))
    return replace(cfg, strategy=spec)
