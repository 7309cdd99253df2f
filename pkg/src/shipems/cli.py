"""Command-line entry point: ``shipems <command> [options]``.

Exit codes: 0 success, 1 unexpected failure, 2 bad input (missing or invalid
config, unreadable data, empty corpus), 3 forecaster leakage audit failure.
Errors are printed to stderr as a JSON object.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, ToolkitConfig, dump_config, load_config, reference, reference_markdown
from .forecast.frame import IngestError

log = logging.getLogger("shipems")

LOG_ENV = "SHIPEMS_LOG_LEVEL"


class CliError(Exception):
    def __init__(self, message: str, code: int = 2, kind: str = "input_error", **details):
        super().__init__(message)
        self.code, self.kind, self.details = code, kind, details


def _config(args) -> ToolkitConfig:
    if args.config is None:
        return ToolkitConfig()
    return load_config(args.config)


def _jobs(args) -> int:
    from .sim.experiments import default_jobs

    return default_jobs() if args.jobs is None else max(1, args.jobs)


def _corpus(path) -> list:
    from .sim import MissionProfile

    if path is None:
        raise CliError("--corpus is required")
    d = Path(path)
    if not d.is_dir():
        raise CliError(f"corpus directory not found: {d}")
    files = sorted(d.glob("*.csv"))
    if not files:
        raise CliError(f"corpus directory {d} contains no mission CSV files")
    return [MissionProfile.from_csv(f) for f in files]


def _forecaster(cfg: ToolkitConfig):
    from .forecast import GbtModel
    from .sim import train_preview_forecaster

    fs = cfg.forecaster
    if fs.model_path:
        return GbtModel.load(fs.model_path)
    log.info("training the preview forecaster on %d synthetic missions", fs.train_missions)
    return train_preview_forecaster(fs.train_missions, fs.train_hours, fs.train_seed0, fs.delta_minus,
                                    fs.delta_plus, fs.hyper_grid(), fs.seed)


def _write_json(path: Path, obj) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_jsonable) + "\n")
    return path


def _jsonable(x):
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(f"not JSON serializable: {type(x).__name__}")


# -- commands -------------------------------------------------------------------------------


def cmd_simulate(args) -> int:
    from .plots import trajectory_svg
    from .sim import MissionProfile, generate_rectangular_mission, generate_synthetic_mission, run_mission

    cfg = _config(args)
    if args.mission:
        m = MissionProfile.from_csv(args.mission)
    elif args.generator == "rectangular":
        m = generate_rectangular_mission()
    else:
        m = generate_synthetic_mission(args.seed, args.hours * 3600.0)
    sim = cfg.sim_config(args.strategy, args.aging, args.horizon_min)
    forecaster = _forecaster(cfg) if sim.strategy.name == "mpc-data" else None
    res = run_mission(m, sim, cfg.system(), forecaster)
    out = Path(args.out)
    rj, tc = res.write(out)
    svg = trajectory_svg(res, out / "trajectory.svg")
    print(json.dumps({"result": str(rj), "trace": str(tc), "plot": str(svg),
                      "h2_kg": res.h2_kg, "deg_uv": res.deg_uv, "cost_eur": res.cost_eur}))
    return 0


def cmd_sweep(args) -> int:
    from .plots import pareto_svg
    from .sim import STRATEGY_ORDER, sweep

    cfg = _config(args)
    missions = _corpus(args.corpus)
    strategies = args.strategy_list or list(STRATEGY_ORDER)
    agings = [args.aging] if args.aging else ["bol", "eol"]
    forecaster = _forecaster(cfg) if "mpc-data" in strategies else None
    res = sweep(missions, strategies, agings, cfg.sim_config(), cfg.system(), _jobs(args), forecaster)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "aggregates.csv").write_text(res.aggregates_csv())
    (out / "missions.csv").write_text(res.rows_csv())
    pareto_svg(res.aggregates, out / "pareto.svg")
    _write_json(out / "report.json", {"aggregates": res.aggregates, "failures": res.failures,
                                      "n_missions": len(missions), "wall_clock_s": res.wall_clock_s})
    print(res.aggregates_csv(), end="")
    return 0 if len(res.failures) < len(res.rows) + len(res.failures) else 1


def cmd_horizon(args) -> int:
    from .plots import horizon_svg
    from .sim import horizon_csv, horizon_sweep

    cfg = _config(args)
    missions = _corpus(args.corpus)
    horizons = args.horizons or ([args.horizon_min] if args.horizon_min else [15, 30, 45, 60])
    strategy = args.strategy or "mpc-perfect"
    forecaster = _forecaster(cfg) if strategy == "mpc-data" else None
    rows = horizon_sweep(missions, horizons, cfg.sim_config(), cfg.system(), _jobs(args), args.aging or "bol",
                         strategy, forecaster)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    text = horizon_csv(rows)
    (out / "horizon.csv").write_text(text)
    horizon_svg(rows, out / "horizon.svg")
    print(text, end="")
    return 0


def _frames(paths) -> list:
    from .forecast import read_frames

    files = []
    for p in paths or []:
        p = Path(p)
        files.extend(sorted(p.glob("*.csv")) if p.is_dir() else [p])
    if not files:
        raise CliError("no frame files given (use --frame FILE|DIR)")
    frames = []
    for f in files:
        if not f.is_file():
            raise CliError(f"frame file not found: {f}")
        frames.extend(read_frames(f))
    return frames


def _externals(path, frames):
    from .forecast import read_external

    if path is None:
        return None
    t, v = read_external(path)
    if t.size == 0:
        raise CliError(f"external forecast {path} is empty")
    return [np.interp(fr.t, t, v) for fr in frames]


def cmd_forecast(args) -> int:
    from .forecast import (REPORT_HORIZONS_S, ForecastRequest, GbtModel, backtest, gbt_fit, leakage_audit,
                           split_frames)
    from .plots import overlay_svg

    cfg = _config(args)
    fs = cfg.forecaster
    frames = _frames(args.frame)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    train, val, test = split_frames(frames)
    n_tr, n_va = len(train), len(val)
    report = {"split": {"train": n_tr, "val": n_va, "test": len(test),
                        "rows": [sum(len(f) for f in s) for s in (train, val, test)]}}

    if args.action == "train":
        req = ForecastRequest(0, fs.delta_minus, fs.delta_plus)
        ext_tr = ext_va = None
        if args.external:
            if len(frames) >= 5:
                ext = _externals(args.external, frames)
                ext_tr, ext_va = ext[:n_tr], ext[n_tr:n_tr + n_va]
            else:
                raise CliError("training with an external series needs a corpus of at least 5 frames")
        model = gbt_fit(train, val, fs.hyper_grid(), req, external_train=ext_tr, external_val=ext_va,
                        seed=args.seed if args.seed is not None else fs.seed)
        audit = leakage_audit(model.columns, model.n_lags, req.horizon, model.uses_external,
                              age_feature=model.age_feature)
        report["leakage_audit"] = audit
        if not audit["ok"]:
            raise CliError("leakage audit failed: features see past the forecast origin", code=3,
                           kind="leakage", audit=audit)
        model.save(out / "model.json")
        report["model"] = {k: v for k, v in model.to_json().items() if k != "trees"}
    else:
        if not args.model:
            raise CliError("forecast eval needs --model")
        model = GbtModel.load(args.model)

    ext_test = None
    if args.external:
        ext_all = _externals(args.external, frames)
        ext_test = ext_all[-len(test):] if len(frames) >= 5 else [
            e[len(e) - len(f):] for e, f in zip(ext_all, test)]
    horizon = int(round(max(REPORT_HORIZONS_S) / model.dt))
    bt = backtest(test, horizon, model.n_lags, args.stride, model,
                  ext_test if (ext_test is not None) else None)
    report["metrics"] = bt.metrics()
    report["n_origins"] = int(bt.truth.shape[0])
    for lead in REPORT_HORIZONS_S[:3]:
        if bt.truth.shape[0] and lead / model.dt <= horizon:
            t, pred, real = bt.at("gbt", lead)
            order = np.argsort(t, kind="stable")
            overlay_svg(t[order], real[order], pred[order], out / f"overlay_{lead}s.svg",
                        f"predicted vs real load, {lead} s ahead")
    _write_json(out / "metrics.json", report)
    print(json.dumps(report["metrics"], default=_jsonable))
    return 0


def cmd_gen(args) -> int:
    from .sim import generate_rectangular_mission, generate_synthetic_mission

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    if args.kind == "rectangular":
        m = generate_rectangular_mission()
        written.append(out / f"{m.mission_id}.csv")
        m.to_csv(written[-1])
    else:
        seeds = args.seeds if args.seeds else list(range(args.seed, args.seed + args.count))
        for s in seeds:
            m = generate_synthetic_mission(s, args.hours * 3600.0)
            written.append(out / f"{m.mission_id}.csv")
            m.to_csv(written[-1])
    print(json.dumps({"files": [str(p) for p in written]}))
    return 0


def cmd_config_ref(args) -> int:
    cfg = _config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    dump_config(cfg, out / "config.json")
    (out / "config_reference.md").write_text(reference_markdown(cfg))
    _write_json(out / "config_reference.json", reference(cfg))
    print(json.dumps({"config": str(out / "config.json"), "reference": str(out / "config_reference.md")}))
    return 0


# -- parser --------------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="shipems", description="Energy management toolkit for fuel-cell/battery ships")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, corpus=False, mission=False):
        sp.add_argument("--config", help="JSON or YAML toolkit configuration (defaults if omitted)")
        sp.add_argument("--out", required=True, help="output directory")
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--jobs", type=int, default=None, help="worker processes (default: available cores)")
        if corpus:
            sp.add_argument("--corpus", help="directory of mission CSV files")
        if mission:
            sp.add_argument("--mission", help="mission CSV file")

    s = sub.add_parser("simulate", help="run one mission")
    common(s, mission=True)
    s.add_argument("--generator", choices=("rectangular", "synthetic"), default="rectangular",
                   help="built-in mission when --mission is not given")
    s.add_argument("--hours", type=float, default=2.0)
    s.add_argument("--strategy", default=None)
    s.add_argument("--aging", choices=("bol", "eol"), default=None)
    s.add_argument("--horizon-min", type=float, default=None)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("sweep", help="all strategies and aging states over a corpus")
    common(s, corpus=True)
    s.add_argument("--strategy", dest="strategy_list", action="append", default=None,
                   help="restrict to this strategy (repeatable)")
    s.add_argument("--aging", choices=("bol", "eol"), default=None)
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("horizon", help="MPC prediction-horizon sweep over a corpus")
    common(s, corpus=True)
    s.add_argument("--horizon-min", type=float, default=None, help="single horizon")
    s.add_argument("--horizons", type=float, nargs="+", default=None, help="horizon list in minutes")
    s.add_argument("--strategy", choices=("mpc-perfect", "mpc-data"), default=None)
    s.add_argument("--aging", choices=("bol", "eol"), default=None)
    s.set_defaults(func=cmd_horizon)

    s = sub.add_parser("forecast", help="train or evaluate the load forecaster")
    s.add_argument("action", choices=("train", "eval"))
    common(s)
    s.add_argument("--frame", nargs="+", help="frame CSV files or directories")
    s.add_argument("--model", help="model JSON (eval)")
    s.add_argument("--external", help="external forecast CSV (t_s,p_tot_kw) on the frames' time axis")
    s.add_argument("--stride", type=int, default=1, help="evaluate every n-th origin")
    s.set_defaults(func=cmd_forecast)

    s = sub.add_parser("gen", help="write synthetic mission CSV files")
    common(s)
    s.add_argument("--kind", choices=("synthetic", "rectangular"), default="synthetic")
    s.add_argument("--seeds", type=int, nargs="+", default=None)
    s.add_argument("--count", type=int, default=1, help="with --seed: consecutive seeds to generate")
    s.add_argument("--hours", type=float, default=2.0)
    s.set_defaults(func=cmd_gen, seed=0)

    s = sub.add_parser("config-ref", help="write the default configuration and its source reference")
    common(s)
    s.set_defaults(func=cmd_config_ref)
    return p


def main(argv=None) -> int:
    level = os.environ.get(LOG_ENV, "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    if args.command == "gen" and args.seed is None:
        args.seed = 0
    try:
        return args.func(args)
    except CliError as exc:
        return _fail(exc.kind, str(exc), exc.code, exc.details)
    except FileNotFoundError as exc:
        return _fail("file_not_found", str(exc), 2)
    except (ConfigError, IngestError) as exc:
        return _fail(type(exc).__name__, str(exc), 2)
    except Exception as exc:  # noqa: BLE001 - report anything else as JSON too
        log.debug("unhandled error", exc_info=True)
        return _fail(type(exc).__name__, str(exc), 1)


def _fail(kind: str, message: str, code: int, details=None) -> int:
    err = {"error": kind, "message": message, "exit_code": code}
    if details:
        err["details"] = details
    print(json.dumps(err, default=_jsonable), file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
