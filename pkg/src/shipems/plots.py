"""Self-contained SVG figures. Presentation only; nothing numeric depends on them."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

plt.rcParams["svg.hashsalt"] = "shipems"  # stable element ids across runs
_META = {"Date": None, "Creator": None}

STYLE = {"mpc-perfect": "C0", "mpc-data": "C4", "ecms": "C1", "filter600": "C2", "filter60": "C3"}


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, format="svg", metadata=_META)
    plt.close(fig)
    return path


def trajectory_svg(result, path, title: str | None = None) -> Path:
    """Powers (load, FC, battery) on top and SoC below."""
    t_min = result.t / 60.0
    fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(8, 5.5), sharex=True, height_ratios=(2, 1))
    ax1.plot(t_min, result.p_load, color="0.5", lw=1.0, label="load")
    ax1.plot(t_min, result.p_fc, color="C0", lw=1.4, label="fuel cell")
    ax1.plot(t_min, result.p_bat, color="C1", lw=1.0, label="battery")
    ax1.axhline(0.0, color="k", lw=0.5)
    ax1.set_ylabel("power [kW]")
    ax1.legend(loc="upper right", fontsize=8)
    ax1.set_title(title or f"{result.mission_id}: {result.strategy} ({result.aging.upper()})")
    ax2.plot(t_min, 100.0 * result.xi, color="C2")
    ax2.set_ylabel("SoC [%]")
    ax2.set_xlabel("time [min]")
    for ax in (ax1, ax2):
        ax.grid(alpha=0.3)
    fig.tight_layout()
    return _save(fig, path)


def pareto_svg(aggregates: list[dict], path) -> Path:
    """Total H2 against total degradation, one marker per strategy and aging state."""
    fig, ax = plt.subplots(figsize=(6, 4.5))
    for a in aggregates:
        if not a["n_missions"]:
            continue
        base = a["strategy"].split("@")[0].split("-no")[0]
        marker = "o" if a["aging"] == "bol" else "s"
        ax.scatter(a["deg_uv"], a["h2_t"], color=STYLE.get(base, "k"), marker=marker,
                   edgecolors="k" if a["pareto"] else "none", s=50)
        ax.annotate(f"{a['strategy']} {a['aging'].upper()}", (a["deg_uv"], a["h2_t"]), fontsize=7,
                    xytext=(4, 3), textcoords="offset points")
    ax.set_xlabel("cumulative FC degradation [uV]")
    ax.set_ylabel("cumulative hydrogen [t]")
    ax.grid(alpha=0.3)
    fig.tight_layout()
    return _save(fig, path)


def horizon_svg(rows, path) -> Path:
    h = [r.horizon_min for r in rows]
    fig, ax1 = plt.subplots(figsize=(6, 4))
    ax1.plot(h, [r.deg_uv for r in rows], "o-", color="C0")
    ax1.set_xlabel("prediction horizon [min]")
    ax1.set_ylabel("cumulative degradation [uV]", color="C0")
    ax2 = ax1.twinx()
    ax2.plot(h, [r.h2_t for r in rows], "s--", color="C1")
    ax2.set_ylabel("cumulative hydrogen [t]", color="C1")
    ax1.grid(alpha=0.3)
    fig.tight_layout()
    return _save(fig, path)


def overlay_svg(t_s, truth, pred, path, title: str) -> Path:
    """Predicted against real load over time plus a scatter of the same pairs."""
    t_h = np.asarray(t_s) / 3600.0
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 4), width_ratios=(2, 1))
    ax1.plot(t_h, truth, color="0.4", lw=0.8, label="real")
    ax1.plot(t_h, pred, color="C0", lw=0.8, label="predicted")
    ax1.set_xlabel("time [h]")
    ax1.set_ylabel("load [kW]")
    ax1.legend(fontsize=8)
    ax1.set_title(title)
    lim = float(max(np.max(truth), np.max(pred), 1.0))
    ax2.scatter(truth, pred, s=3, alpha=0.4)
    ax2.plot([0, lim], [0, lim], color="k", lw=0.6)
    ax2.set_xlabel("real [kW]")
    ax2.set_ylabel("predicted [kW]")
    for ax in (ax1, ax2):
        ax.grid(alpha=0.3)
    fig.tight_layout()
    return _save(fig, path)
