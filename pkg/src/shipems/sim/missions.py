"""Mission load profiles: container, CSV exchange, simple generators and burst analysis."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

CSV_HEADER = ("t_s", "p_tot_kw", "v_kn", "n_prop_s_rpm", "n_prop_p_rpm", "delta_s_deg", "delta_p_deg")
COVARIATES = CSV_HEADER[2:]


@dataclass
class MissionProfile:
    """Uniformly sampled load (kW) with optional covariate columns."""

    mission_id: str
    p_load: np.ndarray
    dt: float = 5.0
    covariates: dict[str, np.ndarray] = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.p_load = np.asarray(self.p_load, dtype=float)
        if self.p_load.ndim != 1 or self.p_load.size == 0:
            raise ValueError("p_load must be a non-empty 1-D series")
        if np.any(self.p_load < 0) or not np.all(np.isfinite(self.p_load)):
            raise ValueError("p_load must be finite and non-negative")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        for k, v in list(self.covariates.items()):
            v = np.asarray(v, dtype=float)
            if v.shape != self.p_load.shape:
                raise ValueError(f"covariate {k} has the wrong length")
            self.covariates[k] = v

    @property
    def n(self) -> int:
        return self.p_load.size

    @property
    def duration_s(self) -> float:
        return self.n * self.dt

    @property
    def t(self) -> np.ndarray:
        return np.arange(self.n) * self.dt

    def load_at(self, T_sim: float = 1.0) -> np.ndarray:
        """Load on a T_sim grid over [0, duration), linear between samples."""
        n_out = int(round(self.duration_s / T_sim))
        t = np.arange(n_out) * T_sim
        return np.interp(t, self.t, self.p_load)

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_HEADER)
        cols = [self.covariates.get(c, np.zeros(self.n)) for c in COVARIATES]
        for i in range(self.n):
            w.writerow([_fmt(i * self.dt), _fmt(self.p_load[i])] + [_fmt(c[i]) for c in cols])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_csv(cls, path, mission_id: str | None = None) -> "MissionProfile":
        from ..forecast.frame import read_frames

        frames = read_frames(path)
        if len(frames) != 1:
            raise ValueError(f"{path}: mission files must not contain gaps longer than the fill limit")
        fr = frames[0]
        mid = mission_id or Path(path).stem
        cov = {c: fr.columns[c] for c in COVARIATES if c in fr.columns}
        return cls(mid, fr.columns["p_tot_kw"], fr.dt, cov, {"source": str(path)})


def _fmt(x: float) -> str:
    return repr(float(x))


def generate_rectangular_mission(
    p_base: float = 1300.0,
    p_pulse: float = 3800.0,
    t_pulse_start: float = 1800.0,
    t_pulse_len: float = 600.0,
    total_len: float = 3600.0,
    dt: float = 5.0,
    mission_id: str = "rectangular",
) -> MissionProfile:
    if not total_len > 0 or t_pulse_len < 0 or t_pulse_start < 0:
        raise ValueError("durations must be positive")
    t = np.arange(int(round(total_len / dt))) * dt
    p = np.where((t >= t_pulse_start) & (t < t_pulse_start + t_pulse_len), p_pulse, p_base)
    meta = {"kind": "rectangular", "p_base": p_base, "p_pulse": p_pulse,
            "t_pulse_start": t_pulse_start, "t_pulse_len": t_pulse_len}
    return MissionProfile(mission_id, p, dt, {}, meta)


def energy_bursts(m: MissionProfile, p_thresh: float) -> list[float]:
    """Energy (kWh) above ``p_thresh`` in each maximal run of samples exceeding it."""
    if p_thresh < 0:
        raise ValueError("threshold must be non-negative")
    excess = m.p_load - p_thresh
    above = excess > 0
    if not above.any():
        return []
    edges = np.diff(np.r_[0, above.astype(np.int8), 0])
    starts, stops = np.flatnonzero(edges == 1), np.flatnonzero(edges == -1)
    return [float(excess[a:b].sum() * m.dt / 3600.0) for a, b in zip(starts, stops)]


# -- synthetic regime-switching missions -------------------------------------------------


@dataclass(frozen=True)
class Regime:
    level: float  # mean load, kW
    mean_duration: float  # s, gamma distributed
    noise_std: float  # relative std of the slow mean-reverting fluctuation
    speed: float  # kn
    steer_std: float  # deg


DEFAULT_REGIMES = {
    "idle": Regime(200.0, 480.0, 0.25, 3.0, 2.0),
    "sailing": Regime(1300.0, 900.0, 0.10, 8.0, 3.0),
    "assist": Regime(3800.0, 480.0, 0.15, 11.0, 15.0),
}
# successor probabilities; a tug alternates transit legs with assist jobs and waiting
DEFAULT_TRANSITIONS = {
    "idle": {"sailing": 1.0},
    "sailing": {"assist": 0.6, "idle": 0.4},
    "assist": {"sailing": 1.0},
}


@dataclass(frozen=True)
class GeneratorSettings:
    regimes: dict = field(default_factory=lambda: dict(DEFAULT_REGIMES))
    transitions: dict = field(default_factory=lambda: dict(DEFAULT_TRANSITIONS))
    start: str = "sailing"  # missions begin with the transit out of port
    duration_shape: float = 2.0
    min_duration: float = 30.0
    tau_noise: float = 60.0  # s, fluctuation correlation time
    white_std: float = 0.03  # relative, sample-to-sample
    tau_speed: float = 60.0  # s
    rpm_max: float = 1000.0
    rpm_noise: float = 5.0  # rpm
    tau_steer: float = 20.0  # s
    p_ref_rpm: float = 4150.0  # power at rpm_max
    maneuver_lead: float = 30.0  # s, speed and steering anticipate the next regime


def generate_synthetic_mission(
    seed: int,
    duration: float = 7200.0,
    regimes: GeneratorSettings | None = None,
    dt: float = 5.0,
    mission_id: str | None = None,
) -> MissionProfile:
    """Seeded semi-Markov regime chain with mean-reverting load fluctuations
    and covariates that follow the regime kinematics."""
    g = regimes or GeneratorSettings()
    if not duration > 0:
        raise ValueError("duration must be positive")
    for name, nxt in g.transitions.items():
        if abs(sum(nxt.values()) - 1.0) > 1e-9:
            raise ValueError(f"transition probabilities from {name} must sum to 1")
    rng = np.random.default_rng(seed)
    n = int(round(duration / dt))
    names = list(g.regimes)
    code = np.empty(n, dtype=np.int64)
    segments = []
    k, cur = 0, g.start
    while k < n:
        reg = g.regimes[cur]
        d = max(g.min_duration, rng.gamma(g.duration_shape, reg.mean_duration / g.duration_shape))
        m = max(1, int(round(d / dt)))
        code[k:k + m] = names.index(cur)
        segments.append([cur, k * dt, min(k + m, n) * dt])
        k += m
        succ = g.transitions[cur]
        cur = str(rng.choice(list(succ), p=list(succ.values())))

    level = np.array([g.regimes[s].level for s in names])[code]
    rel_std = np.array([g.regimes[s].noise_std for s in names])[code]
    lead = int(round(g.maneuver_lead / dt))
    ahead = code[np.minimum(np.arange(n) + lead, n - 1)]
    speed_target = np.array([g.regimes[s].speed for s in names])[ahead]
    steer_std = np.array([g.regimes[s].steer_std for s in names])[ahead]

    a = math.exp(-dt / g.tau_noise)
    x = _ar1(rng.standard_normal(n), a)
    smooth = np.maximum(level * (1.0 + rel_std * x), 0.0)
    p = np.maximum(smooth * (1.0 + g.white_std * rng.standard_normal(n)), 0.0)

    # speed: first-order lag towards the regime speed
    b = math.exp(-dt / g.tau_speed)
    v = np.empty(n)
    v_prev = speed_target[0]
    for i in range(n):
        v_prev = b * v_prev + (1.0 - b) * speed_target[i]
        v[i] = v_prev
    rpm = g.rpm_max * np.cbrt(smooth / g.p_ref_rpm)
    rpm_s = rpm + g.rpm_noise * rng.standard_normal(n)
    rpm_p = rpm + g.rpm_noise * rng.standard_normal(n)
    c = math.exp(-dt / g.tau_steer)
    steer = steer_std * _ar1(rng.standard_normal(n), c)
    delta_s = steer + 0.5 * rng.standard_normal(n)
    delta_p = steer + 0.5 * rng.standard_normal(n)

    cov = {
        "v_kn": v,
        "n_prop_s_rpm": np.maximum(rpm_s, 0.0),
        "n_prop_p_rpm": np.maximum(rpm_p, 0.0),
        "delta_s_deg": delta_s,
        "delta_p_deg": delta_p,
    }
    meta = {"kind": "synthetic", "seed": int(seed), "segments": segments}
    return MissionProfile(mission_id or f"syn{seed:04d}", p, dt, cov, meta)


def _ar1(eps: np.ndarray, a: float) -> np.ndarray:
    """Unit-variance stationary AR(1) driven by ``eps``."""
    from scipy.signal import lfilter

    s = math.sqrt(1.0 - a * a)
    x, _ = lfilter([s], [1.0, -a], eps[1:], zi=[a * eps[0]])
    return np.r_[eps[0], x]


def regime_codes(m: MissionProfile) -> list[str]:
    """Per-sample regime labels of a synthetic mission."""
    labels = [""] * m.n
    for name, t0, t1 in m.metadata.get("segments", []):
        for i in range(int(round(t0 / m.dt)), int(round(t1 / m.dt))):
            labels[i] = name
    return labels


def synthetic_corpus(n_missions: int = 20, seed0: int = 0, hours: float = 2.0, settings=None) -> list[MissionProfile]:
    return [generate_synthetic_mission(seed0 + i, hours * 3600.0, settings) for i in range(n_missions)]
