"""Uniform multivariate time series: ingestion with gap handling, and the chronological split."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

log = logging.getLogger(__name__)

TIME_COLUMN = "t_s"
TARGET = "p_tot_kw"
COLUMNS = (TARGET, "v_kn", "n_prop_s_rpm", "n_prop_p_rpm", "delta_s_deg", "delta_p_deg")
HEADER = (TIME_COLUMN,) + COLUMNS
MAX_FILL = 3  # longest gap (in samples) bridged by linear interpolation


class IngestError(ValueError):
    pass


@dataclass
class TimeSeriesFrame:
    """Columns sampled every ``dt`` seconds starting at ``t_start``."""

    columns: dict[str, np.ndarray]
    dt: float = 5.0
    t_start: float = 0.0
    source: str = ""

    def __post_init__(self):
        if TARGET not in self.columns:
            raise IngestError(f"frame needs a {TARGET} column")
        ordered = {}
        n = None
        for name in COLUMNS:
            if name not in self.columns:
                continue
            v = np.asarray(self.columns[name], dtype=float)
            if v.ndim != 1:
                raise IngestError(f"column {name} must be 1-D")
            if n is None:
                n = v.shape[0]
            elif v.shape[0] != n:
                raise IngestError("columns differ in length")
            if not np.all(np.isfinite(v)):
                raise IngestError(f"column {name} has missing values")
            ordered[name] = v
        extra = set(self.columns) - set(COLUMNS)
        if extra:
            raise IngestError(f"unknown columns: {sorted(extra)}")
        self.columns = ordered
        if not self.dt > 0:
            raise IngestError("dt must be positive")

    def __len__(self) -> int:
        return self.columns[TARGET].shape[0]

    @property
    def target(self) -> np.ndarray:
        return self.columns[TARGET]

    @property
    def t(self) -> np.ndarray:
        return self.t_start + np.arange(len(self)) * self.dt

    def slice(self, start: int, stop: int) -> "TimeSeriesFrame":
        return TimeSeriesFrame(
            {k: v[start:stop] for k, v in self.columns.items()},
            self.dt,
            self.t_start + start * self.dt,
            self.source,
        )

    def with_column(self, name: str, values) -> "TimeSeriesFrame":
        cols = dict(self.columns)
        cols[name] = values
        return TimeSeriesFrame(cols, self.dt, self.t_start, self.source)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(HEADER)
            cols = [self.columns.get(c, np.zeros(len(self))) for c in COLUMNS]
            for i, t in enumerate(self.t):
                w.writerow([repr(float(t))] + [repr(float(c[i])) for c in cols])


@dataclass
class IngestReport:
    rows: int = 0
    filled_samples: int = 0
    dropped_samples: int = 0
    segments: int = 0
    notes: list[str] = field(default_factory=list)


def _parse_float(s: str) -> float:
    s = s.strip()
    if s == "" or s.lower() in ("nan", "na", "null"):
        return float("nan")
    return float(s)


def read_frames(path, dt: float | None = None, max_fill: int = MAX_FILL, report: IngestReport | None = None
                ) -> list[TimeSeriesFrame]:
    """Load a CSV onto a uniform grid.

    Missing rows and empty cells are gaps. Gaps of at most ``max_fill`` samples
    are linearly interpolated; longer gaps, and unbridgeable gaps at the edges,
    split the series into separate frames.
    """
    path = Path(path)
    report = report if report is not None else IngestReport()
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = tuple(h.strip() for h in next(reader))
        except StopIteration:
            raise IngestError(f"{path}: empty file") from None
        if header != HEADER:
            raise IngestError(f"{path}: header must be {','.join(HEADER)}")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(HEADER):
                raise IngestError(f"{path}:{lineno}: expected {len(HEADER)} fields")
            try:
                rows.append([_parse_float(x) for x in row])
            except ValueError as exc:
                raise IngestError(f"{path}:{lineno}: {exc}") from None
    if not rows:
        raise IngestError(f"{path}: no data rows")
    data = np.array(rows)
    t = data[:, 0]
    if not np.all(np.isfinite(t)):
        raise IngestError(f"{path}: missing timestamps")
    steps = np.diff(t)
    if np.any(steps <= 0):
        raise IngestError(f"{path}: timestamps must be strictly increasing")
    if dt is None:
        dt = float(steps.min()) if steps.size else 5.0
    k = (t - t[0]) / dt
    idx = np.rint(k).astype(np.int64)
    if np.any(np.abs(k - idx) > 1e-6):
        raise IngestError(f"{path}: timestamps are not on a uniform {dt} s grid")
    n = int(idx[-1]) + 1
    grid = np.full((n, len(COLUMNS)), np.nan)
    grid[idx] = data[:, 1:]
    report.rows += len(rows)

    keep = np.ones(n, dtype=bool)
    for j in range(len(COLUMNS)):
        col = grid[:, j]
        miss = np.isnan(col)
        if not miss.any():
            continue
        edges = np.diff(np.r_[0, miss.astype(np.int8), 0])
        for a, b in zip(np.flatnonzero(edges == 1), np.flatnonzero(edges == -1)):
            inner = a > 0 and b < n
            if inner and b - a <= max_fill:
                col[a:b] = np.interp(np.arange(a, b), [a - 1, b], [col[a - 1], col[b]])
                report.filled_samples += b - a
            else:
                keep[a:b] = False
    report.dropped_samples += int((~keep).sum())
    if report.filled_samples:
        log.warning("%s: interpolated %d missing samples", path, report.filled_samples)

    frames = []
    edges = np.diff(np.r_[0, keep.astype(np.int8), 0])
    for a, b in zip(np.flatnonzero(edges == 1), np.flatnonzero(edges == -1)):
        cols = {c: grid[a:b, j].copy() for j, c in enumerate(COLUMNS)}
        frames.append(TimeSeriesFrame(cols, dt, float(t[0] + a * dt), str(path)))
    if len(frames) > 1 or report.dropped_samples:
        log.warning("%s: split into %d segments, %d samples dropped", path, len(frames), report.dropped_samples)
    report.segments += len(frames)
    return frames


def read_external(path, dt: float = 5.0) -> tuple[np.ndarray, np.ndarray]:
    """External forecast file ``t_s,p_tot_kw`` -> (times, values)."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = tuple(h.strip() for h in next(reader, ()))
        if header != (TIME_COLUMN, TARGET):
            raise IngestError(f"{path}: header must be {TIME_COLUMN},{TARGET}")
        try:
            data = np.array([[float(x) for x in row] for row in reader if row], dtype=float).reshape(-1, 2)
        except ValueError as exc:
            raise IngestError(f"{path}: {exc}") from None
    if data.shape[0] and np.any(np.diff(data[:, 0]) <= 0):
        raise IngestError(f"{path}: timestamps must be strictly increasing")
    return data[:, 0], data[:, 1]


def temporal_split(frame: TimeSeriesFrame, ratios=(0.6, 0.2, 0.2), min_len: int = 100):
    """Contiguous chronological train/validation/test split."""
    n = len(frame)
    if n < min_len:
        raise ValueError(f"frame has {n} rows; at least {min_len} are required")
    if abs(sum(ratios) - 1.0) > 1e-12 or min(ratios) <= 0:
        raise ValueError("ratios must be positive and sum to 1")
    n_train = int(round(ratios[0] * n))
    n_val = int(round(ratios[1] * n))
    return frame.slice(0, n_train), frame.slice(n_train, n_train + n_val), frame.slice(n_train + n_val, n)


def split_frames(frames, ratios=(0.6, 0.2, 0.2), min_len: int = 100):
    """Train/validation/test lists of frames.

    Five or more frames are split by count in their given (chronological)
    order, so no frame straddles two sets. Fewer frames are each split
    chronologically with :func:`temporal_split`.
    """
    frames = list(frames)
    if not frames:
        raise ValueError("no frames to split")
    if len(frames) >= 5:
        n = len(frames)
        n_train = max(1, int(round(ratios[0] * n)))
        n_val = max(1, int(round(ratios[1] * n)))
        if n_train + n_val >= n:
            n_train = n - n_val - 1
        return frames[:n_train], frames[n_train:n_train + n_val], frames[n_train + n_val:]
    parts = [temporal_split(f, ratios, min_len) for f in frames if len(f) >= min_len]
    if not parts:
        raise ValueError(f"every frame is shorter than {min_len} rows")
    return [p[0] for p in parts], [p[1] for p in parts], [p[2] for p in parts]


def frame_from_mission(mission) -> TimeSeriesFrame:
    cols = {TARGET: mission.p_load}
    cols.update({c: v for c, v in mission.covariates.items() if c in COLUMNS})
    return TimeSeriesFrame(cols, mission.dt, 0.0, mission.mission_id)
