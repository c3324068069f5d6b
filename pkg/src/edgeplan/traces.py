"""Trace ingestion, calendar grouping, trace statistics and synthetic bursts."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from datetime import date, timedelta
from pathlib import Path
from typing import Iterable, Iterator, Optional, Sequence

import numpy as np
import pandas as pd

from ._validation import check_random_state_seed, check_workload, check_workload_matrix

__all__ = [
    "PERCENTILES",
    "BurstSpec",
    "RepresentativeSet",
    "StationSet",
    "TraceError",
    "TraceSeries",
    "TraceStats",
    "VariationRatio",
    "WorkloadFrame",
    "calendar_labels",
    "group_and_represent",
    "load_holidays",
    "parse_trace",
    "scale_subset",
    "synth_bursts",
    "variation_ratio",
    "workload_stats",
]

WORKDAY = "workday"
HOLIDAY = "holiday"
PERCENTILES = (99.999, 99.99, 99.9, 99.0, 90.0, 80.0, 70.0, 60.0, 50.0, 40.0)


class TraceError(ValueError):
    """Raised for malformed station or trace files."""


@dataclass(frozen=True)
class StationSet:
    station_ids: tuple
    xy: np.ndarray = field(repr=False)

    def __post_init__(self):
        xy = np.asarray(self.xy, dtype=float)
        ids = tuple(str(s) for s in self.station_ids)
        if len(ids) == 0:
            raise TraceError("station set is empty")
        if len(set(ids)) != len(ids):
            raise TraceError("station ids must be unique")
        if xy.shape != (len(ids), 2) or not np.isfinite(xy).all():
            raise TraceError("station coordinates must be a finite (M, 2) array")
        object.__setattr__(self, "station_ids", ids)
        object.__setattr__(self, "xy", xy)

    def __len__(self):
        return len(self.station_ids)

    @property
    def index(self) -> dict:
        return {sid: i for i, sid in enumerate(self.station_ids)}

    @classmethod
    def from_csv(cls, path) -> "StationSet":
        try:
            df = pd.read_csv(path, dtype={"station_id": str})
        except FileNotFoundError:
            raise
        except Exception as exc:  # pandas raises several parser errors
            raise TraceError(f"{path}: cannot parse stations file ({exc})") from exc
        missing = {"station_id", "x", "y"} - set(df.columns)
        if missing:
            raise TraceError(f"{path}: stations file lacks columns {sorted(missing)}")
        xy = df[["x", "y"]].to_numpy(dtype=float)
        bad = ~np.isfinite(xy).all(axis=1)
        if bad.any():
            raise TraceError(f"{path}: non-finite coordinates on line {int(np.flatnonzero(bad)[0]) + 2}")
        dup = df["station_id"].duplicated()
        if dup.any():
            raise TraceError(f"{path}: duplicate station_id on line {int(np.flatnonzero(dup)[0]) + 2}")
        return cls(tuple(df["station_id"]), xy)

    def to_csv(self, path) -> None:
        pd.DataFrame({"station_id": self.station_ids, "x": self.xy[:, 0], "y": self.xy[:, 1]}).to_csv(path, index=False)


@dataclass(frozen=True)
class WorkloadFrame:
    slot_index: int
    timestamp: pd.Timestamp
    load: np.ndarray


@dataclass
class TraceSeries:
    """Time-slotted workload vectors with calendar labels.

    ``loads[t, m]`` is the workload of station ``m`` in frame ``t``. Slot
    indices count ``slot_length`` steps from midnight of the first day.
    """

    loads: np.ndarray
    slot_index: np.ndarray
    timestamps: pd.DatetimeIndex
    day_class: np.ndarray
    period_id: np.ndarray
    slot_length: pd.Timedelta = pd.Timedelta(hours=1)
    stations: Optional[StationSet] = None
    request_times: Optional[dict] = field(default=None, repr=False)

    def __post_init__(self):
        self.loads = check_workload_matrix(self.loads, name="loads")
        self.slot_index = np.asarray(self.slot_index, dtype=np.int64)
        self.timestamps = pd.DatetimeIndex(self.timestamps)
        self.day_class = np.asarray(self.day_class, dtype=object)
        self.period_id = np.asarray(self.period_id, dtype=np.int64)
        T = self.loads.shape[0]
        if not (len(self.slot_index) == len(self.timestamps) == len(self.day_class) == len(self.period_id) == T):
            raise TraceError("every frame needs a slot index, timestamp and calendar label")
        if T > 1 and (np.diff(self.slot_index) <= 0).any():
            raise TraceError("slot indices must be strictly increasing")
        if self.stations is not None and len(self.stations) != self.loads.shape[1]:
            raise TraceError("loads width does not match the station set")

    def __len__(self):
        return self.loads.shape[0]

    @property
    def n_stations(self) -> int:
        return self.loads.shape[1]

    @property
    def slot_of_day(self) -> np.ndarray:
        midnight = self.timestamps.normalize()
        return np.asarray((self.timestamps - midnight) // self.slot_length, dtype=np.int64)

    def frames(self) -> Iterator[WorkloadFrame]:
        for t in range(len(self)):
            yield WorkloadFrame(int(self.slot_index[t]), self.timestamps[t], self.loads[t])

    def subset(self, mask) -> "TraceSeries":
        mask = np.asarray(mask)
        return TraceSeries(
            self.loads[mask], self.slot_index[mask], self.timestamps[mask], self.day_class[mask],
            self.period_id[mask], self.slot_length, self.stations, self.request_times,
        )

    @classmethod
    def from_array(cls, loads, start="2024-01-01", slot_length=pd.Timedelta(hours=1),
                   holidays: Iterable[date] = (), periods_per_day=6, stations=None) -> "TraceSeries":
        """Label a contiguous block of frames starting at ``start``."""
        loads = check_workload_matrix(loads, name="loads")
        slot_length = pd.Timedelta(slot_length)
        t0 = pd.Timestamp(start)
        ts = pd.DatetimeIndex([t0 + i * slot_length for i in range(loads.shape[0])])
        first = int((t0 - t0.normalize()) // slot_length)
        day_class, period_id = calendar_labels(ts, holidays, periods_per_day)
        return cls(loads, first + np.arange(loads.shape[0]), ts, day_class, period_id, slot_length, stations)

    def to_csv(self, path) -> None:
        """Write in the aggregated ``timestamp,station_id,load`` format."""
        ids = self.stations.station_ids if self.stations is not None else tuple(str(i) for i in range(self.n_stations))
        T, M = self.loads.shape
        df = pd.DataFrame({
            "timestamp": np.repeat(self.timestamps.strftime("%Y-%m-%dT%H:%M:%S"), M),
            "station_id": np.tile(np.asarray(ids, dtype=object), T),
            "load": self.loads.ravel(),
        })
        df.to_csv(path, index=False, float_format="%.10g")


def load_holidays(path) -> set:
    out = set()
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        try:
            out.add(date.fromisoformat(line))
        except ValueError:
            raise TraceError(f"{path}: line {lineno}: not an ISO date: {line!r}") from None
    return out


def calendar_labels(timestamps, holidays: Iterable[date] = (), periods_per_day: int = 6):
    """Per-timestamp ``(day_class, period_id)``.

    Saturdays, Sundays and listed dates are holidays. The day is split into
    ``periods_per_day`` equal periods numbered from midnight.
    """
    if periods_per_day < 1:
        raise ValueError("periods_per_day must be positive")
    ts = pd.DatetimeIndex(timestamps)
    hol = {pd.Timestamp(h).date() for h in holidays}
    is_holiday = (ts.dayofweek >= 5) | np.isin(np.array([d for d in ts.date], dtype=object), list(hol))
    day_class = np.where(is_holiday, HOLIDAY, WORKDAY).astype(object)
    minute = ts.hour * 60 + ts.minute
    period_id = np.asarray(minute * periods_per_day // 1440, dtype=np.int64)
    return day_class, period_id


def _parse_times(values: pd.Series, column: str, path) -> pd.DatetimeIndex:
    ts = pd.to_datetime(values, errors="coerce", format="ISO8601")
    bad = ts.isna().to_numpy()
    if bad.any():
        line = int(np.flatnonzero(bad)[0]) + 2
        raise TraceError(f"{path}: line {line}: unparsable {column} {values.iloc[line - 2]!r}")
    if getattr(ts.dt, "tz", None) is not None:
        ts = ts.dt.tz_convert(None)
    idx = pd.DatetimeIndex(ts)
    back = np.flatnonzero(np.diff(idx.asi8) < 0)
    if back.size:
        raise TraceError(f"{path}: line {int(back[0]) + 3}: {column} goes backwards in time")
    return idx


def parse_trace(stations_file, records_file, slot_length=pd.Timedelta(hours=1), holidays=None,
                periods_per_day: int = 6) -> TraceSeries:
    """Read a station list and a trace into contiguous time slots.

    ``records_file`` is either aggregated (``timestamp,station_id,load``) or
    request-level (``start_time,end_time,station_id``); request-level rows
    count one unit of load in the slot containing ``start_time``.
    """
    slot_length = pd.Timedelta(slot_length)
    if slot_length <= pd.Timedelta(0):
        raise TraceError("slot_length must be positive")
    stations = stations_file if isinstance(stations_file, StationSet) else StationSet.from_csv(stations_file)
    hol = set()
    if holidays is not None:
        hol = holidays if isinstance(holidays, (set, frozenset, list, tuple)) else load_holidays(holidays)
    try:
        df = pd.read_csv(records_file, dtype={"station_id": str})
    except FileNotFoundError:
        raise
    except Exception as exc:
        raise TraceError(f"{records_file}: cannot parse trace ({exc})") from exc
    if df.empty:
        raise TraceError(f"{records_file}: trace is empty")
    cols = set(df.columns)
    if {"timestamp", "station_id", "load"} <= cols:
        request_level = False
        times = _parse_times(df["timestamp"], "timestamp", records_file)
        load = pd.to_numeric(df["load"], errors="coerce").to_numpy(dtype=float)
        bad = ~np.isfinite(load) | (load < 0)
        if bad.any():
            raise TraceError(f"{records_file}: line {int(np.flatnonzero(bad)[0]) + 2}: load must be a nonnegative number")
    elif {"start_time", "end_time", "station_id"} <= cols:
        request_level = True
        times = _parse_times(df["start_time"], "start_time", records_file)
        load = np.ones(len(df))
    else:
        raise TraceError(
            f"{records_file}: expected columns timestamp,station_id,load or start_time,end_time,station_id"
        )
    index = stations.index
    sidx = df["station_id"].map(index)
    unknown = sidx.isna().to_numpy()
    if unknown.any():
        line = int(np.flatnonzero(unknown)[0]) + 2
        raise TraceError(f"{records_file}: line {line}: unknown station_id {df['station_id'].iloc[line - 2]!r}")
    sidx = sidx.to_numpy(dtype=np.int64)

    anchor = times[0].normalize()
    slot = np.asarray((times - anchor) // slot_length, dtype=np.int64)
    first, last = int(slot[0]), int(slot[-1])
    T, M = last - first + 1, len(stations)
    loads = np.zeros((T, M))
    np.add.at(loads, (slot - first, sidx), load)
    slot_index = np.arange(first, last + 1)
    ts = pd.DatetimeIndex([anchor + int(k) * slot_length for k in slot_index])
    day_class, period_id = calendar_labels(ts, hol, periods_per_day)
    request_times = None
    if request_level:
        secs = (times - pd.Timestamp("1970-01-01")) / pd.Timedelta(seconds=1)
        secs = np.asarray(secs, dtype=float)
        request_times = {m: np.sort(secs[sidx == m]) for m in range(M)}
    return TraceSeries(loads, slot_index, ts, day_class, period_id, slot_length, stations, request_times)


# ----------------------------------------------------------------------
# representatives
# ----------------------------------------------------------------------
@dataclass
class RepresentativeSet:
    vectors: np.ndarray
    mode: str
    group_keys: list

    def __post_init__(self):
        self.vectors = check_workload_matrix(self.vectors, name="vectors")
        if len(self.group_keys) != self.vectors.shape[0]:
            raise ValueError("one group key per representative vector is required")

    def __len__(self):
        return self.vectors.shape[0]

    def to_json(self) -> dict:
        return {
            "mode": self.mode,
            "groups": [
                {"day_class": k[0], "period_id": int(k[1]), "vector": [float(v) for v in vec]}
                for k, vec in zip(self.group_keys, self.vectors)
            ],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "RepresentativeSet":
        groups = obj["groups"]
        return cls(
            np.array([g["vector"] for g in groups], dtype=float),
            obj["mode"],
            [(g["day_class"], int(g["period_id"])) for g in groups],
        )


def group_and_represent(series: TraceSeries, mode: str = "average") -> RepresentativeSet:
    """One representative vector per nonempty (day class, period) group."""
    if mode not in ("average", "component_max"):
        raise ValueError(f"mode must be 'average' or 'component_max', got {mode!r}")
    if len(series) == 0:
        raise ValueError("cannot build representatives from an empty series")
    order = {WORKDAY: 0, HOLIDAY: 1}
    keys = sorted({(dc, int(p)) for dc, p in zip(series.day_class, series.period_id)},
                  key=lambda k: (order.get(k[0], 2), k[0], k[1]))
    vectors = []
    for dc, p in keys:
        rows = series.loads[(series.day_class == dc) & (series.period_id == p)]
        vectors.append(rows.mean(axis=0) if mode == "average" else rows.max(axis=0))
    return RepresentativeSet(np.vstack(vectors), mode, keys)


# ----------------------------------------------------------------------
# statistics
# ----------------------------------------------------------------------
@dataclass
class VariationRatio:
    slot_index: np.ndarray
    ratio: np.ndarray
    omitted: np.ndarray  # slots whose lagged frame has zero total load


def variation_ratio(series: TraceSeries, lag_slots: int) -> VariationRatio:
    """Relative L1 change of each frame against the frame ``lag_slots`` earlier."""
    lag_slots = int(lag_slots)
    if lag_slots < 1:
        raise ValueError("lag_slots must be positive")
    if len(series) < lag_slots + 1:
        raise ValueError(f"series has {len(series)} frames; need at least {lag_slots + 1}")
    pos = {int(s): i for i, s in enumerate(series.slot_index)}
    cur, prev, slots = [], [], []
    for i, s in enumerate(series.slot_index):
        j = pos.get(int(s) - lag_slots)
        if j is not None:
            cur.append(i)
            prev.append(j)
            slots.append(int(s))
    slots = np.asarray(slots, dtype=np.int64)
    if not slots.size:
        return VariationRatio(slots, np.zeros(0), np.zeros(0, dtype=np.int64))
    now, then = series.loads[cur], series.loads[prev]
    denom = then.sum(axis=1)
    ok = denom > 0
    ratio = np.abs(now - then).sum(axis=1)[ok] / denom[ok]
    return VariationRatio(slots[ok], ratio, slots[~ok])


@dataclass
class TraceStats:
    workload_percentiles: dict
    workload_max: float
    workload_mean: float
    workload_std: float
    interarrival_percentiles: dict = field(default_factory=dict)
    interarrival_max: float = float("nan")
    interarrival_mean: float = float("nan")
    interarrival_std: float = float("nan")
    interarrival_available: bool = False

    def to_frame(self) -> pd.DataFrame:
        cols = ["max", "mean", "std"] + [f"{p:g}%" for p in PERCENTILES]
        rows = {
            "workload": [self.workload_max, self.workload_mean, self.workload_std]
            + [self.workload_percentiles[p] for p in PERCENTILES],
        }
        if self.interarrival_available:
            rows["interarrival"] = [self.interarrival_max, self.interarrival_mean, self.interarrival_std] + [
                self.interarrival_percentiles[p] for p in PERCENTILES
            ]
        return pd.DataFrame.from_dict(rows, orient="index", columns=cols)


def _summary(values: np.ndarray):
    pct = dict(zip(PERCENTILES, np.percentile(values, PERCENTILES).tolist()))
    return pct, float(values.max()), float(values.mean()), float(values.std())


def workload_stats(series: TraceSeries, request_times: Optional[dict] = None,
                   interarrival: Optional[bool] = None) -> TraceStats:
    """Max, mean, std and tail percentiles of per-slot loads and request gaps.

    Inter-arrival gaps are taken between consecutive requests of the same
    station, in the unit of ``request_times`` (seconds for parsed ISO
    timestamps). ``interarrival=None`` computes them whenever request-level
    data is available.
    """
    if request_times is None:
        request_times = series.request_times
    if interarrival and request_times is None:
        raise ValueError("inter-arrival statistics need request-level data")
    pct, mx, mean, std = _summary(series.loads.ravel())
    stats = TraceStats(pct, mx, mean, std)
    if request_times is not None and interarrival is not False:
        gaps = [np.diff(np.sort(np.asarray(t, dtype=float))) for t in request_times.values()]
        gaps = np.concatenate(gaps) if gaps else np.zeros(0)
        if gaps.size:
            ipct, imx, imean, istd = _summary(gaps)
            stats.interarrival_percentiles = ipct
            stats.interarrival_max, stats.interarrival_mean, stats.interarrival_std = imx, imean, istd
            stats.interarrival_available = True
    return stats


# ----------------------------------------------------------------------
# synthetic bursts
# ----------------------------------------------------------------------
# Sizes used against a 3042-station trace; `BurstSpec.scaled` keeps the same
# fraction of stations for smaller inputs.
_REFERENCE_STATIONS = 3042


@dataclass(frozen=True)
class BurstSpec:
    subset_size_range: tuple = (100, 200)
    scale_factors: tuple = (1.2, 1.5, 1.8, 2.0)
    count: int = 240
    seed: int = 0

    def __post_init__(self):
        lo, hi = (int(v) for v in self.subset_size_range)
        if not 0 <= lo <= hi:
            raise ValueError("subset_size_range must be an interval of nonnegative integers")
        if not self.scale_factors or any(not np.isfinite(f) or f <= 1 for f in self.scale_factors):
            raise ValueError("scale factors must be finite and greater than 1")
        if int(self.count) < 1:
            raise ValueError("count must be positive")
        object.__setattr__(self, "subset_size_range", (lo, hi))
        object.__setattr__(self, "scale_factors", tuple(float(f) for f in self.scale_factors))

    @classmethod
    def scaled(cls, n_stations: int, **kwargs) -> "BurstSpec":
        lo = max(1, round(100 * n_stations / _REFERENCE_STATIONS))
        hi = max(lo, round(200 * n_stations / _REFERENCE_STATIONS))
        return cls(subset_size_range=(lo, hi), **kwargs)


def scale_subset(base, subset: Sequence[int], factor: float) -> np.ndarray:
    out = check_workload(base).copy()
    idx = np.asarray(subset, dtype=np.int64)
    out[idx] *= factor
    return out


def synth_bursts(base, spec: BurstSpec) -> np.ndarray:
    """``spec.count`` bursty copies of ``base`` (rows), deterministic in ``spec.seed``."""
    if isinstance(base, WorkloadFrame):
        base = base.load
    base = check_workload(base, name="base")
    M = base.shape[0]
    lo, hi = spec.subset_size_range
    if hi > M:
        raise ValueError(f"subset size up to {hi} exceeds the {M} stations")
    rng = check_random_state_seed(spec.seed)
    factors = np.asarray(spec.scale_factors)
    out = np.tile(base, (spec.count, 1))
    for i in range(spec.count):
        size = int(rng.integers(lo, hi + 1))
        subset = rng.choice(M, size=size, replace=False)
        out[i, subset] *= factors[rng.integers(factors.size)]
    return out
