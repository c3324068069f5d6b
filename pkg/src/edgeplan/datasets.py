"""Synthetic city benchmark: clustered stations with diurnal business/residential demand."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import pandas as pd

from ._validation import check_random_state_seed
from .topology import Neighborhood, build_neighborhoods
from .traces import BurstSpec, StationSet, TraceSeries, synth_bursts

__all__ = ["CityBenchmark", "diurnal_profile", "make_city", "make_oscillating_trace"]

# relative hourly demand, index = hour of day
_BUSINESS_WORKDAY = np.array([
    0.15, 0.10, 0.08, 0.08, 0.10, 0.20, 0.40, 0.70, 0.95, 1.00, 1.00, 0.95,
    0.90, 0.95, 1.00, 0.95, 0.90, 0.80, 0.60, 0.45, 0.35, 0.30, 0.25, 0.20,
])
_RESIDENTIAL_WORKDAY = np.array([
    0.35, 0.25, 0.15, 0.10, 0.10, 0.15, 0.30, 0.50, 0.45, 0.35, 0.30, 0.30,
    0.35, 0.35, 0.35, 0.40, 0.50, 0.65, 0.85, 0.95, 1.00, 0.95, 0.80, 0.55,
])


def diurnal_profile(kind: str, holiday: bool) -> np.ndarray:
    """Hourly relative demand for a ``"business"`` or ``"residential"`` station."""
    if kind == "business":
        return _BUSINESS_WORKDAY * (0.35 if holiday else 1.0)
    if kind == "residential":
        if holiday:
            # later start, flatter daytime
            return np.clip(np.roll(_RESIDENTIAL_WORKDAY, 1) * 0.9 + 0.2, 0.0, 1.0)
        return _RESIDENTIAL_WORKDAY.copy()
    raise ValueError(f"unknown profile kind {kind!r}")


@dataclass
class CityBenchmark:
    stations: StationSet
    trace: TraceSeries
    nbh: Neighborhood
    K: int
    C: float
    kinds: np.ndarray = field(repr=False)
    base_frame: np.ndarray = field(repr=False)
    bursts: np.ndarray = field(repr=False)
    k_clusters: int = 50
    zone_size: float = 1.414


def _stations(M, n_hotspots, extent, rng):
    centers = rng.uniform(0.15 * extent, 0.85 * extent, size=(n_hotspots, 2))
    n_clustered = int(round(0.7 * M))
    which = rng.integers(n_hotspots, size=n_clustered)
    clustered = centers[which] + rng.normal(scale=0.06 * extent, size=(n_clustered, 2))
    background = rng.uniform(0.0, extent, size=(M - n_clustered, 2))
    xy = np.clip(np.vstack([clustered, background]), 0.0, extent)
    near_center = np.concatenate([np.ones(n_clustered, dtype=bool), np.zeros(M - n_clustered, dtype=bool)])
    order = rng.permutation(M)
    return xy[order], near_center[order], centers


def make_city(n_stations: int = 200, days: int = 14, seed: int = 0, n_hotspots: int = 5,
              extent: float = 10.0, radius: float = 1.0, mean_load: float = 8.0, noise: float = 0.25,
              C: float = 5.0, K: Optional[int] = None, headroom: float = 1.3, n_bursts: int = 240,
              level_sigma: float = 1.5, background_level: float = 1.0,
              start: str = "2024-03-04") -> CityBenchmark:
    """Build the synthetic benchmark.

    Stations are drawn around ``n_hotspots`` centers plus a uniform
    background on an ``extent`` x ``extent`` km square. Stations near a center
    are mostly business sites, the rest mostly residential. Each station's
    hourly load is a lognormal mean level (spread ``level_sigma``; background
    stations scaled by ``background_level``) times its diurnal profile times
    lognormal noise. Weekends are holidays. ``K`` defaults to ``headroom``
    times the servers needed to carry the peak historical frame. Burst frames
    scale random station subsets of that peak frame.

    ``k_clusters`` and ``zone_size`` on the result are the cluster count and
    zone edge used for the clustering and zoning baselines.
    """
    rng = check_random_state_seed(seed)
    M = int(n_stations)
    xy, near, _ = _stations(M, n_hotspots, extent, rng)
    kinds = np.where(rng.random(M) < np.where(near, 0.75, 0.2), "business", "residential")
    level = mean_load * rng.lognormal(mean=0.0, sigma=level_sigma, size=M)
    level = np.where(near, level, background_level * level)
    ids = [f"bs{m:04d}" for m in range(M)]
    stations = StationSet(ids, xy)

    t0 = pd.Timestamp(start)
    rows = []
    for d in range(days):
        day = (t0 + pd.Timedelta(days=d)).date()
        is_holiday = day.weekday() >= 5
        prof = np.column_stack([diurnal_profile(k, is_holiday) for k in kinds])  # 24 x M
        eps = rng.lognormal(mean=-0.5 * noise ** 2, sigma=noise, size=prof.shape)
        rows.append(prof * level * eps)
    loads = np.round(np.vstack(rows), 4)
    trace = TraceSeries.from_array(loads, start=t0, slot_length=pd.Timedelta(hours=1), stations=stations)
    nbh = build_neighborhoods(stations, radius=radius)
    base = loads[int(np.argmax(loads.sum(axis=1)))].copy()
    if K is None:
        K = int(math.ceil(headroom * base.sum() / C))
    spec = BurstSpec.scaled(M, count=n_bursts, seed=seed)
    bursts = synth_bursts(base, spec)
    return CityBenchmark(stations, trace, nbh, int(K), float(C), kinds, base, bursts)


def make_oscillating_trace(n_stations: int = 6, days: int = 7, seed: int = 0, amplitude: float = 0.6,
                           period_slots: int = 2, mean_load: float = 4.0) -> TraceSeries:
    """Small trace whose total demand alternates high/low every ``period_slots`` hours."""
    rng = check_random_state_seed(seed)
    hours = np.arange(24)
    phase = (hours // period_slots) % 2
    level = mean_load * rng.uniform(0.5, 1.5, size=n_stations)
    shape = 1.0 + amplitude * np.where(phase == 0, 1.0, -1.0)
    rows = []
    for _ in range(days):
        noise = rng.uniform(0.95, 1.05, size=(24, n_stations))
        rows.append(shape[:, None] * level[None, :] * noise)
    return TraceSeries.from_array(np.round(np.vstack(rows), 4), start="2024-03-04")
