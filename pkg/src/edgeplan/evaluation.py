"""Trace-driven rejection measurement and the comparison placement policies."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import pandas as pd

from ._validation import check_random_state_seed, check_servers, check_workload, check_workload_matrix
from .lp import LinearModel, solve_lp
from .placement import (
    IntegerPlacement, PlacementParams, RoutingMatrix, round_heuristic, solve_ro_fractional, solve_rp_fractional,
)
from .topology import Neighborhood, grid_zones, kmeans_clusters
from .traces import RepresentativeSet, TraceSeries, group_and_represent

__all__ = [
    "POLICIES",
    "PolicySpec",
    "RejectionModel",
    "SimulationReport",
    "apportion",
    "baseline_place",
    "evaluate_frames",
    "evaluate_placement",
    "evaluate_schedule",
    "min_rejection",
    "required_servers",
]

POLICIES = ("Random", "Clustering", "Uniform", "TwithoutLB", "TwithLB", "RO_RP", "RO_only", "RP_only")


class RejectionModel:
    """The rejection LP for a fixed server vector, re-solved per workload frame.

    minimize ``sum_n r_n`` subject to ``sum_n x_mn = w_m``,
    ``sum_m x_mn - r_n <= C s_n`` and ``x, r >= 0``, where ``x_mn`` is the
    workload of ``m`` routed to ``n``.
    """

    def __init__(self, s, C: float, nbh: Neighborhood, method: str = "auto"):
        self.s = check_servers(s, len(nbh))
        self.C = float(C)
        self.nbh = nbh
        self.method = method
        M = len(nbh)
        src, dst = nbh.pairs
        model = LinearModel("min")
        self._x = model.add_variables(src.size, name="x")
        self._r = model.add_variables(M, name="r")
        model.add_constraints(src, self._x, 1.0, "==", np.zeros(M))
        model.add_constraints(
            np.concatenate([dst, np.arange(M)]), np.concatenate([self._x, self._r]),
            np.concatenate([np.ones(src.size), -np.ones(M)]), "<=", self.C * self.s,
        )
        model.set_objective(self._r, np.ones(M))
        self.model = model

    def solve(self, w) -> tuple[float, RoutingMatrix]:
        w = check_workload(w, len(self.nbh))
        src, _ = self.nbh.pairs
        if not w.any():
            return 0.0, RoutingMatrix(1.0 / self.nbh.sizes[src], self.nbh)
        rhs = np.concatenate([w, self.C * self.s])
        sol = solve_lp(self.model, method=self.method, rhs=rhs)
        if sol.status != "optimal":  # always feasible: every station can keep its own load
            raise RuntimeError(f"rejection LP unexpectedly {sol.status}")
        x = np.maximum(sol.x[self._x], 0.0)
        row = w[src]
        values = np.where(row > 0, x / np.where(row > 0, row, 1.0), 1.0 / self.nbh.sizes[src])
        rejected = min(max(float(sol.objective_value), 0.0), float(w.sum()))
        return rejected, RoutingMatrix(values, self.nbh)

    def rejected(self, w) -> float:
        return self.solve(w)[0]


def min_rejection(w, s_active, C: float, nbh: Neighborhood, method: str = "auto") -> tuple[float, RoutingMatrix]:
    """Least total workload that must be rejected, and a routing attaining it."""
    return RejectionModel(s_active, C, nbh, method).solve(w)


@dataclass
class SimulationReport:
    per_frame: pd.DataFrame
    energy: Optional[dict] = None
    label: str = ""

    @property
    def aggregate(self) -> dict:
        df = self.per_frame
        total = float(df["total"].sum())
        rejected = float(df["rejected"].sum())
        return {
            "frames": int(len(df)),
            "mean_rate": float(df["rate"].mean()) if len(df) else 0.0,
            "max_rate": float(df["rate"].max()) if len(df) else 0.0,
            "total_workload": total,
            "total_rejected": rejected,
            "overall_rate": rejected / total if total > 0 else 0.0,
        }

    @property
    def mean_rate(self) -> float:
        return self.aggregate["mean_rate"]

    def to_csv(self, path, header: Optional[str] = None) -> None:
        with open(path, "w", newline="") as fh:
            if header:
                fh.write(f"# {header}\n")
            self.per_frame.to_csv(fh, index=False, float_format="%.10g")


def evaluate_frames(s, frames, C: float, nbh: Neighborhood, slots=None, method: str = "auto") -> pd.DataFrame:
    X = check_workload_matrix(frames, len(nbh), name="frames")
    model = RejectionModel(s, C, nbh, method)
    total = X.sum(axis=1)
    rejected = np.array([model.rejected(w) for w in X])
    rate = np.divide(rejected, total, out=np.zeros_like(rejected), where=total > 0)
    slots = np.arange(X.shape[0]) if slots is None else np.asarray(slots)
    return pd.DataFrame({"slot": slots, "total": total, "rejected": rejected, "rate": np.clip(rate, 0.0, 1.0)})


def _frames_of(trace):
    if isinstance(trace, TraceSeries):
        return trace.loads, trace.slot_index
    X = check_workload_matrix(trace, name="trace")
    return X, np.arange(X.shape[0])


def evaluate_placement(s, trace, C: float, nbh: Neighborhood, method: str = "auto") -> SimulationReport:
    """Minimum rejection of every frame with the servers ``s`` always on."""
    if isinstance(s, IntegerPlacement):
        label, s = s.provenance, s.s
    else:
        label = ""
    X, slots = _frames_of(trace)
    return SimulationReport(evaluate_frames(s, X, C, nbh, slots, method), label=label)


def evaluate_schedule(plan, trace, C: float, nbh: Neighborhood, costs=None, method: str = "auto") -> SimulationReport:
    """Rejection with each frame served by the plan's servers for its slot of day."""
    from .scheduling import schedule_cost

    if isinstance(trace, TraceSeries):
        X = trace.loads
        if plan.slot_length is not None and pd.Timedelta(plan.slot_length) != trace.slot_length:
            raise ValueError("plan and trace use different slot lengths")
        slot_of_day = trace.slot_of_day
        slots = trace.slot_index
    else:
        X = check_workload_matrix(trace, len(nbh), name="trace")
        slot_of_day = np.arange(X.shape[0]) % len(plan.slots)
        slots = np.arange(X.shape[0])
    N = len(plan.slots)
    if (slot_of_day >= N).any():
        raise ValueError(f"trace has slot-of-day {int(slot_of_day.max())} but the plan covers {N} slots")
    parts = []
    S = plan.servers
    for t in range(N):
        idx = np.flatnonzero(slot_of_day == t)
        if idx.size:
            parts.append(evaluate_frames(S[t], X[idx], C, nbh, slots[idx], method).set_index(idx))
    per_frame = pd.concat(parts).sort_index().reset_index(drop=True) if parts else pd.DataFrame(
        {"slot": [], "total": [], "rejected": [], "rate": []})
    energy = None
    if costs is not None:
        running, switching, total = schedule_cost(plan, costs)
        energy = {"running": running, "switching": switching, "total": total}
    return SimulationReport(per_frame, energy, label=plan.label)


# ----------------------------------------------------------------------
# comparison policies
# ----------------------------------------------------------------------
def apportion(K: int, weights) -> np.ndarray:
    """Largest-remainder split of ``K`` units proportional to ``weights``.

    Remainder ties go to the lower index.
    """
    weights = np.asarray(weights, dtype=float)
    if (weights < 0).any() or not weights.sum() > 0:
        raise ValueError("weights must be nonnegative with a positive sum")
    quota = K * weights / weights.sum()
    base = np.floor(quota + 1e-12).astype(np.int64)
    rest = K - int(base.sum())
    order = np.lexsort((np.arange(weights.size), -(quota - base)))
    base[order[:rest]] += 1
    return base


@dataclass
class PolicySpec:
    kind: str
    k: Optional[int] = None
    zone_size: Optional[float] = None
    seed: int = 0
    mode: str = "average"
    scheme: str = "srpf"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in POLICIES:
            raise ValueError(f"unknown policy {self.kind!r}; choose from {POLICIES}")
        if self.kind in ("Clustering", "TwithoutLB") and (self.k is None or int(self.k) < 1):
            raise ValueError(f"{self.kind} needs a positive cluster count k")
        if self.kind == "Uniform" and not (self.zone_size and self.zone_size > 0):
            raise ValueError("Uniform needs a positive zone_size")


def _average_vector(data) -> np.ndarray:
    if isinstance(data, TraceSeries):
        return data.loads.mean(axis=0)
    if isinstance(data, RepresentativeSet):
        return data.vectors.mean(axis=0)
    X = np.asarray(data, dtype=float)
    return X if X.ndim == 1 else X.mean(axis=0)


def _representatives(data, mode):
    if isinstance(data, TraceSeries):
        return group_and_represent(data, mode).vectors
    if isinstance(data, RepresentativeSet):
        return data.vectors
    X = np.asarray(data, dtype=float)
    return X[None, :] if X.ndim == 1 else X


def _at_stations(M, stations_idx, counts):
    s = np.zeros(M, dtype=np.int64)
    np.add.at(s, stations_idx, counts)
    return s


def baseline_place(policy: PolicySpec, stations, data, nbh: Neighborhood, params) -> IntegerPlacement:
    """Integer placement of ``params.K`` servers by one of the comparison policies.

    ``data`` is a :class:`TraceSeries` (history), a :class:`RepresentativeSet`
    or an array of workload vectors. Traffic-aware policies use its average
    vector; ``RO_RP`` and ``RO_only`` use its calendar-group representatives.
    """
    if not isinstance(params, PlacementParams):
        params = PlacementParams(*params)
    K, C = params.K, params.C
    M = len(nbh)
    kind = policy.kind
    if kind == "Random":
        rng = check_random_state_seed(policy.seed)
        s = np.bincount(rng.integers(M, size=K), minlength=M)
    elif kind == "Clustering":
        cl = kmeans_clusters(stations, policy.k, seed=policy.seed)
        s = _at_stations(M, cl.centroid_station, apportion(K, cl.sizes))
    elif kind == "Uniform":
        zones = grid_zones(stations, policy.zone_size)
        s = _at_stations(M, zones.centroid_station, apportion(K, zones.sizes))
    elif kind == "TwithoutLB":
        w = _average_vector(data)
        cl = kmeans_clusters(stations, policy.k, seed=policy.seed)
        load = np.bincount(cl.assignment, weights=w, minlength=cl.k)
        s = _at_stations(M, cl.centroid_station, apportion(K, load))
    else:
        if kind in ("TwithLB", "RP_only"):
            W = _average_vector(data)[None, :]
        else:
            W = _representatives(data, policy.mode)
        pooled = kind in ("RO_RP", "RP_only")
        # the pooling stage re-solves the servers, so only beta* is needed from the first LP
        frac = solve_ro_fractional(W, nbh, params, tie_break="none" if pooled else "local")
        if pooled:
            frac = solve_rp_fractional(W, nbh, params, frac.beta_star)
        if policy.scheme == "mincost":
            from .flow import round_mincost

            return IntegerPlacement(round_mincost(frac).s, kind)
        s = round_heuristic(frac, policy.scheme, nbh, K, seed=policy.seed).s
    return IntegerPlacement(s, kind)


def required_servers(policy: PolicySpec, stations, data, nbh: Neighborhood, C: float, frames, K_grid,
                     epsilon: float = 1e-3, method: str = "auto") -> tuple[Optional[int], dict]:
    """Smallest ``K`` in ``K_grid`` whose placement by ``policy`` keeps the mean
    rejection rate over ``frames`` at or below ``epsilon``.

    The grid is scanned in increasing order and the scan stops at the first
    success; rounding makes the rate only roughly monotone in ``K``, so the
    answer is defined relative to the grid. Returns ``(K or None, {K: rate})``.
    """
    rates = {}
    for K in sorted(int(k) for k in K_grid):
        s = baseline_place(policy, stations, data, nbh, PlacementParams(K, C)).s
        rates[K] = float(evaluate_frames(s, frames, C, nbh, method=method)["rate"].mean())
        if rates[K] <= epsilon:
            return K, rates
    return None, rates
