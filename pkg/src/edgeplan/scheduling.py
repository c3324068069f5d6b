"""Day-ahead on/off scheduling of placed servers.

Each slot of the day is pre-solved on its own: the smallest active total
``K*(t)`` that keeps historical rejection under a threshold, then the
utilization bound ``beta*(t)`` and pooling factor ``eta*(t)`` at that total.
One joint LP then picks per-slot active counts that respect those guarantees
while trading idle running cost against the cost of turning servers on.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import pandas as pd

from ._validation import check_servers, check_workload, check_workload_matrix
from .lp import EPS_FEAS, LinearModel, solve_lp
from .placement import (
    InfeasiblePlacement, PlacementParams, round_heuristic, solve_ro_fractional, solve_rp_fractional,
)
from .topology import Neighborhood
from .traces import TraceSeries

__all__ = [
    "STRATEGIES",
    "CostParams",
    "KStar",
    "SchedulePlan",
    "SlotPlan",
    "always_on_plan",
    "find_k_star",
    "per_slot_plan",
    "plan_day",
    "predict_day",
    "schedule_cost",
    "solve_day_schedule",
    "solve_slot_fractional",
    "switch_count",
]

log = logging.getLogger(__name__)

STRATEGIES = ("switching_cost", "per_slot", "always_on")
DEFAULT_EPSILON = 1e-3
# guarantee slack so a joint LP built from separately solved bounds stays feasible
_GUARANTEE_SLACK = 1e-7


@dataclass(frozen=True)
class CostParams:
    """Per-slot running cost ``E_r`` per active server and ``E_s`` per server turned on.

    ``E_w`` (cost per unit of served workload) is recorded but does not enter
    the optimization: served workload is the same under every plan.
    """

    E_r: float = 1.0
    E_s: float = 1.0
    E_w: float = 0.0
    C: float = 1.0

    def __post_init__(self):
        for name in ("E_r", "E_s", "E_w", "C"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v >= 0):
                raise ValueError(f"{name} must be finite and nonnegative, got {v}")


@dataclass
class SlotPlan:
    t: int
    K_t: int
    beta_star: float
    eta_star: float
    s: np.ndarray
    s_fractional: Optional[np.ndarray] = field(default=None, repr=False)


@dataclass
class SchedulePlan:
    slots: list
    initial_state: np.ndarray
    label: str = ""
    slot_length: Optional[pd.Timedelta] = None
    lp_objective: Optional[float] = None

    def __post_init__(self):
        self.initial_state = np.asarray(self.initial_state)

    def __len__(self):
        return len(self.slots)

    @property
    def servers(self) -> np.ndarray:
        """``(N, M)`` active servers per slot."""
        return np.vstack([p.s for p in self.slots])

    def cost(self, costs: CostParams) -> tuple[float, float, float]:
        return schedule_cost(self, costs)

    def to_json(self, costs: Optional[CostParams] = None, station_ids: Optional[Sequence] = None) -> dict:
        ids = list(station_ids) if station_ids is not None else list(range(len(self.initial_state)))
        out = {
            "label": self.label,
            "slots": [
                {
                    "t": p.t,
                    "K_star": int(p.K_t),
                    "beta_star": float(p.beta_star),
                    "eta_star": None if not np.isfinite(p.eta_star) else float(p.eta_star),
                    "servers": [{"station_id": sid, "count": int(c)} for sid, c in zip(ids, p.s) if c],
                }
                for p in self.slots
            ],
            "initial_state": [{"station_id": sid, "count": int(c)} for sid, c in zip(ids, self.initial_state) if c],
        }
        if costs is not None:
            running, switching, total = schedule_cost(self, costs)
            out["cost"] = {"running": running, "switching": switching, "total": total}
        return out


def schedule_cost(plan: SchedulePlan, costs: CostParams) -> tuple[float, float, float]:
    """``(running, switching, total)``: ``E_r * sum(s)`` and ``E_s * sum((s(t) - s(t-1))^+)``."""
    S = plan.servers.astype(float)
    prev = np.vstack([np.asarray(plan.initial_state, dtype=float)[None, :], S[:-1]])
    running = costs.E_r * float(S.sum())
    switching = costs.E_s * float(np.maximum(S - prev, 0.0).sum())
    return running, switching, running + switching


def switch_count(plan: SchedulePlan) -> int:
    """Number of server on-transitions, counted against the initial state."""
    S = plan.servers.astype(float)
    prev = np.vstack([np.asarray(plan.initial_state, dtype=float)[None, :], S[:-1]])
    return int(round(np.maximum(S - prev, 0.0).sum()))


# ----------------------------------------------------------------------
# per-slot pre-solve
# ----------------------------------------------------------------------
def _caps(s_cap, M):
    if s_cap is None:
        return np.full(M, np.inf)
    cap = np.asarray(s_cap, dtype=float)
    if cap.shape != (M,) or np.isnan(cap).any() or (cap < 0).any():
        raise ValueError(f"s_cap must be {M} nonnegative values")
    return cap


def _serviceable(w, nbh, cap):
    """Demand of stations that reach at least one server slot; the rest is rejected under any plan."""
    return np.where(nbh.pool(np.where(np.isfinite(cap), cap, 1.0)) > 0, w, 0.0)


def solve_slot_fractional(w_bar_t, nbh: Neighborhood, K_t: int, C: float, s_cap=None, t: int = 0,
                          method: str = "auto") -> SlotPlan:
    """Min-utilization placement of ``K_t`` servers for one predicted vector, then max pooling.

    Servers at every station stay within ``s_cap``. Demand at stations whose
    neighborhood has a zero cap cannot be served and is left out. A zero-demand
    slot gets ``beta* = 0``, ``eta* = inf`` and servers spread in proportion to
    the caps.
    """
    M = len(nbh)
    w = check_workload(w_bar_t, M, name="w_bar_t")
    cap = _caps(s_cap, M)
    w = _serviceable(w, nbh, cap)
    K_t = int(K_t)
    if K_t < 0:
        raise ValueError("K_t must be nonnegative")
    if K_t > cap.sum() + EPS_FEAS:
        raise InfeasiblePlacement(f"slot {t}: K={K_t} exceeds the total cap {cap.sum():g}")
    if not w.any() or K_t == 0:
        if w.any():
            raise InfeasiblePlacement(f"slot {t}: positive demand but no active servers")
        if K_t == 0:
            s = np.zeros(M)
        elif np.isfinite(cap).all():
            s = K_t * cap / cap.sum()
        else:
            s = np.where(np.isinf(cap), 1.0, 0.0)
            s *= K_t / s.sum()
        return SlotPlan(t, K_t, 0.0, float("inf"), s, s.copy())
    params = PlacementParams(K_t, C)
    ro = solve_ro_fractional(w[None, :], nbh, params, caps=cap, method=method, tie_break="none")
    rp = solve_rp_fractional(w[None, :], nbh, params, ro.beta_star, caps=cap, method=method)
    s = np.minimum(rp.s_tilde, cap)
    return SlotPlan(t, K_t, rp.beta_star, rp.eta_star, s, s.copy())


def _round_slot(s_frac, nbh, K, cap, scheme="srpf", seed=None):
    """Round one slot to ``K`` servers without exceeding integer caps."""
    s_frac = np.minimum(np.asarray(s_frac, dtype=float), cap)
    s = round_heuristic(s_frac, scheme, nbh, K, seed=seed).s
    if (s > cap + EPS_FEAS).any():  # only possible with non-integral caps
        raise InfeasiblePlacement("rounding exceeded a server cap")
    return s


@dataclass
class KStar:
    """Result of :func:`find_k_star`. ``met`` is False when even every cap on cannot reach ``epsilon``."""

    K: int
    met: bool
    rate: float

    def __int__(self):
        return self.K

    __index__ = __int__


def find_k_star(frames, nbh: Neighborhood, C: float, s_cap=None, epsilon: float = DEFAULT_EPSILON,
                w_bar=None, slot_id: int = 0, method: str = "auto") -> KStar:
    """Smallest active total whose rounded slot placement keeps mean rejection at most ``epsilon``.

    Bisection over ``K`` in ``[0, sum(s_cap)]``. The placement for each
    candidate ``K`` is the rounded :func:`solve_slot_fractional` solution for
    the predicted vector ``w_bar`` (the frame mean by default); its rejection
    is the mean per-frame rate over ``frames``. Infinite caps bound the search
    by the servers that would serve every station alone at its peak.
    """
    from .evaluation import evaluate_frames

    M = len(nbh)
    X = check_workload_matrix(frames, M, name="frames")
    if not 0 <= epsilon < 1:
        raise ValueError("epsilon must lie in [0, 1)")
    cap = _caps(s_cap, M)
    w_bar = X.mean(axis=0) if w_bar is None else check_workload(w_bar, M, name="w_bar")
    if not X.any():
        return KStar(0, True, 0.0)
    if np.isfinite(cap).all():
        hi = int(math.floor(cap.sum() + EPS_FEAS))
    else:
        hi = int(np.ceil(X.max(axis=0) / C - EPS_FEAS).sum())
    cache = {}

    def rate(K):
        if K not in cache:
            try:
                plan = solve_slot_fractional(w_bar, nbh, K, C, cap, t=slot_id, method=method)
                s = _round_slot(plan.s, nbh, K, cap)
            except InfeasiblePlacement:
                cache[K] = 1.0
            else:
                cache[K] = float(evaluate_frames(s, X, C, nbh, method=method)["rate"].mean())
        return cache[K]

    if rate(hi) > epsilon:
        log.warning("slot %s: no K up to %d meets rejection %g (best %.4g)", slot_id, hi, epsilon, rate(hi))
        return KStar(hi, False, rate(hi))
    lo = 0
    while lo < hi:
        mid = (lo + hi) // 2
        if rate(mid) <= epsilon:
            hi = mid
        else:
            lo = mid + 1
    return KStar(hi, True, rate(hi))


# ----------------------------------------------------------------------
# joint day LP
# ----------------------------------------------------------------------
def _day_model(W, K_star, beta_star, eta_star, nbh, cap, costs, initial, slack):
    N, M = W.shape
    src, dst = nbh.pairs
    model = LinearModel("min")
    s_idx, d_idx = [], []
    for t in range(N):
        s = model.add_variables(M, 0.0, cap, name=f"s{t}_")
        d = model.add_variables(M, name=f"d{t}_")
        s_idx.append(s)
        d_idx.append(d)
        w = W[t]
        b = np.flatnonzero(w[src] > 0)
        if b.size:
            x = model.add_variables(b.size, name=f"x{t}_")
            rows_m = np.unique(src[b])
            model.add_constraints(np.searchsorted(rows_m, src[b]), x, 1.0, "==", w[rows_m])
            beta = beta_star[t] * (1.0 + slack)
            model.add_constraints(
                np.concatenate([dst[b], np.arange(M)]), np.concatenate([x, s]),
                np.concatenate([np.ones(b.size), -costs.C * beta * np.ones(M)]), "<=", np.zeros(M),
            )
            if np.isfinite(eta_star[t]) and eta_star[t] > 0:
                # eta w_m <= sum_{n in omega[m]} s_n
                pm = np.isin(src, rows_m)
                model.add_constraints(
                    np.searchsorted(rows_m, src[pm]), s[dst[pm]], 1.0, ">=",
                    eta_star[t] * (1.0 - slack) * w[rows_m],
                )
        if K_star[t] > 0:
            model.add_constraints(np.zeros(M, dtype=np.int64), s, 1.0, ">=", [K_star[t]])
        # d(t) >= s(t) - s(t-1)
        if t == 0:
            model.add_constraints(np.concatenate([np.arange(M)] * 2), np.concatenate([d, s]),
                                  np.concatenate([np.ones(M), -np.ones(M)]), ">=", -initial)
        else:
            model.add_constraints(np.concatenate([np.arange(M)] * 3), np.concatenate([d, s, s_idx[t - 1]]),
                                  np.concatenate([np.ones(M), -np.ones(M), np.ones(M)]), ">=", np.zeros(M))
    obj = {}
    for t in range(N):
        for i in s_idx[t]:
            obj[int(i)] = costs.E_r
        for i in d_idx[t]:
            obj[int(i)] = costs.E_s
    model.set_objective(obj)
    return model, s_idx


def solve_day_schedule(w_bar, K_star, beta_star, eta_star, nbh: Neighborhood, s_cap, costs: CostParams,
                       initial_state=None, scheme: str = "srpf", label: str = "SSwithSC",
                       slot_length=None, method: str = "auto") -> SchedulePlan:
    """Joint LP over all slots of the day, then per-slot rounding.

    Minimizes ``sum_t sum_m E_r s_m(t) + E_s d_m(t)`` with ``d >= s(t) - s(t-1)``,
    ``d >= 0``, ``sum_m s_m(t) >= K*(t)``, routing within ``C * beta*(t) * s``,
    pools of at least ``eta*(t) * w_m(t)`` and ``s <= s_cap``. Each slot of the
    fractional solution is rounded by ``scheme`` to ``ceil(sum(s(t)))`` servers.
    """
    M = len(nbh)
    W = check_workload_matrix(np.atleast_2d(w_bar), M, name="w_bar")
    N = W.shape[0]
    K_star = np.asarray([int(k) for k in np.atleast_1d(K_star)])
    beta_star = np.asarray(beta_star, dtype=float).reshape(-1)
    eta_star = np.asarray(eta_star, dtype=float).reshape(-1)
    if not (K_star.size == beta_star.size == eta_star.size == N):
        raise ValueError("K_star, beta_star and eta_star need one entry per slot")
    cap = _caps(s_cap, M)
    W = np.vstack([_serviceable(w, nbh, cap) for w in W])
    if initial_state is None:
        initial_state = _default_initial(W[0], nbh, int(K_star[0]), costs.C, cap, method)
    initial = check_servers(initial_state, M, name="initial_state")
    if (initial > cap + EPS_FEAS).any():
        raise ValueError("initial_state exceeds s_cap")

    for slack in (0.0, _GUARANTEE_SLACK):
        model, s_idx = _day_model(W, K_star, beta_star, eta_star, nbh, cap, costs, initial, slack)
        sol = solve_lp(model, method=method)
        if sol.optimal:
            break
    else:
        bad = _first_infeasible_slot(W, K_star, beta_star, eta_star, nbh, cap, costs)
        raise InfeasiblePlacement(
            f"slot {bad} cannot meet K*={K_star[bad]}, beta*={beta_star[bad]:.6g}, eta*={eta_star[bad]:.6g}"
            if bad is not None else f"day schedule LP is {sol.status}"
        )
    cap_int = np.where(np.isfinite(cap), np.floor(cap + EPS_FEAS), np.inf)
    slots = []
    for t in range(N):
        s_frac = np.clip(sol.x[s_idx[t]], 0.0, cap)
        K = max(int(math.ceil(s_frac.sum() - 1e-6)), int(K_star[t]))
        s = _round_slot(s_frac, nbh, K, cap_int, scheme) if K else np.zeros(M, dtype=np.int64)
        slots.append(SlotPlan(t, int(K_star[t]), float(beta_star[t]), float(eta_star[t]), s, s_frac))
    return SchedulePlan(slots, initial, label, slot_length, float(sol.objective_value))


def _first_infeasible_slot(W, K_star, beta_star, eta_star, nbh, cap, costs):
    for t in range(W.shape[0]):
        model, _ = _day_model(W[t:t + 1], K_star[t:t + 1], beta_star[t:t + 1], eta_star[t:t + 1],
                              nbh, cap, CostParams(costs.E_r, 0.0, costs.E_w, costs.C),
                              np.zeros(W.shape[1]), _GUARANTEE_SLACK)
        if not solve_lp(model).optimal:
            return t
    return None


def _default_initial(w0, nbh, K0, C, cap, method):
    """Rounded per-slot optimum of the first slot."""
    plan = solve_slot_fractional(w0, nbh, K0, C, cap, method=method)
    if K0 == 0:
        return np.zeros(len(nbh), dtype=np.int64)
    return _round_slot(plan.s, nbh, K0, cap)


# ----------------------------------------------------------------------
# the three strategies
# ----------------------------------------------------------------------
def per_slot_plan(w_bar, K_star, nbh: Neighborhood, s_cap, C: float, initial_state=None, scheme: str = "srpf",
                  slot_length=None, method: str = "auto") -> SchedulePlan:
    """Each slot at its own rounded optimum, ignoring switching cost."""
    M = len(nbh)
    W = check_workload_matrix(np.atleast_2d(w_bar), M, name="w_bar")
    cap = _caps(s_cap, M)
    slots = []
    for t, w in enumerate(W):
        K = int(K_star[t])
        p = solve_slot_fractional(w, nbh, K, C, cap, t=t, method=method)
        p.s = _round_slot(p.s, nbh, K, cap, scheme) if K else np.zeros(M, dtype=np.int64)
        slots.append(p)
    if initial_state is None:
        initial_state = slots[0].s.copy()
    return SchedulePlan(slots, check_servers(initial_state, M, name="initial_state"), "SSwithoutSC", slot_length)


def always_on_plan(s_cap, n_slots: int, slot_length=None) -> SchedulePlan:
    """Every placed server on in every slot (no scheduling)."""
    s = check_servers(s_cap, integer=True, name="s_cap")
    slots = [SlotPlan(t, int(s.sum()), float("nan"), float("nan"), s.copy()) for t in range(n_slots)]
    return SchedulePlan(slots, s.copy(), "No-SS", slot_length)


def predict_day(history: TraceSeries, day_class: Optional[str] = None):
    """Per slot of day, the historical mean vector and the frames behind it.

    Only days of ``day_class`` (``"workday"``/``"holiday"``) are used when
    given. Returns ``(w_bar (N, M), [frames_t])``.
    """
    per_day = int(pd.Timedelta(days=1) / history.slot_length)
    if per_day * history.slot_length != pd.Timedelta(days=1):
        raise ValueError("slot length must divide one day")
    mask = np.ones(len(history), dtype=bool) if day_class is None else history.day_class == day_class
    if not mask.any():
        raise ValueError(f"history has no {day_class} slots")
    sod = history.slot_of_day
    frames, means = [], []
    for t in range(per_day):
        rows = history.loads[mask & (sod == t)]
        if rows.shape[0] == 0:
            raise ValueError(f"history has no frames for slot {t} of the day")
        frames.append(rows)
        means.append(rows.mean(axis=0))
    return np.vstack(means), frames


def plan_day(history: TraceSeries, nbh: Neighborhood, s_cap, costs: CostParams, strategy: str = "switching_cost",
             epsilon: float = DEFAULT_EPSILON, day_class: Optional[str] = "workday", initial_state=None,
             scheme: str = "srpf", method: str = "auto") -> SchedulePlan:
    """Fit a day plan for the placed servers ``s_cap`` from historical traces."""
    if strategy not in STRATEGIES:
        raise ValueError(f"unknown strategy {strategy!r}; choose from {STRATEGIES}")
    M = len(nbh)
    cap = check_servers(s_cap, M, integer=True, name="s_cap")
    if day_class is not None and not (history.day_class == day_class).any():
        day_class = None
    w_bar, frames = predict_day(history, day_class)
    N = w_bar.shape[0]
    if strategy == "always_on":
        return always_on_plan(cap, N, history.slot_length)
    C = costs.C
    K_star = []
    for t in range(N):
        k = find_k_star(frames[t], nbh, C, cap, epsilon, w_bar=w_bar[t], slot_id=t, method=method)
        K_star.append(k.K)
    if strategy == "per_slot":
        return per_slot_plan(w_bar, K_star, nbh, cap, C, initial_state, scheme, history.slot_length, method)
    pre = [solve_slot_fractional(w_bar[t], nbh, K_star[t], C, cap, t=t, method=method) for t in range(N)]
    return solve_day_schedule(
        w_bar, K_star, [p.beta_star for p in pre], [p.eta_star for p in pre], nbh, cap, costs,
        initial_state=initial_state, scheme=scheme, slot_length=history.slot_length, method=method,
    )
