"""scikit-learn style wrappers: placement and scheduling are fit on workload history."""
from __future__ import annotations

from typing import Optional

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import check_workload_matrix
from .evaluation import PolicySpec, RejectionModel, baseline_place, evaluate_frames, evaluate_schedule
from .flow import round_mincost
from .placement import PlacementParams, round_heuristic, solve_ro_fractional, solve_rp_fractional
from .scheduling import STRATEGIES, CostParams, plan_day, schedule_cost, switch_count
from .topology import Neighborhood, build_neighborhoods
from .traces import RepresentativeSet, TraceSeries, group_and_represent

__all__ = ["BaselinePlacement", "RobustPlacement", "ServerScheduler"]


def _frames(X, n_stations=None):
    if isinstance(X, TraceSeries):
        return X.loads
    return check_workload_matrix(np.atleast_2d(X), n_stations, name="X")


def _representatives(X, groups, mode):
    """Representative vectors from a trace, grouped rows, or rows used as-is."""
    if isinstance(X, TraceSeries):
        return group_and_represent(X, mode)
    if isinstance(X, RepresentativeSet):
        return X
    X = check_workload_matrix(np.atleast_2d(X), name="X")
    if groups is None:
        return RepresentativeSet(X, mode, [("given", l) for l in range(X.shape[0])])
    groups = np.asarray(groups)
    if groups.shape[0] != X.shape[0]:
        raise ValueError("groups needs one label per row of X")
    keys = list(dict.fromkeys(groups.tolist()))
    reduce = np.mean if mode == "average" else np.max
    vectors = np.vstack([reduce(X[groups == k], axis=0) for k in keys])
    return RepresentativeSet(vectors, mode, [("group", k) for k in keys])


class _PlacementBase(BaseEstimator):
    def _neighborhood(self, stations, neighborhood):
        nbh = neighborhood if neighborhood is not None else self.neighborhood
        if nbh is not None:
            return nbh if isinstance(nbh, Neighborhood) else Neighborhood.from_json(nbh)
        if stations is None:
            raise ValueError("pass a neighborhood, or stations together with radius or k_nearest")
        return build_neighborhoods(stations, radius=self.radius, k_nearest=self.k_nearest)

    def predict(self, X) -> np.ndarray:
        """Minimum rejection rate of every frame of ``X`` with the fitted servers."""
        check_is_fitted(self, "servers_")
        return evaluate_frames(self.servers_, _frames(X, len(self.nbh_)), self.C, self.nbh_,
                               method=self.method)["rate"].to_numpy()

    def transform(self, X) -> np.ndarray:
        """Per-station utilization (routed load over capacity) under the min-rejection routing."""
        check_is_fitted(self, "servers_")
        model = RejectionModel(self.servers_, self.C, self.nbh_, self.method)
        cap = self.C * self.servers_.astype(float)
        out = []
        for w in _frames(X, len(self.nbh_)):
            _, routing = model.solve(w)
            load = routing.loads(w)
            with np.errstate(divide="ignore", invalid="ignore"):
                out.append(np.where(cap > 0, load / np.where(cap > 0, cap, 1.0), np.where(load > 0, np.inf, 0.0)))
        return np.vstack(out)

    def score(self, X, y=None) -> float:
        """Negative mean rejection rate, so that higher is better."""
        return -float(np.mean(self.predict(X)))


class RobustPlacement(_PlacementBase):
    """Place ``K`` servers robustly against historical workload patterns.

    Fits the min-utilization LP over the representative vectors of the
    history, optionally maximizes the resource pooling factor at that
    utilization (``pooling=True``), then rounds with ``scheme`` (one of the
    five heuristics or ``"mincost"``).

    Fitted attributes: ``representatives_``, ``fractional_``, ``servers_``,
    ``beta_star_``, ``eta_star_``, ``nbh_``.
    """

    def __init__(self, K=100, C=1.0, neighborhood=None, radius=None, k_nearest=None, mode="average",
                 pooling=True, scheme="srpf", seed=0, method="auto"):
        self.K = K
        self.C = C
        self.neighborhood = neighborhood
        self.radius = radius
        self.k_nearest = k_nearest
        self.mode = mode
        self.pooling = pooling
        self.scheme = scheme
        self.seed = seed
        self.method = method

    def fit(self, X, groups=None, *, stations=None, neighborhood=None):
        """``X`` is a :class:`TraceSeries`, a :class:`RepresentativeSet`, or a
        frames-by-stations array; rows sharing a ``groups`` label are reduced to
        one representative by ``mode``, otherwise each row is a representative."""
        reps = _representatives(X, groups, self.mode)
        self.nbh_ = self._neighborhood(stations, neighborhood)
        params = PlacementParams(self.K, self.C)
        frac = solve_ro_fractional(reps, self.nbh_, params, method=self.method,
                                   tie_break="none" if self.pooling else "local")
        if self.pooling:
            frac = solve_rp_fractional(reps, self.nbh_, params, frac.beta_star, method=self.method)
        if self.scheme == "mincost":
            placement = round_mincost(frac)
        else:
            placement = round_heuristic(frac, self.scheme, self.nbh_, params.K, seed=self.seed)
        self.representatives_ = reps
        self.fractional_ = frac
        self.servers_ = placement.s
        self.beta_star_ = frac.beta_star
        self.eta_star_ = frac.eta_star
        return self


class BaselinePlacement(_PlacementBase):
    """One of the comparison policies (``Random``, ``Clustering``, ``Uniform``,
    ``TwithoutLB``, ``TwithLB``, ``RO_RP``) behind the estimator interface."""

    def __init__(self, policy="Random", K=100, C=1.0, k=None, zone_size=None, neighborhood=None, radius=None,
                 k_nearest=None, mode="average", scheme="srpf", seed=0, method="auto"):
        self.policy = policy
        self.K = K
        self.C = C
        self.k = k
        self.zone_size = zone_size
        self.neighborhood = neighborhood
        self.radius = radius
        self.k_nearest = k_nearest
        self.mode = mode
        self.scheme = scheme
        self.seed = seed
        self.method = method

    def fit(self, X, y=None, *, stations=None, neighborhood=None):
        self.nbh_ = self._neighborhood(stations, neighborhood)
        spec = PolicySpec(self.policy, k=self.k, zone_size=self.zone_size, seed=self.seed, mode=self.mode,
                          scheme=self.scheme)
        if stations is None and self.policy in ("Clustering", "Uniform", "TwithoutLB"):
            raise ValueError(f"{self.policy} needs station coordinates")
        data = X if isinstance(X, (TraceSeries, RepresentativeSet)) else _frames(X, len(self.nbh_))
        self.servers_ = baseline_place(spec, stations, data, self.nbh_, PlacementParams(self.K, self.C)).s
        return self


class ServerScheduler(BaseEstimator):
    """Day-ahead on/off plan for already placed servers.

    ``strategy`` is ``"switching_cost"`` (joint LP), ``"per_slot"`` (each slot
    at its own optimum) or ``"always_on"``. Fitted attributes: ``plan_``,
    ``cost_`` (running, switching, total) and ``switches_``.
    """

    def __init__(self, strategy="switching_cost", epsilon=1e-3, C=1.0, E_r=1.0, E_s=1.0, E_w=0.0,
                 day_class="workday", scheme="srpf", method="auto"):
        self.strategy = strategy
        self.epsilon = epsilon
        self.C = C
        self.E_r = E_r
        self.E_s = E_s
        self.E_w = E_w
        self.day_class = day_class
        self.scheme = scheme
        self.method = method

    @property
    def costs(self) -> CostParams:
        return CostParams(self.E_r, self.E_s, self.E_w, self.C)

    def fit(self, X: TraceSeries, y=None, *, servers, neighborhood: Neighborhood, initial_state=None):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}; choose from {STRATEGIES}")
        if not isinstance(X, TraceSeries):
            raise TypeError("ServerScheduler.fit needs a TraceSeries history")
        self.nbh_ = neighborhood
        self.plan_ = plan_day(X, neighborhood, servers, self.costs, self.strategy, self.epsilon, self.day_class,
                              initial_state, self.scheme, self.method)
        self.cost_ = schedule_cost(self.plan_, self.costs)
        self.switches_ = switch_count(self.plan_)
        return self

    def predict(self, X: TraceSeries) -> np.ndarray:
        """Per-frame rejection rate with each frame served by its slot's servers."""
        check_is_fitted(self, "plan_")
        return evaluate_schedule(self.plan_, X, self.C, self.nbh_, method=self.method).per_frame["rate"].to_numpy()

    def score(self, X, y=None) -> float:
        return -float(np.mean(self.predict(X)))
