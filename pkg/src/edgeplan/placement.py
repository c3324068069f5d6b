"""Robust server placement: the min-utilization LP, resource pooling, rounding.

All LPs are written over the allowed routes of a :class:`Neighborhood`
(``nbh.pairs``), so a route ``(m, n)`` exists only for ``n in omega[m]``.
Routing is stored per representative pattern as a vector aligned with those
pairs.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ._validation import check_random_state_seed, check_workload, check_workload_matrix
from .lp import EPS_FEAS, LinearModel, solve_lp
from .topology import Neighborhood
from .traces import RepresentativeSet

__all__ = [
    "EPS_RELAX",
    "SCHEMES",
    "FractionalPlacement",
    "InfeasiblePlacement",
    "IntegerPlacement",
    "PlacementParams",
    "RoundingError",
    "RoutingMatrix",
    "construct_routing",
    "hull_weights",
    "placement_utilization",
    "pooling_factor",
    "round_heuristic",
    "solve_ro_footnote",
    "solve_ro_fractional",
    "solve_rp_fractional",
    "utilization_bound",
]

EPS_RELAX = 1e-6
SCHEMES = ("srpf", "rr", "lrpf", "ldf", "lsf")
# fractional parts below this count as integral when rounding
_INT_TOL = 1e-7


class InfeasiblePlacement(ValueError):
    """No routing can serve the workload with the given servers."""


class RoundingError(ValueError):
    pass


@dataclass(frozen=True)
class PlacementParams:
    K: int
    C: float

    def __post_init__(self):
        if int(self.K) != self.K or self.K < 1:
            raise ValueError(f"K must be a positive integer, got {self.K}")
        if not (np.isfinite(self.C) and self.C > 0):
            raise ValueError(f"C must be positive, got {self.C}")
        object.__setattr__(self, "K", int(self.K))
        object.__setattr__(self, "C", float(self.C))


@dataclass
class RoutingMatrix:
    """Row-stochastic routing over the allowed routes of ``nbh``."""

    values: np.ndarray
    nbh: Neighborhood = field(repr=False)

    @property
    def u(self) -> np.ndarray:
        M = len(self.nbh)
        out = np.zeros((M, M))
        src, dst = self.nbh.pairs
        out[src, dst] = self.values
        return out

    def loads(self, w) -> np.ndarray:
        """Workload arriving at each station when ``w`` is routed."""
        src, dst = self.nbh.pairs
        return np.bincount(dst, weights=np.asarray(w)[src] * self.values, minlength=len(self.nbh))


@dataclass
class FractionalPlacement:
    """Relaxed placement with its utilization bound and per-pattern routing.

    ``routing[l]`` holds ``u_hat[l, m, n]`` aligned with ``nbh.pairs``.
    """

    s_tilde: np.ndarray
    beta_star: float
    routing: np.ndarray
    workloads: np.ndarray = field(repr=False)
    nbh: Neighborhood = field(repr=False)
    C: float = 1.0
    eta_star: Optional[float] = None

    @property
    def K(self) -> int:
        return int(round(self.s_tilde.sum()))

    @property
    def kappa(self) -> float:
        return 1.0 / (self.C * self.beta_star)

    def routing_matrix(self, pattern: int = 0) -> RoutingMatrix:
        return RoutingMatrix(self.routing[pattern], self.nbh)

    def pattern_loads(self) -> np.ndarray:
        """``loads[l, n]``: workload of pattern ``l`` routed to station ``n``."""
        src, dst = self.nbh.pairs
        M = len(self.nbh)
        return np.vstack([
            np.bincount(dst, weights=w[src] * r, minlength=M) for w, r in zip(self.workloads, self.routing)
        ])


@dataclass
class IntegerPlacement:
    s: np.ndarray
    provenance: str = ""

    def __post_init__(self):
        self.s = np.asarray(self.s, dtype=np.int64)
        if (self.s < 0).any():
            raise ValueError("server counts must be nonnegative")

    @property
    def K(self) -> int:
        return int(self.s.sum())


def _workloads(reps) -> np.ndarray:
    if isinstance(reps, RepresentativeSet):
        return reps.vectors
    W = np.asarray(reps, dtype=float)
    return check_workload_matrix(W[None, :] if W.ndim == 1 else W, name="workloads")


def _check_inputs(W, nbh, params):
    if W.shape[1] != len(nbh):
        raise ValueError(f"workloads cover {W.shape[1]} stations but the neighborhood has {len(nbh)}")
    if not (W.sum(axis=1) > 0).any():
        raise ValueError("every representative workload vector is zero")
    if not isinstance(params, PlacementParams):
        params = PlacementParams(*params)
    return params


def _route_blocks(W, nbh):
    """Per pattern, the pair positions that carry workload (``w[l, m] > 0``)."""
    src, _ = nbh.pairs
    return [np.flatnonzero(w[src] > 0) for w in W]


def _add_routing(model, W, nbh, name="x"):
    """Route variables for every loaded pair; returns per-pattern index arrays."""
    blocks = _route_blocks(W, nbh)
    idx = [model.add_variables(b.size, name=f"{name}{l}") for l, b in enumerate(blocks)]
    return blocks, idx


def _uniform_rows(nbh, W, routing):
    src, _ = nbh.pairs
    sizes = nbh.sizes
    for l, w in enumerate(W):
        zero = w[src] <= 0
        routing[l, zero] = 1.0 / sizes[src[zero]]
    return routing


def _polish(W, nbh, s, x_blocks, blocks, C):
    """Routing fractions and the exact max utilization of a solved placement."""
    src, dst = nbh.pairs
    L, P = W.shape[0], src.size
    M = len(nbh)
    routing = np.zeros((L, P))
    for l in range(L):
        b = blocks[l]
        if not b.size:
            continue
        flow = np.maximum(x_blocks[l], 0.0)
        flow[s[dst[b]] <= 0] = 0.0
        # renormalize each row so it is exactly stochastic
        row = np.bincount(src[b], weights=flow, minlength=M)
        if (row[src[b]] <= 0).any():
            raise InfeasiblePlacement("a loaded station has no server within reach")
        routing[l, b] = flow / row[src[b]]
    routing = _uniform_rows(nbh, W, routing)
    beta = 0.0
    for l in range(L):
        load = np.bincount(dst, weights=W[l][src] * routing[l], minlength=M)
        busy = load > 0
        if busy.any():
            with np.errstate(divide="ignore"):
                beta = max(beta, float((load[busy] / (C * s[busy])).max()))
    return routing, beta


def _clean_servers(s, K):
    s = np.maximum(np.asarray(s, dtype=float), 0.0)
    s[s < 1e-12] = 0.0
    return s * (K / s.sum())


def solve_ro_fractional(reps, nbh: Neighborhood, params, caps=None, method: str = "auto",
                        tie_break: str = "local") -> FractionalPlacement:
    """Minimize the worst-case utilization over all representative patterns.

    Uses the substitution ``u' = u * w / (C * beta)`` and ``kappa = 1 / (C * beta)``:
    maximize ``kappa`` subject to ``sum_n u'[l,m,n] = w[l,m] * kappa``,
    ``sum_m u'[l,m,n] <= s[n]`` and ``sum(s) = K``. ``caps`` optionally bounds
    each ``s[n]`` from above.

    The optimal placement is rarely unique. With ``tie_break="local"`` a
    second LP keeps ``kappa`` at its optimum and minimizes the workload routed
    away from its own station, which gives a solver-independent answer that
    serves demand where it arises. ``"none"`` returns the first LP's vertex.
    """
    if tie_break not in ("local", "none"):
        raise ValueError("tie_break must be 'local' or 'none'")
    W = _workloads(reps)
    params = _check_inputs(W, nbh, params)
    K, C = params.K, params.C
    M = W.shape[1]
    src, dst = nbh.pairs
    ub = np.inf if caps is None else np.asarray(caps, dtype=float)
    if caps is not None and ub.sum() < K - EPS_FEAS:
        raise InfeasiblePlacement(f"K={K} exceeds the total cap {ub.sum():g}")

    model = LinearModel("max")
    s = model.add_variables(M, 0.0, ub, name="s")
    kappa = model.add_variable("kappa")
    blocks, xs = _add_routing(model, W, nbh, name="u")
    for l, (b, x) in enumerate(zip(blocks, xs)):
        if not b.size:
            continue
        rows_m = np.unique(src[b])
        pos = np.searchsorted(rows_m, src[b])
        # sum_n u'[l,m,n] - w[l,m] kappa == 0
        model.add_constraints(
            np.concatenate([pos, np.arange(rows_m.size)]),
            np.concatenate([x, np.full(rows_m.size, kappa)]),
            np.concatenate([np.ones(b.size), -W[l][rows_m]]),
            "==", np.zeros(rows_m.size),
        )
        # sum_m u'[l,m,n] - s[n] <= 0
        model.add_constraints(
            np.concatenate([dst[b], np.arange(M)]),
            np.concatenate([x, s]),
            np.concatenate([np.ones(b.size), -np.ones(M)]),
            "<=", np.zeros(M),
        )
    model.add_constraints(np.zeros(M, dtype=np.int64), s, 1.0, "==", [K])
    model.set_objective({kappa: 1.0})
    sol = solve_lp(model, method=method)
    if sol.status != "optimal":
        raise InfeasiblePlacement(f"robust placement LP is {sol.status}")
    if not sol.x[kappa] > 0:
        raise InfeasiblePlacement("a loaded station cannot reach any server capacity")
    if tie_break == "local":
        k_opt = float(sol.x[kappa])
        model.add_constraint({kappa: 1.0}, ">=", k_opt * (1.0 - 1e-9))
        away = [x[src[b] != dst[b]] for b, x in zip(blocks, xs) if b.size]
        away = np.concatenate(away) if away else np.zeros(0, dtype=np.int64)
        if away.size:
            model.set_objective(away, np.ones(away.size), sense="min")
            second = solve_lp(model, method=method)
            if second.optimal:
                sol = second
    s_val = _clean_servers(sol.x[s], K)
    routing, beta = _polish(W, nbh, s_val, [sol.x[x] for x in xs], blocks, C)
    beta = max(beta, 1.0 / (C * sol.x[kappa]))
    if not np.isfinite(beta):
        raise InfeasiblePlacement("a loaded station routes to a station without servers")
    return FractionalPlacement(s_val, beta, routing, W.copy(), nbh, C)


def solve_ro_footnote(reps, nbh: Neighborhood, params, method: str = "auto") -> float:
    """Optimal utilization via the ``S_hat = S * beta`` substitution (cross-check only)."""
    W = _workloads(reps)
    params = _check_inputs(W, nbh, params)
    K, C = params.K, params.C
    M = W.shape[1]
    src, dst = nbh.pairs
    model = LinearModel("min")
    s_hat = model.add_variables(M, name="s_hat")
    beta = model.add_variable("beta")
    blocks, xs = _add_routing(model, W, nbh)
    for l, (b, x) in enumerate(zip(blocks, xs)):
        if not b.size:
            continue
        rows_m = np.unique(src[b])
        model.add_constraints(np.searchsorted(rows_m, src[b]), x, 1.0, "==", W[l][rows_m])
        model.add_constraints(
            np.concatenate([dst[b], np.arange(M)]), np.concatenate([x, s_hat]),
            np.concatenate([np.ones(b.size), -C * np.ones(M)]), "<=", np.zeros(M),
        )
    model.add_constraints(np.zeros(M + 1, dtype=np.int64), np.append(s_hat, beta),
                          np.append(np.ones(M), -K), "==", [0.0])
    model.set_objective({beta: 1.0})
    sol = solve_lp(model, method=method)
    if sol.status != "optimal":
        raise InfeasiblePlacement(f"footnote LP is {sol.status}")
    return float(sol.x[beta])


def solve_rp_fractional(reps, nbh: Neighborhood, params, beta_star: float, caps=None,
                        method: str = "auto", eps_relax: float = EPS_RELAX) -> FractionalPlacement:
    """Maximize the resource pooling factor while keeping utilization at ``beta_star``.

    If the LP is infeasible at ``beta_star`` (solver drift), it is retried once
    at ``beta_star * (1 + eps_relax)``.
    """
    W = _workloads(reps)
    params = _check_inputs(W, nbh, params)
    K, C = params.K, params.C
    M = W.shape[1]
    src, dst = nbh.pairs
    wmax = W.max(axis=0)
    ub = np.inf if caps is None else np.asarray(caps, dtype=float)

    def build(beta):
        model = LinearModel("max")
        s = model.add_variables(M, 0.0, ub, name="s")
        eta = model.add_variable("eta")
        blocks, xs = _add_routing(model, W, nbh)
        for l, (b, x) in enumerate(zip(blocks, xs)):
            if not b.size:
                continue
            rows_m = np.unique(src[b])
            model.add_constraints(np.searchsorted(rows_m, src[b]), x, 1.0, "==", W[l][rows_m])
            model.add_constraints(
                np.concatenate([dst[b], np.arange(M)]), np.concatenate([x, s]),
                np.concatenate([np.ones(b.size), -C * beta * np.ones(M)]), "<=", np.zeros(M),
            )
        model.add_constraints(np.zeros(M, dtype=np.int64), s, 1.0, "==", [K])
        loaded = np.flatnonzero(wmax > 0)
        # eta * wmax[m] - sum_{n in omega[m]} s[n] <= 0
        pm = np.isin(src, loaded)
        rows = np.searchsorted(loaded, src[pm])
        model.add_constraints(
            np.concatenate([rows, np.arange(loaded.size)]),
            np.concatenate([s[dst[pm]], np.full(loaded.size, eta)]),
            np.concatenate([-np.ones(pm.sum()), wmax[loaded]]),
            "<=", np.zeros(loaded.size),
        )
        model.set_objective({eta: 1.0})
        return model, s, eta, blocks, xs

    for beta in (beta_star, beta_star * (1.0 + eps_relax)):
        model, s, eta, blocks, xs = build(beta)
        sol = solve_lp(model, method=method)
        if sol.status == "optimal":
            break
    else:
        raise InfeasiblePlacement(
            f"pooling LP is {sol.status} at beta*={beta_star:.9g} even after relaxing by {eps_relax:g}"
        )
    s_val = _clean_servers(sol.x[s], K)
    routing, beta_used = _polish(W, nbh, s_val, [sol.x[x] for x in xs], blocks, C)
    return FractionalPlacement(
        s_val, max(beta_star, beta_used), routing, W.copy(), nbh, C,
        eta_star=pooling_factor(s_val, W, nbh),
    )


def pooling_factor(s, reps, nbh: Neighborhood) -> float:
    """Largest ``eta`` with ``eta * max_l w[l, m] <= pool[m]`` for every station."""
    W = _workloads(reps)
    wmax = W.max(axis=0)
    loaded = wmax > 0
    if not loaded.any():
        return float("inf")
    pool = nbh.pool(s)
    return float((pool[loaded] / wmax[loaded]).min())


def placement_utilization(s, reps, nbh: Neighborhood, C: float, method: str = "auto") -> float:
    """Smallest worst-case utilization achievable by routing with servers ``s`` fixed.

    Returns ``inf`` when some loaded station cannot reach any server.
    """
    W = _workloads(reps)
    s = np.asarray(s, dtype=float)
    M = W.shape[1]
    src, dst = nbh.pairs
    if (nbh.pool(s)[W.max(axis=0) > 0] <= 0).any():
        return float("inf")
    if not W.any():
        return 0.0
    model = LinearModel("min")
    beta = model.add_variable("beta")
    blocks, xs = _add_routing(model, W, nbh)
    for l, (b, x) in enumerate(zip(blocks, xs)):
        if not b.size:
            continue
        rows_m = np.unique(src[b])
        model.add_constraints(np.searchsorted(rows_m, src[b]), x, 1.0, "==", W[l][rows_m])
        model.add_constraints(
            np.concatenate([dst[b], np.arange(M)]), np.concatenate([x, np.full(M, beta)]),
            np.concatenate([np.ones(b.size), -C * s]), "<=", np.zeros(M),
        )
    model.set_objective({beta: 1.0})
    sol = solve_lp(model, method=method)
    if sol.status != "optimal":
        return float("inf")
    return float(sol.x[beta])


def _snap(s):
    s = np.maximum(np.asarray(s, dtype=float), 0.0)
    near = np.abs(s - np.round(s)) < _INT_TOL
    s[near] = np.round(s[near])
    return s


def round_heuristic(frac, scheme: str, nbh: Neighborhood, K: Optional[int] = None, seed=None) -> IntegerPlacement:
    """Round a fractional placement to integers summing to ``K``.

    Every station starts at ``floor(s)``; the remaining ``K - sum(floor(s))``
    units go, one each, to the stations with a fractional part ranked first by
    ``scheme``:

    ``srpf``  smallest resource pool first
    ``lrpf``  largest resource pool first
    ``ldf``   largest fractional part first
    ``lsf``   largest relative loss ``frac / s`` first
    ``rr``    uniformly random order (seeded)

    Ties go to the lower station index. ``K`` defaults to ``round(sum(s))``;
    a larger ``K`` up to ``ceil(sum(s))`` is accepted.
    """
    scheme = scheme.lower()
    if scheme not in SCHEMES:
        raise ValueError(f"unknown rounding scheme {scheme!r}; choose from {SCHEMES}")
    s_tilde = frac.s_tilde if isinstance(frac, FractionalPlacement) else check_workload(frac, name="s_tilde")
    s = _snap(s_tilde)
    if K is None:
        K = int(round(s.sum()))
    floor = np.floor(s)
    part = s - floor
    R = int(K - floor.sum())
    eligible = np.flatnonzero(part > 0)
    if R < 0 or R > eligible.size:
        raise RoundingError(
            f"need {R} round-ups but {eligible.size} stations have fractional parts (sum={s.sum():.9g}, K={K})"
        )
    idx = np.arange(s.size)
    if scheme == "rr":
        rng = check_random_state_seed(seed)
        chosen = rng.permutation(eligible)[:R]
    else:
        if scheme in ("srpf", "lrpf"):
            pool = nbh.pool(s)
            key = pool if scheme == "srpf" else -pool
        elif scheme == "ldf":
            key = -part
        else:
            with np.errstate(divide="ignore", invalid="ignore"):
                key = -np.where(s > 0, part / s, 0.0)
        order = eligible[np.lexsort((idx[eligible], key[eligible]))]
        chosen = order[:R]
    out = floor.astype(np.int64)
    out[chosen] += 1
    return IntegerPlacement(out, scheme)


def hull_weights(w, reps) -> np.ndarray:
    """Simplex weights ``lam`` with ``w <= sum_l lam[l] * w^l``.

    Solves ``min sum(lam)`` over ``w <= sum_l lam[l] w^l, lam >= 0`` and then
    scales the minimizer onto the simplex; raises if the minimum exceeds one.
    """
    W = _workloads(reps)
    w = check_workload(w, W.shape[1])
    L = W.shape[0]
    if not w.any():
        return np.full(L, 1.0 / L)
    model = LinearModel("min")
    lam = model.add_variables(L, name="lam")
    rows, cols = np.nonzero(W.T)
    model.add_constraints(rows, lam[cols], W.T[rows, cols], ">=", w) if rows.size else None
    model.set_objective(lam, np.ones(L))
    sol = solve_lp(model)
    if sol.status != "optimal":
        raise ValueError("workload is not dominated by any combination of the representatives")
    total = float(sol.x.sum())
    if total > 1.0 + EPS_FEAS:
        raise ValueError(f"workload lies outside the convex hull (needs total weight {total:.6g} > 1)")
    return np.maximum(sol.x, 0.0) / total


def construct_routing(w, frac: FractionalPlacement, lam=None) -> RoutingMatrix:
    """Blend the per-pattern routings for a workload inside the representatives' hull.

    ``u[m, n] = sum_l lam[l] w^l[m] u_hat[l, m, n] / sum_i lam[i] w^i[m]``.
    """
    W = frac.workloads
    w = check_workload(w, W.shape[1])
    if lam is None:
        lam = hull_weights(w, W)
    lam = np.asarray(lam, dtype=float)
    if lam.shape != (W.shape[0],) or (lam < -EPS_FEAS).any() or abs(lam.sum() - 1.0) > 1e-6:
        raise ValueError("lam must be a probability vector over the representative patterns")
    lam = np.maximum(lam, 0.0)
    hull = lam @ W
    tol = EPS_FEAS * max(1.0, float(W.max()))
    if (w > hull + tol).any():
        raise ValueError("workload exceeds the hull point componentwise; the guarantee does not apply")
    nbh = frac.nbh
    src, _ = nbh.pairs
    weights = lam[:, None] * W[:, src]  # (L, P)
    denom = weights.sum(axis=0)
    values = np.empty(src.size)
    pos = denom > 0
    values[pos] = (weights[:, pos] * frac.routing[:, pos]).sum(axis=0) / denom[pos]
    values[~pos] = 1.0 / nbh.sizes[src[~pos]]
    return RoutingMatrix(values, nbh)


def utilization_bound(beta_star: float, eta_star: float, gamma: float) -> float:
    """Worst utilization after a relative burst ``gamma`` spread over each pool."""
    if not eta_star > 0:
        raise ValueError("eta_star must be positive")
    if gamma < 0:
        raise ValueError("gamma must be nonnegative")
    return beta_star + gamma / eta_star
