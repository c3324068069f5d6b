"""Min-cost circulation rounding of a fractional placement.

The fractional routing ``u'`` of one pattern, its row sums ``w * kappa`` and
its column sums ``s`` form a fractional circulation on

    source -> left m -> right n -> sink -> source

With every arc bounded by the floor and ceiling of its fractional flow, the
graph has integer bounds and a feasible point, so an integral min-cost
circulation exists. The right-to-sink flows are the rounded placement; their
unit cost ``floor(s_n) / s_n`` discourages rounding down stations that would
lose a large share of their capacity.
"""
from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .lp import EPS_FEAS
from .placement import FractionalPlacement, IntegerPlacement, _workloads
from .topology import Neighborhood

__all__ = [
    "FlowGraph",
    "InfeasibleCirculation",
    "IntegralFlow",
    "binding_pattern",
    "build_circulation_graph",
    "min_cost_circulation",
    "normalize_for_flow",
    "round_mincost",
]

_INT_TOL = 1e-7


class InfeasibleCirculation(ValueError):
    """No circulation satisfies the bounds.

    ``witness`` is a node set whose required inflow (from lower bounds)
    cannot leave it within the outgoing upper bounds, or vice versa.
    """

    def __init__(self, message, witness=()):
        super().__init__(message)
        self.witness = tuple(witness)


@dataclass
class FlowGraph:
    n_nodes: int
    tail: np.ndarray
    head: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    cost: np.ndarray
    labels: list = field(default_factory=list, repr=False)

    def __post_init__(self):
        self.tail = np.asarray(self.tail, dtype=np.int64)
        self.head = np.asarray(self.head, dtype=np.int64)
        self.lower = np.asarray(self.lower, dtype=np.int64)
        self.upper = np.asarray(self.upper, dtype=np.int64)
        self.cost = np.asarray(self.cost, dtype=float)
        n = self.tail.size
        if not (self.head.size == self.lower.size == self.upper.size == self.cost.size == n):
            raise ValueError("arc arrays must have equal length")
        if (self.lower > self.upper).any():
            raise ValueError("arc lower bound exceeds upper bound")
        if n and (min(self.tail.min(), self.head.min()) < 0 or max(self.tail.max(), self.head.max()) >= self.n_nodes):
            raise ValueError("arc endpoint outside the node range")

    @property
    def n_arcs(self) -> int:
        return self.tail.size

    def to_dimacs(self, cost_scale: float = 1e6) -> str:
        """DIMACS min-cost-flow text; real costs are scaled and rounded to integers."""
        lines = [f"p min {self.n_nodes} {self.n_arcs}"]
        for t, h, lo, hi, c in zip(self.tail, self.head, self.lower, self.upper, self.cost):
            lines.append(f"a {t + 1} {h + 1} {lo} {hi} {int(round(c * cost_scale))}")
        return "\n".join(lines) + "\n"


@dataclass
class IntegralFlow:
    flow: np.ndarray
    total_cost: float


def min_cost_circulation(graph: FlowGraph) -> IntegralFlow:
    """Integral minimum-cost circulation.

    Lower bounds are moved into node imbalances, negative-cost arcs start
    saturated, and the imbalances are then cleared by successive shortest
    paths (Dijkstra on reduced costs). Paths are explored in arc order, so
    the result is deterministic for a fixed graph.
    """
    n, A = graph.n_nodes, graph.n_arcs
    lo, hi, cost = graph.lower, graph.upper, graph.cost
    flow = np.where(cost < 0, hi, lo).astype(np.int64)
    excess = np.zeros(n, dtype=np.int64)
    np.add.at(excess, graph.head, flow)
    np.subtract.at(excess, graph.tail, flow)

    # residual graph: edge 2a is the forward copy of arc a, 2a+1 the reverse
    to = np.empty(2 * A, dtype=np.int64)
    to[0::2], to[1::2] = graph.head, graph.tail
    rcost = np.empty(2 * A)
    rcost[0::2], rcost[1::2] = cost, -cost
    adj: list[list[int]] = [[] for _ in range(n)]
    for a in range(A):
        adj[graph.tail[a]].append(2 * a)
        adj[graph.head[a]].append(2 * a + 1)

    def cap(e):
        a = e >> 1
        return int(hi[a] - flow[a]) if e % 2 == 0 else int(flow[a] - lo[a])

    pot = np.zeros(n)
    sources = [v for v in range(n) if excess[v] > 0]
    while True:
        sources = [v for v in sources if excess[v] > 0]
        if not sources:
            break
        # multi-source Dijkstra from every node with surplus
        dist = np.full(n, np.inf)
        prev = np.full(n, -1, dtype=np.int64)
        heap = []
        for v in sources:
            dist[v] = 0.0
            heap.append((0.0, v))
        heapq.heapify(heap)
        done = np.zeros(n, dtype=bool)
        target = -1
        while heap:
            d, v = heapq.heappop(heap)
            if done[v]:
                continue
            done[v] = True
            if excess[v] < 0:
                target = v
                break
            for e in adj[v]:
                if cap(e) <= 0:
                    continue
                u = to[e]
                if done[u]:
                    continue
                nd = d + max(rcost[e] + pot[v] - pot[u], 0.0)
                if nd < dist[u] - 1e-12:
                    dist[u] = nd
                    prev[u] = e
                    heapq.heappush(heap, (nd, u))
        if target < 0:
            witness = np.flatnonzero(done)
            raise InfeasibleCirculation(
                f"surplus at nodes {sorted(sources)} cannot reach any deficit; "
                f"the {witness.size} reachable nodes form a violated cut",
                witness.tolist(),
            )
        dt = dist[target]
        settled = done.copy()
        pot[settled] += dist[settled]
        pot[~settled] += dt
        # surplus nodes start at distance 0 and are never relaxed, so the
        # walk back ends at one of them
        path = []
        v = target
        while prev[v] >= 0:
            e = int(prev[v])
            path.append(e)
            v = int(to[e ^ 1])
        start = v
        delta = min(int(excess[start]), int(-excess[target]), min(cap(e) for e in path))
        for e in path:
            a = e >> 1
            flow[a] += delta if e % 2 == 0 else -delta
        excess[start] -= delta
        excess[target] += delta
    return IntegralFlow(flow, float(cost @ flow))


# ----------------------------------------------------------------------
# graph construction from a fractional placement
# ----------------------------------------------------------------------
def _floor(x):
    return np.floor(np.asarray(x) + _INT_TOL).astype(np.int64)


def _ceil(x):
    return np.ceil(np.asarray(x) - _INT_TOL).astype(np.int64)


def build_circulation_graph(s_tilde, u_prime, kappa: float, w, K: int, nbh: Neighborhood) -> FlowGraph:
    """Circulation graph for one pattern.

    ``u_prime`` is aligned with ``nbh.pairs``. Nodes: 0 source, ``1..M`` left,
    ``M+1..2M`` right, ``2M+1`` sink. Arcs: source->left, left->right (one
    per route), right->sink, sink->source, in that order.
    """
    s_tilde = np.maximum(np.asarray(s_tilde, dtype=float), 0.0)
    u_prime = np.maximum(np.asarray(u_prime, dtype=float), 0.0)
    w = np.asarray(w, dtype=float)
    M = len(nbh)
    src, dst = nbh.pairs
    row = w * kappa
    tol = 1e-6 * max(1.0, float(K))
    rows_sum = np.bincount(src, weights=u_prime, minlength=M)
    cols_sum = np.bincount(dst, weights=u_prime, minlength=M)
    if (np.abs(rows_sum - row).max() > tol or np.abs(cols_sum - s_tilde).max() > tol
            or abs(s_tilde.sum() - K) > tol):
        raise ValueError(
            "fractional flow is not conserved (rows, columns and total must match w*kappa, s and K); "
            "normalize the placement first"
        )
    source, sink = 0, 2 * M + 1
    left = 1 + np.arange(M)
    right = 1 + M + np.arange(M)
    with np.errstate(divide="ignore", invalid="ignore"):
        sink_cost = np.where(s_tilde > _INT_TOL, np.floor(s_tilde + _INT_TOL) / s_tilde, 0.0)
    s_lo = np.where(s_tilde > _INT_TOL, _floor(s_tilde), 0)
    s_hi = np.where(s_tilde > _INT_TOL, _ceil(s_tilde), 0)
    tail = np.concatenate([np.full(M, source), left[src], right, [sink]])
    head = np.concatenate([left, right[dst], np.full(M, sink), [source]])
    lower = np.concatenate([_floor(row), _floor(u_prime), s_lo, [K]])
    upper = np.concatenate([_ceil(row), _ceil(u_prime), s_hi, [K]])
    cost = np.concatenate([np.zeros(M), np.zeros(src.size), sink_cost, [0.0]])
    labels = ["source"] + [f"L{m}" for m in range(M)] + [f"R{n}" for n in range(M)] + ["sink"]
    return FlowGraph(2 * M + 2, tail, head, lower, upper, cost, labels)


def binding_pattern(frac: FractionalPlacement, rtol: float = 1e-7) -> int:
    """First pattern whose worst station utilization reaches ``beta_star``."""
    loads = frac.pattern_loads()
    with np.errstate(divide="ignore", invalid="ignore"):
        util = np.where(frac.s_tilde > 0, loads / (frac.C * frac.s_tilde), 0.0).max(axis=1)
    hits = np.flatnonzero(util >= frac.beta_star * (1 - rtol))
    return int(hits[0]) if hits.size else int(np.argmax(util))


def normalize_for_flow(frac: FractionalPlacement, pattern: Optional[int] = None):
    """Tight fractional circulation for one pattern.

    Servers are cut down to the load the pattern actually sends them and the
    result, together with ``u'`` and ``kappa``, is rescaled so the servers sum
    to ``K`` again. Returns ``(s, u_prime, kappa, w)``; for a single pattern
    this reproduces the input placement.
    """
    if pattern is None:
        pattern = binding_pattern(frac)
    w = frac.workloads[pattern]
    src, dst = frac.nbh.pairs
    M = len(frac.nbh)
    kappa = frac.kappa
    u_prime = frac.routing[pattern] * w[src] * kappa
    used = np.bincount(dst, weights=u_prime, minlength=M)
    K = frac.K
    rho = used.sum() / K
    if rho <= 0:
        raise ValueError("pattern carries no workload")
    return used / rho, u_prime / rho, kappa / rho, w


def round_mincost(frac: FractionalPlacement, nbh: Optional[Neighborhood] = None, K: Optional[int] = None,
                  pattern: Optional[int] = None) -> IntegerPlacement:
    """Integer placement from the min-cost circulation of the binding pattern."""
    nbh = frac.nbh if nbh is None else nbh
    K = frac.K if K is None else int(K)
    s, u_prime, kappa, w = normalize_for_flow(frac, pattern)
    graph = build_circulation_graph(s, u_prime, kappa, w, K, nbh)
    result = min_cost_circulation(graph)
    M = len(nbh)
    start = M + nbh.pairs[0].size
    return IntegerPlacement(result.flow[start:start + M].copy(), "mincost")
