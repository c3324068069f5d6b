"""Independent reference computations used as test oracles.

Nothing here calls the package's LP layer: utilizations come from Hall-type
cut enumeration, rejection from networkx max-flow, LP optima from vertex
enumeration and circulations from exhaustive search.
"""
from __future__ import annotations

import itertools

import networkx as nx
import numpy as np


def compositions(K: int, M: int):
    """All nonnegative integer vectors of length ``M`` summing to ``K``."""
    for cuts in itertools.combinations(range(K + M - 1), M - 1):
        bounds = (-1,) + cuts + (K + M - 1,)
        yield np.array([bounds[i + 1] - bounds[i] - 1 for i in range(M)], dtype=np.int64)


def cut_utilization(s, W, omega, C: float) -> float:
    """Least worst-case utilization for fixed servers, by enumerating station subsets.

    Routing ``w`` into capacities ``beta * C * s`` on the bipartite neighborhood
    graph is feasible iff every subset ``T`` of stations satisfies
    ``w(T) <= beta * C * s(N(T))`` (Hall / max-flow min-cut), so the answer is
    the largest ratio ``w(T) / (C s(N(T)))`` over patterns and subsets.
    """
    s = np.asarray(s, dtype=float)
    W = np.atleast_2d(np.asarray(W, dtype=float))
    M = W.shape[1]
    best = 0.0
    for r in range(1, M + 1):
        for T in itertools.combinations(range(M), r):
            reach = set().union(*(omega[m] for m in T))
            cap = C * s[list(reach)].sum()
            demand = W[:, list(T)].sum(axis=1).max()
            if demand <= 0:
                continue
            if cap <= 0:
                return float("inf")
            best = max(best, demand / cap)
    return best


def pool_factor(s, W, omega) -> float:
    W = np.atleast_2d(np.asarray(W, dtype=float))
    wmax = W.max(axis=0)
    vals = [sum(s[n] for n in omega[m]) / wmax[m] for m in range(W.shape[1]) if wmax[m] > 0]
    return min(vals) if vals else float("inf")


def maxflow_rejection(w, s, C: float, omega) -> float:
    """Minimum rejected workload = total workload minus the max transport flow."""
    G = nx.DiGraph()
    M = len(w)
    for m in range(M):
        if w[m] > 0:
            G.add_edge("src", ("L", m), capacity=float(w[m]))
        for n in omega[m]:
            G.add_edge(("L", m), ("R", n))  # uncapacitated
        if s[m] > 0:
            G.add_edge(("R", m), "snk", capacity=float(C * s[m]))
    if "src" not in G or "snk" not in G:
        return float(np.sum(w))
    value, _ = nx.maximum_flow(G, "src", "snk")
    return float(np.sum(w)) - value


def lp_by_vertices(c, A_ub=None, b_ub=None, A_eq=None, b_eq=None, sense="min", tol=1e-9):
    """Optimum of ``c @ x`` over ``x >= 0`` and the given rows by enumerating vertices.

    Returns ``(value, x)``, or ``(None, None)`` if no vertex is feasible.
    Only meant for a handful of variables; assumes the optimum is attained at a
    vertex (bounded problem).
    """
    c = np.asarray(c, dtype=float)
    n = c.size
    rows, rhs, is_eq = [], [], []
    for A, b, eq in ((A_ub, b_ub, False), (A_eq, b_eq, True)):
        if A is not None:
            for a, v in zip(np.atleast_2d(A), np.atleast_1d(b)):
                rows.append(np.asarray(a, dtype=float))
                rhs.append(float(v))
                is_eq.append(eq)
    for i in range(n):  # x_i >= 0 written as -x_i <= 0
        e = np.zeros(n)
        e[i] = -1.0
        rows.append(e)
        rhs.append(0.0)
        is_eq.append(False)
    rows, rhs, is_eq = np.array(rows), np.array(rhs), np.array(is_eq)
    eq_idx = np.flatnonzero(is_eq)
    ineq_idx = np.flatnonzero(~is_eq)
    best, arg = None, None
    need = n - eq_idx.size
    if need < 0:
        return None, None
    for extra in itertools.combinations(ineq_idx, need):
        act = np.concatenate([eq_idx, np.array(extra, dtype=np.int64)])
        A = rows[act]
        if abs(np.linalg.det(A)) < 1e-12:
            continue
        x = np.linalg.solve(A, rhs[act])
        lhs = rows @ x
        if (lhs[~is_eq] > rhs[~is_eq] + tol).any() or (np.abs(lhs[is_eq] - rhs[is_eq]) > tol).any():
            continue
        val = float(c @ x)
        if best is None or (val < best - 1e-12 if sense == "min" else val > best + 1e-12):
            best, arg = val, x
    return best, arg


def brute_force_circulation(graph):
    """Cheapest integral circulation by trying every flow vector within the bounds."""
    best, best_flow = None, None
    ranges = [range(lo, hi + 1) for lo, hi in zip(graph.lower, graph.upper)]
    for flow in itertools.product(*ranges):
        f = np.array(flow, dtype=np.int64)
        net = np.zeros(graph.n_nodes, dtype=np.int64)
        np.add.at(net, graph.head, f)
        np.subtract.at(net, graph.tail, f)
        if net.any():
            continue
        cost = float(graph.cost @ f)
        if best is None or cost < best - 1e-12:
            best, best_flow = cost, f
    return best, best_flow


def random_omega(rng, M: int, p: float = 0.5):
    """Symmetric random neighborhoods that always contain the station itself."""
    adj = rng.random((M, M)) < p
    adj = adj | adj.T | np.eye(M, dtype=bool)
    return [sorted(np.flatnonzero(adj[m]).tolist()) for m in range(M)]
