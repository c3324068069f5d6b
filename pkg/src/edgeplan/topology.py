"""Serving neighborhoods and the clustering/zoning used by baseline policies."""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.spatial.distance import cdist

from ._validation import check_random_state_seed
from .traces import StationSet

__all__ = [
    "KMEANS_MAX_ITER",
    "Clustering",
    "Neighborhood",
    "build_neighborhoods",
    "grid_zones",
    "kmeans_clusters",
]

KMEANS_MAX_ITER = 100


def _coords(stations) -> np.ndarray:
    return stations.xy if isinstance(stations, StationSet) else np.asarray(stations, dtype=float)


class Neighborhood:
    """``omega[m]``: sorted indices of stations whose servers may serve station ``m``."""

    def __init__(self, omega, rule=None):
        sets = [np.unique(np.asarray(o, dtype=np.int64)) for o in omega]
        M = len(sets)
        if M == 0:
            raise ValueError("neighborhood needs at least one station")
        for m, o in enumerate(sets):
            if o.size == 0 or o.min() < 0 or o.max() >= M:
                raise ValueError(f"omega[{m}] has indices outside 0..{M - 1}")
            if m not in o:
                raise ValueError(f"omega[{m}] must contain station {m} itself")
        self.omega = sets
        self.rule = dict(rule) if rule else {"kind": "explicit"}

    def __len__(self):
        return len(self.omega)

    def __eq__(self, other):
        return isinstance(other, Neighborhood) and len(self) == len(other) and all(
            np.array_equal(a, b) for a, b in zip(self.omega, other.omega)
        )

    def __repr__(self):
        return f"Neighborhood(M={len(self)}, rule={self.rule}, mean_size={self.sizes.mean():.2f})"

    @cached_property
    def pairs(self) -> tuple[np.ndarray, np.ndarray]:
        """Parallel ``(m, n)`` arrays over all allowed routes, ordered by ``m`` then ``n``."""
        src = np.concatenate([np.full(o.size, m, dtype=np.int64) for m, o in enumerate(self.omega)])
        dst = np.concatenate(self.omega)
        return src, dst

    @cached_property
    def sizes(self) -> np.ndarray:
        return np.array([o.size for o in self.omega])

    def pool(self, s) -> np.ndarray:
        """Resource pool of every station: ``sum(s[n] for n in omega[m])``."""
        s = np.asarray(s, dtype=float)
        return np.array([s[o].sum() for o in self.omega])

    def to_json(self) -> dict:
        return {"rule": self.rule, "omega": [o.tolist() for o in self.omega]}

    @classmethod
    def from_json(cls, obj: dict) -> "Neighborhood":
        return cls(obj["omega"], obj.get("rule"))

    @classmethod
    def full(cls, n_stations: int) -> "Neighborhood":
        everyone = np.arange(n_stations)
        return cls([everyone] * n_stations, {"kind": "full"})

    @classmethod
    def isolated(cls, n_stations: int) -> "Neighborhood":
        return cls([[m] for m in range(n_stations)], {"kind": "isolated"})


def build_neighborhoods(stations, radius=None, k_nearest=None) -> Neighborhood:
    """Neighborhoods by Euclidean radius or by k nearest stations (self included).

    Exactly one of ``radius`` and ``k_nearest`` must be given. With
    ``k_nearest``, distance ties go to the lower station index.
    """
    xy = _coords(stations)
    M = xy.shape[0]
    if (radius is None) == (k_nearest is None):
        raise ValueError("give exactly one of radius or k_nearest")
    d = cdist(xy, xy)
    if radius is not None:
        if not radius > 0:
            raise ValueError("radius must be positive")
        omega = [np.flatnonzero(row <= radius) for row in d]
        return Neighborhood(omega, {"kind": "radius", "radius": float(radius)})
    k = int(k_nearest)
    if not 1 <= k <= M:
        raise ValueError(f"k_nearest must be in 1..{M}, got {k}")
    omega = []
    for m in range(M):
        row = d[m].copy()
        row[m] = -1.0  # self first
        order = np.lexsort((np.arange(M), row))
        omega.append(np.sort(order[:k]))
    return Neighborhood(omega, {"kind": "k_nearest", "k": k})


@dataclass
class Clustering:
    k: int
    assignment: np.ndarray
    centroids: np.ndarray
    centroid_station: np.ndarray
    inertia_history: list = field(default_factory=list, repr=False)

    @property
    def sizes(self) -> np.ndarray:
        return np.bincount(self.assignment, minlength=self.k)


def _inertia(xy, centers, labels):
    return float(((xy - centers[labels]) ** 2).sum())


def _nearest_member(xy, labels, centers):
    out = np.empty(centers.shape[0], dtype=np.int64)
    for c in range(centers.shape[0]):
        members = np.flatnonzero(labels == c)
        if members.size == 0:  # only possible with duplicate coordinates
            members = np.arange(xy.shape[0])
        d = ((xy[members] - centers[c]) ** 2).sum(axis=1)
        out[c] = members[np.argmin(d)]
    return out


def kmeans_clusters(stations, k: int, seed=0, max_iter: int = KMEANS_MAX_ITER) -> Clustering:
    """Lloyd's algorithm from k-means++ seeding.

    Stops at an exact assignment fixpoint or after ``max_iter`` rounds. A
    cluster that empties is reseeded at the point farthest from its center.
    """
    xy = _coords(stations)
    M = xy.shape[0]
    k = int(k)
    if not 1 <= k <= M:
        raise ValueError(f"k must be in 1..{M}, got {k}")
    rng = check_random_state_seed(seed)

    centers = np.empty((k, 2))
    centers[0] = xy[rng.integers(M)]
    closest = ((xy - centers[0]) ** 2).sum(axis=1)
    for c in range(1, k):
        total = closest.sum()
        if total <= 0:
            # fewer distinct points than clusters: take any unused point
            idx = int(rng.integers(M))
        else:
            idx = int(rng.choice(M, p=closest / total))
        centers[c] = xy[idx]
        closest = np.minimum(closest, ((xy - centers[c]) ** 2).sum(axis=1))

    labels = None
    history = []
    for _ in range(max_iter):
        d = cdist(xy, centers, "sqeuclidean")
        new = np.argmin(d, axis=1)
        empty = np.flatnonzero(np.bincount(new, minlength=k) == 0)
        if empty.size:
            far = np.argsort(-d[np.arange(M), new], kind="stable")
            centers[empty] = xy[far[: empty.size]]
            d = cdist(xy, centers, "sqeuclidean")
            new = np.argmin(d, axis=1)
        history.append(_inertia(xy, centers, new))
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
        centers = np.vstack([xy[labels == c].mean(axis=0) if (labels == c).any() else centers[c] for c in range(k)])
        history.append(_inertia(xy, centers, labels))
    return Clustering(k, labels, centers, _nearest_member(xy, labels, centers), history)


def grid_zones(stations, zone_size: float) -> Clustering:
    """Group stations into square zones of side ``zone_size`` (nonempty zones only).

    Each zone is represented by the member station nearest to the zone's
    mean station position.
    """
    if not zone_size > 0:
        raise ValueError("zone_size must be positive")
    xy = _coords(stations)
    cell = np.floor((xy - xy.min(axis=0)) / zone_size).astype(np.int64)
    _, labels = np.unique(cell, axis=0, return_inverse=True)
    labels = labels.ravel()
    k = int(labels.max()) + 1
    centers = np.vstack([xy[labels == c].mean(axis=0) for c in range(k)])
    return Clustering(k, labels, centers, _nearest_member(xy, labels, centers))
