"""Exact nearest-neighbor queries over a fixed point set.

Thin wrapper around :class:`scipy.spatial.cKDTree` that pins down the
semantics the rest of the package relies on:

* radius queries use the *closed* ball (distance <= r),
* results are sorted by (distance, point index), so ties are deterministic,
* k-nearest-neighbor queries cap k at the point count and say so.

Queries are exact (the tree only accelerates candidate search); tests check
them against a brute-force double loop.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np
from scipy.spatial import cKDTree

from .errors import EmptyInputError


class KnnResult(NamedTuple):
    indices: np.ndarray    # (k,) int64, sorted by (distance, index)
    distances: np.ndarray  # (k,) float64
    capped: bool           # True when the requested k exceeded the point count


class NeighborIndex:
    """Spatial index over an ``(n, d)`` point array (d in {2, 3})."""

    def __init__(self, points: np.ndarray):
        points = np.ascontiguousarray(points, dtype=np.float64)
        if points.ndim != 2 or points.shape[1] not in (2, 3):
            raise ValueError(f"points must be (n, 2) or (n, 3), got {points.shape}")
        if points.shape[0] < 1:
            raise EmptyInputError("cannot index an empty point set")
        if not np.all(np.isfinite(points)):
            raise ValueError("points contain non-finite values")
        self.points = points
        self._tree = cKDTree(points)

    def __len__(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    # -- radius queries ----------------------------------------------------

    def radius_query(self, query: np.ndarray, radius: float):
        """All points with distance <= radius, sorted by (distance, index).

        Returns ``(indices, distances)``; both empty when the ball is empty.
        """
        if not (np.isfinite(radius) and radius >= 0.0):
            raise ValueError(f"radius must be finite and >= 0, got {radius}")
        query = self._check_query(query)
        idx = np.asarray(self._tree.query_ball_point(query, radius), dtype=np.int64)
        if idx.size == 0:
            return idx, np.empty(0, dtype=np.float64)
        dist = np.linalg.norm(self.points[idx] - query, axis=1)
        keep = dist <= radius
        idx, dist = idx[keep], dist[keep]
        order = np.lexsort((idx, dist))
        return idx[order], dist[order]

    def radius_query_many(self, queries: np.ndarray, radius: float) -> list:
        """Vectorized :meth:`radius_query`; returns one (indices, distances)
        pair per query row, each sorted by (distance, index)."""
        if not (np.isfinite(radius) and radius >= 0.0):
            raise ValueError(f"radius must be finite and >= 0, got {radius}")
        queries = self._check_queries(queries)
        raw = self._tree.query_ball_point(queries, radius)
        out = []
        for q, members in zip(queries, raw):
            idx = np.asarray(members, dtype=np.int64)
            if idx.size == 0:
                out.append((idx, np.empty(0, dtype=np.float64)))
                continue
            dist = np.linalg.norm(self.points[idx] - q, axis=1)
            keep = dist <= radius
            idx, dist = idx[keep], dist[keep]
            order = np.lexsort((idx, dist))
            out.append((idx[order], dist[order]))
        return out

    def ball_counts(self, queries: np.ndarray, radius: float) -> np.ndarray:
        """Number of points in the closed ball around each query row."""
        queries = self._check_queries(queries)
        return np.asarray(
            self._tree.query_ball_point(queries, radius, return_length=True),
            dtype=np.int64,
        )

    # -- k-nearest-neighbor queries -----------------------------------------

    def knn_query(self, query: np.ndarray, k: int) -> KnnResult:
        """The k nearest points, ties broken toward the lower point index.

        Asking for more neighbors than exist returns all of them with
        ``capped=True``.
        """
        if k < 1:
            raise ValueError(f"k must be >= 1, got {k}")
        query = self._check_query(query)
        capped = k > len(self)
        k_eff = min(k, len(self))
        dist, _ = self._tree.query(query, k=k_eff)
        dist = np.atleast_1d(dist)
        kth = dist[-1]
        # Re-collect everything within the kth distance so that ties at the
        # boundary are resolved by index rather than by tree traversal order.
        cand = np.asarray(
            self._tree.query_ball_point(query, kth * (1.0 + 1e-12) + 1e-300),
            dtype=np.int64,
        )
        cdist = np.linalg.norm(self.points[cand] - query, axis=1)
        order = np.lexsort((cand, cdist))
        cand, cdist = cand[order][:k_eff], cdist[order][:k_eff]
        return KnnResult(cand, cdist, capped)

    def knn_distances(self, queries: np.ndarray, k: int,
                      exclude_self: bool = False) -> np.ndarray:
        """Distance to the k-th nearest neighbor for each query row.

        With ``exclude_self=True`` the queries are assumed to be the indexed
        points themselves, and each point's zero self-distance is skipped.
        Distances are unique regardless of index tie-breaking, so this fast
        path may call the tree directly.
        """
        if k < 1:
            raise ValueError(f"k must be >= 1, got {k}")
        queries = self._check_queries(queries)
        rank = k + 1 if exclude_self else k
        if rank > len(self):
            raise ValueError(
                f"need rank {rank} neighbors but only {len(self)} points exist"
            )
        dist, _ = self._tree.query(queries, k=rank)
        dist = np.atleast_2d(dist)
        return dist[:, rank - 1]

    def knn_query_bulk(self, queries: np.ndarray, k: int
                       ) -> tuple[np.ndarray, np.ndarray]:
        """k nearest neighbors for every query row: (indices, distances),
        each (m, k), sorted by distance.  Unlike :meth:`knn_query`, ties at
        equal distance keep the tree's traversal order (distances are still
        exact and deterministic per build)."""
        if k < 1:
            raise ValueError(f"k must be >= 1, got {k}")
        if k > len(self):
            raise ValueError(f"k={k} exceeds point count {len(self)}")
        queries = self._check_queries(queries)
        dist, idx = self._tree.query(queries, k=k)
        dist = dist.reshape(len(queries), k)
        idx = idx.reshape(len(queries), k)
        return idx.astype(np.int64), dist

    def nearest(self, queries: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Nearest indexed point for each query row: (indices, distances)."""
        queries = self._check_queries(queries)
        dist, idx = self._tree.query(queries, k=1)
        return np.atleast_1d(idx).astype(np.int64), np.atleast_1d(dist)

    # -- validation ----------------------------------------------------------

    def _check_query(self, query: np.ndarray) -> np.ndarray:
        query = np.asarray(query, dtype=np.float64).reshape(-1)
        if query.shape[0] != self.dim:
            raise ValueError(f"query has dim {query.shape[0]}, index has {self.dim}")
        if not np.all(np.isfinite(query)):
            raise ValueError("query contains non-finite values")
        return query

    def _check_queries(self, queries: np.ndarray) -> np.ndarray:
        queries = np.asarray(queries, dtype=np.float64)
        if queries.ndim != 2 or queries.shape[1] != self.dim:
            raise ValueError(
                f"queries must be (m, {self.dim}), got shape {queries.shape}"
            )
        if not np.all(np.isfinite(queries)):
            raise ValueError("queries contain non-finite values")
        return queries
