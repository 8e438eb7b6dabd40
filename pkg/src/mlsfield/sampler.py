"""Query-point generation and fixed-size neighborhood assembly.

Training never touches the raw cloud directly: it sees a precomputed set of
query points (Gaussian samples around each input point, spread matched to
the local sampling density) and, for each query, the points inside a fixed
radius, padded or downsampled to a fixed count so batches are rectangular.
Queries whose ball is empty are invalid and excluded up front.  Everything
is seeded; identical seeds give bit-identical arrays.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError
from .geometry import PointCloud
from .imls import NeighborSet, sigma_imls_for
from .neighbors import NeighborIndex

#: Noise presets mapping to (radius_fraction, target_neighbor_count):
#: wider gathering suppresses stronger noise at the cost of detail.
NOISE_PRESETS = {
    "clean": (0.01, 50),
    "medium": (0.03, 100),
    "heavy": (0.1, 200),
}


def resolve_noise_preset(name: str) -> tuple[float, int]:
    try:
        return NOISE_PRESETS[name]
    except KeyError:
        raise ConfigurationError(
            f"unknown noise preset {name!r}; choose from {sorted(NOISE_PRESETS)}"
        ) from None


@dataclass(frozen=True)
class SamplerConfig:
    queries_per_point: int = 25
    std_nn_rank: int = 50
    seed: int = 0
    noise_preset: str | None = None

    def __post_init__(self):
        if self.queries_per_point < 1:
            raise ConfigurationError("queries_per_point must be >= 1")
        if self.std_nn_rank < 1:
            raise ConfigurationError("std_nn_rank must be >= 1")
        if self.seed < 0:
            raise ConfigurationError("seed must be a non-negative integer")
        if self.noise_preset is not None:
            resolve_noise_preset(self.noise_preset)


@dataclass
class QueryNeighborhood:
    """One query point plus its neighbor data (normals filled per step)."""

    query: np.ndarray             # (d,)
    neighbors: NeighborSet
    source_index: int             # cloud point the query was drawn around (-1 unknown)
    neighbor_indices: np.ndarray  # (K,) int64 into the cloud; -1 on padding rows


@dataclass
class NeighborhoodBatch:
    """All valid neighborhoods stacked into rectangular arrays.

    ``invalid_count`` records how many generated queries had empty balls
    and were dropped.
    """

    queries: np.ndarray           # (m, d)
    positions: np.ndarray         # (m, K, d)
    mask: np.ndarray              # (m, K) bool
    sigma: np.ndarray             # (m,)
    neighbor_indices: np.ndarray  # (m, K) int64, -1 on padding
    source_indices: np.ndarray    # (m,) int64
    invalid_count: int

    def __len__(self) -> int:
        return self.queries.shape[0]

    def neighborhood(self, i: int) -> QueryNeighborhood:
        """Materialize row ``i`` as a standalone object (test convenience)."""
        return QueryNeighborhood(
            query=self.queries[i],
            neighbors=NeighborSet(positions=self.positions[i], mask=self.mask[i],
                                  sigma_imls=float(self.sigma[i])),
            source_index=int(self.source_indices[i]),
            neighbor_indices=self.neighbor_indices[i],
        )


# ---------------------------------------------------------------------------
# Query generation
# ---------------------------------------------------------------------------

def generate_queries(cloud: PointCloud, index: NeighborIndex,
                     config: SamplerConfig) -> np.ndarray:
    """Gaussian query samples around every cloud point.

    Each point contributes ``queries_per_point`` samples from an isotropic
    Gaussian centered on it, with standard deviation equal to the distance
    to its ``std_nn_rank``-th nearest neighbor (the point itself excluded).
    Deterministic given ``config.seed``.
    """
    n = len(cloud)
    rank = config.std_nn_rank
    if n < rank + 1:
        rank = max(n - 1, 0)
        warnings.warn(
            f"cloud has {n} points; capping std_nn_rank "
            f"{config.std_nn_rank} -> {rank}"
        )
    if rank == 0:
        stds = np.zeros(n)
    else:
        stds = index.knn_distances(cloud.points, k=rank, exclude_self=True)
    rng = np.random.default_rng(config.seed)
    qpp = config.queries_per_point
    centers = np.repeat(cloud.points, qpp, axis=0)
    spread = np.repeat(stds, qpp)[:, None]
    return centers + rng.standard_normal(centers.shape) * spread


def query_source_indices(n_points: int, queries_per_point: int) -> np.ndarray:
    """Cloud-point index each generated query row belongs to."""
    return np.repeat(np.arange(n_points, dtype=np.int64), queries_per_point)


# ---------------------------------------------------------------------------
# Neighborhood assembly
# ---------------------------------------------------------------------------

def _downsample(member_count: int, target: int, seed, row: int) -> np.ndarray:
    """Seeded uniform choice without replacement; keeps (distance, index)
    candidate order for the survivors."""
    rng = np.random.default_rng(np.random.SeedSequence((seed, row)))
    return np.sort(rng.choice(member_count, size=target, replace=False))


def assemble_neighborhood(q, cloud: PointCloud, index: NeighborIndex,
                          radius: float, target_count: int, seed: int,
                          floor_fraction: float = 1e-4,
                          _row: int = 0) -> QueryNeighborhood | None:
    """Fixed-size neighborhood of one query; ``None`` marks an invalid query.

    Ball members arrive sorted by (distance, index); fewer than
    ``target_count`` members are padded with mask-false rows, more are
    downsampled uniformly without replacement (seeded).  The theta bandwidth
    is computed on the retained mask-true set — after downsampling, before
    padding — and clamped below at ``floor_fraction`` times the cloud
    diagonal.
    """
    if radius <= 0:
        raise ValueError("radius must be > 0")
    q = np.asarray(q, dtype=np.float64).reshape(-1)
    idx, _dist = index.radius_query(q, radius)
    if idx.size == 0:
        return None
    if idx.size > target_count:
        idx = idx[_downsample(idx.size, target_count, seed, _row)]
    return _build_neighborhood(q, cloud, idx, target_count, floor_fraction,
                               source_index=-1)


def _build_neighborhood(q, cloud, idx, target_count, floor_fraction,
                        source_index) -> QueryNeighborhood:
    m = idx.size
    d = cloud.dim
    positions = np.zeros((target_count, d))
    positions[:m] = cloud.points[idx]
    mask = np.zeros(target_count, dtype=bool)
    mask[:m] = True
    neighbor_indices = np.full(target_count, -1, dtype=np.int64)
    neighbor_indices[:m] = idx
    sigma = sigma_imls_for(cloud.points[idx], cloud.diagonal, floor_fraction)
    return QueryNeighborhood(
        query=q,
        neighbors=NeighborSet(positions=positions, mask=mask, sigma_imls=sigma),
        source_index=source_index,
        neighbor_indices=neighbor_indices,
    )


def assemble_neighborhoods(queries: np.ndarray, cloud: PointCloud,
                           index: NeighborIndex, radius: float,
                           target_count: int, seed: int,
                           floor_fraction: float = 1e-4,
                           source_indices: np.ndarray | None = None,
                           knn_neighbors: int | None = None,
                           ) -> NeighborhoodBatch:
    """Assemble every query's neighborhood into one rectangular batch.

    With ``knn_neighbors=k`` set, radius gathering is replaced by fixed-k
    nearest-neighbor gathering (every query is then valid and no padding or
    downsampling occurs); ``target_count`` is ignored in that mode.

    Per-row downsampling seeds derive from ``(seed, absolute query row)``,
    so results are independent of how many other queries were invalid.
    """
    queries = np.asarray(queries, dtype=np.float64)
    n_q = queries.shape[0]
    d = cloud.dim
    d_p = cloud.diagonal
    if source_indices is None:
        source_indices = np.full(n_q, -1, dtype=np.int64)

    if knn_neighbors is not None:
        k = int(knn_neighbors)
        if k > len(cloud):
            warnings.warn(f"knn_neighbors {k} exceeds cloud size; capping to {len(cloud)}")
            k = len(cloud)
        nb_idx, _ = index.knn_query_bulk(queries, k)
        positions = cloud.points[nb_idx]
        mask = np.ones((n_q, k), dtype=bool)
        lo = positions.min(axis=1)
        hi = positions.max(axis=1)
        diag = np.linalg.norm(hi - lo, axis=1)
        sigma = np.maximum(np.sqrt(diag / k), floor_fraction * d_p)
        return NeighborhoodBatch(
            queries=queries, positions=positions, mask=mask, sigma=sigma,
            neighbor_indices=nb_idx, source_indices=source_indices,
            invalid_count=0,
        )

    if radius <= 0:
        raise ValueError("radius must be > 0")
    members = index.radius_query_many(queries, radius)
    keep_rows = []
    kept_indices = []
    for row, (idx, _dist) in enumerate(members):
        if idx.size == 0:
            continue
        if idx.size > target_count:
            idx = idx[_downsample(idx.size, target_count, seed, row)]
        keep_rows.append(row)
        kept_indices.append(idx)

    m = len(keep_rows)
    positions = np.zeros((m, target_count, d))
    mask = np.zeros((m, target_count), dtype=bool)
    neighbor_indices = np.full((m, target_count), -1, dtype=np.int64)
    sigma = np.empty(m)
    for out_row, idx in enumerate(kept_indices):
        c = idx.size
        positions[out_row, :c] = cloud.points[idx]
        mask[out_row, :c] = True
        neighbor_indices[out_row, :c] = idx
        sigma[out_row] = sigma_imls_for(cloud.points[idx], d_p, floor_fraction)

    keep_rows = np.asarray(keep_rows, dtype=np.int64)
    return NeighborhoodBatch(
        queries=queries[keep_rows], positions=positions, mask=mask, sigma=sigma,
        neighbor_indices=neighbor_indices,
        source_indices=np.asarray(source_indices)[keep_rows],
        invalid_count=n_q - m,
    )


# ---------------------------------------------------------------------------
# Batching
# ---------------------------------------------------------------------------

def make_batches(valid_count: int, batch_size: int, seed: int,
                 epoch: int) -> list[np.ndarray]:
    """Chunk a seeded per-epoch permutation of range(valid_count).

    The permutation differs per epoch but is fully determined by
    ``(seed, epoch)``.  The last chunk may be smaller.
    """
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    if valid_count < 1:
        raise ConfigurationError(
            "no valid query neighborhoods: every query ball was empty "
            "(the gathering radius is too small for this cloud)"
        )
    rng = np.random.default_rng(np.random.SeedSequence((seed, epoch)))
    perm = rng.permutation(valid_count)
    return [perm[i:i + batch_size] for i in range(0, valid_count, batch_size)]
