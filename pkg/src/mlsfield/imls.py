"""Moving-least-squares field values from point neighborhoods.

The field value at a query q is a weighted average of plane distances
``<q - p_i, n_i>`` over the neighbors p_i of q.  Weights combine a Gaussian
distance falloff ``theta`` (bandwidth per query, derived from the local
neighborhood extent) with a gradient-coherence falloff ``psi`` that
discounts neighbors whose field gradient disagrees with the query's —
that is what keeps thin plates and nearby sheets from bleeding into each
other.  Normals come either from data (oracle path, used by tests) or from
the learned field's normalized gradients (production path).

Values computed here are regression targets: they are plain floats and no
derivative information flows out of this module.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import field as mlp
from .errors import ConfigurationError, DegenerateWeightsError

_UNIT_NORMAL_TOL = 1e-9


@dataclass(frozen=True)
class ImlsConfig:
    """Weighting parameters.

    ``radius_fraction`` scales the cloud's bounding-box diagonal into the
    neighbor-gathering radius; ``sigma_imls_floor`` is likewise a fraction
    of the diagonal and bounds the per-query Gaussian bandwidth away from
    zero.  ``use_theta`` / ``use_psi`` switch the two weight factors for
    ablations (a disabled factor contributes exactly 1 per neighbor).
    """

    radius_fraction: float = 0.01
    target_neighbor_count: int = 50
    sigma_coherence: float = 0.3
    sigma_imls_floor: float = 1e-4
    use_theta: bool = True
    use_psi: bool = True

    def __post_init__(self):
        if not self.radius_fraction > 0:
            raise ConfigurationError("radius_fraction must be > 0")
        if self.target_neighbor_count < 1:
            raise ConfigurationError("target_neighbor_count must be >= 1")
        if not self.sigma_coherence > 0:
            raise ConfigurationError("sigma_coherence must be > 0")
        if not self.sigma_imls_floor >= 0:
            raise ConfigurationError("sigma_imls_floor must be >= 0")


@dataclass
class NeighborSet:
    """Fixed-size neighbor arrays for one query; mask-false rows are padding.

    Padding rows carry weight exactly zero and can never alter the value.
    ``normals`` may be ``None`` while a neighborhood is in storage; the
    trainer fills them from the current field right before evaluation.
    """

    positions: np.ndarray          # (K, d)
    mask: np.ndarray               # (K,) bool
    sigma_imls: float
    normals: np.ndarray | None = None   # (K, d), unit rows where mask is true

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=np.float64)
        self.mask = np.asarray(self.mask, dtype=bool)
        if self.positions.ndim != 2 or self.mask.shape != (self.positions.shape[0],):
            raise ValueError("positions must be (K, d) with a (K,) mask")
        if not self.mask.any():
            raise ValueError("neighbor set needs at least one mask-true entry")
        if not self.sigma_imls > 0:
            raise ValueError("sigma_imls must be > 0")
        if self.normals is not None:
            self.normals = np.asarray(self.normals, dtype=np.float64)
            if self.normals.shape != self.positions.shape:
                raise ValueError("normals shape must match positions")
            lengths = np.linalg.norm(self.normals[self.mask], axis=1)
            if np.any(np.abs(lengths - 1.0) > _UNIT_NORMAL_TOL):
                raise ValueError("mask-true normals must be unit length")


# ---------------------------------------------------------------------------
# Weight pieces
# ---------------------------------------------------------------------------

def theta(distance, sigma_imls) -> np.ndarray:
    """Gaussian distance falloff exp(-distance^2 / sigma^2)."""
    distance = np.asarray(distance, dtype=np.float64)
    return np.exp(-np.square(distance) / np.square(sigma_imls))


def sigma_imls_for(neighbors: np.ndarray, d_p: float, floor_fraction: float) -> float:
    """Per-query bandwidth: sqrt(bbox diagonal / count) over the mask-true
    neighbors, clamped below at ``floor_fraction * d_p``."""
    pts = np.asarray(neighbors, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[0] < 1:
        raise ValueError("need a non-empty (m, d) neighbor array")
    diag = float(np.linalg.norm(pts.max(axis=0) - pts.min(axis=0)))
    return max(np.sqrt(diag / pts.shape[0]), floor_fraction * d_p)


def psi(grad_q, grad_p, sigma_coherence: float) -> np.ndarray:
    """Coherence falloff exp(-|grad_q - grad_p|^2 / sigma_coherence^2).

    Both arguments are unit vectors (or arrays of them, broadcastable);
    the result lies in (0, 1].
    """
    gq = np.asarray(grad_q, dtype=np.float64)
    gp = np.asarray(grad_p, dtype=np.float64)
    d2 = np.sum(np.square(gq - gp), axis=-1)
    return np.exp(-d2 / sigma_coherence ** 2)


# ---------------------------------------------------------------------------
# Field values (canonical per-query path)
# ---------------------------------------------------------------------------

def _weighted_plane_distance(q, positions, normals, sigma_imls, config,
                             grad_q=None) -> float:
    """Shared core: compressed (mask already applied) weighted average."""
    diff = q[None, :] - positions
    dist = np.linalg.norm(diff, axis=1)
    plane = np.einsum("kd,kd->k", diff, normals)
    if config.use_theta:
        w = theta(dist, sigma_imls)
    else:
        w = np.ones_like(dist)
    if config.use_psi:
        if grad_q is None:
            raise ValueError("psi weighting needs the query gradient")
        w = w * psi(grad_q, normals, config.sigma_coherence)
    total = w.sum()
    if total == 0.0:
        raise DegenerateWeightsError(
            "all neighbor weights underflowed to zero "
            f"(min distance {dist.min():.3g}, sigma {sigma_imls:.3g})"
        )
    return float((w / total) @ plane)


def imls_value_oracle_normals(q, neighbors: NeighborSet,
                              config: ImlsConfig | None = None) -> float:
    """Distance-weighted average of plane distances with given normals.

    Uses theta weights only (no coherence term); ``neighbors.normals`` must
    be populated.  Raises :class:`DegenerateWeightsError` when every weight
    underflows — callers fall back to the nearest neighbor's plane distance.
    """
    if neighbors.normals is None:
        raise ValueError("oracle path needs normals on the neighbor set")
    if config is None:
        config = ImlsConfig()
    q = np.asarray(q, dtype=np.float64).reshape(-1)
    cfg = replace(config, use_psi=False)
    m = neighbors.mask
    return _weighted_plane_distance(q, neighbors.positions[m],
                                    neighbors.normals[m],
                                    neighbors.sigma_imls, cfg)


def imls_value_mlp_normals(q, neighbors: NeighborSet, field_handle,
                           config: ImlsConfig) -> float:
    """Field value with normals taken from the learned field's gradients.

    ``field_handle`` is either :class:`mlsfield.field.MlpParams` or any
    object exposing ``normalized_gradient(points) -> (units, flags)`` (test
    stubs inject analytic normals this way).  The result is a constant —
    no derivative escapes.
    """
    q = np.asarray(q, dtype=np.float64).reshape(-1)
    grad_at = _gradient_fn(field_handle)
    m = neighbors.mask
    positions = neighbors.positions[m]
    normals, _ = grad_at(positions)
    grad_q = None
    if config.use_psi:
        grad_q, _ = grad_at(q[None, :])
        grad_q = grad_q[0]
    return _weighted_plane_distance(q, positions, normals,
                                    neighbors.sigma_imls, config, grad_q)


def _gradient_fn(field_handle):
    if hasattr(field_handle, "normalized_gradient"):
        return field_handle.normalized_gradient
    if isinstance(field_handle, mlp.MlpParams):
        return lambda pts: mlp.normalized_gradient(field_handle, pts)
    raise TypeError(
        "field_handle must be MlpParams or expose normalized_gradient()"
    )


def nearest_plane_distance(q, positions, normals) -> float:
    """Fallback for fully-underflowed weights: the closest neighbor's
    plane distance (ties by array order, which is (distance, index) sorted
    upstream)."""
    q = np.asarray(q, dtype=np.float64).reshape(-1)
    diff = q[None, :] - np.asarray(positions, dtype=np.float64)
    k = int(np.argmin(np.linalg.norm(diff, axis=1)))
    return float(diff[k] @ np.asarray(normals, dtype=np.float64)[k])


# ---------------------------------------------------------------------------
# Batched path (training targets and grid evaluation)
# ---------------------------------------------------------------------------

def batched_values(query_points, positions, mask, sigma, normals,
                   config: ImlsConfig, grad_q=None):
    """Vectorized field values for many queries at once.

    Parameters
    ----------
    query_points : (B, d)
    positions    : (B, K, d) neighbor positions (padding rows arbitrary)
    mask         : (B, K) bool, padding false
    sigma        : (B,) per-query theta bandwidth
    normals      : (B, K, d) unit normals for mask-true rows
    grad_q       : (B, d) unit query gradients (required when use_psi)

    Returns
    -------
    values : (B,) float64 — weighted plane-distance averages
    degenerate : (B,) bool — rows whose weights all underflowed (their
        value entry is 0 and must not be used)

    Equivalent to the per-query path within 1e-12 (reduction order over a
    padded block differs from the compressed sum only in rounding).
    """
    q = np.asarray(query_points, dtype=np.float64)
    diff = q[:, None, :] - positions                      # (B, K, d)
    plane = np.einsum("bkd,bkd->bk", diff, normals)
    if config.use_theta:
        dist2 = np.einsum("bkd,bkd->bk", diff, diff)
        w = np.exp(-dist2 / np.square(sigma)[:, None])
    else:
        w = np.ones(mask.shape, dtype=np.float64)
    if config.use_psi:
        if grad_q is None:
            raise ValueError("psi weighting needs query gradients")
        gd = grad_q[:, None, :] - normals
        w = w * np.exp(-np.einsum("bkd,bkd->bk", gd, gd)
                       / config.sigma_coherence ** 2)
    w = np.where(mask, w, 0.0)
    total = w.sum(axis=1)
    degenerate = total == 0.0
    safe = np.where(degenerate, 1.0, total)
    values = np.einsum("bk,bk->b", w / safe[:, None], plane)
    values[degenerate] = 0.0
    return values, degenerate
