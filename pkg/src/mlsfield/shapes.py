"""Built-in analytic test shapes: boundary samplers and exact SDFs.

Used by the 2-D demo, the ablation driver, and the test suite.  Each shape
comes with a uniform boundary sampler and an exact signed distance
function, so reconstructions can be scored without any reference files.

Shapes (all centered at the origin):

* ``circle`` — radius 1 (2-D)
* ``square`` — axis-aligned, half-extent 1 (2-D)
* ``L``      — L-shaped hexagon, unit arm width (2-D)
* ``sphere`` — radius 1 (3-D)
* ``cube``   — axis-aligned, half-extent 1 (3-D)
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigurationError
from .geometry import PointCloud

SHAPES_2D = ("circle", "square", "L")
SHAPES_3D = ("sphere", "cube")

# L-shaped polygon, counter-clockwise: the [-1,1]^2 square with the
# upper-right unit quadrant removed.
_L_VERTICES = np.array([
    [-1.0, -1.0], [1.0, -1.0], [1.0, 0.0],
    [0.0, 0.0], [0.0, 1.0], [-1.0, 1.0],
])


def shape_dim(name: str) -> int:
    if name in SHAPES_2D:
        return 2
    if name in SHAPES_3D:
        return 3
    raise ConfigurationError(
        f"unknown shape {name!r}; choose from {SHAPES_2D + SHAPES_3D}"
    )


# ---------------------------------------------------------------------------
# Boundary samplers
# ---------------------------------------------------------------------------

def sample_boundary(name: str, count: int, seed: int = 0) -> np.ndarray:
    """Uniform random samples on the shape's boundary, (count, dim)."""
    if count < 1:
        raise ConfigurationError("sample count must be >= 1")
    rng = np.random.default_rng(seed)
    if name == "circle":
        angles = rng.random(count) * 2.0 * np.pi
        return np.column_stack([np.cos(angles), np.sin(angles)])
    if name == "square":
        return _sample_polygon(_square_vertices(), count, rng)
    if name == "L":
        return _sample_polygon(_L_VERTICES, count, rng)
    if name == "sphere":
        vecs = rng.normal(size=(count, 3))
        norms = np.linalg.norm(vecs, axis=1, keepdims=True)
        return vecs / np.maximum(norms, 1e-30)
    if name == "cube":
        face = rng.integers(0, 6, size=count)
        uv = rng.random((count, 2)) * 2.0 - 1.0
        pts = np.empty((count, 3))
        axis = face // 2
        sign = np.where(face % 2 == 0, -1.0, 1.0)
        for a in range(3):
            rows = axis == a
            others = [b for b in range(3) if b != a]
            pts[rows, a] = sign[rows]
            pts[np.ix_(rows, others)] = uv[rows]
        return pts
    raise ConfigurationError(f"unknown shape {name!r}")


def _square_vertices() -> np.ndarray:
    return np.array([[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]])


def _sample_polygon(vertices: np.ndarray, count: int, rng) -> np.ndarray:
    starts = vertices
    ends = np.roll(vertices, -1, axis=0)
    lengths = np.linalg.norm(ends - starts, axis=1)
    cumulative = np.cumsum(lengths)
    u = rng.random(count) * cumulative[-1]
    edge = np.searchsorted(cumulative, u, side="right")
    edge = np.minimum(edge, len(lengths) - 1)
    prev = np.where(edge > 0, cumulative[edge - 1], 0.0)
    t = ((u - prev) / lengths[edge])[:, None]
    return starts[edge] * (1.0 - t) + ends[edge] * t


# ---------------------------------------------------------------------------
# Exact signed distance functions (negative inside)
# ---------------------------------------------------------------------------

def sdf_circle(points: np.ndarray, radius: float = 1.0) -> np.ndarray:
    return np.linalg.norm(np.asarray(points, dtype=np.float64), axis=1) - radius


def sdf_box(points: np.ndarray, half_extent: float = 1.0) -> np.ndarray:
    """Axis-aligned box SDF (works in 2-D and 3-D)."""
    q = np.abs(np.asarray(points, dtype=np.float64)) - half_extent
    outside = np.linalg.norm(np.maximum(q, 0.0), axis=1)
    inside = np.minimum(q.max(axis=1), 0.0)
    return outside + inside


def sdf_polygon(points: np.ndarray, vertices: np.ndarray) -> np.ndarray:
    """Signed distance to a simple polygon, negative inside (even-odd rule)."""
    p = np.asarray(points, dtype=np.float64)
    starts = vertices
    ends = np.roll(vertices, -1, axis=0)
    best = np.full(p.shape[0], np.inf)
    inside = np.zeros(p.shape[0], dtype=bool)
    for a, b in zip(starts, ends):
        ab = b - a
        t = np.clip(((p - a) @ ab) / (ab @ ab), 0.0, 1.0)
        best = np.minimum(best, np.linalg.norm(p - (a + t[:, None] * ab), axis=1))
        spans = (a[1] > p[:, 1]) != (b[1] > p[:, 1])
        x_cross = a[0] + (p[:, 1] - a[1]) * ab[0] / ab[1] if ab[1] != 0 else np.inf
        inside ^= spans & (p[:, 0] < x_cross)
    return np.where(inside, -best, best)


def analytic_sdf(name: str):
    """The shape's exact SDF as ``points -> values``."""
    if name in ("circle", "sphere"):
        return sdf_circle
    if name in ("square", "cube"):
        return sdf_box
    if name == "L":
        return lambda points: sdf_polygon(points, _L_VERTICES)
    raise ConfigurationError(f"unknown shape {name!r}")


# ---------------------------------------------------------------------------
# Test-cloud factory
# ---------------------------------------------------------------------------

def make_test_cloud(name: str, count: int, noise_fraction: float = 0.0,
                    seed: int = 0) -> tuple:
    """Noisy boundary samples of a built-in shape.

    Returns ``(cloud, clean_points)``.  Noise is isotropic Gaussian with
    standard deviation ``noise_fraction`` times the clean samples'
    bounding-box diagonal, drawn from a stream decorrelated from the
    sampler's.
    """
    clean = sample_boundary(name, count, seed=seed)
    points = clean
    if noise_fraction > 0.0:
        diagonal = PointCloud(clean).diagonal
        noise_rng = np.random.default_rng(np.random.SeedSequence((seed, 1)))
        points = clean + noise_rng.normal(
            scale=noise_fraction * diagonal, size=clean.shape)
    return PointCloud(points), clean
