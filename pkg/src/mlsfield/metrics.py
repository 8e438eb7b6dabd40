"""Surface-quality metrics between sampled surfaces.

Chamfer distance is reported under one of three explicitly named
conventions, because the same name covers mutually incomparable formulas
across the literature:

* ``mean_l2``  — halved sum of the two directional mean distances:
  0.5·mean‖x−nn(x)‖ + 0.5·mean‖y−nn(y)‖.
* ``sum_l2``   — unnormalized: Σ‖x−nn(x)‖ + Σ‖y−nn(y)‖.
* ``mean_sq``  — 0.5·mean‖x−nn(x)‖² + 0.5·mean‖y−nn(y)‖².  Note the ½
  factors sit inside the combination; some toolkits report the plain sum
  of the two mean squared distances (twice this value).

Every report carries its convention tag so numbers are never compared
across conventions silently.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, DegenerateMeshError, EmptyInputError
from .geometry import PointCloud, TriangleMesh
from .neighbors import NeighborIndex

CHAMFER_CONVENTIONS = ("mean_l2", "sum_l2", "mean_sq")

#: Sample budgets per evaluation protocol.
SAMPLE_PRESETS = {
    "srb": 1_000_000,
    "shapenet": 100_000,
    "abc": 10_000,
    "realscan": 200_000,
}

#: F-score thresholds per protocol (world units after normalization).
FSCORE_PRESETS = {
    "srb": (0.01, 0.02),
    "shapenet": (0.01, 0.02),
    "abc": (0.01, 0.02),
    "realscan": (0.5,),
}


@dataclass(frozen=True)
class SampledSurface:
    """Point samples of a surface, with per-sample unit normals when known."""

    points: np.ndarray
    normals: np.ndarray | None = None
    source: str = "cloud"           # "mesh" if sampled from triangles

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[0] < 1 or pts.shape[1] not in (2, 3):
            raise EmptyInputError("surface needs at least one 2-D or 3-D point")
        object.__setattr__(self, "points", pts)
        if self.normals is not None:
            nrm = np.asarray(self.normals, dtype=np.float64)
            if nrm.shape != pts.shape:
                raise ValueError("normals shape must match points")
            lengths = np.linalg.norm(nrm, axis=1)
            if not np.all(np.abs(lengths - 1.0) <= 1e-9):
                raise ValueError("normals must be unit length (1e-9)")
            object.__setattr__(self, "normals", nrm)
        if self.source not in ("mesh", "cloud"):
            raise ValueError("source must be 'mesh' or 'cloud'")

    def __len__(self) -> int:
        return self.points.shape[0]

    @classmethod
    def from_cloud(cls, cloud: PointCloud) -> "SampledSurface":
        return cls(points=cloud.points, normals=cloud.normals, source="cloud")


@dataclass(frozen=True)
class MetricsConfig:
    sample_count: int = 100_000
    fscore_thresholds: tuple = (0.01, 0.02)
    chamfer_convention: str = "mean_l2"
    seed: int = 0

    def __post_init__(self):
        if self.sample_count < 1:
            raise ConfigurationError("sample_count must be >= 1")
        taus = tuple(float(t) for t in np.atleast_1d(self.fscore_thresholds))
        if any(t <= 0 for t in taus):
            raise ConfigurationError("f-score thresholds must be > 0")
        object.__setattr__(self, "fscore_thresholds", taus)
        if self.chamfer_convention not in CHAMFER_CONVENTIONS:
            raise ConfigurationError(
                f"unknown chamfer convention {self.chamfer_convention!r}; "
                f"choose from {CHAMFER_CONVENTIONS}"
            )

    @classmethod
    def for_preset(cls, name: str, seed: int = 0,
                   chamfer_convention: str = "mean_l2") -> "MetricsConfig":
        if name not in SAMPLE_PRESETS:
            raise ConfigurationError(
                f"unknown metrics preset {name!r}; "
                f"choose from {sorted(SAMPLE_PRESETS)}"
            )
        return cls(sample_count=SAMPLE_PRESETS[name],
                   fscore_thresholds=FSCORE_PRESETS[name],
                   chamfer_convention=chamfer_convention, seed=seed)


@dataclass
class MetricsReport:
    cd: float
    cd_one_sided_g2p: float
    cd_one_sided_p2g: float
    hd: float
    hd_one_sided_g2p: float
    hd_one_sided_p2g: float
    nc: float | None
    fscores: dict = field(default_factory=dict)   # tau -> (fs, precision, recall)
    chamfer_convention: str = "mean_l2"
    sample_count: int = 0
    seed: int = 0

    def to_dict(self) -> dict:
        out = {
            "cd": self.cd,
            "cd_one_sided_g2p": self.cd_one_sided_g2p,
            "cd_one_sided_p2g": self.cd_one_sided_p2g,
            "hd": self.hd,
            "hd_one_sided_g2p": self.hd_one_sided_g2p,
            "hd_one_sided_p2g": self.hd_one_sided_p2g,
            "nc": self.nc,
            "chamfer_convention": self.chamfer_convention,
            "sample_count": self.sample_count,
            "seed": self.seed,
            "fscores": {
                f"{tau:g}": {"fs": fs, "precision": p, "recall": r}
                for tau, (fs, p, r) in self.fscores.items()
            },
        }
        return out

    def rows(self) -> list:
        """Flat rows: (metric, value, convention, sample_count, tau, seed)."""
        common = dict(convention=self.chamfer_convention,
                      sample_count=self.sample_count, tau="", seed=self.seed)
        rows = []
        for name in ("cd", "cd_one_sided_g2p", "cd_one_sided_p2g"):
            rows.append({"metric": name, "value": getattr(self, name), **common})
        for name in ("hd", "hd_one_sided_g2p", "hd_one_sided_p2g"):
            rows.append({"metric": name, "value": getattr(self, name),
                         **{**common, "convention": ""}})
        if self.nc is not None:
            rows.append({"metric": "nc", "value": self.nc,
                         **{**common, "convention": ""}})
        for tau, (fs, p, r) in self.fscores.items():
            for name, value in (("fs", fs), ("precision", p), ("recall", r)):
                rows.append({"metric": name, "value": value,
                             **{**common, "convention": "", "tau": tau}})
        return rows

    def save_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n",
                              encoding="utf-8")

    def save_csv(self, path) -> None:
        fields = ["metric", "value", "convention", "sample_count", "tau", "seed"]
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.DictWriter(fh, fieldnames=fields)
            writer.writeheader()
            writer.writerows(self.rows())


# ---------------------------------------------------------------------------
# Sampling
# ---------------------------------------------------------------------------

def sample_surface(mesh: TriangleMesh, count: int, seed: int = 0) -> SampledSurface:
    """Draw ``count`` area-weighted uniform samples from a triangle mesh.

    Triangles are chosen with probability proportional to area; the point is
    uniform within the triangle (barycentric, with the reflection trick);
    each sample carries its triangle's unit face normal.
    """
    if mesh.is_empty:
        raise DegenerateMeshError("cannot sample an empty mesh")
    areas = mesh.face_areas()
    total = areas.sum()
    if total <= 0.0:
        raise DegenerateMeshError("mesh has zero total area")
    rng = np.random.default_rng(seed)
    tri = rng.choice(len(areas), size=count, p=areas / total)
    u = rng.random(count)
    v = rng.random(count)
    flip = u + v > 1.0
    u[flip] = 1.0 - u[flip]
    v[flip] = 1.0 - v[flip]
    a = mesh.vertices[mesh.faces[tri, 0]]
    b = mesh.vertices[mesh.faces[tri, 1]]
    c = mesh.vertices[mesh.faces[tri, 2]]
    points = a + u[:, None] * (b - a) + v[:, None] * (c - a)
    normals = mesh.face_normals()[tri]
    return SampledSurface(points=points, normals=normals, source="mesh")


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------

def _nearest(from_surface: SampledSurface, to_surface: SampledSurface):
    idx, dist = NeighborIndex(to_surface.points).nearest(from_surface.points)
    return dist, idx


def chamfer(x: SampledSurface, y: SampledSurface,
            convention: str = "mean_l2") -> tuple:
    """Chamfer distance under a named convention.

    Returns ``(cd, one_sided_x2y, one_sided_y2x)``; the one-sided values are
    the directional terms of the chosen convention (mean, sum, or mean of
    squares) before combination.
    """
    if convention not in CHAMFER_CONVENTIONS:
        raise ConfigurationError(f"unknown chamfer convention {convention!r}")
    d_xy, _ = _nearest(x, y)
    d_yx, _ = _nearest(y, x)
    if convention == "mean_l2":
        a, b = d_xy.mean(), d_yx.mean()
        return 0.5 * a + 0.5 * b, a, b
    if convention == "sum_l2":
        a, b = d_xy.sum(), d_yx.sum()
        return a + b, a, b
    a, b = (d_xy ** 2).mean(), (d_yx ** 2).mean()
    return 0.5 * a + 0.5 * b, a, b


def hausdorff(x: SampledSurface, y: SampledSurface) -> tuple:
    """Symmetric Hausdorff distance over the sampled sets.

    Returns ``(hd, hd_x2y, hd_y2x)`` where each one-sided value is the
    maximum over one set of the distance to the other, and hd is the larger
    of the two.
    """
    d_xy, _ = _nearest(x, y)
    d_yx, _ = _nearest(y, x)
    a, b = float(d_xy.max()), float(d_yx.max())
    return max(a, b), a, b


def normal_consistency(x: SampledSurface, y: SampledSurface) -> float:
    """Mean absolute normal alignment between nearest-neighbor pairs.

    0.5·mean|n(x)·n(nn_y(x))| + 0.5·mean|n(y)·n(nn_x(y))|, in [0, 1].
    """
    if x.normals is None or y.normals is None:
        raise ConfigurationError("normal consistency requires normals on both surfaces")
    _, idx_xy = _nearest(x, y)
    _, idx_yx = _nearest(y, x)
    dots_x = np.abs(np.einsum("ij,ij->i", x.normals, y.normals[idx_xy]))
    dots_y = np.abs(np.einsum("ij,ij->i", y.normals, x.normals[idx_yx]))
    return float(0.5 * dots_x.mean() + 0.5 * dots_y.mean())


def f_score(x: SampledSurface, y: SampledSurface, tau: float) -> tuple:
    """(fs, precision, recall) at proximity threshold ``tau``.

    ``x`` is the reference surface: precision is the fraction of ``y``
    within tau of ``x``; recall is the fraction of ``x`` within tau of
    ``y``; fs is their harmonic mean (0 when both vanish).
    """
    if tau <= 0:
        raise ConfigurationError("f-score threshold must be > 0")
    d_yx, _ = _nearest(y, x)
    d_xy, _ = _nearest(x, y)
    precision = float((d_yx <= tau).mean())
    recall = float((d_xy <= tau).mean())
    if precision + recall == 0.0:
        return 0.0, precision, recall
    return 2 * precision * recall / (precision + recall), precision, recall


def evaluate_surfaces(ground: SampledSurface, pred: SampledSurface,
                      config: MetricsConfig = MetricsConfig()) -> MetricsReport:
    """Full metric suite between a ground-truth surface and a prediction."""
    cd, g2p, p2g = chamfer(ground, pred, config.chamfer_convention)
    hd, hd_g2p, hd_p2g = hausdorff(ground, pred)
    nc = None
    if ground.normals is not None and pred.normals is not None:
        nc = normal_consistency(ground, pred)
    fscores = {tau: f_score(ground, pred, tau)
               for tau in config.fscore_thresholds}
    return MetricsReport(
        cd=float(cd), cd_one_sided_g2p=float(g2p), cd_one_sided_p2g=float(p2g),
        hd=hd, hd_one_sided_g2p=hd_g2p, hd_one_sided_p2g=hd_p2g,
        nc=nc, fscores=fscores,
        chamfer_convention=config.chamfer_convention,
        sample_count=config.sample_count, seed=config.seed,
    )


def evaluate_meshes(ground: TriangleMesh, pred: TriangleMesh,
                    config: MetricsConfig = MetricsConfig()) -> MetricsReport:
    """Sample both meshes with the same budget and seed, then evaluate.

    Sharing the seed makes evaluating a mesh against itself exact
    (cd = 0, nc = 1, fs = 1); for distinct meshes the draws are
    independent anyway.
    """
    gs = sample_surface(ground, config.sample_count, seed=config.seed)
    ps = sample_surface(pred, config.sample_count, seed=config.seed)
    return evaluate_surfaces(gs, ps, config)
