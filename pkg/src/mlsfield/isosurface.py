"""Level-set extraction: grid sampling, marching cubes, marching squares.

The field is sampled on a regular grid, then the iso-value crossing surface
is extracted cell by cell: triangles in 3-D (256-case tables from
``_mc_tables``), polylines in 2-D (16-case logic with the ambiguous saddle
resolved by the cell-center average).  Vertices on shared cell edges are
welded by exact integer edge keys — identical interpolation inputs produce
identical coordinates, so no epsilon matching is needed and extraction is
fully deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import field as mlp
from ._mc_tables import CORNER_OFFSETS, EDGE_AXIS, EDGE_BASE, TRI_TABLE
from .geometry import PointCloud, TriangleMesh

RESOLUTION_PRESETS = (128, 256, 512)


@dataclass(frozen=True)
class GridSpec:
    """Regular sampling grid: per-axis vertex counts over an axis box."""

    resolution: tuple      # vertices per axis, e.g. (256, 256, 256)
    bounds_min: np.ndarray
    bounds_max: np.ndarray
    iso_value: float = 0.0

    def __post_init__(self):
        lo = np.asarray(self.bounds_min, dtype=np.float64).reshape(-1)
        hi = np.asarray(self.bounds_max, dtype=np.float64).reshape(-1)
        if lo.size not in (2, 3) or hi.size != lo.size:
            raise ValueError("bounds must be matching 2- or 3-vectors")
        if not np.all(hi > lo):
            raise ValueError("bounds are degenerate (max must exceed min)")
        res = self.resolution
        if np.isscalar(res):
            res = (int(res),) * lo.size
        res = tuple(int(r) for r in res)
        if len(res) != lo.size or any(r < 8 for r in res):
            raise ValueError("resolution must be >= 8 per axis")
        object.__setattr__(self, "resolution", res)
        object.__setattr__(self, "bounds_min", lo)
        object.__setattr__(self, "bounds_max", hi)

    @property
    def dim(self) -> int:
        return len(self.resolution)

    @classmethod
    def for_cloud(cls, cloud: PointCloud, resolution=256, margin: float = 0.1,
                  iso_value: float = 0.0) -> "GridSpec":
        """Default grid: the cloud's bounding box expanded by ``margin``
        (fraction of each side) per side."""
        lo, hi = cloud.bbox_min, cloud.bbox_max
        pad = (hi - lo) * margin
        return cls(resolution=resolution, bounds_min=lo - pad,
                   bounds_max=hi + pad, iso_value=iso_value)

    def axis_coords(self) -> list:
        return [np.linspace(self.bounds_min[a], self.bounds_max[a],
                            self.resolution[a])
                for a in range(self.dim)]

    def vertex_points(self) -> np.ndarray:
        """All grid vertices, x-fastest order, shape (prod(res), dim)."""
        axes = self.axis_coords()
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.reshape(-1, order="F") for m in mesh], axis=1)


@dataclass
class ScalarGrid:
    """Field samples on a :class:`GridSpec`, x-fastest flat order."""

    spec: GridSpec
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64).reshape(-1)
        expected = int(np.prod(self.spec.resolution))
        if self.values.size != expected:
            raise ValueError(
                f"value count {self.values.size} != grid size {expected}"
            )
        if not np.all(np.isfinite(self.values)):
            raise ValueError("grid contains non-finite values")

    def as_array(self) -> np.ndarray:
        """Values reshaped to (nx, ny[, nz]) with axis 0 = x."""
        return self.values.reshape(self.spec.resolution, order="F")


def sample_grid(field_handle, spec: GridSpec, chunk_size: int = 32768) -> ScalarGrid:
    """Evaluate the field at every grid vertex (chunked, deterministic).

    ``field_handle`` is :class:`mlsfield.field.MlpParams` or any callable
    mapping an (n, d) array to (n,) values.  A non-finite sample aborts with
    the offending coordinate in the message.
    """
    if isinstance(field_handle, mlp.MlpParams):
        if field_handle.config.input_dim != spec.dim:
            raise ValueError(
                f"field expects dim {field_handle.config.input_dim}, "
                f"grid is {spec.dim}-D"
            )
        def evaluate(block):
            return mlp.forward(field_handle, block)
    elif callable(field_handle):
        evaluate = field_handle
    else:
        raise TypeError("field_handle must be MlpParams or a callable")

    points = spec.vertex_points()
    values = np.empty(points.shape[0])
    for start in range(0, points.shape[0], chunk_size):
        block = points[start:start + chunk_size]
        out = np.asarray(evaluate(block), dtype=np.float64).reshape(-1)
        if out.shape[0] != block.shape[0]:
            raise ValueError("field evaluation returned a wrong-sized block")
        bad = ~np.isfinite(out)
        if np.any(bad):
            where = block[int(np.flatnonzero(bad)[0])]
            raise ValueError(f"non-finite field value at {where.tolist()}")
        values[start:start + chunk_size] = out
    return ScalarGrid(spec=spec, values=values)


# ---------------------------------------------------------------------------
# Marching cubes
# ---------------------------------------------------------------------------

def marching_cubes(grid: ScalarGrid, iso_value: float | None = None) -> TriangleMesh:
    """Extract the iso-surface as a welded triangle mesh.

    Standard 256-case table extraction with exact linear interpolation
    along cell edges.  "Inside" means value < iso.  A grid with no sign
    change yields an empty mesh.  Zero-area triangles (possible only when
    samples hit the iso value exactly) are dropped.
    """
    if grid.spec.dim != 3:
        raise ValueError("marching_cubes needs a 3-D grid")
    iso = grid.spec.iso_value if iso_value is None else float(iso_value)
    vals = grid.as_array()
    nx, ny, nz = grid.spec.resolution
    inside = vals < iso

    config = np.zeros((nx - 1, ny - 1, nz - 1), dtype=np.uint8)
    for bit, (ox, oy, oz) in enumerate(CORNER_OFFSETS):
        config |= inside[ox:ox + nx - 1, oy:oy + ny - 1, oz:oz + nz - 1].astype(np.uint8) << bit

    active = (config != 0) & (config != 255)
    if not np.any(active):
        return TriangleMesh(np.empty((0, 3)), np.empty((0, 3), dtype=np.int64))

    cx, cy, cz = np.nonzero(active)
    cell_cfg = config[cx, cy, cz]
    axes = grid.spec.axis_coords()

    key_chunks = []     # (m,) int64 edge keys carrying positions
    pos_chunks = []     # (m, 3) float positions
    tri_chunks = []     # (t, 3) int64 edge keys per triangle corner

    for cfg_value in np.unique(cell_cfg):
        tri = TRI_TABLE[cfg_value]
        if not tri:
            continue
        sel = cell_cfg == cfg_value
        bx, by, bz = cx[sel], cy[sel], cz[sel]

        edge_keys = {}
        for e in sorted(set(tri)):
            ox, oy, oz = EDGE_BASE[e]
            axis = EDGE_AXIS[e]
            vx, vy, vz = bx + ox, by + oy, bz + oz
            va = vals[vx, vy, vz]
            if axis == 0:
                vb = vals[vx + 1, vy, vz]
            elif axis == 1:
                vb = vals[vx, vy + 1, vz]
            else:
                vb = vals[vx, vy, vz + 1]
            t = (iso - va) / (vb - va)
            px = axes[0][vx]
            py = axes[1][vy]
            pz = axes[2][vz]
            if axis == 0:
                px = px * (1.0 - t) + axes[0][vx + 1] * t
            elif axis == 1:
                py = py * (1.0 - t) + axes[1][vy + 1] * t
            else:
                pz = pz * (1.0 - t) + axes[2][vz + 1] * t
            keys = _edge_key(vx, vy, vz, axis, nx, ny)
            edge_keys[e] = keys
            key_chunks.append(keys)
            pos_chunks.append(np.column_stack([px, py, pz]))
        for k in range(0, len(tri), 3):
            tri_chunks.append(np.column_stack([
                edge_keys[tri[k]], edge_keys[tri[k + 1]], edge_keys[tri[k + 2]],
            ]))

    all_keys = np.concatenate(key_chunks)
    all_pos = np.concatenate(pos_chunks, axis=0)
    tri_keys = np.concatenate(tri_chunks, axis=0)

    unique_keys, first = np.unique(all_keys, return_index=True)
    vertices = all_pos[first]
    faces = np.searchsorted(unique_keys, tri_keys).astype(np.int64)

    # Cleanup: faces with a repeated vertex or exactly zero area can only
    # appear when grid samples equal the iso value; drop them.
    a = vertices[faces[:, 0]]
    b = vertices[faces[:, 1]]
    c = vertices[faces[:, 2]]
    area2 = np.linalg.norm(np.cross(b - a, c - a), axis=1)
    distinct = ((faces[:, 0] != faces[:, 1]) & (faces[:, 1] != faces[:, 2])
                & (faces[:, 0] != faces[:, 2]))
    keep = distinct & (area2 > 0.0)
    faces = faces[keep]

    # Drop vertices that lost all their faces (exact-hit duplicates).
    used = np.unique(faces)
    remap = np.full(vertices.shape[0], -1, dtype=np.int64)
    remap[used] = np.arange(used.size)
    return TriangleMesh(vertices[used], remap[faces])


def _edge_key(vx, vy, vz, axis, nx, ny):
    return (((vz.astype(np.int64) * ny + vy) * nx) + vx) * 3 + axis


# ---------------------------------------------------------------------------
# Marching squares
# ---------------------------------------------------------------------------

def marching_squares(grid: ScalarGrid, iso_value: float | None = None) -> list:
    """Extract iso-contours of a 2-D grid as polylines.

    Returns a list of (m, 2) arrays; closed contours repeat their first
    point at the end.  Contours wind counter-clockwise around regions with
    value < iso.  The ambiguous saddle cells (diagonal sign pattern) are
    split according to the sign of the cell-center average.
    """
    if grid.spec.dim != 2:
        raise ValueError("marching_squares needs a 2-D grid")
    iso = grid.spec.iso_value if iso_value is None else float(iso_value)
    vals = grid.as_array()
    nx, ny = grid.spec.resolution
    xs, ys = grid.spec.axis_coords()
    inside = vals < iso

    # Crossing points, keyed by (vertex x index, vertex y index, axis).
    def crossing(ix, iy, axis):
        va = vals[ix, iy]
        if axis == 0:
            vb = vals[ix + 1, iy]
        else:
            vb = vals[ix, iy + 1]
        t = (iso - va) / (vb - va)
        if axis == 0:
            return np.array([xs[ix] * (1.0 - t) + xs[ix + 1] * t, ys[iy]])
        return np.array([xs[ix], ys[iy] * (1.0 - t) + ys[iy + 1] * t])

    segments = []       # (from_key, to_key)
    positions = {}      # key -> (2,) point

    for i in range(nx - 1):
        for j in range(ny - 1):
            corners = ((i, j), (i + 1, j), (i + 1, j + 1), (i, j + 1))
            bits = [inside[c] for c in corners]
            if all(bits) or not any(bits):
                continue
            # Edge k sits between corners k and k+1 (cyclic).
            edge_keys = ((i, j, 0), (i + 1, j, 1), (i, j + 1, 0), (i, j, 1))
            crossings = [k for k in range(4) if bits[k] != bits[(k + 1) % 4]]
            for key in (edge_keys[k] for k in crossings):
                if key not in positions:
                    positions[key] = crossing(*key)

            if len(crossings) == 2:
                k0, k1 = crossings
                if bits[k0]:
                    segments.append((edge_keys[k0], edge_keys[k1]))
                else:
                    segments.append((edge_keys[k1], edge_keys[k0]))
            else:
                center_inside = (vals[i, j] + vals[i + 1, j] + vals[i + 1, j + 1]
                                 + vals[i, j + 1]) / 4.0 < iso
                for k in range(4):
                    # Diagonal pattern: pair crossings around single corners.
                    if bits[k] != center_inside:
                        continue
                    if bits[k]:
                        # Cut off inside corner k: enter on edge k, leave on k-1.
                        segments.append((edge_keys[k], edge_keys[k - 1]))
                    else:
                        # Cut off outside corner k: enter on k-1, leave on k.
                        segments.append((edge_keys[k - 1], edge_keys[k]))

    return _stitch(segments, positions)


def _stitch(segments, positions) -> list:
    """Join directed segments into maximal polylines (open chains first)."""
    successor = {}
    has_incoming = set()
    for frm, to in segments:
        successor[frm] = to
        has_incoming.add(to)

    polylines = []

    def walk(start, stop_at=None):
        chain = [start]
        node = start
        while node in successor:
            node = successor.pop(node)
            chain.append(node)
            if node == stop_at:
                break
        return chain

    for frm, _to in segments:                   # open chains, creation order
        if frm in successor and frm not in has_incoming:
            polylines.append(walk(frm))
    while successor:                            # remaining closed loops
        start = min(successor)
        polylines.append(walk(start, stop_at=start))

    return [np.asarray([positions[k] for k in chain]) for chain in polylines]


# ---------------------------------------------------------------------------
# 2-D contour export
# ---------------------------------------------------------------------------

def export_contours_svg(polylines, path, bounds=None, stroke: str = "black",
                        stroke_width: float = 0.004) -> None:
    """Write contours as an SVG with a unit viewBox (0 0 1 1).

    Data coordinates are mapped uniformly (aspect preserved) into the unit
    square, y pointing up in data space.
    """
    path = Path(path)
    if bounds is None:
        if polylines:
            stacked = np.concatenate(polylines, axis=0)
            lo, hi = stacked.min(axis=0), stacked.max(axis=0)
        else:
            lo, hi = np.zeros(2), np.ones(2)
    else:
        lo, hi = (np.asarray(b, dtype=np.float64) for b in bounds)
    extent = float(max((hi - lo).max(), 1e-30))
    center = (lo + hi) / 2.0

    def to_unit(p):
        q = (p - center) / extent + 0.5
        return q[:, 0], 1.0 - q[:, 1]

    lines = ['<?xml version="1.0" encoding="UTF-8"?>',
             '<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 1 1">']
    for poly in polylines:
        xsu, ysu = to_unit(np.asarray(poly, dtype=np.float64))
        pts = " ".join(f"{x:.6f},{y:.6f}" for x, y in zip(xsu, ysu))
        lines.append(
            f'  <polyline points="{pts}" fill="none" stroke="{stroke}" '
            f'stroke-width="{stroke_width}"/>'
        )
    lines.append("</svg>")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def export_contours_csv(polylines, path) -> None:
    """Write contours as CSV rows: polyline index, vertex index, x, y."""
    path = Path(path)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("polyline,vertex,x,y\n")
        for pi, poly in enumerate(polylines):
            for vi, (x, y) in enumerate(np.asarray(poly, dtype=np.float64)):
                fh.write(f"{pi},{vi},{x:.17g},{y:.17g}\n")
