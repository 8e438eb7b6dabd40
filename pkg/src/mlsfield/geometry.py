"""Point-cloud and mesh containers, file I/O, and scale normalization.

Point clouds are plain ``float64`` arrays wrapped with light validation.
Clouds may be 2-D or 3-D; file formats are 3-D only.  ``normalize`` maps a
cloud into a canonical frame (bounding-box center at the origin, longest
box side equal to ``TARGET_EXTENT``) and returns the similarity transform
so results can be mapped back to input coordinates.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DegenerateExtentError, EmptyInputError, ParseError

#: Longest bounding-box side of a normalized cloud.  With this extent every
#: normalized point lies inside [-0.9, 0.9]^d, which keeps the shape inside
#: the unit sphere that a geometrically initialized field starts from.
TARGET_EXTENT = 1.8

_UNIT_NORMAL_TOL = 1e-6


def _as_float_array(values, name: str, dim_range=(2, 3)) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] not in dim_range:
        raise ValueError(
            f"{name} must be an (n, d) array with d in {dim_range}, "
            f"got shape {arr.shape}"
        )
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


@dataclass(frozen=True)
class PointCloud:
    """An unordered set of points with optional unit normals.

    Attributes
    ----------
    points:
        ``(n, d)`` float64 array, ``d`` in {2, 3}, ``n >= 1``.
    normals:
        ``(n, d)`` float64 array of unit vectors, or ``None`` for the
        unoriented case (the common one here).
    """

    points: np.ndarray
    normals: np.ndarray | None = None

    def __post_init__(self):
        pts = _as_float_array(self.points, "points")
        if pts.shape[0] < 1:
            raise ValueError("point cloud is empty")
        object.__setattr__(self, "points", pts)
        if self.normals is not None:
            nrm = _as_float_array(self.normals, "normals")
            if nrm.shape != pts.shape:
                raise ValueError(
                    f"normals shape {nrm.shape} does not match points shape {pts.shape}"
                )
            lengths = np.linalg.norm(nrm, axis=1)
            if np.any(np.abs(lengths - 1.0) > _UNIT_NORMAL_TOL):
                raise ValueError("normals must be unit length")
            object.__setattr__(self, "normals", nrm)

    def __len__(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def bbox_min(self) -> np.ndarray:
        return self.points.min(axis=0)

    @property
    def bbox_max(self) -> np.ndarray:
        return self.points.max(axis=0)

    @property
    def diagonal(self) -> float:
        """Length of the bounding-box diagonal (the cloud's scale reference)."""
        return float(np.linalg.norm(self.bbox_max - self.bbox_min))


@dataclass(frozen=True)
class TriangleMesh:
    """Indexed triangle mesh: ``vertices`` (m, 3) float64, ``faces`` (k, 3) int."""

    vertices: np.ndarray
    faces: np.ndarray

    def __post_init__(self):
        verts = np.asarray(self.vertices, dtype=np.float64)
        if verts.size == 0:
            verts = verts.reshape(0, 3)
        if verts.ndim != 2 or verts.shape[1] != 3:
            raise ValueError(f"vertices must be (m, 3), got shape {verts.shape}")
        faces = np.asarray(self.faces, dtype=np.int64)
        if faces.size == 0:
            faces = faces.reshape(0, 3)
        if faces.ndim != 2 or faces.shape[1] != 3:
            raise ValueError(f"faces must be (k, 3), got shape {faces.shape}")
        if faces.size and (faces.min() < 0 or faces.max() >= verts.shape[0]):
            raise ValueError("face indices out of range")
        object.__setattr__(self, "vertices", verts)
        object.__setattr__(self, "faces", faces)

    @property
    def is_empty(self) -> bool:
        return self.faces.shape[0] == 0

    def face_normals(self) -> np.ndarray:
        """Unit normals per face; zero vector for zero-area faces."""
        a = self.vertices[self.faces[:, 0]]
        b = self.vertices[self.faces[:, 1]]
        c = self.vertices[self.faces[:, 2]]
        n = np.cross(b - a, c - a)
        lengths = np.linalg.norm(n, axis=1)
        safe = np.where(lengths > 0.0, lengths, 1.0)
        return n / safe[:, None]

    def face_areas(self) -> np.ndarray:
        a = self.vertices[self.faces[:, 0]]
        b = self.vertices[self.faces[:, 1]]
        c = self.vertices[self.faces[:, 2]]
        return 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)


@dataclass(frozen=True)
class NormalizationTransform:
    """Similarity transform ``y = (x - center) * scale`` and its inverse."""

    center: np.ndarray
    scale: float

    def __post_init__(self):
        center = np.asarray(self.center, dtype=np.float64).reshape(-1)
        if center.size not in (2, 3):
            raise ValueError("center must be a 2- or 3-vector")
        if not (np.isfinite(self.scale) and self.scale > 0):
            raise ValueError("scale must be positive and finite")
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "scale", float(self.scale))

    def apply(self, points: np.ndarray) -> np.ndarray:
        return (np.asarray(points, dtype=np.float64) - self.center) * self.scale

    def invert(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(points, dtype=np.float64) / self.scale + self.center

    def to_dict(self) -> dict:
        return {"center": self.center.tolist(), "scale": self.scale}

    @classmethod
    def from_dict(cls, data: dict) -> "NormalizationTransform":
        return cls(center=np.asarray(data["center"], dtype=np.float64),
                   scale=float(data["scale"]))


def normalize(cloud: PointCloud) -> tuple[PointCloud, NormalizationTransform]:
    """Center a cloud on its bounding-box midpoint and rescale uniformly.

    The longest bounding-box side of the result equals ``TARGET_EXTENT``.
    Normals, being direction-only, are carried over unchanged.

    Raises
    ------
    DegenerateExtentError
        If all points coincide (no scale can be derived).
    """
    lo, hi = cloud.bbox_min, cloud.bbox_max
    longest = float((hi - lo).max())
    if longest <= 0.0:
        raise DegenerateExtentError(
            f"all {len(cloud)} points coincide; cannot derive a scale"
        )
    transform = NormalizationTransform(center=(lo + hi) / 2.0,
                                       scale=TARGET_EXTENT / longest)
    return PointCloud(transform.apply(cloud.points), cloud.normals), transform


# ---------------------------------------------------------------------------
# Loading
# ---------------------------------------------------------------------------

def load_point_cloud(path, fmt: str | None = None) -> PointCloud:
    """Read a 3-D point cloud from ``path``.

    Supported formats: ``"xyz"`` (whitespace- or comma-separated ``x y z
    [nx ny nz]`` rows, ``#`` comments), ``"ply"`` (ascii or
    binary-little-endian, vertex positions plus optional ``nx ny nz``),
    and ``"obj"`` (``v`` lines only; faces and other records are ignored).
    ``fmt=None`` infers the format from the file suffix.
    """
    path = Path(path)
    if fmt is None:
        fmt = path.suffix.lstrip(".").lower()
    fmt = fmt.lower()
    if fmt == "xyz":
        return _load_xyz(path)
    if fmt == "ply":
        return _load_ply(path)
    if fmt == "obj":
        return _load_obj_points(path)
    raise ValueError(f"unknown point-cloud format {fmt!r} for {path}")


def _load_xyz(path: Path) -> PointCloud:
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            text = raw.split("#", 1)[0].strip()
            if not text:
                continue
            parts = text.replace(",", " ").split()
            if len(parts) not in (3, 6):
                raise ParseError(
                    f"expected 3 or 6 columns, found {len(parts)}",
                    path=path, line=lineno,
                )
            try:
                rows.append([float(p) for p in parts])
            except ValueError:
                raise ParseError("non-numeric field", path=path, line=lineno) from None
    if not rows:
        raise EmptyInputError(f"{path}: no data rows")
    widths = {len(r) for r in rows}
    if len(widths) != 1:
        raise ParseError("inconsistent column counts", path=path)
    data = np.asarray(rows, dtype=np.float64)
    if data.shape[1] == 6:
        return PointCloud(data[:, :3], _renormalize(data[:, 3:], path))
    return PointCloud(data)


def _renormalize(normals: np.ndarray, path: Path) -> np.ndarray | None:
    """Rescale nearly-unit normals from a file; drop them if unusable."""
    lengths = np.linalg.norm(normals, axis=1)
    if np.any(lengths <= 0) or not np.all(np.isfinite(lengths)):
        warnings.warn(f"{path}: dropping unusable normals (zero or non-finite length)")
        return None
    return normals / lengths[:, None]


_PLY_SCALAR_TYPES = {
    "float": ("f", 4), "float32": ("f", 4),
    "double": ("d", 8), "float64": ("d", 8),
    "char": ("b", 1), "int8": ("b", 1),
    "uchar": ("B", 1), "uint8": ("B", 1),
    "short": ("h", 2), "int16": ("h", 2),
    "ushort": ("H", 2), "uint16": ("H", 2),
    "int": ("i", 4), "int32": ("i", 4),
    "uint": ("I", 4), "uint32": ("I", 4),
}


def _parse_ply_header(fh, path: Path):
    """Read a PLY header; returns (format, [(name, count, props), ...])."""
    magic = fh.readline().strip()
    if magic != b"ply":
        raise ParseError("missing 'ply' magic", path=path, line=1)
    fmt = None
    elements = []  # list of (name, count, [(prop_name, type_code), ...])
    lineno = 1
    while True:
        raw = fh.readline()
        lineno += 1
        if not raw:
            raise ParseError("header ended before end_header", path=path, line=lineno)
        tokens = raw.decode("ascii", errors="replace").split()
        if not tokens or tokens[0] == "comment":
            continue
        if tokens[0] == "format":
            if tokens[1] not in ("ascii", "binary_little_endian"):
                raise ParseError(f"unsupported format {tokens[1]!r}", path=path, line=lineno)
            fmt = tokens[1]
        elif tokens[0] == "element":
            elements.append((tokens[1], int(tokens[2]), []))
        elif tokens[0] == "property":
            if not elements:
                raise ParseError("property before any element", path=path, line=lineno)
            if tokens[1] == "list":
                elements[-1][2].append((tokens[-1], ("list", tokens[2], tokens[3])))
            else:
                if tokens[1] not in _PLY_SCALAR_TYPES:
                    raise ParseError(f"unsupported type {tokens[1]!r}", path=path, line=lineno)
                elements[-1][2].append((tokens[-1], tokens[1]))
        elif tokens[0] == "end_header":
            break
    if fmt is None:
        raise ParseError("header has no format line", path=path)
    return fmt, elements


def _load_ply(path: Path) -> PointCloud:
    with open(path, "rb") as fh:
        fmt, elements = _parse_ply_header(fh, path)
        for index, (name, count, props) in enumerate(elements):
            if name == "vertex":
                if index != 0:
                    raise ParseError(
                        "vertex element must come first", path=path)
                return _read_ply_vertices(fh, path, fmt, count, props)
        raise ParseError("no vertex element", path=path)


def _read_ply_vertices(fh, path, fmt, count, props) -> PointCloud:
    names = [n for n, _ in props]
    for axis in ("x", "y", "z"):
        if axis not in names:
            raise ParseError(f"vertex element lacks property {axis!r}", path=path)
    has_normals = all(a in names for a in ("nx", "ny", "nz"))
    if any(isinstance(t, tuple) for _, t in props):
        raise ParseError("list property inside vertex element", path=path)
    if count < 1:
        raise EmptyInputError(f"{path}: empty vertex element")

    if fmt == "ascii":
        values = np.empty((count, len(names)), dtype=np.float64)
        for i in range(count):
            raw = fh.readline()
            if not raw:
                raise ParseError(f"expected {count} vertex rows, got {i}", path=path)
            parts = raw.split()
            if len(parts) != len(names):
                raise ParseError(
                    f"vertex row has {len(parts)} fields, expected {len(names)}",
                    path=path, line=i + 1,
                )
            values[i] = [float(p) for p in parts]
    else:
        dtype = np.dtype([(n, "<" + _PLY_SCALAR_TYPES[t][0]) for n, t in props])
        buf = fh.read(dtype.itemsize * count)
        if len(buf) != dtype.itemsize * count:
            raise ParseError("truncated binary vertex data", path=path)
        rec = np.frombuffer(buf, dtype=dtype)
        values = np.column_stack([rec[n].astype(np.float64) for n in names])

    cols = {n: values[:, i] for i, n in enumerate(names)}
    points = np.column_stack([cols["x"], cols["y"], cols["z"]])
    normals = None
    if has_normals:
        normals = _renormalize(
            np.column_stack([cols["nx"], cols["ny"], cols["nz"]]), path)
    return PointCloud(points, normals)


def _load_obj_points(path: Path) -> PointCloud:
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            if not raw.startswith("v "):
                continue
            parts = raw.split()
            if len(parts) < 4:
                raise ParseError("vertex line with fewer than 3 coordinates",
                                 path=path, line=lineno)
            try:
                rows.append([float(p) for p in parts[1:4]])
            except ValueError:
                raise ParseError("non-numeric vertex coordinate",
                                 path=path, line=lineno) from None
    if not rows:
        raise EmptyInputError(f"{path}: no vertex lines")
    return PointCloud(np.asarray(rows, dtype=np.float64))


# ---------------------------------------------------------------------------
# Mesh loading
# ---------------------------------------------------------------------------

def load_mesh(path, fmt: str | None = None) -> TriangleMesh:
    """Read a triangle mesh from OBJ or PLY; polygons are fan-triangulated.

    A file with vertices but no faces loads as a zero-face mesh (callers
    decide whether that is acceptable).
    """
    path = Path(path)
    fmt = fmt or path.suffix.lstrip(".").lower()
    if fmt == "obj":
        return _load_obj_mesh(path)
    if fmt == "ply":
        return _load_ply_mesh(path)
    raise ParseError(f"cannot read a mesh from format {fmt!r}", path=path)


def _fan_triangulate(polygons) -> np.ndarray:
    faces = []
    for poly in polygons:
        for k in range(1, len(poly) - 1):
            faces.append((poly[0], poly[k], poly[k + 1]))
    if not faces:
        return np.empty((0, 3), dtype=np.int64)
    return np.asarray(faces, dtype=np.int64)


def _load_obj_mesh(path: Path) -> TriangleMesh:
    vertices = []
    polygons = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            if raw.startswith("v "):
                parts = raw.split()
                if len(parts) < 4:
                    raise ParseError("vertex line with fewer than 3 coordinates",
                                     path=path, line=lineno)
                try:
                    vertices.append([float(p) for p in parts[1:4]])
                except ValueError:
                    raise ParseError("non-numeric vertex coordinate",
                                     path=path, line=lineno) from None
            elif raw.startswith("f "):
                corners = []
                for token in raw.split()[1:]:
                    try:
                        index = int(token.split("/")[0])
                    except ValueError:
                        raise ParseError(f"bad face index {token!r}",
                                         path=path, line=lineno) from None
                    # OBJ indices are 1-based; negatives count from the end.
                    corners.append(index - 1 if index > 0 else len(vertices) + index)
                if len(corners) < 3:
                    raise ParseError("face with fewer than 3 corners",
                                     path=path, line=lineno)
                polygons.append(corners)
    # A vertex-free file is the valid empty mesh (the writer's counterpart).
    verts = np.asarray(vertices, dtype=np.float64).reshape(-1, 3)
    faces = _fan_triangulate(polygons)
    if faces.size and (faces.min() < 0 or faces.max() >= len(verts)):
        raise ParseError("face index out of range", path=path)
    return TriangleMesh(verts, faces)


def _load_ply_mesh(path: Path) -> TriangleMesh:
    with open(path, "rb") as fh:
        fmt, elements = _parse_ply_header(fh, path)
        if not elements or elements[0][0] != "vertex":
            raise ParseError("vertex element must come first", path=path)
        _, v_count, v_props = elements[0]
        if v_count == 0:
            points = np.empty((0, 3))
        else:
            points = _read_ply_vertices(fh, path, fmt, v_count, v_props).points
        faces = np.empty((0, 3), dtype=np.int64)
        if len(elements) > 1:
            name, f_count, f_props = elements[1]
            if name != "face":
                raise ParseError(f"unsupported element {name!r} after vertices",
                                 path=path)
            faces = _read_ply_faces(fh, path, fmt, f_count, f_props)
        if faces.size and (faces.min() < 0 or faces.max() >= len(points)):
            raise ParseError("face index out of range", path=path)
        return TriangleMesh(points, faces)


def _read_ply_faces(fh, path: Path, fmt: str, count: int, props) -> np.ndarray:
    if len(props) != 1 or not isinstance(props[0][1], tuple):
        raise ParseError("face element must have a single list property",
                         path=path)
    _, (_, count_type, index_type) = props[0]
    polygons = []
    if fmt == "ascii":
        for i in range(count):
            raw = fh.readline()
            if not raw:
                raise ParseError(f"expected {count} face rows, got {i}", path=path)
            parts = raw.split()
            n = int(parts[0])
            if len(parts) != n + 1:
                raise ParseError(f"face row has {len(parts) - 1} indices, "
                                 f"header says {n}", path=path)
            polygons.append([int(p) for p in parts[1:]])
    else:
        for t in (count_type, index_type):
            if t not in _PLY_SCALAR_TYPES:
                raise ParseError(f"unsupported list type {t!r}", path=path)
        count_dt = np.dtype("<" + _PLY_SCALAR_TYPES[count_type][0])
        index_dt = np.dtype("<" + _PLY_SCALAR_TYPES[index_type][0])
        buf = fh.read()
        offset = 0
        for _ in range(count):
            if offset + count_dt.itemsize > len(buf):
                raise ParseError("truncated binary face data", path=path)
            n = int(np.frombuffer(buf, count_dt, count=1, offset=offset)[0])
            offset += count_dt.itemsize
            end = offset + n * index_dt.itemsize
            if end > len(buf):
                raise ParseError("truncated binary face data", path=path)
            polygons.append(
                np.frombuffer(buf, index_dt, count=n, offset=offset).tolist())
            offset = end
    if any(len(p) < 3 for p in polygons):
        raise ParseError("face with fewer than 3 corners", path=path)
    return _fan_triangulate(polygons)


# ---------------------------------------------------------------------------
# Saving
# ---------------------------------------------------------------------------

def save_mesh(mesh: TriangleMesh, path, fmt: str | None = None,
              transform: NormalizationTransform | None = None) -> None:
    """Write a triangle mesh as OBJ or ascii PLY.

    If ``transform`` is given, vertices are mapped back through its inverse
    (i.e. from the normalized frame to input coordinates) before writing.
    An empty mesh is written as a valid empty file with a warning.
    """
    path = Path(path)
    if fmt is None:
        fmt = path.suffix.lstrip(".").lower()
    fmt = fmt.lower()
    if fmt not in ("obj", "ply"):
        raise ValueError(f"unknown mesh format {fmt!r} for {path}")
    if mesh.is_empty:
        warnings.warn(f"writing empty mesh to {path}")
    verts = mesh.vertices if transform is None else transform.invert(mesh.vertices)

    if fmt == "obj":
        with open(path, "w", encoding="utf-8") as fh:
            for v in verts:
                fh.write(f"v {v[0]:.17g} {v[1]:.17g} {v[2]:.17g}\n")
            for f in mesh.faces:
                fh.write(f"f {f[0] + 1} {f[1] + 1} {f[2] + 1}\n")
    else:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("ply\nformat ascii 1.0\n")
            fh.write(f"element vertex {len(verts)}\n")
            fh.write("property double x\nproperty double y\nproperty double z\n")
            fh.write(f"element face {len(mesh.faces)}\n")
            fh.write("property list uchar int vertex_indices\nend_header\n")
            for v in verts:
                fh.write(f"{v[0]:.17g} {v[1]:.17g} {v[2]:.17g}\n")
            for f in mesh.faces:
                fh.write(f"3 {f[0]} {f[1]} {f[2]}\n")


def save_point_cloud(cloud: PointCloud, path) -> None:
    """Write a cloud as ``.xyz`` (with normals when present)."""
    path = Path(path)
    data = cloud.points
    if cloud.normals is not None:
        data = np.column_stack([cloud.points, cloud.normals])
    np.savetxt(path, data, fmt="%.17g")


# ---------------------------------------------------------------------------
# Mesh topology helpers
# ---------------------------------------------------------------------------

def edge_face_counts(mesh: TriangleMesh) -> tuple[np.ndarray, np.ndarray]:
    """Unique undirected edges and the number of faces sharing each."""
    f = mesh.faces
    edges = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])
    edges = np.sort(edges, axis=1)
    unique, counts = np.unique(edges, axis=0, return_counts=True)
    return unique, counts


def is_closed_manifold(mesh: TriangleMesh) -> bool:
    """True when every edge is shared by exactly two faces."""
    if mesh.is_empty:
        return False
    _, counts = edge_face_counts(mesh)
    return bool(np.all(counts == 2))


def euler_characteristic(mesh: TriangleMesh) -> int:
    """V - E + F over vertices actually referenced by faces."""
    if mesh.is_empty:
        return 0
    v = np.unique(mesh.faces).size
    e = edge_face_counts(mesh)[0].shape[0]
    f = mesh.faces.shape[0]
    return int(v - e + f)
