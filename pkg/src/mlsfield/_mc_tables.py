"""Marching-cubes case tables, generated once at import.

Corner and edge numbering follow the standard marching-cubes convention:

    corners: 0:(0,0,0) 1:(1,0,0) 2:(1,1,0) 3:(0,1,0)
             4:(0,0,1) 5:(1,0,1) 6:(1,1,1) 7:(0,1,1)
    edges:   0:(0,1) 1:(1,2) 2:(2,3)  3:(3,0)
             4:(4,5) 5:(5,6) 6:(6,7)  7:(7,4)
             8:(0,4) 9:(1,5) 10:(2,6) 11:(3,7)

For each of the 256 inside/outside corner configurations ("inside" = field
value below the iso level, bit set), the isosurface crosses a fixed set of
cube edges.  The crossing points form closed polygons on the cube surface;
we trace them face by face: on every face the crossings are paired exactly
as 2-D marching squares would pair them, with the ambiguous (saddle) faces
always resolved by separating the inside corners.  Because that choice is a
function of the face's corner signs alone, the two cubes sharing a face
always agree on the pairing, so meshes extracted cell-by-cell are
watertight by construction.  Polygons are fanned into triangles, wound so
triangle normals point from inside (negative) toward outside (positive).

Tables exported:

``EDGE_TABLE[c]``   bitmask of crossed edges for configuration ``c``.
``TRI_TABLE[c]``    flat tuple of edge indices, three per triangle.
``EDGE_BASE``       per edge: offset of its lower grid vertex in the cell.
``EDGE_AXIS``       per edge: axis (0, 1, 2) it runs along.
``CORNER_OFFSETS``  the eight corner offsets above.
"""

from __future__ import annotations

CORNER_OFFSETS = (
    (0, 0, 0), (1, 0, 0), (1, 1, 0), (0, 1, 0),
    (0, 0, 1), (1, 0, 1), (1, 1, 1), (0, 1, 1),
)

EDGE_CORNERS = (
    (0, 1), (1, 2), (2, 3), (3, 0),
    (4, 5), (5, 6), (6, 7), (7, 4),
    (0, 4), (1, 5), (2, 6), (3, 7),
)

EDGE_BASE = tuple(
    tuple(min(CORNER_OFFSETS[a][k], CORNER_OFFSETS[b][k]) for k in range(3))
    for a, b in EDGE_CORNERS
)
EDGE_AXIS = tuple(
    next(k for k in range(3) if CORNER_OFFSETS[a][k] != CORNER_OFFSETS[b][k])
    for a, b in EDGE_CORNERS
)

_OFFSET_TO_CORNER = {off: i for i, off in enumerate(CORNER_OFFSETS)}
_CORNERS_TO_EDGE = {}
for _e, (_a, _b) in enumerate(EDGE_CORNERS):
    _CORNERS_TO_EDGE[(_a, _b)] = _e
    _CORNERS_TO_EDGE[(_b, _a)] = _e


def _faces():
    """Each cube face as (corner ids CCW seen from outside, their 4 edges)."""
    faces = []
    for axis in range(3):
        b, c = (axis + 1) % 3, (axis + 2) % 3
        for side in (0, 1):
            # (u, v) axes chosen so u x v points along the outward normal.
            u, v = (b, c) if side == 1 else (c, b)
            corners = []
            for uu, vv in ((0, 0), (1, 0), (1, 1), (0, 1)):
                off = [0, 0, 0]
                off[axis] = side
                off[u] = uu
                off[v] = vv
                corners.append(_OFFSET_TO_CORNER[tuple(off)])
            edges = [
                _CORNERS_TO_EDGE[(corners[i], corners[(i + 1) % 4])]
                for i in range(4)
            ]
            faces.append((tuple(corners), tuple(edges)))
    return tuple(faces)


_FACES = _faces()


def _segments_for(config: int) -> list[tuple[int, int]]:
    """Directed contour segments (from_edge, to_edge) on the cube surface.

    Direction convention: walking a face's corners counter-clockwise (seen
    from outside the cube), a segment starts at an outside->inside crossing
    and ends at an inside->outside crossing.  Cycles assembled from these
    segments wind counter-clockwise around the outward patch normal, so fan
    triangles point from the inside (negative) region toward the outside.
    """
    inside = [(config >> i) & 1 == 1 for i in range(8)]
    segments = []
    for corners, edges in _FACES:
        crossings = [i for i in range(4)
                     if inside[corners[i]] != inside[corners[(i + 1) % 4]]]
        if len(crossings) == 2:
            i, j = crossings
            if inside[corners[i]]:      # i is the inside->outside crossing
                segments.append((edges[j], edges[i]))
            else:
                segments.append((edges[i], edges[j]))
        elif len(crossings) == 4:
            # Saddle face: always separate the inside corners.
            for i in range(4):
                if inside[corners[i]]:
                    segments.append((edges[i - 1], edges[i]))
    return segments


def _cycles_from(segments: list[tuple[int, int]]) -> list[list[int]]:
    successor = dict(segments)
    assert len(successor) == len(segments), "edge with two outgoing segments"
    cycles = []
    remaining = dict(successor)
    while remaining:
        start = min(remaining)  # deterministic cycle enumeration
        cycle = [start]
        nxt = remaining.pop(start)
        while nxt != start:
            cycle.append(nxt)
            nxt = remaining.pop(nxt)
        cycles.append(cycle)
    return cycles


def _build_tables():
    edge_table = []
    tri_table = []
    for config in range(256):
        segments = _segments_for(config)
        mask = 0
        for a, b in segments:
            mask |= (1 << a) | (1 << b)
        edge_table.append(mask)
        triangles = []
        for cycle in _cycles_from(segments):
            for k in range(1, len(cycle) - 1):
                triangles.extend((cycle[0], cycle[k], cycle[k + 1]))
        tri_table.append(tuple(triangles))
    return tuple(edge_table), tuple(tri_table)


EDGE_TABLE, TRI_TABLE = _build_tables()


def _orientation_check():
    """Fan triangles of configuration 1 (corner 0 inside) must face away
    from corner 0; with midpoint crossings the single triangle spans edges
    0, 3, 8 around the origin corner."""
    tri = TRI_TABLE[1]
    assert len(tri) == 3, tri
    import numpy as np

    mid = {e: (np.add(CORNER_OFFSETS[EDGE_CORNERS[e][0]],
                      CORNER_OFFSETS[EDGE_CORNERS[e][1]]) / 2.0)
           for e in tri}
    a, b, c = (mid[e] for e in tri)
    normal = np.cross(b - a, c - a)
    outward = (a + b + c) / 3.0  # direction away from the inside corner (0,0,0)
    assert float(normal @ outward) > 0, "triangle winding is inverted"


_orientation_check()
