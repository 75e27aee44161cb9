"""Polygonal mesh data model, generators, geometry and file formats.

A mesh is a set of simple counterclockwise polygonal cells tiling a simply
connected domain.  Edges are deduplicated with the canonical orientation
lower-vertex-index -> higher-vertex-index; every edge-based quantity
(quadrature arclength, moment functionals) lives in that frame, so two cells
sharing an edge agree without sign bookkeeping.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass

import numpy as np
from scipy.spatial import Voronoi, cKDTree

from .errors import (
    DanglingVertexReference,
    DegenerateSeedConfiguration,
    InvertedCell,
    NegativeArea,
    NonSimpleCell,
)

log = logging.getLogger(__name__)

UNIT_SQUARE = (0.0, 1.0, 0.0, 1.0)

# Edges shorter than this fraction of the cell diameter get a regularity
# warning (never an error; short edges are legal on polygonal meshes).
_REGULARITY_EDGE_RATIO = 1e-3


@dataclass(frozen=True)
class CellGeometry:
    """Geometric quantities of one cell.

    ``edge_lengths`` and ``edge_normals`` follow the cell's local edge order:
    local edge i joins loop vertex i to loop vertex i+1.  Normals are outward
    unit vectors.
    """

    area: float
    centroid: np.ndarray
    diameter: float
    edge_lengths: np.ndarray
    edge_normals: np.ndarray


class PolyMesh:
    """Immutable polygonal mesh.

    Attributes:
        vertices: (V, 2) float array.
        edges: (E, 2) int array, each row sorted lo < hi, rows sorted
            lexicographically.
        cells: list of int arrays, counterclockwise vertex loops.
        cell_edges: per cell, list of (edge_index, sign); sign is +1 when the
            loop traverses the edge lo -> hi.
        edge_cells: per edge, list of adjacent cell indices (1 or 2).
        boundary_edges: frozenset of edge indices with a single neighbor.
        geometry: list of CellGeometry.
    """

    def __init__(self, vertices, edges, cells, cell_edges, edge_cells,
                 boundary_edges, geometry):
        self.vertices = np.asarray(vertices, dtype=float)
        self.edges = np.asarray(edges, dtype=np.int64)
        self.cells = [np.asarray(c, dtype=np.int64) for c in cells]
        self.cell_edges = cell_edges
        self.edge_cells = edge_cells
        self.boundary_edges = frozenset(boundary_edges)
        self.geometry = geometry
        self.vertices.setflags(write=False)
        self.edges.setflags(write=False)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def n_cells(self) -> int:
        return len(self.cells)

    @property
    def h(self) -> float:
        """Mesh size: maximum cell diameter."""
        return max(g.diameter for g in self.geometry)

    @property
    def domain_area(self) -> float:
        return sum(g.area for g in self.geometry)

    def cell_vertices(self, i: int) -> np.ndarray:
        return self.vertices[self.cells[i]]

    def edge_endpoints(self, e: int):
        """Canonical (lo, hi) endpoint coordinates of edge e."""
        lo, hi = self.edges[e]
        return self.vertices[lo], self.vertices[hi]

    def edge_length(self, e: int) -> float:
        p0, p1 = self.edge_endpoints(e)
        return float(np.hypot(*(p1 - p0)))


def _signed_area(loop: np.ndarray) -> float:
    x, y = loop[:, 0], loop[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def _centroid(loop: np.ndarray):
    x, y = loop[:, 0], loop[:, 1]
    cross = x * np.roll(y, -1) - np.roll(x, -1) * y
    area = 0.5 * cross.sum()
    cx = float(np.sum((x + np.roll(x, -1)) * cross) / (6.0 * area))
    cy = float(np.sum((y + np.roll(y, -1)) * cross) / (6.0 * area))
    return np.array([cx, cy]), float(area)


def _segments_intersect(p, q, r, s) -> bool:
    """Proper or touching intersection of open segments pq and rs."""
    def orient(a, b, c):
        return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])

    d1 = orient(p, q, r)
    d2 = orient(p, q, s)
    d3 = orient(r, s, p)
    d4 = orient(r, s, q)
    if ((d1 > 0) != (d2 > 0)) and ((d3 > 0) != (d4 > 0)):
        return True
    return False


def _is_simple(loop: np.ndarray) -> bool:
    n = len(loop)
    for i in range(n):
        p, q = loop[i], loop[(i + 1) % n]
        for j in range(i + 1, n):
            if j == i or (j + 1) % n == i or (i + 1) % n == j:
                continue
            r, s = loop[j], loop[(j + 1) % n]
            if _segments_intersect(p, q, r, s):
                return False
    return True


def _cell_geometry(loop: np.ndarray) -> CellGeometry:
    centroid, area = _centroid(loop)
    diffs = loop[:, None, :] - loop[None, :, :]
    diameter = float(np.sqrt((diffs ** 2).sum(axis=2).max()))
    tangents = np.roll(loop, -1, axis=0) - loop
    lengths = np.hypot(tangents[:, 0], tangents[:, 1])
    # CCW loop: rotating the unit tangent by -90 degrees points outward.
    normals = np.column_stack([tangents[:, 1], -tangents[:, 0]]) / lengths[:, None]
    return CellGeometry(area=area, centroid=centroid, diameter=diameter,
                        edge_lengths=lengths, edge_normals=normals)


def build_mesh(vertices, cells) -> PolyMesh:
    """Build a validated PolyMesh from raw vertices and cell loops.

    Raises:
        DanglingVertexReference: a loop uses an out-of-range vertex index.
        NegativeArea: a loop is clockwise or degenerate.
        NonSimpleCell: a loop self-intersects.
    """
    vertices = np.asarray(vertices, dtype=float)
    nv = len(vertices)
    loops = [np.asarray(c, dtype=np.int64) for c in cells]

    for ci, loop in enumerate(loops):
        if loop.min(initial=0) < 0 or loop.max(initial=-1) >= nv:
            raise DanglingVertexReference(f"cell {ci} references missing vertex")
        coords = vertices[loop]
        if _signed_area(coords) <= 0.0:
            raise NegativeArea(f"cell {ci} is clockwise or degenerate")
        if not _is_simple(coords):
            raise NonSimpleCell(f"cell {ci} self-intersects")

    # Deduplicate edges with canonical lo < hi orientation, then sort the
    # edge list lexicographically so numbering is content-determined.
    raw = {}
    for loop in loops:
        for a, b in zip(loop, np.roll(loop, -1)):
            key = (int(a), int(b)) if a < b else (int(b), int(a))
            raw.setdefault(key, None)
    edge_list = sorted(raw.keys())
    edge_index = {key: i for i, key in enumerate(edge_list)}

    cell_edges = []
    edge_cells = [[] for _ in edge_list]
    for ci, loop in enumerate(loops):
        local = []
        for a, b in zip(loop, np.roll(loop, -1)):
            a, b = int(a), int(b)
            key = (a, b) if a < b else (b, a)
            ei = edge_index[key]
            local.append((ei, 1 if a < b else -1))
            edge_cells[ei].append(ci)
        cell_edges.append(local)

    for ei, adj in enumerate(edge_cells):
        if not 1 <= len(adj) <= 2:
            raise NonSimpleCell(
                f"edge {ei} is shared by {len(adj)} cells (non-manifold mesh)")
    boundary = {ei for ei, adj in enumerate(edge_cells) if len(adj) == 1}

    geometry = [_cell_geometry(vertices[loop]) for loop in loops]
    for ci, geo in enumerate(geometry):
        ratio = geo.edge_lengths.min() / geo.diameter
        if ratio < _REGULARITY_EDGE_RATIO:
            log.warning("cell %d has edge/diameter ratio %.2e", ci, ratio)

    return PolyMesh(vertices, np.array(edge_list, dtype=np.int64), loops,
                    cell_edges, edge_cells, boundary, geometry)


# --- generators ----------------------------------------------------------

def gen_quad_grid(nx: int, ny: int, bounds=UNIT_SQUARE) -> PolyMesh:
    """Structured nx-by-ny grid of quadrilateral cells."""
    x0, x1, y0, y1 = bounds
    xs = np.linspace(x0, x1, nx + 1)
    ys = np.linspace(y0, y1, ny + 1)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    vertices = np.column_stack([X.ravel(), Y.ravel()])

    def vid(i, j):
        return i * (ny + 1) + j

    cells = []
    for i in range(nx):
        for j in range(ny):
            cells.append([vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)])
    return build_mesh(vertices, cells)


def gen_distorted_quads(nx: int, ny: int, amplitude: float, rng_seed: int = 0,
                        bounds=UNIT_SQUARE) -> PolyMesh:
    """Quad grid with interior vertices perturbed by +-amplitude per axis.

    Boundary vertices stay put, so the mesh boundary is exactly the domain
    boundary.  Callers must keep amplitude below half the smallest grid step
    or cells can invert (reported as InvertedCell).
    """
    x0, x1, y0, y1 = bounds
    xs = np.linspace(x0, x1, nx + 1)
    ys = np.linspace(y0, y1, ny + 1)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    vertices = np.column_stack([X.ravel(), Y.ravel()])

    interior = np.ones(len(vertices), dtype=bool)
    gi = np.arange(len(vertices)).reshape(nx + 1, ny + 1)
    interior[gi[0, :]] = interior[gi[-1, :]] = False
    interior[gi[:, 0]] = interior[gi[:, -1]] = False

    rng = np.random.default_rng(rng_seed)
    shift = rng.uniform(-amplitude, amplitude, size=(int(interior.sum()), 2))
    vertices[interior] += shift

    def vid(i, j):
        return i * (ny + 1) + j

    cells = []
    for i in range(nx):
        for j in range(ny):
            cells.append([vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)])
    for ci, cell in enumerate(cells):
        if _signed_area(vertices[np.asarray(cell)]) <= 0.0:
            raise InvertedCell(f"cell {ci} inverted after perturbation")
    return build_mesh(vertices, cells)


def _clipped_voronoi_polygons(seeds: np.ndarray, bounds):
    """Voronoi cells of the seeds, clipped exactly to a rectangle.

    Reflecting every seed across the four walls makes the cells of the
    original seeds bounded and tiles the rectangle exactly; the wall and
    corner vertices come out of Qhull as shared vertex indices.
    """
    x0, x1, y0, y1 = bounds
    mirror = [seeds.copy() for _ in range(4)]
    mirror[0][:, 0] = 2 * x0 - seeds[:, 0]
    mirror[1][:, 0] = 2 * x1 - seeds[:, 0]
    mirror[2][:, 1] = 2 * y0 - seeds[:, 1]
    mirror[3][:, 1] = 2 * y1 - seeds[:, 1]
    cloud = np.vstack([seeds] + mirror)
    vor = Voronoi(cloud)

    polys = []
    for i in range(len(seeds)):
        region = vor.regions[vor.point_region[i]]
        if -1 in region:
            raise DegenerateSeedConfiguration(
                f"unbounded Voronoi cell for seed {i}")
        poly = vor.vertices[np.asarray(region, dtype=int)]
        if _signed_area(poly) < 0.0:
            poly = poly[::-1]
        polys.append(poly)
    return polys


def gen_voronoi_polygonal(n_seeds: int, lloyd_iters: int = 0, rng_seed: int = 0,
                          bounds=UNIT_SQUARE) -> PolyMesh:
    """Clipped Voronoi tessellation, optionally Lloyd-relaxed.

    Deterministic for a fixed rng_seed: the seed stream, Qhull and the
    vertex merge are all pure functions of the inputs.
    """
    x0, x1, y0, y1 = bounds
    rng = np.random.default_rng(rng_seed)
    seeds = np.column_stack([rng.uniform(x0, x1, n_seeds),
                             rng.uniform(y0, y1, n_seeds)])
    if n_seeds >= 2:
        dist, _ = cKDTree(seeds).query(seeds, k=2)
        if dist[:, 1].min() < 1e-12:
            raise DegenerateSeedConfiguration("two seeds coincide within 1e-12")

    polys = _clipped_voronoi_polygons(seeds, bounds)
    for _ in range(lloyd_iters):
        seeds = np.array([_centroid(p)[0] for p in polys])
        polys = _clipped_voronoi_polygons(seeds, bounds)

    # Snap wall-adjacent coordinates onto the walls, then merge vertices
    # globally on a quantization grid so neighbors index identical points.
    scale = max(x1 - x0, y1 - y0)
    snap = 1e-9 * scale
    quant = 1e-9 * scale
    merged: dict[tuple[int, int], int] = {}
    vertices: list[np.ndarray] = []
    cells = []
    for poly in polys:
        p = poly.copy()
        for k, wall in ((0, x0), (0, x1), (1, y0), (1, y1)):
            close = np.abs(p[:, k] - wall) < snap
            p[close, k] = wall
        loop = []
        for v in p:
            key = (int(round(v[0] / quant)), int(round(v[1] / quant)))
            vi = merged.get(key)
            if vi is None:
                vi = len(vertices)
                merged[key] = vi
                vertices.append(v)
            loop.append(vi)
        # quantization can collapse near-duplicate corners
        dedup = [loop[i] for i in range(len(loop)) if loop[i] != loop[i - 1]]
        cells.append(dedup)
    return build_mesh(np.array(vertices), cells)


# --- file formats --------------------------------------------------------

def write_mesh_json(mesh: PolyMesh, path) -> None:
    payload = {
        "vertices": [[float(x), float(y)] for x, y in mesh.vertices],
        "cells": [[int(v) for v in cell] for cell in mesh.cells],
    }
    with open(path, "w") as fh:
        json.dump(payload, fh)
        fh.write("\n")


def read_mesh_json(path) -> PolyMesh:
    with open(path) as fh:
        payload = json.load(fh)
    return build_mesh(np.asarray(payload["vertices"], dtype=float),
                      payload["cells"])


def write_mesh_vtk(mesh: PolyMesh, path, cell_data=None, point_data=None) -> None:
    """Legacy-VTK POLYDATA writer (z = 0), optional per-cell scalar fields."""
    lines = [
        "# vtk DataFile Version 3.0",
        "ncvem polygonal mesh",
        "ASCII",
        "DATASET POLYDATA",
        f"POINTS {mesh.n_vertices} double",
    ]
    lines += [f"{x:.17g} {y:.17g} 0" for x, y in mesh.vertices]
    size = sum(len(c) + 1 for c in mesh.cells)
    lines.append(f"POLYGONS {mesh.n_cells} {size}")
    lines += [" ".join([str(len(c))] + [str(int(v)) for v in c]) for c in mesh.cells]
    if cell_data:
        lines.append(f"CELL_DATA {mesh.n_cells}")
        for name, values in cell_data.items():
            lines.append(f"SCALARS {name} double 1")
            lines.append("LOOKUP_TABLE default")
            lines += [f"{v:.17g}" for v in values]
    if point_data:
        lines.append(f"POINT_DATA {mesh.n_vertices}")
        for name, values in point_data.items():
            values = np.asarray(values)
            if values.ndim == 2:
                lines.append(f"VECTORS {name} double")
                lines += [f"{v[0]:.17g} {v[1]:.17g} 0" for v in values]
            else:
                lines.append(f"SCALARS {name} double 1")
                lines.append("LOOKUP_TABLE default")
                lines += [f"{v:.17g}" for v in values]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
