"""Meshes, auxiliary polygonal subdivisions, overlap tables, point location,
and a plain-text mesh format.

A Mesh holds T3, Q4, or Q9 elements over a polygonal domain together with
tagged boundary edges (D = displacement-constrained, N = traction).
Subdivision values partition the same domain into convex cells:

  * elementwise  - one cell per element,
  * subtriangle  - four triangles per quad (corner pair + center),
  * edge_based   - one cell per mesh edge (endpoints + element centers),
  * interior     - per-element cells joining the center and edge midpoints,
  * node_based   - the interior cells regrouped around mesh nodes.

Overlap tables store exact pairwise intersection areas between two
subdivisions, computed by convex polygon clipping.
"""

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .geometry import clip_convex, is_convex, polygon_area

__all__ = [
    "MeshError",
    "MeshIOError",
    "Mesh",
    "Subdivision",
    "OverlapTable",
    "generate_regular_tri",
    "generate_regular_quad",
    "generate_regular_q9",
    "distort_mesh",
    "transform_mesh",
    "with_boundary_tag",
    "build_elementwise_subdivision",
    "build_quad_subtriangles",
    "build_edge_subdivision",
    "build_interior_subdivision",
    "build_node_subdivision",
    "compute_overlaps",
    "locate_point",
    "locate_points",
    "write_mesh",
    "read_mesh",
    "TRI_PATTERNS",
]


class MeshError(ValueError):
    """Invalid mesh topology or geometry."""


class MeshIOError(ValueError):
    """Malformed mesh file."""


_NODES_PER_KIND = {"t3": 3, "q4": 4, "q9": 9}
# local edges run between consecutive corner nodes, counterclockwise
_EDGES_PER_KIND = {"t3": 3, "q4": 4, "q9": 4}

TRI_PATTERNS = ("slash", "backslash", "union_jack")


class Mesh:
    """Immutable 2D mesh of uniform element kind with tagged boundary.

    Args:
        kind: "t3", "q4", or "q9".
        vertices: (nv, 2) float array.
        elements: (ne, k) int array, corner nodes counterclockwise
            (Q9 adds midside nodes 4..7 and the center node 8).
        boundary_edges: (nb, 2) int array of corner-vertex pairs.
        boundary_tags: length-nb sequence of "D" or "N".
    """

    def __init__(self, kind, vertices, elements, boundary_edges, boundary_tags):
        if kind not in _NODES_PER_KIND:
            raise MeshError(f"unknown element kind {kind!r}")
        self.kind = kind
        self.vertices = np.ascontiguousarray(vertices, dtype=float)
        self.elements = np.ascontiguousarray(elements, dtype=np.int64)
        self.boundary_edges = np.ascontiguousarray(boundary_edges, dtype=np.int64).reshape(-1, 2)
        self.boundary_tags = np.asarray(list(boundary_tags), dtype="U1")
        self._validate()
        for arr in (self.vertices, self.elements, self.boundary_edges, self.boundary_tags):
            arr.setflags(write=False)

    # -- basic counts ------------------------------------------------------

    @property
    def n_vertices(self):
        return self.vertices.shape[0]

    @property
    def n_elements(self):
        return self.elements.shape[0]

    @property
    def corner_count(self):
        return _EDGES_PER_KIND[self.kind]

    def element_corners(self, ei):
        """Corner coordinates of element ei, counterclockwise."""
        return self.vertices[self.elements[ei, :self.corner_count]]

    # -- validation --------------------------------------------------------

    def _validate(self):
        nv = self.n_vertices
        k = _NODES_PER_KIND[self.kind]
        if self.vertices.ndim != 2 or self.vertices.shape[1] != 2:
            raise MeshError("vertices must be an (nv, 2) array")
        if not np.all(np.isfinite(self.vertices)):
            raise MeshError("vertex coordinates must be finite")
        if self.elements.ndim != 2 or self.elements.shape[1] != k:
            raise MeshError(f"{self.kind} elements need {k} nodes each")
        if self.n_elements == 0:
            raise MeshError("mesh has no elements")
        if self.elements.min() < 0 or self.elements.max() >= nv:
            raise MeshError("element node index out of range")
        if len(self.boundary_tags) != len(self.boundary_edges):
            raise MeshError("boundary edge/tag count mismatch")
        bad = set(self.boundary_tags) - {"D", "N"}
        if bad:
            raise MeshError(f"unknown boundary tags {sorted(bad)}")

        for ei in range(self.n_elements):
            corners = self.element_corners(ei)
            area = polygon_area(corners)
            if not area > 0.0:
                raise MeshError(f"element {ei} has non-positive area {area}")
            if self.kind in ("q4", "q9"):
                d = np.roll(corners, -1, axis=0) - corners
                dn = np.roll(d, -1, axis=0)
                cross = d[:, 0] * dn[:, 1] - d[:, 1] * dn[:, 0]
                if np.any(cross <= 0.0):
                    raise MeshError(f"element {ei} is not a convex quad")

        # conformity: each corner edge belongs to at most two elements, and
        # single-incidence edges must exactly match the tagged boundary
        counts = {}
        ek = self.corner_count
        for ei in range(self.n_elements):
            conn = self.elements[ei]
            for le in range(ek):
                key = _edge_key(conn[le], conn[(le + 1) % ek])
                counts[key] = counts.get(key, 0) + 1
                if counts[key] > 2:
                    raise MeshError(f"edge {key} shared by more than two elements")
        boundary = {k_ for k_, c in counts.items() if c == 1}
        tagged = [_edge_key(a, b) for a, b in self.boundary_edges]
        if len(set(tagged)) != len(tagged):
            raise MeshError("a boundary edge is tagged more than once")
        if set(tagged) != boundary:
            missing = sorted(boundary - set(tagged))[:3]
            extra = sorted(set(tagged) - boundary)[:3]
            raise MeshError(
                f"boundary edges do not cover the topological boundary "
                f"(missing {missing}, extra {extra})")

    # -- cached topology ---------------------------------------------------

    @cached_property
    def _edge_data(self):
        ek = self.corner_count
        edge_of = {}
        edges = []
        edge_elements = []
        elem_edge_ids = np.empty((self.n_elements, ek), dtype=np.int64)
        for ei in range(self.n_elements):
            conn = self.elements[ei]
            for le in range(ek):
                a, b = int(conn[le]), int(conn[(le + 1) % ek])
                key = _edge_key(a, b)
                idx = edge_of.get(key)
                if idx is None:
                    idx = len(edges)
                    edge_of[key] = idx
                    edges.append((a, b))
                    edge_elements.append([ei, -1])
                else:
                    edge_elements[idx][1] = ei
                elem_edge_ids[ei, le] = idx
        return (np.array(edges, dtype=np.int64),
                np.array(edge_elements, dtype=np.int64),
                elem_edge_ids)

    @property
    def edges(self):
        """(n_edges, 2) vertex pairs, oriented ccw as first traversed."""
        return self._edge_data[0]

    @property
    def edge_elements(self):
        """(n_edges, 2) incident elements; second entry -1 on the boundary."""
        return self._edge_data[1]

    @property
    def element_edge_ids(self):
        """(ne, k) global edge index of each local edge."""
        return self._edge_data[2]

    @cached_property
    def element_neighbors(self):
        """(ne, k) neighbor element across each local edge, -1 if none."""
        edge_elems = self.edge_elements
        ids = self.element_edge_ids
        out = np.empty_like(ids)
        for ei in range(self.n_elements):
            for le in range(ids.shape[1]):
                e1, e2 = edge_elems[ids[ei, le]]
                out[ei, le] = e2 if e1 == ei else e1
        return out

    @cached_property
    def element_areas(self):
        return np.array([polygon_area(self.element_corners(ei))
                         for ei in range(self.n_elements)])

    @cached_property
    def element_centers(self):
        """Corner-average reference points (centroid for T3)."""
        ek = self.corner_count
        return np.array([self.vertices[self.elements[ei, :ek]].mean(axis=0)
                         for ei in range(self.n_elements)])

    @cached_property
    def domain_area(self):
        return float(self.element_areas.sum())

    @cached_property
    def boundary_vertices(self):
        return set(int(v) for v in self.boundary_edges.ravel())

    @cached_property
    def dirichlet_vertices(self):
        """Vertices carried by D-tagged edges (midside nodes included for Q9)."""
        keyed = {}
        if self.kind == "q9":
            for ei in range(self.n_elements):
                conn = self.elements[ei]
                for le in range(4):
                    key = _edge_key(conn[le], conn[(le + 1) % 4])
                    keyed[key] = int(conn[4 + le])
        verts = set()
        for (a, b), tag in zip(self.boundary_edges, self.boundary_tags):
            if tag == "D":
                verts.add(int(a))
                verts.add(int(b))
                mid = keyed.get(_edge_key(a, b))
                if mid is not None:
                    verts.add(mid)
        return verts

    @cached_property
    def _bins(self):
        lo = self.vertices.min(axis=0)
        hi = self.vertices.max(axis=0)
        span = np.maximum(hi - lo, 1e-300)
        n = max(1, int(np.sqrt(self.n_elements)))
        buckets = {}
        for ei in range(self.n_elements):
            pts = self.element_corners(ei)
            i0, j0 = _bin_of(pts.min(axis=0), lo, span, n)
            i1, j1 = _bin_of(pts.max(axis=0), lo, span, n)
            for i in range(i0, i1 + 1):
                for j in range(j0, j1 + 1):
                    buckets.setdefault((i, j), []).append(ei)
        return lo, span, n, buckets

    def _candidates(self, p):
        lo, span, n, buckets = self._bins
        i, j = _bin_of(np.asarray(p, dtype=float), lo, span, n)
        return buckets.get((i, j), [])


def _edge_key(a, b):
    a, b = int(a), int(b)
    return (a, b) if a < b else (b, a)


def _bin_of(p, lo, span, n):
    ij = np.floor((p - lo) / span * n).astype(int)
    return int(np.clip(ij[0], 0, n - 1)), int(np.clip(ij[1], 0, n - 1))


# ---------------------------------------------------------------------------
# structured generators

def _check_domain(domain):
    x0, y0, x1, y1 = (float(v) for v in domain)
    if not (x1 > x0 and y1 > y0):
        raise MeshError(f"degenerate domain rectangle {domain}")
    return x0, y0, x1, y1


def _grid(n, domain):
    x0, y0, x1, y1 = _check_domain(domain)
    xs = np.linspace(x0, x1, n + 1)
    ys = np.linspace(y0, y1, n + 1)
    verts = np.array([[x, y] for y in ys for x in xs])
    return verts, lambda i, j: j * (n + 1) + i


def _rect_boundary(n, vid, step=1):
    """Boundary edges of an n x n grid, bottom tagged D, the rest N."""
    edges, tags = [], []
    for i in range(n):
        edges.append((vid(step * i, 0), vid(step * (i + 1), 0)))
        tags.append("D")
    for j in range(n):
        edges.append((vid(step * n, step * j), vid(step * n, step * (j + 1))))
        tags.append("N")
    for i in range(n, 0, -1):
        edges.append((vid(step * i, step * n), vid(step * (i - 1), step * n)))
        tags.append("N")
    for j in range(n, 0, -1):
        edges.append((vid(0, step * j), vid(0, step * (j - 1))))
        tags.append("N")
    return edges, tags


def generate_regular_tri(n, pattern="union_jack", domain=(0.0, 0.0, 1.0, 1.0)):
    """n x n grid of squares split into two triangles each.

    pattern picks the split diagonal: "slash" (lower-left to upper-right),
    "backslash", or "union_jack" (diagonal alternates with checkerboard
    parity).  The bottom side is tagged D, the rest N.
    """
    if n < 1:
        raise MeshError(f"grid size must be >= 1, got {n}")
    if pattern not in TRI_PATTERNS:
        raise MeshError(f"unknown triangulation pattern {pattern!r}")
    verts, vid = _grid(n, domain)
    elements = []
    for j in range(n):
        for i in range(n):
            ll, lr = vid(i, j), vid(i + 1, j)
            ur, ul = vid(i + 1, j + 1), vid(i, j + 1)
            slash = pattern == "slash" or (pattern == "union_jack" and (i + j) % 2 == 0)
            if slash:
                elements.append((ll, lr, ur))
                elements.append((ll, ur, ul))
            else:
                elements.append((ll, lr, ul))
                elements.append((lr, ur, ul))
    edges, tags = _rect_boundary(n, vid)
    return Mesh("t3", verts, np.array(elements), np.array(edges), tags)


def generate_regular_quad(n, domain=(0.0, 0.0, 1.0, 1.0)):
    """n x n mesh of axis-aligned quadrilaterals, bottom side tagged D."""
    if n < 1:
        raise MeshError(f"grid size must be >= 1, got {n}")
    verts, vid = _grid(n, domain)
    elements = [(vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1))
                for j in range(n) for i in range(n)]
    edges, tags = _rect_boundary(n, vid)
    return Mesh("q4", verts, np.array(elements), np.array(edges), tags)


def generate_regular_q9(n, domain=(0.0, 0.0, 1.0, 1.0)):
    """n x n mesh of 9-node quadrilaterals ((2n+1)^2 vertices)."""
    if n < 1:
        raise MeshError(f"grid size must be >= 1, got {n}")
    verts, vid = _grid(2 * n, domain)
    elements = []
    for j in range(n):
        for i in range(n):
            a, b = 2 * i, 2 * j
            elements.append((
                vid(a, b), vid(a + 2, b), vid(a + 2, b + 2), vid(a, b + 2),
                vid(a + 1, b), vid(a + 2, b + 1), vid(a + 1, b + 2), vid(a, b + 1),
                vid(a + 1, b + 1)))
    edges, tags = _rect_boundary(n, vid, step=2)
    return Mesh("q9", verts, np.array(elements), np.array(edges), tags)


# ---------------------------------------------------------------------------
# mesh modifiers

def distort_mesh(mesh, magnitude, seed):
    """Reposition interior vertices by a seeded uniform perturbation.

    Each interior vertex moves by at most magnitude times its shortest
    incident edge; displacement components are drawn uniformly and
    redrawn (up to 50 times) until every incident element stays valid.
    Boundary vertices never move.
    """
    if not 0.0 <= magnitude < 0.5:
        raise MeshError(f"distortion magnitude must lie in [0, 0.5), got {magnitude}")
    if mesh.kind == "q9":
        raise MeshError("distortion of 9-node meshes is not supported")
    if magnitude == 0.0:
        return mesh

    ek = mesh.corner_count
    incident = [[] for _ in range(mesh.n_vertices)]
    local_h = np.full(mesh.n_vertices, np.inf)
    for ei in range(mesh.n_elements):
        conn = mesh.elements[ei]
        for le in range(ek):
            a, b = int(conn[le]), int(conn[(le + 1) % ek])
            length = float(np.linalg.norm(mesh.vertices[a] - mesh.vertices[b]))
            local_h[a] = min(local_h[a], length)
            local_h[b] = min(local_h[b], length)
        for v in conn:
            incident[int(v)].append(ei)

    rng = np.random.default_rng(seed)
    new_verts = mesh.vertices.copy()
    interior = [v for v in range(mesh.n_vertices) if v not in mesh.boundary_vertices]

    def element_ok(ei):
        corners = new_verts[mesh.elements[ei, :ek]]
        area = polygon_area(corners)
        if not area > 0.0:
            return False
        if mesh.kind == "q4":
            d = np.roll(corners, -1, axis=0) - corners
            dn = np.roll(d, -1, axis=0)
            cross = d[:, 0] * dn[:, 1] - d[:, 1] * dn[:, 0]
            if np.any(cross <= 0.0):
                return False
        return True

    for v in interior:
        base = mesh.vertices[v]
        for _ in range(50):
            delta = (2.0 * rng.random(2) - 1.0) * magnitude * local_h[v]
            new_verts[v] = base + delta
            if all(element_ok(ei) for ei in incident[v]):
                break
        else:
            raise MeshError(f"could not place distorted vertex {v} after 50 draws")

    return Mesh(mesh.kind, new_verts, mesh.elements, mesh.boundary_edges,
                mesh.boundary_tags)


def transform_mesh(mesh, matrix, shift=(0.0, 0.0)):
    """Apply an orientation-preserving affine map to all vertices."""
    matrix = np.asarray(matrix, dtype=float).reshape(2, 2)
    if np.linalg.det(matrix) <= 0.0:
        raise MeshError("affine map must preserve orientation")
    verts = mesh.vertices @ matrix.T + np.asarray(shift, dtype=float)
    return Mesh(mesh.kind, verts, mesh.elements, mesh.boundary_edges,
                mesh.boundary_tags)


def with_boundary_tag(mesh, tag):
    """Copy of the mesh with every boundary edge retagged (for patch tests)."""
    tags = [tag] * len(mesh.boundary_edges)
    return Mesh(mesh.kind, mesh.vertices, mesh.elements, mesh.boundary_edges, tags)


# ---------------------------------------------------------------------------
# subdivisions

@dataclass
class Subdivision:
    """Convex-cell partition of the mesh domain.

    Cell values may be shared between cells: groups maps each cell to its
    value slot (identity for everything except the node-based regrouping).
    """

    kind: str
    cells: list
    areas: np.ndarray
    parents: list
    domain_area: float
    groups: np.ndarray
    n_groups: int
    group_areas: np.ndarray

    @property
    def n_cells(self):
        return len(self.cells)


def _make_subdivision(kind, cells, parents, domain_area, groups=None):
    areas = np.array([polygon_area(c) for c in cells])
    if np.any(areas <= 0.0):
        bad = int(np.argmin(areas))
        raise MeshError(f"subdivision cell {bad} has non-positive area")
    for idx, c in enumerate(cells):
        if not is_convex(c):
            raise MeshError(f"subdivision cell {idx} is not convex")
    total = float(areas.sum())
    if abs(total - domain_area) > 1e-12 * max(domain_area, 1.0):
        raise MeshError(
            f"subdivision cells sum to {total}, expected domain area {domain_area}")
    if groups is None:
        groups = np.arange(len(cells), dtype=np.int64)
        n_groups = len(cells)
    else:
        groups = np.asarray(groups, dtype=np.int64)
        n_groups = int(groups.max()) + 1 if len(groups) else 0
    group_areas = np.zeros(n_groups)
    np.add.at(group_areas, groups, areas)
    frozen = []
    for c in cells:
        c = np.asarray(c, dtype=float)
        c.setflags(write=False)
        frozen.append(c)
    for arr in (areas, groups, group_areas):
        arr.setflags(write=False)
    return Subdivision(kind=kind, cells=frozen, areas=areas, parents=parents,
                       domain_area=domain_area, groups=groups, n_groups=n_groups,
                       group_areas=group_areas)


def build_elementwise_subdivision(mesh):
    """One cell per element (the piecewise-constant strain partition)."""
    if mesh.kind not in ("t3", "q4"):
        raise MeshError("elementwise subdivision needs a T3 or Q4 mesh")
    cells = [mesh.element_corners(ei) for ei in range(mesh.n_elements)]
    parents = [("element", ei) for ei in range(mesh.n_elements)]
    return _make_subdivision("elementwise", cells, parents, mesh.domain_area)


def build_quad_subtriangles(mesh):
    """Four triangles per quad element, apex at the corner-average center."""
    if mesh.kind != "q4":
        raise MeshError("subtriangle subdivision needs a Q4 mesh")
    cells, parents = [], []
    for ei in range(mesh.n_elements):
        corners = mesh.element_corners(ei)
        center = corners.mean(axis=0)
        for i in range(4):
            cells.append(np.array([corners[i], corners[(i + 1) % 4], center]))
            parents.append(("subtriangle", ei, i))
    return _make_subdivision("subtriangle", cells, parents, mesh.domain_area)


def build_edge_subdivision(mesh):
    """One cell per mesh edge: endpoints joined with the adjacent element
    centers (a quadrilateral inside the mesh, a triangle on the boundary)."""
    if mesh.kind not in ("t3", "q4"):
        raise MeshError("edge subdivision needs a T3 or Q4 mesh")
    centers = mesh.element_centers
    cells, parents = [], []
    for edge_id, ((a, b), (e1, e2)) in enumerate(zip(mesh.edges, mesh.edge_elements)):
        pa, pb = mesh.vertices[a], mesh.vertices[b]
        c1 = centers[e1]
        if e2 >= 0:
            # e1 lies left of a->b, e2 right; ccw order walks the right side first
            cells.append(np.array([pa, centers[e2], pb, c1]))
        else:
            cells.append(np.array([pa, pb, c1]))
        parents.append(("edge", edge_id, int(e1), int(e2)))
    return _make_subdivision("edge_based", cells, parents, mesh.domain_area)


def _interior_cells(mesh):
    ek = mesh.corner_count
    cells, parents = [], []
    for ei in range(mesh.n_elements):
        corners = mesh.element_corners(ei)
        center = corners.mean(axis=0)
        mids = 0.5 * (corners + np.roll(corners, -1, axis=0))
        for i in range(ek):
            cells.append(np.array([corners[i], mids[i], center, mids[i - 1]]))
            parents.append(("element_cell", ei, i))
    return cells, parents


def build_interior_subdivision(mesh):
    """Per-element cells joining the center with the edge midpoints
    (three quads per triangle, four per quad)."""
    if mesh.kind not in ("t3", "q4"):
        raise MeshError("interior subdivision needs a T3 or Q4 mesh")
    cells, parents = _interior_cells(mesh)
    return _make_subdivision("interior", cells, parents, mesh.domain_area)


def build_node_subdivision(mesh):
    """Interior cells regrouped by the mesh node they contain (NS-FEM cells).

    The cell polygons coincide with the interior subdivision; cells around
    the same node share one value slot.
    """
    if mesh.kind != "t3":
        raise MeshError("node-based subdivision needs a T3 mesh")
    cells, raw_parents = _interior_cells(mesh)
    nodes = [int(mesh.elements[ei, i]) for (_, ei, i) in raw_parents]
    used = sorted(set(nodes))
    slot = {v: g for g, v in enumerate(used)}
    groups = np.array([slot[v] for v in nodes], dtype=np.int64)
    parents = [("node", v, ei) for (v, (_, ei, _i)) in zip(nodes, raw_parents)]
    sub = _make_subdivision("node_based", cells, parents, mesh.domain_area,
                            groups=groups)
    sub.group_nodes = np.array(used, dtype=np.int64)
    return sub


# ---------------------------------------------------------------------------
# overlaps

@dataclass
class OverlapTable:
    """Pairwise intersection areas between two subdivisions.

    table is (n_fine_cells, n_coarse_cells) CSR; row sums reproduce the
    fine-cell areas and column sums the coarse-cell areas.
    """

    table: sp.csr_matrix
    fine_areas: np.ndarray
    coarse_areas: np.ndarray


def compute_overlaps(fine, coarse):
    """Exact convex-clipping overlap areas between two partitions.

    Both subdivisions must cover the same domain.  Intersections with
    area below 1e-14 times the smaller of the two cell areas are dropped.
    """
    if abs(fine.domain_area - coarse.domain_area) > 1e-12 * max(coarse.domain_area, 1.0):
        raise MeshError("subdivisions do not partition the same domain")

    boxes = np.array([[c[:, 0].min(), c[:, 1].min(), c[:, 0].max(), c[:, 1].max()]
                      for c in coarse.cells])
    lo = boxes[:, :2].min(axis=0)
    hi = boxes[:, 2:].max(axis=0)
    span = np.maximum(hi - lo, 1e-300)
    n = max(1, int(np.sqrt(coarse.n_cells)))
    buckets = {}
    for ci, box in enumerate(boxes):
        i0, j0 = _bin_of(box[:2], lo, span, n)
        i1, j1 = _bin_of(box[2:], lo, span, n)
        for i in range(i0, i1 + 1):
            for j in range(j0, j1 + 1):
                buckets.setdefault((i, j), []).append(ci)

    rows, cols, vals = [], [], []
    for fi, poly in enumerate(fine.cells):
        fmin, fmax = poly.min(axis=0), poly.max(axis=0)
        i0, j0 = _bin_of(fmin, lo, span, n)
        i1, j1 = _bin_of(fmax, lo, span, n)
        seen = set()
        for i in range(i0, i1 + 1):
            for j in range(j0, j1 + 1):
                seen.update(buckets.get((i, j), ()))
        for ci in sorted(seen):
            box = boxes[ci]
            if box[0] > fmax[0] or box[2] < fmin[0] or box[1] > fmax[1] or box[3] < fmin[1]:
                continue
            inter = clip_convex(poly, coarse.cells[ci])
            if len(inter) < 3:
                continue
            area = polygon_area(inter)
            if area > 1e-14 * min(fine.areas[fi], coarse.areas[ci]):
                rows.append(fi)
                cols.append(ci)
                vals.append(area)

    table = sp.csr_matrix((vals, (rows, cols)), shape=(fine.n_cells, coarse.n_cells))
    row_sums = np.asarray(table.sum(axis=1)).ravel()
    col_sums = np.asarray(table.sum(axis=0)).ravel()
    if not np.allclose(row_sums, fine.areas, rtol=1e-12, atol=1e-14 * fine.areas.max()):
        raise MeshError("overlap row sums do not reproduce the fine-cell areas")
    if not np.allclose(col_sums, coarse.areas, rtol=1e-12, atol=1e-14 * coarse.areas.max()):
        raise MeshError("overlap column sums do not reproduce the coarse-cell areas")
    return OverlapTable(table=table, fine_areas=fine.areas.copy(),
                        coarse_areas=coarse.areas.copy())


# ---------------------------------------------------------------------------
# point location

_INSIDE_TOL = 1e-9  # natural-coordinate slack for boundary points


def locate_point(mesh, p):
    """Containing element and natural coordinates of a point.

    Natural coordinates are reference-triangle (xi, eta) for T3 and
    (r, s) in [-1, 1]^2 for Q4/Q9.  When several elements contain the
    point (vertices, edges) the lowest element index wins.
    """
    p = np.asarray(p, dtype=float)
    candidates = mesh._candidates(p)
    hit, diverged = _first_hit(mesh, candidates, p)
    if hit is None:
        hit, div2 = _first_hit(mesh, range(mesh.n_elements), p)
        diverged = diverged or div2
    if hit is None:
        if diverged:
            raise MeshError(
                f"natural-coordinate inversion did not converge for point {p.tolist()}")
        raise MeshError(f"point {p.tolist()} lies outside the mesh")
    return hit


def _first_hit(mesh, candidates, p):
    diverged = False
    for ei in candidates:
        nat = _natural_coords(mesh, int(ei), p)
        if nat is _DIVERGED:
            diverged = True
        elif nat is not None:
            return (int(ei), nat), diverged
    return None, diverged


_DIVERGED = object()  # sentinel: Newton failed for this candidate


def _natural_coords(mesh, ei, p):
    if mesh.kind == "t3":
        coords = mesh.element_corners(ei)
        m = np.column_stack([coords[1] - coords[0], coords[2] - coords[0]])
        try:
            xi = np.linalg.solve(m, p - coords[0])
        except np.linalg.LinAlgError:
            return _DIVERGED
        if xi[0] >= -_INSIDE_TOL and xi[1] >= -_INSIDE_TOL and xi.sum() <= 1.0 + _INSIDE_TOL:
            return xi
        return None

    from .elements import q4_shape, q9_shape
    shape = q4_shape if mesh.kind == "q4" else q9_shape
    coords = mesh.vertices[mesh.elements[ei]]
    rs = np.zeros(2)
    converged = False
    for _ in range(50):
        N, dN = shape(rs)
        residual = p - N @ coords
        J = coords.T @ dN
        det = J[0, 0] * J[1, 1] - J[0, 1] * J[1, 0]
        if abs(det) < 1e-300:
            return _DIVERGED
        delta = np.array([J[1, 1] * residual[0] - J[0, 1] * residual[1],
                          -J[1, 0] * residual[0] + J[0, 0] * residual[1]]) / det
        step = np.abs(delta).max()
        if step > 0.5:
            delta *= 0.5 / step
        rs = rs + delta
        if step < 1e-12:
            converged = True
            break
    if not converged:
        return _DIVERGED
    if np.all(np.abs(rs) <= 1.0 + _INSIDE_TOL):
        return rs
    return None


def locate_points(mesh, pts):
    """Vectorized locate_point for an (n, 2) batch.

    Returns (element indices (n,), natural coordinates (n, 2)).  The
    tie-break (lowest containing element index) matches locate_point.
    """
    pts = np.asarray(pts, dtype=float).reshape(-1, 2)
    n = len(pts)
    idx = np.full(n, -1, dtype=np.int64)
    nat = np.full((n, 2), np.nan)
    cands = [mesh._candidates(p) for p in pts]
    rank = 0
    pending = np.arange(n)
    while len(pending):
        has = np.array([len(cands[i]) > rank for i in pending])
        active = pending[has]
        if len(active) == 0:
            break
        eids = np.array([cands[i][rank] for i in active], dtype=np.int64)
        ok, rs = _contain_batch(mesh, eids, pts[active])
        hits = active[ok]
        idx[hits] = eids[ok]
        nat[hits] = rs[ok]
        pending = np.setdiff1d(pending, hits, assume_unique=True)
        pending = pending[[len(cands[i]) > rank + 1 for i in pending]] \
            if len(pending) else pending
        rank += 1
    # rare fallback: brute-force scan for anything the bins missed
    for i in np.flatnonzero(idx < 0):
        idx[i], nat[i] = locate_point(mesh, pts[i])
    return idx, nat


def _contain_batch(mesh, eids, pts):
    m = len(eids)
    if mesh.kind == "t3":
        coords = mesh.vertices[mesh.elements[eids, :3]]
        e1 = coords[:, 1] - coords[:, 0]
        e2 = coords[:, 2] - coords[:, 0]
        det = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
        r = pts - coords[:, 0]
        xi = (e2[:, 1] * r[:, 0] - e2[:, 0] * r[:, 1]) / det
        eta = (-e1[:, 1] * r[:, 0] + e1[:, 0] * r[:, 1]) / det
        rs = np.column_stack([xi, eta])
        ok = (xi >= -_INSIDE_TOL) & (eta >= -_INSIDE_TOL) & (xi + eta <= 1.0 + _INSIDE_TOL)
        return ok, rs

    from .elements import q4_shape, q9_shape
    shape = q4_shape if mesh.kind == "q4" else q9_shape
    coords = mesh.vertices[mesh.elements[eids]]
    rs = np.zeros((m, 2))
    live = np.ones(m, dtype=bool)
    for _ in range(50):
        if not live.any():
            break
        N, dN = shape(rs[live])
        x = np.einsum("ma,mai->mi", N, coords[live])
        residual = pts[live] - x
        J = np.einsum("mai,maj->mij", coords[live], dN)
        det = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
        det = np.where(np.abs(det) < 1e-300, np.inf, det)
        delta = np.empty_like(residual)
        delta[:, 0] = (J[:, 1, 1] * residual[:, 0] - J[:, 0, 1] * residual[:, 1]) / det
        delta[:, 1] = (-J[:, 1, 0] * residual[:, 0] + J[:, 0, 0] * residual[:, 1]) / det
        step = np.abs(delta).max(axis=1)
        scale = np.where(step > 0.5, 0.5 / np.maximum(step, 1e-300), 1.0)
        rs[live] += delta * scale[:, None]
        done = step < 1e-12
        live[np.flatnonzero(live)[done]] = False
    ok = ~live & np.all(np.abs(rs) <= 1.0 + _INSIDE_TOL, axis=1)
    return ok, rs


# ---------------------------------------------------------------------------
# plain-text mesh format

def write_mesh(mesh, path):
    """Write the plain-text mesh format (see read_mesh)."""
    lines = [f"mesh {mesh.kind} {mesh.n_vertices} {mesh.n_elements} "
             f"{len(mesh.boundary_edges)}"]
    for vi, (x, y) in enumerate(mesh.vertices):
        lines.append(f"v {vi} {float(x)!r} {float(y)!r}")
    for ei, conn in enumerate(mesh.elements):
        lines.append("e " + str(ei) + " " + " ".join(str(int(v)) for v in conn))
    for (a, b), tag in zip(mesh.boundary_edges, mesh.boundary_tags):
        lines.append(f"b {int(a)} {int(b)} {tag}")
    with open(path, "w", encoding="ascii") as f:
        f.write("\n".join(lines) + "\n")


def read_mesh(path):
    """Read a mesh written by write_mesh.

    Format: header ``mesh <kind> <nv> <ne> <nb>``, vertex lines
    ``v <id> <x> <y>``, element lines ``e <id> <v1> ... <vk>``, boundary
    lines ``b <v1> <v2> <D|N>``.  Malformed lines raise MeshIOError with
    the line number.
    """
    with open(path, "r", encoding="ascii") as f:
        raw = f.read().splitlines()

    def fail(lineno, msg):
        raise MeshIOError(f"{path}:{lineno}: {msg}")

    lines = [(i + 1, ln.strip()) for i, ln in enumerate(raw) if ln.strip()]
    if not lines:
        raise MeshIOError(f"{path}:1: empty mesh file")
    lineno, header = lines[0]
    parts = header.split()
    if len(parts) != 5 or parts[0] != "mesh":
        fail(lineno, "header must be 'mesh <kind> <nv> <ne> <nb>'")
    kind = parts[1]
    if kind not in _NODES_PER_KIND:
        fail(lineno, f"unknown element kind {kind!r}")
    try:
        nv, ne, nb = (int(v) for v in parts[2:])
    except ValueError:
        fail(lineno, "header counts must be integers")
    k = _NODES_PER_KIND[kind]

    verts = np.zeros((nv, 2))
    elements = np.zeros((ne, k), dtype=np.int64)
    bedges, btags = [], []
    nv_seen = ne_seen = 0
    for lineno, ln in lines[1:]:
        parts = ln.split()
        if parts[0] == "v":
            if len(parts) != 4:
                fail(lineno, "vertex line must be 'v <id> <x> <y>'")
            try:
                vid, x, y = int(parts[1]), float(parts[2]), float(parts[3])
            except ValueError:
                fail(lineno, "malformed vertex line")
            if vid != nv_seen:
                fail(lineno, f"vertex ids must be consecutive (expected {nv_seen})")
            if vid >= nv:
                fail(lineno, "more vertices than declared in the header")
            verts[vid] = (x, y)
            nv_seen += 1
        elif parts[0] == "e":
            if len(parts) != 2 + k:
                fail(lineno, f"element line must list {k} vertices")
            try:
                eid = int(parts[1])
                conn = [int(v) for v in parts[2:]]
            except ValueError:
                fail(lineno, "malformed element line")
            if eid != ne_seen:
                fail(lineno, f"element ids must be consecutive (expected {ne_seen})")
            if eid >= ne:
                fail(lineno, "more elements than declared in the header")
            elements[eid] = conn
            ne_seen += 1
        elif parts[0] == "b":
            if len(parts) != 4 or parts[3] not in ("D", "N"):
                fail(lineno, "boundary line must be 'b <v1> <v2> <D|N>'")
            try:
                bedges.append((int(parts[1]), int(parts[2])))
            except ValueError:
                fail(lineno, "malformed boundary line")
            btags.append(parts[3])
        else:
            fail(lineno, f"unknown record {parts[0]!r}")
    if nv_seen != nv or ne_seen != ne or len(bedges) != nb:
        raise MeshIOError(
            f"{path}: declared counts (v={nv}, e={ne}, b={nb}) do not match "
            f"records (v={nv_seen}, e={ne_seen}, b={len(bedges)})")
    try:
        return Mesh(kind, verts, elements, np.array(bedges, dtype=np.int64), btags)
    except MeshError as exc:
        raise MeshIOError(f"{path}: {exc}") from exc
