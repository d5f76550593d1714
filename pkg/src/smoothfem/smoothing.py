"""Strain fields and strain smoothing.

Two constructions of the strain-smoothed element (SSE) field live here:

  * the element-local route: per-element intermediate strains that fully
    unify each neighbor's strain, assigned to the element Gauss points and
    interpolated to a linear (T3) or bilinear (Q4) in-element field;
  * the projection route: the composition of two piecewise-averaging
    projections, first onto the edge-based cells, then onto the interior
    cells, yielding a piecewise-constant field.

The two give identical stiffness operators on triangles and parallelogram
quads; the library keeps them independent (the second is built from
clipping-derived overlap tables) so the identity can be checked rather
than assumed.

The edge-based (ES-FEM), node-based (NS-FEM), and cell-based (CS-FEM)
smoothed strain constructions are provided as baselines.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .elements import (QUAD_GAUSS_NATURAL, TRI_GAUSS_NATURAL, q4_shape,
                       q4pl_strain_map, quad_subtriangle_areas, t3_strain_map)
from .mesh import (MeshError, build_edge_subdivision, build_elementwise_subdivision,
                   build_interior_subdivision, build_node_subdivision,
                   build_quad_subtriangles, compute_overlaps)

__all__ = [
    "StrainField",
    "SmoothingOperator",
    "build_projection",
    "apply_projection",
    "StrainCells",
    "compatible_strain_cells",
    "compatible_strain_field",
    "compatible_strain_matrix",
    "field_from_cells",
    "esfem_strain_cells",
    "nsfem_strain_cells",
    "csfem_strain_cells",
    "esfem_field",
    "nsfem_field",
    "csfem_field",
    "SseElementField",
    "SseOperators",
    "sse_operators",
    "sse_intermediate_strains",
    "sse_gauss_assignment",
    "sse_smooth",
    "sse_field",
    "sse_projection_pipeline",
    "mixed_fields",
    "element_dofs",
]


@dataclass
class StrainField:
    """Per-cell constant 3-vectors (Voigt) over a subdivision.

    values has one row per value slot (subdivision group); grouped
    subdivisions share rows between cells.
    """

    subdivision: object
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float).reshape(-1, 3)
        if self.values.shape[0] != self.subdivision.n_groups:
            raise ValueError(
                f"field has {self.values.shape[0]} values for "
                f"{self.subdivision.n_groups} cells")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("strain field contains non-finite entries")

    def cell_values(self):
        """Values expanded to one row per cell."""
        return self.values[self.subdivision.groups]


@dataclass
class SmoothingOperator:
    """Row-stochastic area-weighted averaging map between subdivisions.

    weights[t, s] is overlap(source s, target t) / area(target t); acting
    on per-cell 3-vectors it is the L2-orthogonal projection onto
    piecewise constants on the target.
    """

    source: object
    target: object
    weights: sp.csr_matrix

    def __post_init__(self):
        rows = np.asarray(self.weights.sum(axis=1)).ravel()
        if not np.allclose(rows, 1.0, rtol=0.0, atol=1e-12):
            raise ValueError("projection rows must sum to 1")
        data = self.weights.data
        if len(data) and (data.min() < -1e-13 or data.max() > 1.0 + 1e-13):
            raise ValueError("projection weights must lie in [0, 1]")


def build_projection(fine, coarse, overlaps):
    """Area-weighted averaging operator from fine onto coarse cells."""
    if overlaps.table.shape != (fine.n_cells, coarse.n_cells):
        raise ValueError("overlap table does not match the two subdivisions")
    ind_f = sp.csr_matrix(
        (np.ones(fine.n_cells), (np.arange(fine.n_cells), fine.groups)),
        shape=(fine.n_cells, fine.n_groups))
    ind_c = sp.csr_matrix(
        (np.ones(coarse.n_cells), (np.arange(coarse.n_cells), coarse.groups)),
        shape=(coarse.n_cells, coarse.n_groups))
    merged = (ind_c.T @ overlaps.table.T @ ind_f).tocsr()
    weights = sp.diags(1.0 / coarse.group_areas) @ merged
    return SmoothingOperator(source=fine, target=coarse, weights=weights.tocsr())


def apply_projection(op, field):
    """Project a strain field from the operator's source to its target."""
    if field.subdivision is not op.source and (
            field.subdivision.kind != op.source.kind
            or field.subdivision.n_groups != op.source.n_groups):
        raise ValueError("field does not live on the operator's source subdivision")
    return StrainField(op.target, op.weights @ field.values)


# ---------------------------------------------------------------------------
# per-cell constant strain operators (assembly and field evaluation share these)

@dataclass
class StrainCells:
    """One constant strain operator per value slot of a subdivision."""

    subdivision: object
    dof_indices: list
    operators: list


def element_dofs(mesh, ei):
    """Interleaved (x, y) displacement dofs of an element's corner nodes."""
    conn = mesh.elements[ei, :mesh.corner_count]
    dofs = np.empty(2 * len(conn), dtype=np.int64)
    dofs[0::2] = 2 * conn
    dofs[1::2] = 2 * conn + 1
    return dofs


def _element_strain_maps(mesh):
    if mesh.kind == "t3":
        return [t3_strain_map(mesh.element_corners(ei)) for ei in range(mesh.n_elements)]
    if mesh.kind == "q4":
        return [q4pl_strain_map(mesh.element_corners(ei)) for ei in range(mesh.n_elements)]
    raise MeshError(f"no piecewise-constant strain map for kind {mesh.kind!r}")


def compatible_strain_cells(mesh):
    """Compatible strain of the displacement space as constant cell operators.

    T3 meshes give one cell per element; Q4 meshes one per subtriangle of
    the piecewise-linear element.
    """
    maps = _element_strain_maps(mesh)
    if mesh.kind == "t3":
        sub = build_elementwise_subdivision(mesh)
        dofs = [element_dofs(mesh, ei) for ei in range(mesh.n_elements)]
        ops = [maps[ei].matrices[0] for ei in range(mesh.n_elements)]
    else:
        sub = build_quad_subtriangles(mesh)
        dofs, ops = [], []
        for ei in range(mesh.n_elements):
            ed = element_dofs(mesh, ei)
            for i in range(4):
                dofs.append(ed)
                ops.append(maps[ei].matrices[i])
    return StrainCells(subdivision=sub, dof_indices=dofs, operators=ops)


def field_from_cells(cells, u):
    """Evaluate per-cell strain operators on a displacement vector."""
    u = np.asarray(u, dtype=float)
    values = np.array([op @ u[d] for op, d in zip(cells.operators, cells.dof_indices)])
    return StrainField(cells.subdivision, values)


def compatible_strain_field(mesh, u):
    return field_from_cells(compatible_strain_cells(mesh), u)


def compatible_strain_matrix(mesh):
    """Sparse compatible-strain operator: (3 * n_cells, 2 * n_vertices).

    Rows 3c..3c+2 give the Voigt strain on fine cell c.
    """
    cells = compatible_strain_cells(mesh)
    rows, cols, vals = [], [], []
    for c, (op, dofs) in enumerate(zip(cells.operators, cells.dof_indices)):
        for i in range(3):
            for j, d in enumerate(dofs):
                if op[i, j] != 0.0:
                    rows.append(3 * c + i)
                    cols.append(int(d))
                    vals.append(op[i, j])
    mat = sp.csr_matrix((vals, (rows, cols)),
                        shape=(3 * cells.subdivision.n_cells, 2 * mesh.n_vertices))
    return cells.subdivision, mat


def _merge_patch(parts):
    """Combine (weight, dofs, B) summands over the union of their dofs."""
    union = sorted({int(d) for _, dofs, _ in parts for d in dofs})
    col = {d: j for j, d in enumerate(union)}
    out = np.zeros((3, len(union)))
    for w, dofs, B in parts:
        for j, d in enumerate(dofs):
            out[:, col[int(d)]] += w * B[:, j]
    return np.array(union, dtype=np.int64), out


def esfem_strain_cells(mesh):
    """Edge-cell averaged strain: on each edge cell the area-weighted mean
    of the two adjacent compatible strains (the strain itself on boundary
    cells)."""
    maps = _element_strain_maps(mesh)
    sub = build_edge_subdivision(mesh)
    areas = mesh.element_areas
    dofs, ops = [], []
    for parent in sub.parents:
        _, edge_id, e1, e2 = parent
        if mesh.kind == "t3":
            w1, B1, d1 = areas[e1], maps[e1].matrices[0], element_dofs(mesh, e1)
            if e2 >= 0:
                w2, B2, d2 = areas[e2], maps[e2].matrices[0], element_dofs(mesh, e2)
                s = w1 + w2
                d, B = _merge_patch([(w1 / s, d1, B1), (w2 / s, d2, B2)])
            else:
                d, B = d1, B1
        else:
            le1 = _local_edge(mesh, e1, edge_id)
            w1 = maps[e1].areas[le1]
            B1, d1 = maps[e1].matrices[le1], element_dofs(mesh, e1)
            if e2 >= 0:
                le2 = _local_edge(mesh, e2, edge_id)
                w2 = maps[e2].areas[le2]
                B2, d2 = maps[e2].matrices[le2], element_dofs(mesh, e2)
                s = w1 + w2
                d, B = _merge_patch([(w1 / s, d1, B1), (w2 / s, d2, B2)])
            else:
                d, B = d1, B1
        dofs.append(d)
        ops.append(B)
    return StrainCells(subdivision=sub, dof_indices=dofs, operators=ops)


def _local_edge(mesh, ei, edge_id):
    loc = np.flatnonzero(mesh.element_edge_ids[ei] == edge_id)
    return int(loc[0])


def nsfem_strain_cells(mesh):
    """Node-cell averaged strain: per node, the area-weighted mean of the
    strains of the elements meeting at that node."""
    maps = _element_strain_maps(mesh)
    sub = build_node_subdivision(mesh)
    parts = [[] for _ in range(sub.n_groups)]
    for ci, parent in enumerate(sub.parents):
        _, node, ei = parent
        g = sub.groups[ci]
        parts[g].append((sub.areas[ci] / sub.group_areas[g],
                         element_dofs(mesh, ei), maps[ei].matrices[0]))
    dofs, ops = [], []
    for g in range(sub.n_groups):
        d, B = _merge_patch(parts[g])
        dofs.append(d)
        ops.append(B)
    return StrainCells(subdivision=sub, dof_indices=dofs, operators=ops)


def csfem_strain_cells(mesh):
    """Cell-based smoothing of the bilinear Q4 strain.

    Each element is cut into its four interior cells; the cell strain is
    the boundary integral (divergence theorem) of the compatible bilinear
    strain, evaluated with 2-point Gauss along each straight cell edge.
    """
    if mesh.kind != "q4":
        raise MeshError("cell-based smoothing needs a Q4 mesh")
    sub = build_interior_subdivision(mesh)
    corners_nat = np.array([[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]])
    mids_nat = 0.5 * (corners_nat + np.roll(corners_nat, -1, axis=0))
    center_nat = np.zeros(2)
    gauss_t = 0.5 * (1.0 + np.array([-1.0, 1.0]) / np.sqrt(3.0))

    dofs, ops = [], []
    for ci, parent in enumerate(sub.parents):
        _, ei, i = parent
        coords = mesh.element_corners(ei)
        quad_nat = np.array([corners_nat[i], mids_nat[i], center_nat, mids_nat[i - 1]])
        acc = np.zeros((2, 4))  # rows: integral of N_a n_x ds, N_a n_y ds
        for k in range(4):
            q0, q1 = quad_nat[k], quad_nat[(k + 1) % 4]
            N0, _ = q4_shape(q0)
            N1, _ = q4_shape(q1)
            p0, p1 = N0 @ coords, N1 @ coords
            t = p1 - p0
            length = float(np.hypot(t[0], t[1]))
            normal = np.array([t[1], -t[0]]) / length
            for tau in gauss_t:
                N, _ = q4_shape(q0 + tau * (q1 - q0))
                acc += 0.5 * length * np.outer(normal, N)
        B = np.zeros((3, 8))
        B[0, 0::2] = acc[0]
        B[1, 1::2] = acc[1]
        B[2, 0::2] = acc[1]
        B[2, 1::2] = acc[0]
        B /= sub.areas[ci]
        dofs.append(element_dofs(mesh, ei))
        ops.append(B)
    return StrainCells(subdivision=sub, dof_indices=dofs, operators=ops)


def esfem_field(mesh, u):
    """Edge-based smoothed strain of a displacement vector."""
    return field_from_cells(esfem_strain_cells(mesh), u)


def nsfem_field(mesh, u):
    """Node-based smoothed strain of a displacement vector."""
    return field_from_cells(nsfem_strain_cells(mesh), u)


def csfem_field(mesh, u):
    """Cell-based smoothed strain of a displacement vector."""
    return field_from_cells(csfem_strain_cells(mesh), u)


# ---------------------------------------------------------------------------
# the strain-smoothed element field

@dataclass
class SseElementField:
    """Smoothed in-element strain: Gauss values plus their interpolant.

    For T3 the interpolant is stored as values at the element nodes
    (linear in barycentric coordinates); for Q4 as coefficients of
    {1, r, s, rs}.  Evaluation takes element natural coordinates.
    """

    kind: str
    gauss_values: np.ndarray
    coefficients: np.ndarray

    def __post_init__(self):
        reproduced = self.evaluate(
            TRI_GAUSS_NATURAL if self.kind == "t3" else QUAD_GAUSS_NATURAL)
        scale = max(float(np.abs(self.gauss_values).max()), 1e-300)
        if np.abs(reproduced - self.gauss_values).max() > 1e-13 * scale:
            raise ValueError("interpolant does not reproduce its Gauss values")

    def evaluate(self, natural):
        natural = np.asarray(natural, dtype=float)
        single = natural.ndim == 1
        natural = natural.reshape(-1, 2)
        if self.kind == "t3":
            lam = np.column_stack([1.0 - natural.sum(axis=1), natural[:, 0], natural[:, 1]])
            out = lam @ self.coefficients
        else:
            r, s = natural[:, 0], natural[:, 1]
            basis = np.column_stack([np.ones_like(r), r, s, r * s])
            out = basis @ self.coefficients
        return out[0] if single else out


def _neighbor_data(mesh, ei):
    """Per local edge: (neighbor element, neighbor's local edge) or None."""
    out = []
    for le in range(mesh.corner_count):
        nj = int(mesh.element_neighbors[ei, le])
        if nj < 0:
            out.append(None)
        else:
            out.append((nj, _local_edge(mesh, nj, mesh.element_edge_ids[ei, le])))
    return out


def sse_intermediate_strains(mesh, field, ei):
    """Per-edge unified strains of an element.

    field carries the compatible strain (elementwise for T3, per
    subtriangle for Q4).  Across each interior edge the element strain is
    area-averaged with the full neighbor strain; a missing neighbor
    averages the element with itself.
    """
    values = field.cell_values()
    neighbors = _neighbor_data(mesh, ei)
    if mesh.kind == "t3":
        areas = mesh.element_areas
        own, a_own = values[ei], areas[ei]
        out = np.empty((3, 3))
        for i, nb in enumerate(neighbors):
            if nb is None:
                out[i] = own
            else:
                nj, _ = nb
                out[i] = (a_own * own + areas[nj] * values[nj]) / (a_own + areas[nj])
        return out
    if mesh.kind == "q4":
        sub_areas = quad_subtriangle_areas(mesh.element_corners(ei))
        out = np.empty((4, 3))
        for i, nb in enumerate(neighbors):
            own = values[4 * ei + i]
            if nb is None:
                out[i] = own
            else:
                nj, le = nb
                a_star = quad_subtriangle_areas(mesh.element_corners(nj))[le]
                star = values[4 * nj + le]
                out[i] = (sub_areas[i] * own + a_star * star) / (sub_areas[i] + a_star)
        return out
    raise MeshError(f"no SSE construction for kind {mesh.kind!r}")


def sse_gauss_assignment(kind, intermediates, subtri_areas=None):
    """Assign intermediate strains to the element Gauss points and
    interpolate.

    Gauss point i sits between edges i-1 and i (cyclic); it receives the
    plain average of the two intermediate strains for T3 and their
    subtriangle-area weighted average for Q4.
    """
    eh = np.asarray(intermediates, dtype=float)
    if kind == "t3":
        if eh.shape != (3, 3):
            raise ValueError("T3 needs three intermediate strains")
        gauss = 0.5 * (np.roll(eh, 1, axis=0) + eh)
        nodal = 2.0 * gauss - gauss.sum(axis=0) / 3.0
        return SseElementField(kind="t3", gauss_values=gauss, coefficients=nodal)
    if kind == "q4":
        if eh.shape != (4, 3):
            raise ValueError("Q4 needs four intermediate strains")
        a = np.asarray(subtri_areas, dtype=float)
        if a.shape != (4,):
            raise ValueError("Q4 needs the four subtriangle areas")
        ap = np.roll(a, 1)
        gauss = (ap[:, None] * np.roll(eh, 1, axis=0) + a[:, None] * eh) / (ap + a)[:, None]
        g = QUAD_GAUSS_NATURAL[1, 0]
        v0, v1, v2, v3 = gauss
        coeff = np.stack([
            0.25 * (v0 + v1 + v2 + v3),
            (-v0 + v1 + v2 - v3) / (4.0 * g),
            (-v0 - v1 + v2 + v3) / (4.0 * g),
            (v0 - v1 + v2 - v3) / (4.0 * g * g),
        ])
        return SseElementField(kind="q4", gauss_values=gauss, coefficients=coeff)
    raise ValueError(f"no SSE construction for kind {kind!r}")


def sse_smooth(mesh, field):
    """Smoothed strain fields of all elements (linear in the input field)."""
    out = []
    for ei in range(mesh.n_elements):
        inter = sse_intermediate_strains(mesh, field, ei)
        areas = (quad_subtriangle_areas(mesh.element_corners(ei))
                 if mesh.kind == "q4" else None)
        out.append(sse_gauss_assignment(mesh.kind, inter, areas))
    return out


def sse_field(mesh, u):
    """SSE strain fields for a displacement vector."""
    return sse_smooth(mesh, compatible_strain_field(mesh, u))


@dataclass
class SseOperators:
    """Gauss-point strain operators of the SSE method, per element.

    gauss_ops[e] maps the element patch dofs to the strain at each Gauss
    point; gauss_weights[e] are the matching quadrature weights (area/3
    for T3, Jacobian-weighted unit weights for Q4), chosen so that the
    weighted sum integrates the interpolant energy exactly.
    """

    dof_indices: list
    gauss_ops: list
    gauss_weights: list


def sse_operators(mesh):
    """Assemble-ready SSE Gauss-point operators for every element."""
    maps = _element_strain_maps(mesh)
    areas = mesh.element_areas
    dof_indices, gauss_ops, gauss_weights = [], [], []
    for ei in range(mesh.n_elements):
        neighbors = _neighbor_data(mesh, ei)
        if mesh.kind == "t3":
            hat = []
            for i, nb in enumerate(neighbors):
                parts = [(1.0, element_dofs(mesh, ei), maps[ei].matrices[0])]
                if nb is not None:
                    nj, _ = nb
                    s = areas[ei] + areas[nj]
                    parts = [(areas[ei] / s, element_dofs(mesh, ei), maps[ei].matrices[0]),
                             (areas[nj] / s, element_dofs(mesh, nj), maps[nj].matrices[0])]
                hat.append(_merge_patch(parts))
            union = sorted({int(d) for dofs, _ in hat for d in dofs})
            col = {d: j for j, d in enumerate(union)}
            hats = np.zeros((3, 3, len(union)))
            for i, (dofs, B) in enumerate(hat):
                for j, d in enumerate(dofs):
                    hats[i][:, col[int(d)]] = B[:, j]
            ops = 0.5 * (np.roll(hats, 1, axis=0) + hats)
            dof_indices.append(np.array(union, dtype=np.int64))
            gauss_ops.append(ops)
            gauss_weights.append(np.full(3, areas[ei] / 3.0))
        else:
            own_areas = maps[ei].areas
            hat = []
            for i, nb in enumerate(neighbors):
                parts = [(1.0, element_dofs(mesh, ei), maps[ei].matrices[i])]
                if nb is not None:
                    nj, le = nb
                    a_star = maps[nj].areas[le]
                    s = own_areas[i] + a_star
                    parts = [(own_areas[i] / s, element_dofs(mesh, ei), maps[ei].matrices[i]),
                             (a_star / s, element_dofs(mesh, nj), maps[nj].matrices[le])]
                hat.append(_merge_patch(parts))
            union = sorted({int(d) for dofs, _ in hat for d in dofs})
            col = {d: j for j, d in enumerate(union)}
            hats = np.zeros((4, 3, len(union)))
            for i, (dofs, B) in enumerate(hat):
                for j, d in enumerate(dofs):
                    hats[i][:, col[int(d)]] = B[:, j]
            ap = np.roll(own_areas, 1)
            ops = (ap[:, None, None] * np.roll(hats, 1, axis=0)
                   + own_areas[:, None, None] * hats) / (ap + own_areas)[:, None, None]
            coords = mesh.element_corners(ei)
            _, dN = q4_shape(QUAD_GAUSS_NATURAL)
            J = np.einsum("ai,paj->pij", coords, dN)
            detJ = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
            dof_indices.append(np.array(union, dtype=np.int64))
            gauss_ops.append(ops)
            gauss_weights.append(detJ)
    return SseOperators(dof_indices=dof_indices, gauss_ops=gauss_ops,
                        gauss_weights=gauss_weights)


def sse_projection_pipeline(mesh):
    """The projection route: compatible strain composed with the two
    piecewise-averaging projections, built from exact overlap tables.

    Returns (interior subdivision, sparse smoothed-strain operator of
    shape (3 * n_interior_cells, 2 * n_vertices)).
    """
    fine, bmat = compatible_strain_matrix(mesh)
    edge = build_edge_subdivision(mesh)
    interior = build_interior_subdivision(mesh)
    p_edge = build_projection(fine, edge, compute_overlaps(fine, edge))
    p_int = build_projection(edge, interior, compute_overlaps(edge, interior))
    smooth = sp.kron((p_int.weights @ p_edge.weights).tocsr(), sp.eye(3, format="csr"))
    return interior, (smooth @ bmat).tocsr()


def mixed_fields(mesh, material, u):
    """All five fields of the two-strain / two-stress mixed formulation,
    reconstructed from a displacement vector (diagnostic use).

    Returns a dict with the compatible strain, the edge- and
    interior-projected strains, and the two stress fields (the interior
    stress is the constitutive image of the interior strain; the edge
    stress is its projection back onto the edge cells).
    """
    fine = (build_elementwise_subdivision(mesh) if mesh.kind == "t3"
            else build_quad_subtriangles(mesh))
    compatible = compatible_strain_field(mesh, u)
    edge = build_edge_subdivision(mesh)
    interior = build_interior_subdivision(mesh)
    p1 = build_projection(fine, edge, compute_overlaps(fine, edge))
    p2 = build_projection(edge, interior, compute_overlaps(edge, interior))
    strain_edge = apply_projection(p1, compatible)
    strain_interior = apply_projection(p2, strain_edge)
    stress_interior = StrainField(interior, strain_interior.values @ material.D.T)
    p_back = build_projection(interior, edge, compute_overlaps(interior, edge))
    stress_edge = apply_projection(p_back, stress_interior)
    return {
        "compatible": compatible,
        "strain_edge": strain_edge,
        "strain_interior": strain_interior,
        "stress_interior": stress_interior,
        "stress_edge": stress_edge,
    }
