"""Reference solutions and error analysis.

The reference strain comes from a fine mesh of 9-node quadrilaterals
solved with 3x3 Gauss quadrature.  Method and projection errors are
energy-norm integrals evaluated cell by cell with degree-4 (or better)
rules, sampling the reference strain by point location in the reference
mesh:

  * projection errors measure how well piecewise constants on the
    elementwise / edge-based / interior subdivisions can approximate the
    reference strain (best approximation = per-cell area average);
  * method errors integrate D (eps_h - eps_ref) : (eps_h - eps_ref) over
    the method's own cells and normalize by the reference energy norm.
"""

import time
from dataclasses import dataclass

import numpy as np

from . import assembly, smoothing
from .elements import (QUAD_GAUSS_NATURAL, q4_shape, q9_shape, quadrature,
                       quad_quadrature_points, triangle_quadrature_points)
from .mesh import (MeshError, build_edge_subdivision, build_elementwise_subdivision,
                   build_interior_subdivision, generate_regular_q9, locate_points)

__all__ = [
    "ReferenceSolution",
    "solve_reference",
    "energy_norm",
    "energy_error",
    "projection_error",
    "PROJECTION_SPACES",
    "convergence_slope",
    "probe_displacement",
    "ErrorReport",
    "run_method",
]

PROJECTION_SPACES = ("elementwise", "edge_based", "interior")

_TRI4 = quadrature("tri_deg4")
_QUAD9 = quadrature("quad3x3")


def _q9_strains(mesh, u, eidx, nat):
    """Strain of a Q9 displacement field at (element, natural) samples."""
    conn = mesh.elements[eidx]
    coords = mesh.vertices[conn]
    _, dN = q9_shape(nat)
    J = np.einsum("nai,naj->nij", coords, dN)  # J[i, j] = dx_i/dr_j
    detJ = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
    invJ = np.empty_like(J)
    invJ[:, 0, 0] = J[:, 1, 1]
    invJ[:, 0, 1] = -J[:, 0, 1]
    invJ[:, 1, 0] = -J[:, 1, 0]
    invJ[:, 1, 1] = J[:, 0, 0]
    invJ /= detJ[:, None, None]
    grad = np.einsum("nai,nij->naj", dN, invJ)
    ue = np.empty((len(eidx), 18))
    ue[:, 0::2] = u[2 * conn]
    ue[:, 1::2] = u[2 * conn + 1]
    strains = np.empty((len(eidx), 3))
    strains[:, 0] = np.einsum("na,na->n", grad[:, :, 0], ue[:, 0::2])
    strains[:, 1] = np.einsum("na,na->n", grad[:, :, 1], ue[:, 1::2])
    strains[:, 2] = (np.einsum("na,na->n", grad[:, :, 1], ue[:, 0::2])
                     + np.einsum("na,na->n", grad[:, :, 0], ue[:, 1::2]))
    return strains


@dataclass
class ReferenceSolution:
    """Fine Q9 solution with a pointwise strain evaluator."""

    problem: object
    mesh: object
    displacement: np.ndarray
    material: object

    def strain_at(self, points):
        """Reference strain at arbitrary domain points, (n, 2) -> (n, 3)."""
        eidx, nat = locate_points(self.mesh, points)
        return _q9_strains(self.mesh, self.displacement, eidx, nat)

    @property
    def energy(self):
        """Energy norm of the reference strain."""
        if not hasattr(self, "_energy"):
            total = 0.0
            rule = _QUAD9
            ne = self.mesh.n_elements
            for p in range(len(rule.points)):
                eidx = np.arange(ne)
                nat = np.tile(rule.points[p], (ne, 1))
                strains = _q9_strains(self.mesh, self.displacement, eidx, nat)
                coords = self.mesh.vertices[self.mesh.elements[:, :4]]
                _, dN = q4_shape(rule.points[p])
                J = np.einsum("eai,aj->eij", coords, dN)
                detJ = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
                dv = strains @ self.material.D
                total += float(np.sum(rule.weights[p] * detJ
                                      * np.einsum("ni,ni->n", dv, strains)))
            self._energy = float(np.sqrt(total))
        return self._energy


def solve_reference(problem, n_ref=64):
    """Solve the problem with n_ref x n_ref 9-node quadrilaterals."""
    if n_ref < 2:
        raise ValueError(f"reference mesh size must be >= 2, got {n_ref}")
    domain = problem.domain if problem.domain is not None else (0.0, 0.0, 1.0, 1.0)
    mesh = generate_regular_q9(n_ref, domain)
    if getattr(problem, "clamp_all", False):
        from .mesh import with_boundary_tag
        mesh = with_boundary_tag(mesh, "D")
    u = assembly.solve_method(mesh, problem, "fem_q9")
    return ReferenceSolution(problem=problem, mesh=mesh, displacement=u,
                             material=problem.material)


# ---------------------------------------------------------------------------
# energy norms

def energy_norm(field, material, mesh=None):
    """Energy norm of a strain representation.

    Piecewise-constant fields integrate exactly (area-weighted values);
    lists of in-element SSE interpolants use the element Gauss rules,
    which are exact for the linear/bilinear interpolants, and need the
    mesh the fields live on.
    """
    D = material.D
    if isinstance(field, smoothing.StrainField):
        vals = field.cell_values()
        quad = np.einsum("ni,ij,nj->n", vals, D, vals)
        return float(np.sqrt(np.sum(field.subdivision.areas * quad)))
    if isinstance(field, (list, tuple)):
        if mesh is None:
            raise ValueError("energy_norm of SSE fields needs the mesh")
        total = 0.0
        for ei, ef in enumerate(field):
            vals = ef.gauss_values
            quad = np.einsum("ni,ij,nj->n", vals, D, vals)
            if ef.kind == "t3":
                w = np.full(3, mesh.element_areas[ei] / 3.0)
            else:
                coords = mesh.element_corners(ei)
                _, dN = q4_shape(QUAD_GAUSS_NATURAL)
                J = np.einsum("ai,paj->pij", coords, dN)
                w = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
            total += float(np.dot(w, quad))
        return float(np.sqrt(total))
    raise TypeError(f"cannot take the energy norm of {type(field).__name__}")


def _polygon_rule(poly):
    if len(poly) == 3:
        return triangle_quadrature_points(_TRI4, poly)
    if len(poly) == 4:
        return quad_quadrature_points(_QUAD9, poly)
    raise MeshError("cells must be triangles or quadrilaterals")


def _natural_quadrant(i):
    corners = np.array([[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]])
    mids = 0.5 * (corners + np.roll(corners, -1, axis=0))
    return np.array([corners[i], mids[i], [0.0, 0.0], mids[i - 1]])


def _t3_natural(coords, pts):
    m = np.column_stack([coords[1] - coords[0], coords[2] - coords[0]])
    return np.linalg.solve(m, (pts - coords[0]).T).T


def _method_pieces(mesh, material, method, u, sse_route="gauss"):
    """Integration pieces (points, weights, method strain at the points)."""
    pieces = []
    if method in ("fem_t3", "fem_plq4", "esfem", "nsfem", "csfem"):
        strain = assembly.method_strain(mesh, material, method, u)
        vals = strain.cell_values()
        for ci, poly in enumerate(strain.subdivision.cells):
            pts, w = _polygon_rule(poly)
            pieces.append((pts, w, np.tile(vals[ci], (len(pts), 1))))

    elif method == "fem_blq4":
        nat = _QUAD9.points
        _, dN = q4_shape(nat)
        for ei in range(mesh.n_elements):
            coords = mesh.element_corners(ei)
            pts, w = quad_quadrature_points(_QUAD9, coords)
            ue = u[smoothing.element_dofs(mesh, ei)]
            vals = np.empty((len(nat), 3))
            for p in range(len(nat)):
                B, _ = assembly._pointwise_b(coords, dN[p])
                vals[p] = B @ ue
            pieces.append((pts, w, vals))

    elif method == "fem_q9":
        nat = _QUAD9.points
        for ei in range(mesh.n_elements):
            coords = mesh.element_corners(ei)
            pts, w = quad_quadrature_points(_QUAD9, coords)
            eidx = np.full(len(nat), ei)
            pieces.append((pts, w, _q9_strains(mesh, u, eidx, nat)))

    elif method == "sse":
        if sse_route == "projection":
            strain = assembly.method_strain(mesh, material, method, u,
                                            sse_representation="projected")
            vals = strain.cell_values()
            for ci, poly in enumerate(strain.subdivision.cells):
                pts, w = _polygon_rule(poly)
                pieces.append((pts, w, np.tile(vals[ci], (len(pts), 1))))
        else:
            fields = assembly.method_strain(mesh, material, method, u)
            if mesh.kind == "t3":
                interior = build_interior_subdivision(mesh)
                for ci, parent in enumerate(interior.parents):
                    _, ei, _i = parent
                    coords = mesh.element_corners(ei)
                    pts, w = _polygon_rule(interior.cells[ci])
                    nat = _t3_natural(coords, pts)
                    pieces.append((pts, w, fields[ei].evaluate(nat)))
            else:
                for ei in range(mesh.n_elements):
                    coords = mesh.element_corners(ei)
                    for i in range(4):
                        rect = _natural_quadrant(i)
                        nat, w_nat = quad_quadrature_points(_QUAD9, rect)
                        N, dN = q4_shape(nat)
                        pts = N @ coords
                        J = np.einsum("ai,paj->pij", coords, dN)
                        detJ = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
                        pieces.append((pts, w_nat * detJ, fields[ei].evaluate(nat)))
    else:
        raise assembly.AssemblyError(f"no error integration for method {method!r}")
    return pieces


def energy_error(mesh, material, method, u, ref, sse_route="gauss"):
    """Absolute and relative energy-norm error of a method's strain field
    against the reference strain."""
    pieces = _method_pieces(mesh, material, method, u, sse_route=sse_route)
    pts = np.concatenate([p for p, _, _ in pieces])
    w = np.concatenate([w_ for _, w_, _ in pieces])
    vals = np.concatenate([v for _, _, v in pieces])
    diff = vals - ref.strain_at(pts)
    err2 = float(np.sum(w * np.einsum("ni,ij,nj->n", diff, material.D, diff)))
    absolute = float(np.sqrt(max(err2, 0.0)))
    return absolute, absolute / ref.energy


_SPACE_BUILDERS = {
    "elementwise": build_elementwise_subdivision,
    "edge_based": build_edge_subdivision,
    "interior": build_interior_subdivision,
}


def projection_error(ref, space, mesh):
    """Energy-norm distance from the reference strain to its best
    piecewise-constant approximation on one of the three subdivisions.

    The best approximation is the per-cell average (orthogonal
    projection); averages and the error integral share one degree-4+
    rule per cell.
    """
    if space not in _SPACE_BUILDERS:
        raise ValueError(f"unknown projection space {space!r}; "
                         f"expected one of {PROJECTION_SPACES}")
    sub = _SPACE_BUILDERS[space](mesh)
    all_pts, all_w, slices = [], [], []
    start = 0
    for poly in sub.cells:
        pts, w = _polygon_rule(poly)
        all_pts.append(pts)
        all_w.append(w)
        slices.append((start, start + len(w)))
        start += len(w)
    pts = np.concatenate(all_pts)
    w = np.concatenate(all_w)
    strains = ref.strain_at(pts)

    D = ref.material.D
    err2 = 0.0
    group_avg = np.zeros((sub.n_groups, 3))
    group_wsum = np.zeros(sub.n_groups)
    for ci, (a, b) in enumerate(slices):
        g = sub.groups[ci]
        group_avg[g] += w[a:b] @ strains[a:b]
        group_wsum[g] += w[a:b].sum()
    group_avg /= group_wsum[:, None]
    for ci, (a, b) in enumerate(slices):
        diff = strains[a:b] - group_avg[sub.groups[ci]]
        err2 += float(np.sum(w[a:b] * np.einsum("ni,ij,nj->n", diff, D, diff)))
    return float(np.sqrt(max(err2, 0.0)))


def convergence_slope(points):
    """Least-squares slope of log(error) against log(h)."""
    points = [(float(h), float(e)) for h, e in points]
    if len(points) < 2:
        raise ValueError("need at least two (h, error) points")
    if any(e <= 0.0 for _, e in points):
        raise ValueError("errors must be positive for a log-log fit")
    if any(h <= 0.0 for h, _ in points):
        raise ValueError("mesh sizes must be positive")
    logh = np.log([h for h, _ in points])
    loge = np.log([e for _, e in points])
    return float(np.polyfit(logh, loge, 1)[0])


def probe_displacement(mesh, u, point, space):
    """Displacement at a point, interpolated with the method's shape
    functions (space: t3 | plq4 | blq4 | q9)."""
    from .mesh import locate_point
    ei, nat = locate_point(mesh, point)
    conn = mesh.elements[ei]
    if space == "t3":
        lam = np.array([1.0 - nat.sum(), nat[0], nat[1]])
        ux = lam @ u[2 * conn]
        uy = lam @ u[2 * conn + 1]
        return np.array([ux, uy])
    if space == "blq4":
        N, _ = q4_shape(nat)
    elif space == "q9":
        N, _ = q9_shape(nat)
    elif space == "plq4":
        corners = mesh.element_corners(ei)
        center = corners.mean(axis=0)
        p = np.asarray(point, dtype=float)
        for i in range(4):
            j = (i + 1) % 4
            tri = np.array([corners[i], corners[j], center])
            lam2 = _t3_natural(tri, p[None, :])[0]
            lam = np.array([1.0 - lam2.sum(), lam2[0], lam2[1]])
            if np.all(lam >= -1e-9):
                N = np.full(4, 0.25 * lam[2])
                N[i] += lam[0]
                N[j] += lam[1]
                break
        else:
            raise MeshError(f"point {point} not inside any subtriangle of element {ei}")
    else:
        raise ValueError(f"unknown displacement space {space!r}")
    ux = N @ u[2 * conn]
    uy = N @ u[2 * conn + 1]
    return np.array([ux, uy])


@dataclass
class ErrorReport:
    """One row of a convergence study.

    h is 1/n for the passed mesh size; callers studying distorted
    triangle meshes should pass the equivalent size n = sqrt(n_elements/2).
    """

    method: str
    mesh_kind: str
    n: int
    n_elements: int
    h: float
    error_abs: float
    reference_energy: float
    relative_error: float
    probe_error: float
    dofs: int
    wall_time: float


def run_method(mesh, problem, method, ref, n, sse_route="gauss"):
    """Solve one method on one mesh and report its errors."""
    t0 = time.perf_counter()
    u = assembly.solve_method(mesh, problem, method, sse_route=sse_route)
    absolute, relative = energy_error(mesh, problem.material, method, u, ref,
                                      sse_route=sse_route)
    wall = time.perf_counter() - t0
    probe_err = float("nan")
    if problem.probe is not None:
        space = assembly.displacement_space(mesh, method)
        ua = probe_displacement(mesh, u, problem.probe, space)
        ua_ref = probe_displacement(ref.mesh, ref.displacement, problem.probe, "q9")
        if ua_ref[0] != 0.0:
            probe_err = abs(ua[0] - ua_ref[0]) / abs(ua_ref[0])
    dofmap = assembly.build_dofmap(mesh)
    return ErrorReport(method=method, mesh_kind=mesh.kind, n=n,
                       n_elements=mesh.n_elements, h=1.0 / n,
                       error_abs=absolute, reference_energy=ref.energy,
                       relative_error=relative, probe_error=probe_err,
                       dofs=dofmap.n_free, wall_time=wall)
