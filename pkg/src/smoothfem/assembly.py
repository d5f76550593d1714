"""Global assembly and solution of the discrete elasticity problems.

Supported methods (each on its natural mesh kind):

  fem_t3    constant-strain triangles                (T3)
  fem_plq4  piecewise-linear 4-node quads            (Q4)
  fem_blq4  isoparametric bilinear 4-node quads      (Q4)
  esfem     edge-based smoothed strain               (T3, Q4)
  nsfem     node-based smoothed strain               (T3)
  csfem     cell-based smoothed bilinear strain      (Q4)
  sse       strain-smoothed element                  (T3, Q4)

The SSE stiffness is assembled from the element-local Gauss-point route by
default; ``sse_route="projection"`` switches to the twice-projected
piecewise-constant route so the two can be compared.  Assembly order is
ascending cell index throughout, so repeated runs are bit-identical.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .elements import (dmatrix, q4_shape, q9_shape, quad_quadrature_points,
                       quadrature, triangle_quadrature_points)
from . import smoothing

__all__ = [
    "METHODS",
    "AssemblyError",
    "SolverError",
    "DofMap",
    "build_dofmap",
    "LinearSystem",
    "BlockProblem",
    "block_problem",
    "patch_problem",
    "assemble_stiffness",
    "assemble_load",
    "apply_dirichlet",
    "solve",
    "solve_method",
    "method_strain",
    "displacement_space",
]

METHODS = ("fem_t3", "fem_plq4", "fem_blq4", "esfem", "nsfem", "csfem", "sse")

_METHOD_KINDS = {
    "fem_t3": ("t3",),
    "fem_plq4": ("q4",),
    "fem_blq4": ("q4",),
    "esfem": ("t3", "q4"),
    "nsfem": ("t3",),
    "csfem": ("q4",),
    "sse": ("t3", "q4"),
    "fem_q9": ("q9",),
}


class AssemblyError(ValueError):
    """Method/mesh mismatch or invalid assembly input."""


class SolverError(RuntimeError):
    """Linear solver breakdown or failed residual check."""


@dataclass
class DofMap:
    """Two displacement dofs per vertex; Dirichlet vertices are constrained."""

    n_dofs: int
    constrained: np.ndarray
    free: np.ndarray = field(init=False)

    def __post_init__(self):
        self.free = np.flatnonzero(~self.constrained)

    @property
    def n_free(self):
        return len(self.free)


def build_dofmap(mesh):
    n_dofs = 2 * mesh.n_vertices
    constrained = np.zeros(n_dofs, dtype=bool)
    for v in mesh.dirichlet_vertices:
        constrained[2 * v] = True
        constrained[2 * v + 1] = True
    return DofMap(n_dofs=n_dofs, constrained=constrained)


@dataclass
class LinearSystem:
    """Assembled stiffness and load, before or after constraint elimination."""

    K: sp.csr_matrix
    F: np.ndarray
    method: str
    reduced: bool = False
    dofmap: DofMap = None
    imposed: np.ndarray = None


@dataclass
class BlockProblem:
    """Problem data: domain rectangle, material, loads, boundary values."""

    domain: tuple
    material: object
    body_force: object
    traction: object = None
    dirichlet_value: object = None
    probe: np.ndarray = None


def block_problem(domain=(0.0, 0.0, 2.0, 1.0), E=1.0e3, nu=0.2,
                  mode="plane_stress", probe=None):
    """The clamped block benchmark: body force b = (-y^2, 1 - x^2),
    zero traction, bottom edge clamped.

    The default domain is a 2 x 1 block; this aspect ratio was validated
    to keep the benchmark's convergence rates clean (a bottom-clamped
    unit square concentrates too much energy in its singular corners;
    see README).  The probe point defaults to the top-left corner, where
    the horizontal displacement is largest.
    """
    material = dmatrix(E, nu, mode)

    def body(pts):
        pts = np.asarray(pts, dtype=float).reshape(-1, 2)
        return np.column_stack([-pts[:, 1] ** 2, 1.0 - pts[:, 0] ** 2])

    if probe is None:
        probe = np.array([domain[0], domain[3]])
    return BlockProblem(domain=tuple(float(v) for v in domain), material=material,
                        body_force=body, probe=np.asarray(probe, dtype=float))


def patch_problem(material, gradient=((1.3e-3, 0.4e-3), (-0.2e-3, 0.9e-3)),
                  offset=(1.0e-4, -2.0e-4)):
    """Linear-displacement patch problem: zero body force, the linear field
    imposed on every boundary vertex (use with an all-Dirichlet mesh)."""
    G = np.asarray(gradient, dtype=float)
    off = np.asarray(offset, dtype=float)

    def value(xy):
        return off + G @ np.asarray(xy, dtype=float)

    def body(pts):
        pts = np.asarray(pts, dtype=float).reshape(-1, 2)
        return np.zeros_like(pts)

    strain = np.array([G[0, 0], G[1, 1], G[0, 1] + G[1, 0]])
    problem = BlockProblem(domain=None, material=material, body_force=body,
                           dirichlet_value=value)
    problem.exact_strain = strain
    problem.clamp_all = True  # the linear field is imposed on every boundary node
    return problem


def _check_method(mesh, method):
    kinds = _METHOD_KINDS.get(method)
    if kinds is None:
        raise AssemblyError(f"unknown method {method!r}")
    if mesh.kind not in kinds:
        raise AssemblyError(f"method {method!r} does not apply to {mesh.kind!r} meshes")


def _scatter(rows, cols, vals, dofs, ke):
    n = len(dofs)
    for i in range(n):
        rows.extend([dofs[i]] * n)
        cols.extend(dofs)
        vals.extend(ke[i])


def assemble_stiffness(mesh, material, method, sse_route="gauss"):
    """Assemble the (unconstrained) stiffness matrix of a method."""
    _check_method(mesh, method)
    D = material.D
    n_dofs = 2 * mesh.n_vertices
    rows, cols, vals = [], [], []

    if method in ("fem_t3", "fem_plq4", "esfem", "nsfem", "csfem"):
        builder = {
            "fem_t3": smoothing.compatible_strain_cells,
            "fem_plq4": smoothing.compatible_strain_cells,
            "esfem": smoothing.esfem_strain_cells,
            "nsfem": smoothing.nsfem_strain_cells,
            "csfem": smoothing.csfem_strain_cells,
        }[method]
        cells = builder(mesh)
        for g, (dofs, B) in enumerate(zip(cells.dof_indices, cells.operators)):
            ke = cells.subdivision.group_areas[g] * (B.T @ D @ B)
            _scatter(rows, cols, vals, dofs, ke)

    elif method == "fem_blq4":
        rule = quadrature("quad2x2")
        for ei in range(mesh.n_elements):
            coords = mesh.element_corners(ei)
            dofs = smoothing.element_dofs(mesh, ei)
            N, dN = q4_shape(rule.points)
            ke = np.zeros((8, 8))
            for p in range(len(rule.points)):
                B, detJ = _pointwise_b(coords, dN[p])
                ke += rule.weights[p] * detJ * (B.T @ D @ B)
            _scatter(rows, cols, vals, dofs, ke)

    elif method == "fem_q9":
        rule = quadrature("quad3x3")
        conn = mesh.elements
        coords = mesh.vertices[conn]
        _, dN = q9_shape(rule.points)
        ke = np.zeros((mesh.n_elements, 18, 18))
        for p in range(len(rule.points)):
            J = np.einsum("eai,aj->eij", coords, dN[p])
            detJ = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
            if np.any(detJ <= 0.0):
                raise AssemblyError("9-node element with non-positive Jacobian")
            invJ = np.empty_like(J)
            invJ[:, 0, 0] = J[:, 1, 1]
            invJ[:, 0, 1] = -J[:, 0, 1]
            invJ[:, 1, 0] = -J[:, 1, 0]
            invJ[:, 1, 1] = J[:, 0, 0]
            invJ /= detJ[:, None, None]
            grad = np.einsum("ai,eij->eaj", dN[p], invJ)
            B = np.zeros((mesh.n_elements, 3, 18))
            B[:, 0, 0::2] = grad[:, :, 0]
            B[:, 1, 1::2] = grad[:, :, 1]
            B[:, 2, 0::2] = grad[:, :, 1]
            B[:, 2, 1::2] = grad[:, :, 0]
            ke += (rule.weights[p] * detJ)[:, None, None] * np.einsum(
                "eij,jk,ekl->eil", B.transpose(0, 2, 1), D, B)
        dof_block = np.empty((mesh.n_elements, 18), dtype=np.int64)
        dof_block[:, 0::2] = 2 * conn
        dof_block[:, 1::2] = 2 * conn + 1
        rows = np.repeat(dof_block, 18, axis=1).ravel()
        cols = np.tile(dof_block, (1, 18)).ravel()
        vals = ke.ravel()
        K = sp.coo_matrix((vals, (rows, cols)), shape=(n_dofs, n_dofs)).tocsr()
        return LinearSystem(K=K, F=np.zeros(n_dofs), method=method)

    elif method == "sse":
        if sse_route == "gauss":
            ops = smoothing.sse_operators(mesh)
            for ei in range(mesh.n_elements):
                dofs = ops.dof_indices[ei]
                ke = np.zeros((len(dofs), len(dofs)))
                for B, w in zip(ops.gauss_ops[ei], ops.gauss_weights[ei]):
                    ke += w * (B.T @ D @ B)
                _scatter(rows, cols, vals, dofs, ke)
        elif sse_route == "projection":
            interior, bbar = smoothing.sse_projection_pipeline(mesh)
            weight = sp.kron(sp.diags(interior.areas), D, format="csr")
            K = (bbar.T @ weight @ bbar).tocsr()
            return LinearSystem(K=K, F=np.zeros(n_dofs), method=method)
        else:
            raise AssemblyError(f"unknown SSE route {sse_route!r}")

    else:  # pragma: no cover - _check_method rejects unknowns
        raise AssemblyError(f"unknown method {method!r}")

    K = sp.coo_matrix((np.array(vals), (np.array(rows), np.array(cols))),
                      shape=(n_dofs, n_dofs)).tocsr()
    return LinearSystem(K=K, F=np.zeros(n_dofs), method=method)


def _pointwise_b(coords, dN):
    J = coords.T @ dN
    detJ = J[0, 0] * J[1, 1] - J[0, 1] * J[1, 0]
    if detJ <= 0.0:
        raise AssemblyError("element with non-positive Jacobian")
    invJ = np.array([[J[1, 1], -J[0, 1]], [-J[1, 0], J[0, 0]]]) / detJ
    grad = dN @ invJ
    k = coords.shape[0]
    B = np.zeros((3, 2 * k))
    B[0, 0::2] = grad[:, 0]
    B[1, 1::2] = grad[:, 1]
    B[2, 0::2] = grad[:, 1]
    B[2, 1::2] = grad[:, 0]
    return B, detJ


def displacement_space(mesh, method):
    """Displacement interpolation used by a method on a given mesh."""
    _check_method(mesh, method)
    if method in ("fem_t3", "nsfem"):
        return "t3"
    if method in ("esfem", "sse"):
        return "t3" if mesh.kind == "t3" else "plq4"
    if method == "fem_plq4":
        return "plq4"
    if method in ("fem_blq4", "csfem"):
        return "blq4"
    return "q9"


def assemble_load(mesh, problem, method):
    """Consistent load vector: body force integrated with quartic-exact
    rules plus 3-point Gauss traction terms on Neumann edges."""
    space = displacement_space(mesh, method)
    n_dofs = 2 * mesh.n_vertices
    F = np.zeros(n_dofs)
    body = problem.body_force

    if space == "t3":
        rule = quadrature("tri_deg4")
        lam = np.column_stack([1.0 - rule.points.sum(axis=1),
                               rule.points[:, 0], rule.points[:, 1]])
        for ei in range(mesh.n_elements):
            conn = mesh.elements[ei]
            pts, w = triangle_quadrature_points(rule, mesh.element_corners(ei))
            bv = body(pts)
            contrib = (w[:, None] * bv).T @ lam  # (2, 3)
            F[2 * conn] += contrib[0]
            F[2 * conn + 1] += contrib[1]

    elif space == "plq4":
        rule = quadrature("tri_deg4")
        lam = np.column_stack([1.0 - rule.points.sum(axis=1),
                               rule.points[:, 0], rule.points[:, 1]])
        for ei in range(mesh.n_elements):
            conn = mesh.elements[ei]
            corners = mesh.element_corners(ei)
            center = corners.mean(axis=0)
            for i in range(4):
                j = (i + 1) % 4
                tri = np.array([corners[i], corners[j], center])
                pts, w = triangle_quadrature_points(rule, tri)
                N = np.full((len(pts), 4), 0.0)
                N[:, i] = lam[:, 0]
                N[:, j] = lam[:, 1]
                N += 0.25 * lam[:, 2][:, None]
                bv = body(pts)
                contrib = (w[:, None] * bv).T @ N  # (2, 4)
                F[2 * conn] += contrib[0]
                F[2 * conn + 1] += contrib[1]

    elif space in ("blq4", "q9"):
        rule = quadrature("quad3x3")
        shape = q4_shape if space == "blq4" else q9_shape
        N, _ = shape(rule.points)
        for ei in range(mesh.n_elements):
            conn = mesh.elements[ei]
            pts, w = quad_quadrature_points(rule, mesh.element_corners(ei))
            bv = body(pts)
            contrib = (w[:, None] * bv).T @ N
            F[2 * conn] += contrib[0]
            F[2 * conn + 1] += contrib[1]

    else:  # pragma: no cover
        raise AssemblyError(f"unknown displacement space {space!r}")

    traction = getattr(problem, "traction", None)
    if traction is not None:
        F += _traction_load(mesh, traction, space)
    return F


def _traction_load(mesh, traction, space):
    gauss_t, gauss_w = np.polynomial.legendre.leggauss(3)
    F = np.zeros(2 * mesh.n_vertices)
    keyed = {}
    if space == "q9":
        for ei in range(mesh.n_elements):
            conn = mesh.elements[ei]
            for le in range(4):
                a, b = int(conn[le]), int(conn[(le + 1) % 4])
                keyed[(min(a, b), max(a, b))] = int(conn[4 + le])
    for (a, b), tag in zip(mesh.boundary_edges, mesh.boundary_tags):
        if tag != "N":
            continue
        pa, pb = mesh.vertices[a], mesh.vertices[b]
        half = 0.5 * np.linalg.norm(pb - pa)
        for t, w in zip(gauss_t, gauss_w):
            lo, hi = 0.5 * (1.0 - t), 0.5 * (1.0 + t)
            x = lo * pa + hi * pb
            tv = np.asarray(traction(x), dtype=float)
            if space == "q9":
                mid = keyed[(min(int(a), int(b)), max(int(a), int(b)))]
                shp = {int(a): lo * (2.0 * lo - 1.0), int(b): hi * (2.0 * hi - 1.0),
                       mid: 4.0 * lo * hi}
            else:
                shp = {int(a): lo, int(b): hi}
            for v, s in shp.items():
                F[2 * v] += w * half * s * tv[0]
                F[2 * v + 1] += w * half * s * tv[1]
    return F


def apply_dirichlet(system, dofmap, values=None, mesh=None):
    """Eliminate constrained dofs symmetrically.

    values may be None (homogeneous), a callable mapping a vertex
    coordinate to its imposed displacement pair, or a full-length dof
    array.  Known-dof columns move to the right-hand side.
    """
    if system.reduced:
        raise AssemblyError("system is already reduced")
    n = system.K.shape[0]
    imposed = np.zeros(n)
    if callable(values):
        if mesh is None:
            raise AssemblyError("a mesh is required to evaluate boundary values")
        for d in np.flatnonzero(dofmap.constrained):
            v, comp = divmod(int(d), 2)
            imposed[d] = values(mesh.vertices[v])[comp]
    elif values is not None:
        imposed = np.asarray(values, dtype=float).copy()
        imposed[~dofmap.constrained] = 0.0

    free = dofmap.free
    csc = system.K.tocsc()
    K_red = csc[:, free][free, :].tocsr()
    rhs = system.F[free] - (csc[:, dofmap.constrained]
                            @ imposed[dofmap.constrained])[free]
    return LinearSystem(K=K_red, F=rhs, method=system.method, reduced=True,
                        dofmap=dofmap, imposed=imposed)


def solve(system):
    """Direct sparse solve of a reduced SPD system.

    Returns the full-length displacement vector (imposed values filled
    in).  The relative residual is checked against 1e-10.
    """
    if not system.reduced:
        raise SolverError("apply_dirichlet before solving")
    u = system.imposed.copy()
    if system.dofmap.n_free == 0:
        return u
    K = system.K.tocsc()
    try:
        lu = spla.splu(K, permc_spec="MMD_AT_PLUS_A")
    except RuntimeError as exc:
        raise SolverError(f"factorization breakdown: {exc}") from exc
    pivots = np.abs(lu.U.diagonal())
    if pivots.min() <= 0.0 or not np.isfinite(pivots.min()):
        raise SolverError(f"factorization breakdown: smallest pivot {pivots.min()}")
    x = lu.solve(system.F)
    x += lu.solve(system.F - K @ x)  # one refinement step tightens the residual
    scale = float(np.linalg.norm(system.F))
    residual = float(np.linalg.norm(K @ x - system.F))
    if residual > 1e-10 * max(scale, 1e-300):
        raise SolverError(
            f"solver residual {residual:.3e} exceeds 1e-10 * |F| (|F| = {scale:.3e}); "
            f"smallest pivot {pivots.min():.3e}")
    u[system.dofmap.free] = x
    return u


def solve_method(mesh, problem, method, sse_route="gauss"):
    """Assemble and solve one method on one mesh; returns nodal displacements."""
    system = assemble_stiffness(mesh, problem.material, method, sse_route=sse_route)
    system.F = assemble_load(mesh, problem, method)
    dofmap = build_dofmap(mesh)
    reduced = apply_dirichlet(system, dofmap, values=problem.dirichlet_value, mesh=mesh)
    return solve(reduced)


def method_strain(mesh, material, method, u, sse_representation="interpolant"):
    """The strain representation a method reports for a solved displacement.

    Piecewise-constant methods return a StrainField; sse returns the list
    of in-element interpolants (or, with
    sse_representation="projected", the twice-projected piecewise-constant
    field); fem_blq4 returns None (its strain is evaluated pointwise).
    """
    _check_method(mesh, method)
    if method in ("fem_t3", "fem_plq4"):
        return smoothing.compatible_strain_field(mesh, u)
    if method == "esfem":
        return smoothing.esfem_field(mesh, u)
    if method == "nsfem":
        return smoothing.nsfem_field(mesh, u)
    if method == "csfem":
        return smoothing.csfem_field(mesh, u)
    if method == "sse":
        if sse_representation == "interpolant":
            return smoothing.sse_field(mesh, u)
        interior, bbar = smoothing.sse_projection_pipeline(mesh)
        values = (bbar @ u).reshape(-1, 3)
        return smoothing.StrainField(interior, values)
    return None
