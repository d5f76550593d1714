"""Element kinematics: constitutive matrices, strain-displacement operators,
shape functions, and quadrature rules.

Strain uses engineering Voigt order (eps_xx, eps_yy, gamma_xy) so that a
3x(2k) matrix maps interleaved nodal displacements (u1x, u1y, ..., ukx, uky)
to a constant or pointwise strain vector.

Conventions (recorded here because figures elsewhere leave them open):
  * T3 nodes are counterclockwise; local edge i joins nodes i and i+1 (mod 3).
  * The interior 3-point triangle rule places point Gi nearest node i
    (barycentric weight 2/3 on node i), i.e. between edges i-1 and i.
  * Q4 nodes are counterclockwise at natural corners (-1,-1), (1,-1),
    (1,1), (-1,1); the 2x2 Gauss points G1..G4 follow the same
    counterclockwise quadrant order, Gi in the quadrant of node i.
"""

from dataclasses import dataclass

import numpy as np

__all__ = [
    "MaterialMatrix",
    "dmatrix",
    "ElementStrainMap",
    "t3_strain_map",
    "q4pl_strain_map",
    "q4_shape",
    "q4bl_strain_map",
    "q9_shape",
    "q9_strain_map",
    "QuadratureRule",
    "quadrature",
    "triangle_quadrature_points",
    "quad_quadrature_points",
    "quad_subtriangle_areas",
    "TRI_GAUSS_NATURAL",
    "QUAD_GAUSS_NATURAL",
]


# ---------------------------------------------------------------------------
# constitutive matrix

@dataclass(frozen=True)
class MaterialMatrix:
    """3x3 constitutive matrix with the parameters it was built from."""

    D: np.ndarray
    E: float
    nu: float
    mode: str

    def __post_init__(self):
        self.D.setflags(write=False)


def dmatrix(E, nu, mode="plane_stress"):
    """Isotropic plane-stress / plane-strain constitutive matrix.

    Args:
        E: Young's modulus, > 0.
        nu: Poisson's ratio in [0, 0.5).
        mode: "plane_stress" or "plane_strain".
    """
    if E <= 0.0:
        raise ValueError(f"Young's modulus must be positive, got {E}")
    if not 0.0 <= nu < 0.5:
        raise ValueError(f"Poisson's ratio must lie in [0, 0.5), got {nu}")
    if mode == "plane_stress":
        c = E / (1.0 - nu * nu)
        D = c * np.array([
            [1.0, nu, 0.0],
            [nu, 1.0, 0.0],
            [0.0, 0.0, 0.5 * (1.0 - nu)],
        ])
    elif mode == "plane_strain":
        c = E / ((1.0 + nu) * (1.0 - 2.0 * nu))
        D = c * np.array([
            [1.0 - nu, nu, 0.0],
            [nu, 1.0 - nu, 0.0],
            [0.0, 0.0, 0.5 * (1.0 - 2.0 * nu)],
        ])
    else:
        raise ValueError(f"unknown material mode {mode!r}")
    if not np.allclose(D, D.T):
        raise ValueError("constitutive matrix is not symmetric")
    if np.linalg.eigvalsh(D).min() <= 0.0:
        raise ValueError("constitutive matrix is not positive definite")
    return MaterialMatrix(D=D, E=float(E), nu=float(nu), mode=mode)


# ---------------------------------------------------------------------------
# strain-displacement operators

@dataclass
class ElementStrainMap:
    """Constant strain operators on the cells of one element.

    matrices has shape (ncells, 3, 2k): one constant B matrix per cell
    (the whole element for T3, the four subtriangles for piecewise-linear
    Q4).  areas holds the matching cell areas.
    """

    matrices: np.ndarray
    areas: np.ndarray


def _triangle_bmatrix(coords):
    x, y = coords[:, 0], coords[:, 1]
    area2 = (x[1] - x[0]) * (y[2] - y[0]) - (x[2] - x[0]) * (y[1] - y[0])
    if area2 <= 0.0:
        raise ValueError("triangle is degenerate or clockwise")
    b = np.array([y[1] - y[2], y[2] - y[0], y[0] - y[1]]) / area2
    c = np.array([x[2] - x[1], x[0] - x[2], x[1] - x[0]]) / area2
    B = np.zeros((3, 6))
    B[0, 0::2] = b
    B[1, 1::2] = c
    B[2, 0::2] = c
    B[2, 1::2] = b
    return B, 0.5 * area2


def t3_strain_map(coords):
    """Constant-strain triangle operator (one 3x6 matrix)."""
    coords = np.asarray(coords, dtype=float)
    B, area = _triangle_bmatrix(coords)
    return ElementStrainMap(matrices=B[None, :, :], areas=np.array([area]))


def q4pl_strain_map(coords):
    """Piecewise-linear quad operator: 4 constant 3x8 matrices.

    Each subtriangle joins edge (i, i+1) with the corner-average center;
    the center displacement is condensed out as the mean of the corners.
    """
    coords = np.asarray(coords, dtype=float)
    _check_quad(coords)
    center = coords.mean(axis=0)
    mats = np.zeros((4, 3, 8))
    areas = np.zeros(4)
    for i in range(4):
        j = (i + 1) % 4
        tri = np.array([coords[i], coords[j], center])
        Bt, area = _triangle_bmatrix(tri)
        B = np.zeros((3, 8))
        B[:, 2 * i:2 * i + 2] = Bt[:, 0:2]
        B[:, 2 * j:2 * j + 2] += Bt[:, 2:4]
        for a in range(4):
            B[:, 2 * a:2 * a + 2] += 0.25 * Bt[:, 4:6]
        mats[i] = B
        areas[i] = area
    return ElementStrainMap(matrices=mats, areas=areas)


def quad_subtriangle_areas(coords):
    """Areas of the four (node_i, node_i+1, center) subtriangles."""
    coords = np.asarray(coords, dtype=float)
    center = coords.mean(axis=0)
    areas = np.zeros(4)
    for i in range(4):
        j = (i + 1) % 4
        a, b = coords[i], coords[j]
        areas[i] = 0.5 * ((b[0] - a[0]) * (center[1] - a[1])
                          - (center[0] - a[0]) * (b[1] - a[1]))
    return areas


def _check_quad(coords):
    if coords.shape != (4, 2):
        raise ValueError("quad element needs 4 vertices")
    d = np.roll(coords, -1, axis=0) - coords
    dn = np.roll(d, -1, axis=0)
    cross = d[:, 0] * dn[:, 1] - d[:, 1] * dn[:, 0]
    if np.any(cross <= 0.0):
        raise ValueError("quad element is not convex and counterclockwise")


# natural-coordinate corners shared by Q4 and the Q9 corner nodes
_CORNERS = np.array([[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]])


def q4_shape(rs):
    """Bilinear shape functions and natural gradients.

    Accepts a single (2,) point or a batch (..., 2); returns values of
    shape (..., 4) and gradients of shape (..., 4, 2).
    """
    rs = np.asarray(rs, dtype=float)
    r, s = rs[..., 0], rs[..., 1]
    rc, sc = _CORNERS[:, 0], _CORNERS[:, 1]
    N = 0.25 * (1.0 + r[..., None] * rc) * (1.0 + s[..., None] * sc)
    dN = np.empty(N.shape + (2,))
    dN[..., 0] = 0.25 * rc * (1.0 + s[..., None] * sc)
    dN[..., 1] = 0.25 * sc * (1.0 + r[..., None] * rc)
    return N, dN


def _quad1d(t):
    # 1D quadratic Lagrange basis on nodes {-1, 0, 1} and its derivative
    vals = np.stack([0.5 * t * (t - 1.0), 1.0 - t * t, 0.5 * t * (t + 1.0)], axis=-1)
    ders = np.stack([t - 0.5, -2.0 * t, t + 0.5], axis=-1)
    return vals, ders


# (r-node, s-node) index pairs into the 1D basis {-1, 0, +1} -> {0, 1, 2}
_Q9_NODES = [(0, 0), (2, 0), (2, 2), (0, 2), (1, 0), (2, 1), (1, 2), (0, 1), (1, 1)]


def q9_shape(rs):
    """Biquadratic (9-node Lagrange) shape functions and natural gradients.

    Node order: corners ccw, then edge midside nodes ccw, then center.
    Batch-capable like q4_shape.
    """
    rs = np.asarray(rs, dtype=float)
    r, s = rs[..., 0], rs[..., 1]
    lr, dlr = _quad1d(r)
    ls, dls = _quad1d(s)
    N = np.empty(rs.shape[:-1] + (9,))
    dN = np.empty(rs.shape[:-1] + (9, 2))
    for a, (ir, js) in enumerate(_Q9_NODES):
        N[..., a] = lr[..., ir] * ls[..., js]
        dN[..., a, 0] = dlr[..., ir] * ls[..., js]
        dN[..., a, 1] = lr[..., ir] * dls[..., js]
    return N, dN


def _iso_bmatrix(coords, dN):
    """Pointwise isoparametric B matrix and Jacobian determinant.

    coords: (..., k, 2) nodal coordinates, dN: (..., k, 2) natural
    gradients.  Returns B (..., 3, 2k) and detJ (...,).
    """
    J = np.einsum("...ai,...aj->...ij", coords, dN)  # J[i, j] = dx_i/dr_j
    detJ = J[..., 0, 0] * J[..., 1, 1] - J[..., 0, 1] * J[..., 1, 0]
    if np.any(detJ <= 0.0):
        raise ValueError("singular or inverted isoparametric mapping")
    invJ = np.empty_like(J)
    invJ[..., 0, 0] = J[..., 1, 1]
    invJ[..., 0, 1] = -J[..., 0, 1]
    invJ[..., 1, 0] = -J[..., 1, 0]
    invJ[..., 1, 1] = J[..., 0, 0]
    invJ = invJ / detJ[..., None, None]
    grad = np.einsum("...ai,...ij->...aj", dN, invJ)  # d/dx, d/dy per node
    k = coords.shape[-2]
    B = np.zeros(grad.shape[:-2] + (3, 2 * k))
    B[..., 0, 0::2] = grad[..., :, 0]
    B[..., 1, 1::2] = grad[..., :, 1]
    B[..., 2, 0::2] = grad[..., :, 1]
    B[..., 2, 1::2] = grad[..., :, 0]
    return B, detJ


def q4bl_strain_map(coords, rs):
    """Isoparametric bilinear B matrix (3x8) at one natural point."""
    coords = np.asarray(coords, dtype=float)
    _check_quad(coords)
    _, dN = q4_shape(rs)
    B, _ = _iso_bmatrix(coords, dN)
    return B


def q9_strain_map(coords, rs):
    """Biquadratic B matrix (3x18) at one natural point."""
    coords = np.asarray(coords, dtype=float)
    _, dN = q9_shape(rs)
    B, _ = _iso_bmatrix(coords, dN)
    return B


# ---------------------------------------------------------------------------
# quadrature

@dataclass(frozen=True)
class QuadratureRule:
    """Points and weights on a reference domain.

    domain "tri" is the unit triangle (0,0)-(1,0)-(0,1) (weights sum to
    1/2); domain "quad" is [-1,1]^2 (weights sum to 4).
    """

    name: str
    domain: str
    points: np.ndarray
    weights: np.ndarray
    degree: int

    def __post_init__(self):
        self.points.setflags(write=False)
        self.weights.setflags(write=False)


def _tri_rule_from_barycentric(name, bary, weights, degree):
    pts = np.array([[b[1], b[2]] for b in bary])
    w = 0.5 * np.asarray(weights, dtype=float)
    return QuadratureRule(name=name, domain="tri", points=pts, weights=w, degree=degree)


# interior degree-2 rule; point i carries barycentric weight 2/3 on node i
TRI_GAUSS_NATURAL = np.array([[1.0 / 6.0, 1.0 / 6.0],
                              [2.0 / 3.0, 1.0 / 6.0],
                              [1.0 / 6.0, 2.0 / 3.0]])

# 2x2 Gauss points in ccw quadrant order (quadrant of node i holds Gi)
_G = 1.0 / np.sqrt(3.0)
QUAD_GAUSS_NATURAL = np.array([[-_G, -_G], [_G, -_G], [_G, _G], [-_G, _G]])

_DUNAVANT4_A = 0.445948490915965
_DUNAVANT4_B = 0.091576213509771
_DUNAVANT4_WA = 0.223381589678011
_DUNAVANT4_WB = 0.109951743655322


def _gauss1d(n):
    return np.polynomial.legendre.leggauss(n)


def quadrature(kind):
    """Named quadrature rules used throughout the library.

    kinds: tri3 (degree 2, interior), tri_deg4 (6-point degree 4),
    quad2x2 (degree 3 per direction), quad3x3 (degree 5 per direction).
    """
    if kind == "tri3":
        bary = [(2.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0),
                (1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0),
                (1.0 / 6.0, 1.0 / 6.0, 2.0 / 3.0)]
        return _tri_rule_from_barycentric("tri3", bary, [1.0 / 3.0] * 3, 2)
    if kind == "tri_deg4":
        a, b = _DUNAVANT4_A, _DUNAVANT4_B
        bary = [(1.0 - 2.0 * a, a, a), (a, 1.0 - 2.0 * a, a), (a, a, 1.0 - 2.0 * a),
                (1.0 - 2.0 * b, b, b), (b, 1.0 - 2.0 * b, b), (b, b, 1.0 - 2.0 * b)]
        w = [_DUNAVANT4_WA] * 3 + [_DUNAVANT4_WB] * 3
        return _tri_rule_from_barycentric("tri_deg4", bary, w, 4)
    if kind in ("quad2x2", "quad3x3"):
        n = 2 if kind == "quad2x2" else 3
        t, w1 = _gauss1d(n)
        pts = np.array([[r, s] for s in t for r in t])
        w = np.array([wr * ws for ws in w1 for wr in w1])
        return QuadratureRule(name=kind, domain="quad", points=pts, weights=w,
                              degree=2 * n - 1)
    raise ValueError(f"unknown quadrature kind {kind!r}")


def triangle_quadrature_points(rule, coords):
    """Map a reference-triangle rule to a physical triangle.

    Returns physical points (n, 2) and weights scaled so they sum to the
    triangle area.
    """
    if rule.domain != "tri":
        raise ValueError("rule is not a triangle rule")
    coords = np.asarray(coords, dtype=float)
    v0 = coords[0]
    e1 = coords[1] - v0
    e2 = coords[2] - v0
    pts = v0 + np.outer(rule.points[:, 0], e1) + np.outer(rule.points[:, 1], e2)
    jac = e1[0] * e2[1] - e1[1] * e2[0]
    return pts, rule.weights * jac


def quad_quadrature_points(rule, coords):
    """Map a [-1,1]^2 rule through the bilinear map of a physical quad.

    Returns physical points (n, 2) and weights w_i * detJ(p_i).
    """
    if rule.domain != "quad":
        raise ValueError("rule is not a quad rule")
    coords = np.asarray(coords, dtype=float)
    N, dN = q4_shape(rule.points)
    pts = N @ coords
    J = np.einsum("ai,paj->pij", coords, dN)
    detJ = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
    if np.any(detJ <= 0.0):
        raise ValueError("quad cell has a non-positive Jacobian at a quadrature point")
    return pts, rule.weights * detJ
