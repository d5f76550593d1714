"""Independent oracles used by the tests.

These deliberately avoid the library's own machinery: overlap areas come
from shapely, least-squares projections from dense normal equations, and
symbolic integrals from sympy (imported where used).
"""

import numpy as np
from shapely.geometry import Polygon


def shapely_overlap(poly_a, poly_b):
    """Intersection area of two polygons via shapely."""
    return Polygon(np.asarray(poly_a)).intersection(Polygon(np.asarray(poly_b))).area


def dense_projection(fine_cells, fine_values, coarse_cells):
    """L2 projection of a piecewise-constant field by normal equations.

    The mass matrix of coarse indicators is diagonal (cell areas); the
    right-hand side integrals use shapely intersection areas.
    """
    fine_values = np.asarray(fine_values, dtype=float)
    out = np.zeros((len(coarse_cells), fine_values.shape[1]))
    for ci, cpoly in enumerate(coarse_cells):
        cp = Polygon(np.asarray(cpoly))
        rhs = np.zeros(fine_values.shape[1])
        for fi, fpoly in enumerate(fine_cells):
            area = cp.intersection(Polygon(np.asarray(fpoly))).area
            rhs += area * fine_values[fi]
        out[ci] = rhs / cp.area
    return out


def dense_t3_stiffness(mesh, D):
    """Hand-assembled dense constant-strain-triangle stiffness."""
    n = 2 * mesh.n_vertices
    K = np.zeros((n, n))
    for ei in range(mesh.n_elements):
        conn = mesh.elements[ei]
        x = mesh.vertices[conn, 0]
        y = mesh.vertices[conn, 1]
        area2 = (x[1] - x[0]) * (y[2] - y[0]) - (x[2] - x[0]) * (y[1] - y[0])
        b = np.array([y[1] - y[2], y[2] - y[0], y[0] - y[1]]) / area2
        c = np.array([x[2] - x[1], x[0] - x[2], x[1] - x[0]]) / area2
        B = np.zeros((3, 6))
        for a in range(3):
            B[0, 2 * a] = b[a]
            B[1, 2 * a + 1] = c[a]
            B[2, 2 * a] = c[a]
            B[2, 2 * a + 1] = b[a]
        ke = 0.5 * area2 * B.T @ D @ B
        dofs = np.empty(6, dtype=int)
        dofs[0::2] = 2 * conn
        dofs[1::2] = 2 * conn + 1
        for i in range(6):
            for j in range(6):
                K[dofs[i], dofs[j]] += ke[i, j]
    return K


def finite_difference_strain(displacement, point, h=1e-6):
    """Central-difference Voigt strain of a displacement field callable."""
    point = np.asarray(point, dtype=float)
    ex = np.array([h, 0.0])
    ey = np.array([0.0, h])
    dudx = (displacement(point + ex) - displacement(point - ex)) / (2 * h)
    dudy = (displacement(point + ey) - displacement(point - ey)) / (2 * h)
    return np.array([dudx[0], dudy[1], dudy[0] + dudx[1]])
