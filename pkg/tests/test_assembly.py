import numpy as np
import pytest
import scipy.sparse.linalg as spla

from smoothfem import assembly
from smoothfem.assembly import (AssemblyError, SolverError, apply_dirichlet,
                                assemble_load, assemble_stiffness, block_problem,
                                build_dofmap, patch_problem, solve, solve_method)
from smoothfem.elements import dmatrix
from smoothfem.mesh import (Mesh, distort_mesh, generate_regular_quad,
                            generate_regular_tri, transform_mesh, with_boundary_tag)
from smoothfem.smoothing import element_dofs
from _oracles import dense_t3_stiffness

UNIT = (0.0, 0.0, 1.0, 1.0)


def single_triangle():
    verts = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    return Mesh("t3", verts, np.array([[0, 1, 2]]),
                np.array([[0, 1], [1, 2], [2, 0]]), ["D", "N", "N"])


@pytest.fixture(scope="module")
def mat():
    return dmatrix(1.0e3, 0.2)


# ---------------------------------------------------------------------------
# stiffness

def test_single_element_sse_equals_fem(mat):
    m = single_triangle()
    k_fem = assemble_stiffness(m, mat, "fem_t3").K.toarray()
    k_sse = assemble_stiffness(m, mat, "sse").K.toarray()
    assert k_sse == pytest.approx(k_fem, abs=1e-12 * np.abs(k_fem).max())


def test_sse_routes_agree_regular_tri(mat):
    m = generate_regular_tri(2, "union_jack", UNIT)
    kg = assemble_stiffness(m, mat, "sse", sse_route="gauss").K
    kp = assemble_stiffness(m, mat, "sse", sse_route="projection").K
    diff = kg - kp
    gap = np.sqrt((diff.multiply(diff)).sum() / (kp.multiply(kp)).sum())
    assert gap <= 1e-10


def test_fem_t3_matches_dense_oracle(mat):
    m = generate_regular_tri(2, "slash", UNIT)
    K = assemble_stiffness(m, mat, "fem_t3").K.toarray()
    oracle = dense_t3_stiffness(m, mat.D)
    assert np.abs(K - oracle).max() <= 1e-12 * np.abs(oracle).max()


@pytest.mark.parametrize("method,maker", [
    ("fem_t3", lambda: distort_mesh(generate_regular_tri(2, "slash", UNIT), 0.2, 3)),
    ("esfem", lambda: distort_mesh(generate_regular_tri(2, "slash", UNIT), 0.2, 3)),
    ("nsfem", lambda: distort_mesh(generate_regular_tri(2, "slash", UNIT), 0.2, 3)),
    ("sse", lambda: distort_mesh(generate_regular_tri(2, "slash", UNIT), 0.2, 3)),
    ("fem_plq4", lambda: distort_mesh(generate_regular_quad(2, UNIT), 0.2, 3)),
    ("fem_blq4", lambda: distort_mesh(generate_regular_quad(2, UNIT), 0.2, 3)),
    ("csfem", lambda: distort_mesh(generate_regular_quad(2, UNIT), 0.2, 3)),
    ("esfem", lambda: distort_mesh(generate_regular_quad(2, UNIT), 0.2, 3)),
    ("sse", lambda: generate_regular_quad(2, UNIT)),
])
def test_rigid_body_nullspace_exactly_three(method, maker, mat):
    m = maker()
    K = assemble_stiffness(m, mat, method).K
    v = m.vertices
    modes = np.zeros((3, 2 * m.n_vertices))
    modes[0, 0::2] = 1.0
    modes[1, 1::2] = 1.0
    modes[2, 0::2] = -v[:, 1]
    modes[2, 1::2] = v[:, 0]
    scale = np.abs(K).max()
    for r in modes:
        assert np.abs(K @ r).max() <= 1e-10 * scale * max(np.abs(r).max(), 1.0)
    eigs = np.linalg.eigvalsh(K.toarray())
    assert eigs[2] <= 1e-10 * scale          # three rigid-body modes
    assert eigs[3] >= 1e-4 * scale           # and nothing else


def test_stiffness_symmetry(mat):
    m = distort_mesh(generate_regular_quad(3, UNIT), 0.2, seed=5)
    for method in ("fem_plq4", "fem_blq4", "esfem", "csfem", "sse"):
        K = assemble_stiffness(m, mat, method).K
        gap = np.abs((K - K.T)).max()
        assert gap <= 1e-12 * np.abs(K).max()


def test_method_mesh_mismatch_rejected(mat):
    tri = generate_regular_tri(2, "slash", UNIT)
    quad = generate_regular_quad(2, UNIT)
    with pytest.raises(AssemblyError):
        assemble_stiffness(tri, mat, "fem_blq4")
    with pytest.raises(AssemblyError):
        assemble_stiffness(quad, mat, "nsfem")
    with pytest.raises(AssemblyError):
        assemble_stiffness(tri, mat, "galerkin")
    with pytest.raises(AssemblyError):
        assemble_stiffness(tri, mat, "sse", sse_route="magic")


def test_assembly_deterministic(mat):
    m = distort_mesh(generate_regular_tri(3, "union_jack", UNIT), 0.25, seed=9)
    k1 = assemble_stiffness(m, mat, "sse").K
    k2 = assemble_stiffness(m, mat, "sse").K
    assert np.array_equal(k1.data, k2.data)
    assert np.array_equal(k1.indices, k2.indices)


# ---------------------------------------------------------------------------
# loads

def test_load_zero_body_force(mat):
    m = generate_regular_tri(2, "slash", UNIT)
    problem = patch_problem(mat)
    assert np.all(assemble_load(m, problem, "fem_t3") == 0.0)


def test_load_constant_body_force_partition_of_unity(mat):
    m = generate_regular_tri(3, "union_jack", UNIT)

    def unit_x(pts):
        pts = np.asarray(pts).reshape(-1, 2)
        return np.column_stack([np.ones(len(pts)), np.zeros(len(pts))])

    problem = assembly.BlockProblem(domain=UNIT, material=mat, body_force=unit_x)
    F = assemble_load(m, problem, "fem_t3")
    assert F[0::2].sum() == pytest.approx(1.0, rel=1e-13)  # domain area
    assert F[1::2].sum() == pytest.approx(0.0, abs=1e-14)


def test_load_block_quad_matches_sympy_oracle():
    import sympy as sy
    m = generate_regular_quad(1, UNIT)
    problem = block_problem(domain=UNIT)
    F = assemble_load(m, problem, "fem_blq4")
    x, y = sy.symbols("x y")
    shapes = [(1 - x) * (1 - y), x * (1 - y), x * y, (1 - x) * y]
    order = [tuple(v) for v in m.vertices[m.elements[0]]]
    corner_of = {(0.0, 0.0): 0, (1.0, 0.0): 1, (1.0, 1.0): 2, (0.0, 1.0): 3}
    for local, corner in enumerate(order):
        N = shapes[corner_of[corner]]
        fx = float(sy.integrate(-y ** 2 * N, (x, 0, 1), (y, 0, 1)))
        fy = float(sy.integrate((1 - x ** 2) * N, (x, 0, 1), (y, 0, 1)))
        v = m.elements[0][local]
        assert F[2 * v] == pytest.approx(fx, abs=1e-12)
        assert F[2 * v + 1] == pytest.approx(fy, abs=1e-12)


def test_load_traction_edge_integral(mat):
    # constant traction t = (0, -1) on the top edge of a unit square
    m = generate_regular_quad(2, UNIT)

    def zero_body(pts):
        return np.zeros_like(np.asarray(pts).reshape(-1, 2))

    problem = assembly.BlockProblem(domain=UNIT, material=mat, body_force=zero_body,
                                    traction=lambda x: (0.0, -1.0))
    F = assemble_load(m, problem, "fem_blq4")
    top = [v for v in range(m.n_vertices) if m.vertices[v, 1] == 1.0]
    assert F[1::2].sum() == pytest.approx(-3.0, rel=1e-12)  # three Neumann sides
    assert all(F[2 * v + 1] < 0 for v in top)


# ---------------------------------------------------------------------------
# constraints and solve

def test_apply_dirichlet_free_count(mat):
    m = generate_regular_quad(2, UNIT)
    dofmap = build_dofmap(m)
    off_bottom = sum(1 for v in range(m.n_vertices) if m.vertices[v, 1] > 0.0)
    assert dofmap.n_free == 2 * off_bottom
    system = assemble_stiffness(m, mat, "fem_blq4")
    reduced = apply_dirichlet(system, dofmap)
    assert reduced.K.shape == (dofmap.n_free, dofmap.n_free)
    # reduced operator is SPD: factorization succeeds with positive pivots
    lu = spla.splu(reduced.K.tocsc())
    assert np.abs(lu.U.diagonal()).min() > 0.0


def test_fully_clamped_single_element_empty_system(mat):
    m = with_boundary_tag(generate_regular_quad(1, UNIT), "D")
    problem = patch_problem(mat)
    u = solve_method(m, problem, "fem_blq4")
    expected = np.array([problem.dirichlet_value(v) for v in m.vertices]).ravel()
    assert u == pytest.approx(expected, abs=1e-15)


def test_solve_recovers_random_solution(mat, rng):
    m = generate_regular_tri(3, "slash", UNIT)
    system = assemble_stiffness(m, mat, "fem_t3")
    dofmap = build_dofmap(m)
    reduced = apply_dirichlet(system, dofmap)
    w = rng.standard_normal(dofmap.n_free)
    reduced.F = reduced.K @ w
    u = solve(reduced)
    assert u[dofmap.free] == pytest.approx(w, abs=1e-10 * np.abs(w).max())


def test_solve_zero_load_zero_solution(mat):
    m = generate_regular_tri(2, "slash", UNIT)
    system = assemble_stiffness(m, mat, "fem_t3")
    reduced = apply_dirichlet(system, build_dofmap(m))
    assert np.all(solve(reduced) == 0.0)


def test_solve_requires_reduction(mat):
    m = generate_regular_tri(2, "slash", UNIT)
    with pytest.raises(SolverError):
        solve(assemble_stiffness(m, mat, "fem_t3"))


def test_galerkin_residual_per_method():
    problem = block_problem()
    meshes = {"t3": generate_regular_tri(2, "union_jack", problem.domain),
              "q4": generate_regular_quad(2, problem.domain)}
    for kind, methods in (("t3", ("fem_t3", "esfem", "nsfem", "sse")),
                          ("q4", ("fem_plq4", "fem_blq4", "esfem", "csfem", "sse"))):
        m = meshes[kind]
        for method in methods:
            system = assemble_stiffness(m, problem.material, method)
            system.F = assemble_load(m, problem, method)
            dofmap = build_dofmap(m)
            reduced = apply_dirichlet(system, dofmap)
            u = solve(reduced)
            resid = system.K @ u - system.F
            assert np.abs(resid[dofmap.free]).max() <= 1e-10 * np.abs(system.F).max()


# ---------------------------------------------------------------------------
# patch tests (stronger meshes than the regular ones in the verify command)

def _patch_error(mesh, method, mat, sse_route="gauss"):
    problem = patch_problem(mat)
    clamped = with_boundary_tag(mesh, "D")
    u = solve_method(clamped, problem, method, sse_route=sse_route)
    exact = problem.exact_strain
    strain = assembly.method_strain(clamped, mat, method, u)
    if strain is None:
        from smoothfem.elements import q4_shape, quadrature
        rule = quadrature("quad2x2")
        worst = 0.0
        for ei in range(clamped.n_elements):
            coords = clamped.element_corners(ei)
            ue = u[element_dofs(clamped, ei)]
            _, dN = q4_shape(rule.points)
            for p in range(len(rule.points)):
                B, _ = assembly._pointwise_b(coords, dN[p])
                worst = max(worst, np.abs(B @ ue - exact).max())
    elif isinstance(strain, list):
        worst = max(np.abs(f.gauss_values - exact).max() for f in strain)
    else:
        worst = np.abs(strain.cell_values() - exact).max()
    return worst / np.abs(exact).max()


@pytest.mark.parametrize("method", ["fem_t3", "esfem", "nsfem", "sse"])
def test_patch_distorted_tri(method, mat):
    m = distort_mesh(generate_regular_tri(3, "backslash", UNIT), 0.25, seed=7)
    assert _patch_error(m, method, mat) <= 1e-10


@pytest.mark.parametrize("method", ["fem_plq4", "fem_blq4", "esfem", "csfem"])
def test_patch_distorted_quad(method, mat):
    m = distort_mesh(generate_regular_quad(3, UNIT), 0.25, seed=7)
    assert _patch_error(m, method, mat) <= 1e-10


def test_patch_single_element_sse(mat):
    # one all-Dirichlet triangle: no free dofs, the self-average rule makes
    # the smoothed field reproduce the imposed constant exactly
    m = Mesh("t3", np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]),
             np.array([[0, 1, 2]]), np.array([[0, 1], [1, 2], [2, 0]]),
             ["D", "D", "D"])
    assert _patch_error(m, "sse", mat) <= 1e-12


def test_patch_sse_quad_parallelogram_and_projection_route(mat):
    sheared = transform_mesh(generate_regular_quad(3, UNIT), [[1.0, 0.3], [0.0, 1.0]])
    assert _patch_error(sheared, "sse", mat) <= 1e-10
    distorted = distort_mesh(generate_regular_quad(3, UNIT), 0.25, seed=7)
    assert _patch_error(distorted, "sse", mat, sse_route="projection") <= 1e-10
