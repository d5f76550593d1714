import numpy as np
import pytest

from smoothfem import analysis, assembly
from smoothfem.analysis import (ErrorReport, convergence_slope, energy_error,
                                energy_norm, probe_displacement, projection_error,
                                run_method, solve_reference)
from smoothfem.assembly import block_problem, patch_problem, solve_method
from smoothfem.elements import dmatrix
from smoothfem.mesh import (build_elementwise_subdivision, generate_regular_q9,
                            generate_regular_quad, generate_regular_tri,
                            with_boundary_tag)
from smoothfem.smoothing import StrainField, sse_field

UNIT = (0.0, 0.0, 1.0, 1.0)


@pytest.fixture(scope="module")
def mat():
    return dmatrix(1.0e3, 0.2)


@pytest.fixture(scope="module")
def patch_reference(mat):
    problem = patch_problem(mat)
    mesh = with_boundary_tag(generate_regular_q9(4, UNIT), "D")
    u = assembly.solve_method(mesh, problem, "fem_q9")
    ref = analysis.ReferenceSolution(problem=problem, mesh=mesh, displacement=u,
                                     material=mat)
    return problem, ref


# ---------------------------------------------------------------------------
# energy norms

def test_energy_norm_zero_and_constant(mat):
    sub = build_elementwise_subdivision(generate_regular_tri(2, "slash", UNIT))
    zero = StrainField(sub, np.zeros((sub.n_groups, 3)))
    assert energy_norm(zero, mat) == 0.0
    eps0 = np.array([1.0e-3, -2.0e-3, 0.5e-3])
    const = StrainField(sub, np.tile(eps0, (sub.n_groups, 1)))
    assert energy_norm(const, mat) == pytest.approx(np.sqrt(eps0 @ mat.D @ eps0),
                                                    rel=1e-13)


def test_energy_norm_matches_dense_sum(mat, rng):
    sub = build_elementwise_subdivision(generate_regular_quad(3, UNIT))
    values = rng.standard_normal((sub.n_groups, 3))
    field = StrainField(sub, values)
    dense = sum(a * (v @ mat.D @ v) for a, v in zip(sub.areas, values))
    assert energy_norm(field, mat) == pytest.approx(np.sqrt(dense), rel=1e-13)


def test_energy_norm_sse_fields(mat, rng):
    m = generate_regular_tri(2, "slash", UNIT)
    u = rng.standard_normal(2 * m.n_vertices) * 1e-3
    fields = sse_field(m, u)
    val = energy_norm(fields, mat, mesh=m)
    # exact integral of the linear interpolant, element by element
    total = 0.0
    for ei, f in enumerate(fields):
        vals = f.gauss_values
        total += m.element_areas[ei] / 3.0 * np.einsum("ni,ij,nj->", vals, mat.D, vals)
    assert val == pytest.approx(np.sqrt(total), rel=1e-13)


# ---------------------------------------------------------------------------
# reference solution

def test_reference_patch_strain_is_exact(patch_reference, rng):
    problem, ref = patch_reference
    points = rng.random((30, 2)) * 0.96 + 0.02
    strains = ref.strain_at(points)
    assert strains == pytest.approx(np.tile(problem.exact_strain, (30, 1)),
                                    abs=1e-12)


def test_reference_self_convergence():
    problem = block_problem()
    e8 = solve_reference(problem, 8).energy
    e16 = solve_reference(problem, 16).energy
    assert abs(e16 - e8) / e16 < 0.01


def test_reference_rejects_tiny():
    with pytest.raises(ValueError):
        solve_reference(block_problem(), 1)


# ---------------------------------------------------------------------------
# errors

def test_energy_error_reference_against_itself():
    problem = block_problem()
    ref = solve_reference(problem, 8)
    absolute, relative = energy_error(ref.mesh, problem.material, "fem_q9",
                                      ref.displacement, ref)
    assert absolute == pytest.approx(0.0, abs=1e-14 * ref.energy)
    assert relative == pytest.approx(0.0, abs=1e-14)


@pytest.mark.parametrize("method,kind", [
    ("fem_t3", "t3"), ("esfem", "t3"), ("nsfem", "t3"), ("sse", "t3"),
    ("fem_plq4", "q4"), ("fem_blq4", "q4"), ("esfem", "q4"),
    ("csfem", "q4"), ("sse", "q4"),
])
def test_energy_error_patch_zero(patch_reference, method, kind, mat):
    problem, ref = patch_reference
    base = (generate_regular_tri(2, "slash", UNIT) if kind == "t3"
            else generate_regular_quad(2, UNIT))
    mesh = with_boundary_tag(base, "D")
    u = solve_method(mesh, problem, method)
    _, relative = energy_error(mesh, mat, method, u, ref)
    assert relative <= 1e-9


def test_energy_error_decreases_with_refinement():
    problem = block_problem()
    ref = solve_reference(problem, 32)
    rel = []
    for n in (2, 4):
        m = generate_regular_tri(n, "union_jack", problem.domain)
        u = solve_method(m, problem, "fem_t3")
        rel.append(energy_error(m, problem.material, "fem_t3", u, ref)[1])
    assert rel[1] < rel[0]


def test_galerkin_optimality_sanity(reference):
    # the FEM strain lives in the elementwise-constant space, so its error
    # cannot beat the best approximation from that space
    problem = reference.problem
    for n in (2, 4):
        m = generate_regular_tri(n, "union_jack", problem.domain)
        u = solve_method(m, problem, "fem_t3")
        absolute, _ = energy_error(m, problem.material, "fem_t3", u, reference)
        best = projection_error(reference, "elementwise", m)
        assert absolute >= best * (1.0 - 1e-6)


def test_projection_error_constant_reference_zero(patch_reference):
    problem, ref = patch_reference
    tri = generate_regular_tri(2, "backslash", UNIT)
    quad = generate_regular_quad(2, UNIT)
    for space in analysis.PROJECTION_SPACES:
        assert projection_error(ref, space, tri) <= 1e-9 * ref.energy
        assert projection_error(ref, space, quad) <= 1e-9 * ref.energy


def test_projection_error_unknown_space(patch_reference):
    _, ref = patch_reference
    with pytest.raises(ValueError):
        projection_error(ref, "w_h", generate_regular_quad(2, UNIT))


# ---------------------------------------------------------------------------
# slopes

def test_convergence_slope_exact_powers():
    hs = [0.5, 0.25, 0.125, 0.0625]
    assert convergence_slope([(h, 3.0 * h) for h in hs]) == pytest.approx(1.0)
    assert convergence_slope([(h, 0.2 * h * h) for h in hs]) == pytest.approx(2.0)


def test_convergence_slope_reported_interior_column():
    # published interior-space errors over N = 2..16 decay at slope ~0.95
    vals = [9.545e-4, 5.080e-4, 2.601e-4, 1.313e-4]
    slope = convergence_slope(list(zip([1 / 2, 1 / 4, 1 / 8, 1 / 16], vals)))
    assert 0.94 <= slope <= 0.96


def test_convergence_slope_rejects_bad_input():
    with pytest.raises(ValueError):
        convergence_slope([(0.5, 1.0)])
    with pytest.raises(ValueError):
        convergence_slope([(0.5, 1.0), (0.25, 0.0)])
    with pytest.raises(ValueError):
        convergence_slope([(0.5, 1.0), (0.0, 0.5)])


# ---------------------------------------------------------------------------
# probes

def test_probe_at_vertex_returns_nodal_value(rng):
    m = generate_regular_tri(3, "slash", UNIT)
    u = rng.standard_normal(2 * m.n_vertices)
    v = 7
    out = probe_displacement(m, u, m.vertices[v], "t3")
    assert out == pytest.approx([u[2 * v], u[2 * v + 1]], abs=1e-12)


@pytest.mark.parametrize("space,maker", [
    ("t3", lambda: generate_regular_tri(2, "slash", UNIT)),
    ("plq4", lambda: generate_regular_quad(2, UNIT)),
    ("blq4", lambda: generate_regular_quad(2, UNIT)),
    ("q9", lambda: generate_regular_q9(2, UNIT)),
])
def test_probe_reproduces_linear_field(space, maker, rng):
    m = maker()
    G = np.array([[0.3, -0.2], [0.1, 0.4]])
    u = np.array([G @ v for v in m.vertices]).ravel()
    for p in rng.random((10, 2)) * 0.9 + 0.05:
        assert probe_displacement(m, u, p, space) == pytest.approx(G @ p, abs=1e-11)


def test_run_method_report(mat):
    problem = block_problem()
    ref = solve_reference(problem, 8)
    m = generate_regular_tri(2, "union_jack", problem.domain)
    rep = run_method(m, problem, "sse", ref, n=2)
    assert isinstance(rep, ErrorReport)
    assert rep.h == 0.5
    assert rep.relative_error > 0.0
    assert rep.dofs == 2 * sum(1 for v in range(m.n_vertices)
                               if m.vertices[v, 1] > 0.0)
    assert rep.reference_energy == pytest.approx(ref.energy)
    assert np.isfinite(rep.probe_error)
