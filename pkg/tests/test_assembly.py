from __future__ import annotations

import numpy as np
import pytest
import sympy
from hypothesis import given, settings, strategies as st

from contactsim.assembly import (SEGMENT_RULE, TRIANGLE_RULE, DiscreteSpace, assemble_curve_diffusion,
                                 assemble_damage_stiffness, assemble_elasticity, assemble_load, assemble_mass,
                                 assemble_strain_gram, assemble_viscosity, element_strains, q_norm,
                                 stress_divergence, voigt_to_tensor)
from contactsim.geometry import Mesh2D, extract_curve, generate_rect_mesh
from contactsim.verify import reference_element_stiffness, unit_segment

LABELS = {"left": "G2", "bottom": "G3", "right": "G2", "top": "G1"}


def reference_triangle_mesh() -> Mesh2D:
    return Mesh2D([[0, 0], [1, 0], [0, 1]], [[0, 1, 2]], [[0, 1], [1, 2], [2, 0]], ["Gamma3", "Gamma2", "Gamma1"])


def symbolic_reference_matrix(theta, zeta) -> np.ndarray:
    """Element matrix on the reference triangle by exact symbolic integration."""
    x, y = sympy.symbols("x y")
    phis = [1 - x - y, x, y]
    fields = []
    for phi in phis:
        fields.append((phi, 0))
        fields.append((0, phi))

    def eps(f):
        ux, uy = f
        return sympy.Matrix([[sympy.diff(ux, x), (sympy.diff(ux, y) + sympy.diff(uy, x)) / 2],
                             [(sympy.diff(ux, y) + sympy.diff(uy, x)) / 2, sympy.diff(uy, y)]])

    K = np.zeros((6, 6))
    for i, fi in enumerate(fields):
        for j, fj in enumerate(fields):
            Ei, Ej = eps(fi), eps(fj)
            dens = 2 * theta * sum(Ei[a, b] * Ej[a, b] for a in range(2) for b in range(2)) + zeta * Ei.trace() * Ej.trace()
            K[i, j] = float(sympy.integrate(sympy.integrate(dens, (y, 0, 1 - x)), (x, 0, 1)))
    return K


def test_reference_element_symbolic():
    mesh = reference_triangle_mesh()
    space = DiscreteSpace.vector(mesh, constrained=False)
    M = assemble_viscosity(mesh, space, 1.0, 0.0).toarray()
    assert np.max(np.abs(M - symbolic_reference_matrix(1, 0))) <= 1e-14
    M2 = assemble_viscosity(mesh, space, 0.7, 1.3).toarray()
    assert np.max(np.abs(M2 - symbolic_reference_matrix(sympy.Rational(7, 10), sympy.Rational(13, 10)))) <= 1e-13


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-2, 2), min_size=6, max_size=6), st.floats(0.1, 3), st.floats(0, 3))
def test_element_matrix_independent_path(coords, theta, zeta):
    P = np.array(coords).reshape(3, 2)
    area = 0.5 * ((P[1, 0] - P[0, 0]) * (P[2, 1] - P[0, 1]) - (P[2, 0] - P[0, 0]) * (P[1, 1] - P[0, 1]))
    if abs(area) < 1e-2:
        return
    if area < 0:
        P = P[[0, 2, 1]]
    mesh = Mesh2D(P, [[0, 1, 2]], [[0, 1], [1, 2], [2, 0]], ["Gamma1", "Gamma2", "Gamma3"])
    space = DiscreteSpace.vector(mesh, constrained=False)
    M = assemble_viscosity(mesh, space, theta, zeta).toarray()
    ref = reference_element_stiffness(P, theta, zeta)
    assert np.max(np.abs(M - ref)) <= 1e-10 * (1 + np.max(np.abs(ref)))


def test_quadrature_rules_exactness():
    assert abs(TRIANGLE_RULE.weights.sum() - 0.5) <= 1e-15
    exact = {(0, 0): 1 / 2, (1, 0): 1 / 6, (2, 0): 1 / 12, (1, 1): 1 / 24, (0, 2): 1 / 12}
    for (a, b), val in exact.items():
        q = np.sum(TRIANGLE_RULE.weights * TRIANGLE_RULE.points[:, 0] ** a * TRIANGLE_RULE.points[:, 1] ** b)
        assert abs(q - val) <= 1e-15
    for p in range(SEGMENT_RULE.degree + 1):
        assert abs(np.sum(SEGMENT_RULE.weights * SEGMENT_RULE.points ** p) - 1 / (p + 1)) <= 1e-15


def test_rigid_translation_in_kernel():
    mesh = generate_rect_mesh(4, 3, LABELS)
    space = DiscreteSpace.vector(mesh, constrained=False)
    M = assemble_viscosity(mesh, space, 1.0, 0.5)
    for c in range(2):
        t = np.zeros(space.dof_count)
        t[c::2] = 1.0
        assert np.max(np.abs(M @ t)) <= 1e-12


def test_korn_after_constraint():
    mesh = generate_rect_mesh(4, 4, LABELS)
    space = DiscreteSpace.vector(mesh)
    M = assemble_viscosity(mesh, space, 1.0, 0.5)
    A = M.matrix.tocsc()
    from scipy.sparse.linalg import splu
    lu = splu(A)
    x = np.random.default_rng(0).standard_normal(space.dof_count)
    for _ in range(200):
        x = lu.solve(x)
        x /= np.linalg.norm(x)
    lam_min = x @ (A @ x)
    assert lam_min > 0
    assert abs(lam_min - M.constants["eig_min"]) <= 1e-8 * M.constants["eig_max"]
    assert M.symmetry_defect() <= 1e-12
    assert M.constants["m_A"] == 2.0 and M.constants["L_A"] == 3.0


def test_elasticity_cases():
    mesh = generate_rect_mesh(3, 3, LABELS)
    space = DiscreteSpace.vector(mesh)
    assert assemble_elasticity(mesh, space, 0.0, 0.0).matrix.nnz == 0 or \
        np.max(np.abs(assemble_elasticity(mesh, space, 0.0, 0.0).toarray())) == 0.0
    Bm = assemble_elasticity(mesh, space, 0.8, 0.3)
    Am = assemble_viscosity(mesh, space, 0.8, 0.3)
    assert np.array_equal(Bm.toarray(), Am.toarray())
    rng = np.random.default_rng(1)
    B = Bm.toarray()
    top = max((v @ B @ v) / (v @ v) for v in rng.standard_normal((100, space.dof_count)))
    assert Bm.constants["eig_max"] >= top


def test_viscosity_rejects_bad_parameters():
    mesh = generate_rect_mesh(2, 2, LABELS)
    with pytest.raises(ValueError):
        assemble_viscosity(mesh, DiscreteSpace.vector(mesh), 0.0, 1.0)


def test_damage_stiffness():
    mesh = generate_rect_mesh(5, 4, LABELS)
    Y = DiscreteSpace.scalar(mesh)
    K1 = assemble_damage_stiffness(mesh, Y, 1.0)
    K2 = assemble_damage_stiffness(mesh, Y, 2.0)
    assert np.max(np.abs(K1 @ np.ones(Y.dof_count))) <= 1e-12
    assert np.array_equal(K2.toarray(), 2.0 * K1.toarray())
    assert K2.constants == {"g1": 2.0, "g2": 2.0}
    xi = mesh.vertices[:, 0]
    assert abs(xi @ (K2 @ xi) - 2.0) <= 1e-10
    with pytest.raises(ValueError):
        assemble_damage_stiffness(mesh, Y, 0.0)


def test_mass_matrices():
    mesh = generate_rect_mesh(3, 5, LABELS)
    Y = DiscreteSpace.scalar(mesh)
    M = assemble_mass(mesh, Y)
    ML = assemble_mass(mesh, Y, lumped=True)
    one = np.ones(Y.dof_count)
    assert abs(one @ (M @ one) - 1.0) <= 1e-12
    assert np.max(np.abs(M @ one - ML @ one)) <= 1e-15
    assert M.symmetry_defect() <= 1e-12
    seg = unit_segment(1)
    Mc = assemble_mass(seg, DiscreteSpace.curve(seg)).toarray()
    assert np.max(np.abs(Mc - [[1 / 3, 1 / 6], [1 / 6, 1 / 3]])) <= 1e-15
    curve = extract_curve(mesh)
    Mcur = assemble_mass(curve, DiscreteSpace.curve(curve))
    assert abs(np.ones(curve.n_nodes) @ (Mcur @ np.ones(curve.n_nodes)) - 1.0) <= 1e-12


def test_mass_reproduces_linear_products():
    mesh = generate_rect_mesh(4, 4, LABELS)
    M = assemble_mass(mesh, DiscreteSpace.scalar(mesh))
    x, y = mesh.vertices.T
    assert abs(x @ (M @ y) - 0.25) <= 1e-12
    assert abs(x @ (M @ x) - 1 / 3) <= 1e-12


def test_curve_diffusion():
    seg = unit_segment(2)
    K = assemble_curve_diffusion(seg, 0.0)
    assert np.max(np.abs(K.toarray() - 2.0 * np.array([[1, -1, 0], [-1, 2, -1], [0, -1, 1]]))) <= 1e-14
    assert abs(np.ones(3) @ (K @ np.ones(3))) <= 1e-14
    K1 = assemble_curve_diffusion(seg, 1.0)
    diff = K1.toarray() - K.toarray()
    assert np.array_equal(diff, np.diag([1.0, 0.0, 1.0]))
    assert K1.constants["positive_semidefinite"]
    assert not assemble_curve_diffusion(seg, -1.0).constants["positive_semidefinite"]


def test_load_vectors():
    mesh = generate_rect_mesh(4, 4, LABELS)
    V = DiscreteSpace.vector(mesh)
    Vfree = DiscreteSpace.vector(mesh, constrained=False)
    assert np.all(assemble_load(mesh, V, None, None, 0.0) == 0)
    zero = lambda t, p: np.zeros((len(p), 2))
    assert np.all(assemble_load(mesh, V, zero, zero, 0.0) == 0)
    down = lambda t, p: np.tile([0.0, -1.0], (len(p), 1))
    f = assemble_load(mesh, Vfree, down, None, 0.0)
    assert abs(f[1::2].sum() + 1.0) <= 1e-12
    right = lambda t, p: np.tile([1.0, 0.0], (len(p), 1))
    g = assemble_load(mesh, Vfree, None, right, 0.0)
    assert abs(g[0::2].sum() - mesh.label_length("Gamma2")) <= 1e-10
    # constrained dofs are absent from the constrained space
    assert len(assemble_load(mesh, V, down, None, 0.0)) == V.dof_count < Vfree.dof_count


def test_strain_and_divergence_consistency():
    mesh = generate_rect_mesh(3, 3, LABELS)
    V = DiscreteSpace.vector(mesh, constrained=False)
    x, y = mesh.vertices.T
    u = V.from_nodal(np.column_stack([x, 0 * x]))
    e = element_strains(mesh, V, u)
    assert np.allclose(e, [1.0, 0.0, 0.0], atol=1e-13)
    shear = V.from_nodal(np.column_stack([y, 0 * x]))
    assert np.allclose(voigt_to_tensor(element_strains(mesh, V, shear)), [0.0, 0.0, 0.5], atol=1e-13)
    G = assemble_strain_gram(mesh, V)
    rng = np.random.default_rng(2)
    a, b = rng.standard_normal((2, V.dof_count))
    sig = voigt_to_tensor(element_strains(mesh, V, a))
    assert abs(stress_divergence(mesh, V, sig) @ b - a @ (G @ b)) <= 1e-11
    assert abs(q_norm(mesh, sig) ** 2 - a @ (G @ a)) <= 1e-11


def test_triplet_export(tmp_path):
    mesh = generate_rect_mesh(2, 2, LABELS)
    M = assemble_mass(mesh, DiscreteSpace.scalar(mesh))
    p = tmp_path / "m.txt"
    M.save_triplets(p)
    rows = [line.split() for line in p.read_text().splitlines()]
    dense = np.zeros(M.shape)
    for i, j, v in rows:
        dense[int(i), int(j)] += float(v)
    assert np.array_equal(dense, M.toarray())
