from __future__ import annotations

import dataclasses

import numpy as np
import pytest
from conftest import independent_stress
from hypothesis import given, settings, strategies as st

from contactsim.assembly import DiscreteSpace
from contactsim.contact_model import (ContactProblem, InitialState, LoadModel, MaterialModel, damage_source,
                                      friction_weights, reconstruct_stress, validate_hypotheses, wear_source)
from contactsim.geometry import generate_rect_mesh
from contactsim.history import RelaxationKernel, TimeGrid
from contactsim.verify import lipschitz_probe

LABELS = {"left": "Gamma2", "right": "Gamma2", "bottom": "Gamma3", "top": "Gamma1"}


def small_problem(nx=3, ny=2, n_steps=4, **mat) -> ContactProblem:
    mesh = generate_rect_mesh(nx, ny, LABELS)
    material = MaterialModel(**mat)
    return ContactProblem(mesh, TimeGrid(1.0, n_steps), material, LoadModel((0.5, -1.0)), InitialState())


def test_friction_weights_no_contact():
    m = MaterialModel()
    normal, lam = friction_weights([-0.5, 0.0, -1.0], [1.0, 2.0, 3.0], [0.0] * 3, m, [0.5, 0.5, 0.5])
    assert np.all(normal == 0) and np.all(lam == 0)


def test_friction_weights_penetration():
    m = MaterialModel(L_p=1.0, p_star=2.0, mu0=0.3)
    normal, lam = friction_weights([1.0], [0.7], [0.0], m, [0.5])
    assert abs(lam[0] - 0.15) <= 1e-15
    assert abs(normal[0] - 0.5) <= 1e-15


def test_friction_weights_sweep_monotone_then_flat():
    m = MaterialModel(L_p=4.0, p_star=2.0, mu0=0.3, mu1=0.1)
    r = np.linspace(0.0, 2 * m.p_star / m.L_p, 201)
    _, lam = friction_weights(r, np.full_like(r, 0.5), np.zeros_like(r), m, np.ones_like(r))
    assert np.all(np.diff(lam) >= 0)
    knee = r >= m.p_star / m.L_p
    assert np.ptp(lam[knee]) == 0.0
    assert lam.min() >= 0


def test_material_closed_forms():
    m = MaterialModel(mu0=0.2, mu1=0.5, mu2=-0.25, mu_star=0.4)
    assert m.L_mu == 0.5
    assert float(m.mu(10.0, 0.0)) == 0.4
    assert float(m.mu(0.0, 10.0)) == 0.0
    d = MaterialModel(lambda_E=2.0, lambda_w=1.0, phi_min=0.0)
    assert abs(d.L_phi_damage - 2.0) <= 1e-15
    assert float(d.phi(10.0)) == 0.0
    assert MaterialModel(wear_c1=-0.3, wear_c2=0.2).L_varphi == 0.3


def test_damage_source_zero_and_translation():
    mesh = generate_rect_mesh(4, 3, LABELS)
    V, Y = DiscreteSpace.vector(mesh, constrained=False), DiscreteSpace.scalar(mesh)
    m = MaterialModel(lambda_w=0.2)
    s0 = damage_source(mesh, V, np.zeros(V.dof_count), m)
    assert abs(s0.sum() - 0.2) <= 1e-14
    trans = V.from_nodal(np.tile([0.3, -1.7], (mesh.n_vertices, 1)))
    assert np.max(np.abs(damage_source(mesh, V, trans, m) - s0)) <= 1e-15
    x = mesh.vertices[:, 0]
    s1 = damage_source(mesh, V, V.from_nodal(np.column_stack([x, 0 * x])), m)
    assert abs(s1.sum() - (m.lambda_w - 0.5 * m.lambda_E)) <= 1e-14
    assert len(s1) == Y.dof_count


def test_damage_source_floor():
    mesh = generate_rect_mesh(2, 2, LABELS)
    V = DiscreteSpace.vector(mesh, constrained=False)
    x = mesh.vertices[:, 0]
    m = MaterialModel(phi_min=-0.1)
    s = damage_source(mesh, V, V.from_nodal(np.column_stack([10 * x, 0 * x])), m)
    assert abs(s.sum() + 0.1) <= 1e-14


def test_wear_source_examples():
    off = MaterialModel(wear_c1=0.0, wear_c2=0.0, wear_c3=0.0)
    assert np.all(wear_source([1.0, -2.0], [0.3, 0.9], off) == 0)
    m = MaterialModel(wear_c1=0.5, wear_c2=2.0, wear_c3=0.0)
    assert np.array_equal(wear_source(np.zeros(3), np.ones(3), m), [2.0, 2.0, 2.0])
    assert np.array_equal(wear_source([-1.0], [0.0], m), [0.5])


def test_wear_source_lipschitz():
    m = MaterialModel(wear_c1=0.7, wear_c2=-0.4, wear_c3=0.1)
    n = 6

    def op(a):
        return wear_source(a[:n], a[n:], m)

    est = lipschitz_probe(op, lambda r: r.uniform(-2, 2, 2 * n), pairs=500, rng=np.random.default_rng(0),
                          norm_in=lambda v: max(np.max(np.abs(v[:n])), np.max(np.abs(v[n:]))),
                          norm_out=lambda v: float(np.max(np.abs(v))))
    assert est <= abs(m.wear_c1) + abs(m.wear_c2) + 1e-12


def test_reconstruct_stress_zero():
    pb = small_problem(kernel=RelaxationKernel("exponential", 0.3, 1.0, 0.5))
    n = len(pb.grid)
    sig = reconstruct_stress(pb, np.zeros((n, pb.V.dof_count)), np.full((n, pb.mesh.n_vertices), 0.5), 2)
    assert np.all(sig == 0)


@pytest.mark.parametrize("kind", ["exponential", "constant"])
def test_reconstruct_stress_independent(kind):
    mesh = generate_rect_mesh(1, 1, {"left": "Gamma2", "right": "Gamma2", "bottom": "Gamma3", "top": "Gamma1"})
    assert mesh.n_triangles == 2
    mat = MaterialModel(theta_A=1.3, zeta_A=0.4, theta_B=0.6, zeta_B=0.2,
                        kernel=RelaxationKernel(kind, 0.7, 1.5, 0.4))
    pb = ContactProblem(mesh, TimeGrid(1.0, 6), mat, LoadModel(), InitialState())
    rng = np.random.default_rng(11)
    eta = rng.standard_normal((7, pb.V.dof_count))
    xi = rng.uniform(0, 1, (7, mesh.n_vertices))
    for k in (0, 1, 6):
        got = reconstruct_stress(pb, eta, xi, k)
        ref = independent_stress(pb, eta, xi, k)
        assert np.max(np.abs(got - ref)) <= 1e-12


def test_stress_linear_without_damage_coupling():
    pb = small_problem(kernel=RelaxationKernel("exponential", 0.5, 1.0, 0.0))
    rng = np.random.default_rng(3)
    n = len(pb.grid)
    a, b = rng.standard_normal((2, n, pb.V.dof_count))
    xi1, xi2 = rng.uniform(0, 1, (2, n, pb.mesh.n_vertices))
    lhs = pb.reconstruct_stress(2.0 * a - b, xi1)
    rhs = 2.0 * pb.reconstruct_stress(a, xi2) - pb.reconstruct_stress(b, xi1)
    assert np.max(np.abs(lhs - rhs)) <= 1e-12


def test_validate_demo(demo_problem):
    rep = demo_problem.hypotheses()
    assert rep.passed and not rep.failures
    c = rep.constants
    m = demo_problem.material
    rho = demo_problem.trace_norm
    assert abs(c["alpha"] - m.L_p * rho * (1 + m.mu_star)) <= 1e-12 * c["alpha"]
    assert abs(c["beta"] - m.L_mu * m.p_star * rho ** 2) <= 1e-12
    assert c["L1"] == 1.0 and c["sJ"] == 1.0
    assert c["m"] == 2 * m.theta_A


def test_validate_negative_gap():
    rep = validate_hypotheses(MaterialModel(gap=-0.1))
    assert not rep.passed
    assert any("g(x) >= 0 a.e." in f for f in rep.failures)


@pytest.mark.parametrize("kw, clause", [
    ({"kappa": -1.0}, "kappa > 0"),
    ({"theta_A": 0.0}, "theta_A > 0"),
    ({"lambda_E": 0.0}, "lambda_E > 0"),
    ({"L_p": float("inf")}, "finite"),
])
def test_validate_failures(kw, clause):
    rep = validate_hypotheses(MaterialModel(**kw))
    assert any(clause in f for f in rep.failures)


def test_validate_is_pure():
    m = MaterialModel(mu1=0.2)
    before = dataclasses.asdict(m)
    a = validate_hypotheses(m, trace_norm=0.7)
    b = validate_hypotheses(m, trace_norm=0.7)
    assert a == b and dataclasses.asdict(m) == before


def test_negative_robin_warns():
    rep = validate_hypotheses(MaterialModel(wear_b=-1.0))
    assert rep.passed and rep.warnings


def test_initial_state_range():
    with pytest.raises(ValueError):
        InitialState(xi0=1.0)
    with pytest.raises(ValueError):
        InitialState(xi0=0.0)


def test_trace_norm_bounds_samples():
    pb = small_problem(4, 3)
    rho = pb.trace_norm
    rng = np.random.default_rng(2)
    for v in rng.standard_normal((200, pb.V.dof_count)):
        tr = np.sqrt(pb.omega @ (pb.normal_component(v) ** 2 + pb.tangential_component(v) ** 2))
        assert tr <= rho * pb.v_norm(v) * (1 + 1e-10)


def test_local_frame_is_orthogonal():
    pb = small_problem(4, 3)
    Q = pb.Q.toarray()
    assert np.max(np.abs(Q.T @ Q - np.eye(len(Q)))) <= 1e-15
    v = np.random.default_rng(4).standard_normal(pb.V.dof_count)
    loc = pb.Q.T @ v
    assert np.max(np.abs(loc[pb.tau_dofs] - pb.tangential_component(v)[pb.contact_free])) <= 1e-15


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_discrete_j_structure(seed):
    pb = small_problem(4, 2, mu0=0.2, mu1=0.3, mu2=0.2, mu_star=0.5, L_p=3.0, p_star=0.8)
    c = pb.hypotheses().constants
    rng = np.random.default_rng(seed)
    nc, nd = pb.curve.n_nodes, pb.V.dof_count
    z1, z2 = rng.uniform(-0.2, 0.6, (2, nc))
    w1, w2 = rng.uniform(0, 1, (2, nc))
    u1, u2, v1, v2 = rng.standard_normal((4, nd))
    four = (pb.j_value(z1, u1, w1, v2) - pb.j_value(z1, u1, w1, v1)
            + pb.j_value(z2, u2, w2, v1) - pb.j_value(z2, u2, w2, v2))
    wn = lambda a: float(np.sqrt(pb.omega @ a ** 2))
    bound = (c["alpha"] * wn(z1 - z2) + c["beta"] * pb.v_norm(u1 - u2) + c["gamma"] * wn(w1 - w2)) \
        * pb.v_norm(v1 - v2)
    assert four <= bound * (1 + 1e-6)
    _, lam = pb.contact_terms(z1, pb.tangential_component(u1), w1)
    assert np.all(lam >= 0)
