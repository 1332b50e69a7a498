"""Viscoelastic frictional contact with damage and wear: constitutive data and discrete operators."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .assembly import (DiscreteSpace, assemble_curve_diffusion, assemble_damage_stiffness, assemble_load,
                       assemble_mass, assemble_strain_gram, assemble_viscosity, isotropic_voigt,
                       p1_gradients, strain_matrices, element_vector_dofs)
from .geometry import CurveMesh, Mesh2D, boundary_frame, extract_curve
from .history import RelaxationKernel, TimeGrid, Trajectory, apply_R_all, cumulative_trapezoid
from .vi_solvers import EllipticVIProblem, ReducedVISystem

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class MaterialModel:
    """Constitutive parameters; every nonlinearity comes from a closed family with exact Lipschitz constants.

    ``p(r) = min(p_star, L_p * max(r, 0))`` and
    ``mu(s, w) = clip(mu0 + mu1 * s + mu2 * w, 0, mu_star)``.
    """

    theta_A: float = 1.0
    zeta_A: float = 0.5
    theta_B: float = 0.5
    zeta_B: float = 0.25
    kernel: RelaxationKernel = field(default_factory=RelaxationKernel)
    p_star: float = 1.0
    L_p: float = 10.0
    mu0: float = 0.3
    mu1: float = 0.0
    mu2: float = 0.0
    mu_star: float = 0.5
    gap: float = 0.0
    kappa: float = 0.1
    lambda_E: float = 1.0
    lambda_w: float = 0.2
    phi_min: float = -1e6
    wear_b: float = 0.0
    wear_c1: float = 0.1
    wear_c2: float = 0.0
    wear_c3: float = 0.01

    def p(self, r):
        return np.minimum(self.p_star, self.L_p * np.maximum(np.asarray(r, dtype=float), 0.0))

    def mu(self, s, w):
        return np.clip(self.mu0 + self.mu1 * np.asarray(s, dtype=float) + self.mu2 * np.asarray(w, dtype=float),
                       0.0, self.mu_star)

    @property
    def L_mu(self) -> float:
        return max(abs(self.mu1), abs(self.mu2))

    def phi(self, strain_sq):
        """Damage source ``lambda_w - lambda_E/2 |eps|^2`` floored at ``phi_min``."""
        return np.maximum(self.lambda_w - 0.5 * self.lambda_E * np.asarray(strain_sq, dtype=float), self.phi_min)

    @property
    def L_phi_damage(self) -> float:
        # |grad phi| = lambda_E |eps| on the unfloored region |eps|^2 <= 2 (lambda_w - phi_min) / lambda_E
        return float(np.sqrt(2.0 * self.lambda_E * max(self.lambda_w - self.phi_min, 0.0)))

    def varphi(self, slip, xi):
        return self.wear_c1 * np.asarray(slip, dtype=float) + self.wear_c2 * np.asarray(xi, dtype=float) + self.wear_c3

    @property
    def L_varphi(self) -> float:
        return max(abs(self.wear_c1), abs(self.wear_c2))


PROFILES = ("constant", "linear", "sine")


@dataclass(frozen=True)
class LoadModel:
    """Spatially uniform body force ``f0`` and ``Gamma2`` traction ``f2`` times a continuous time profile."""

    f0: tuple = (0.0, 0.0)
    f2: tuple = (0.0, 0.0)
    profile: str = "constant"
    slope: float = 0.0
    amplitude: float = 0.0
    frequency: float = 1.0

    def __post_init__(self):
        if self.profile not in PROFILES:
            raise ValueError(f"unknown load profile {self.profile!r}; expected one of {PROFILES}")
        for name in ("f0", "f2"):
            v = np.asarray(getattr(self, name), dtype=float)
            if v.shape != (2,) or not np.all(np.isfinite(v)):
                raise ValueError(f"{name} must be a finite 2-vector")
            object.__setattr__(self, name, tuple(float(x) for x in v))

    def factor(self, t):
        t = np.asarray(t, dtype=float)
        if self.profile == "constant":
            return np.ones_like(t)
        if self.profile == "linear":
            return 1.0 + self.slope * t
        return 1.0 + self.amplitude * np.sin(2 * np.pi * self.frequency * t)

    def body_force(self, t: float, pts: np.ndarray) -> np.ndarray:
        return np.tile(np.asarray(self.f0) * float(self.factor(t)), (len(pts), 1))

    def traction(self, t: float, pts: np.ndarray) -> np.ndarray:
        return np.tile(np.asarray(self.f2) * float(self.factor(t)), (len(pts), 1))


@dataclass(frozen=True)
class InitialState:
    """Initial displacement (V dofs, ``None`` for zero), wear and damage (scalars or nodal arrays)."""

    u0: np.ndarray | None = None
    w0: object = 0.0
    xi0: object = 0.5

    def __post_init__(self):
        xi = np.asarray(self.xi0, dtype=float)
        if not np.all(np.isfinite(xi)) or np.any(xi <= 0) or np.any(xi >= 1):
            raise ValueError("initial damage xi0 must lie strictly inside (0, 1)")
        if not np.all(np.isfinite(np.asarray(self.w0, dtype=float))):
            raise ValueError("initial wear w0 must be finite")


# ---------------------------------------------------------------------------
# pointwise contact laws
# ---------------------------------------------------------------------------

def friction_weights(S_val, slip, w, material: MaterialModel, nodal_weights, gap=None):
    """Nodal normal-compliance coefficients and friction prox weights.

    Returns ``(normal, lam)`` with ``normal_i = omega_i p(S_i - g_i)`` and
    ``lam_i = omega_i mu(|eta_tau,i|, w_i) p(S_i - g_i)``.
    """
    g = material.gap if gap is None else np.asarray(gap, dtype=float)
    pr = material.p(np.asarray(S_val, dtype=float) - g)
    omega = np.asarray(nodal_weights, dtype=float)
    normal = omega * pr
    lam = normal * material.mu(np.abs(slip), w)
    return normal, lam


def damage_source(mesh: Mesh2D, space: DiscreteSpace, eta: np.ndarray, material: MaterialModel) -> np.ndarray:
    """Load vector of the floored damage source for the velocity ``eta`` (exact P1 integration)."""
    B = strain_matrices(mesh)
    _, area = p1_gradients(mesh)
    local = np.asarray(eta, dtype=float)
    padded = np.append(local, 0.0)
    dofs = element_vector_dofs(mesh, space)
    e = np.einsum("tij,tj->ti", B, padded[np.where(dofs >= 0, dofs, len(local))])
    return _distribute(mesh, area, material.phi(_strain_sq(e)))


def _strain_sq(e: np.ndarray) -> np.ndarray:
    # engineering Voigt -> tensor Frobenius norm squared
    return e[..., 0] ** 2 + e[..., 1] ** 2 + 0.5 * e[..., 2] ** 2


def _distribute(mesh: Mesh2D, area: np.ndarray, elem_vals: np.ndarray) -> np.ndarray:
    out = np.zeros(mesh.n_vertices)
    np.add.at(out, mesh.triangles.ravel(), np.repeat(area * elem_vals / 3.0, 3))
    return out


def wear_source(slip, xi_curve, material: MaterialModel) -> np.ndarray:
    """Nodal wear source ``c1 |eta_tau| + c2 xi + c3`` on the contact curve."""
    return material.varphi(np.abs(np.asarray(slip, dtype=float)), xi_curve)


# ---------------------------------------------------------------------------
# hypothesis validation and constant ledger
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class HypothesisReport:
    constants: dict
    failures: tuple
    warnings: tuple = ()

    @property
    def passed(self) -> bool:
        return not self.failures


def validate_hypotheses(material: MaterialModel, load: LoadModel | None = None,
                        init: InitialState | None = None, trace_norm: float = 1.0) -> HypothesisReport:
    """Check each parameter against its hypothesis and derive the abstract constants."""
    fail, warn = [], []

    def need(cond, clause):
        if not cond:
            fail.append(clause)

    m = material
    need(m.theta_A > 0, "H(A): viscosity requires theta_A > 0")
    need(m.zeta_A >= 0, "H(A): viscosity requires zeta_A >= 0")
    need(m.theta_B >= 0 and m.zeta_B >= 0, "H(B): elasticity requires theta_B >= 0 and zeta_B >= 0")
    need(m.p_star >= 0 and m.L_p >= 0, "H(p): p_star >= 0 and L_p >= 0 (p(x,b) <= p*)")
    need(m.mu_star >= 0, "H(mu): mu_star >= 0 (mu(x,b,c) <= mu*)")
    need(m.gap >= 0, "H(g'): g(x) >= 0 a.e.")
    need(m.kappa > 0, "H(g): damage diffusion kappa > 0")
    need(m.lambda_E > 0, "H(phi'): lambda_E > 0")
    need(m.lambda_w > 0, "H(phi'): lambda_w > 0")
    need(trace_norm >= 0 and np.isfinite(trace_norm), "trace operator norm must be finite")
    vals = [m.theta_A, m.zeta_A, m.theta_B, m.zeta_B, m.p_star, m.L_p, m.mu0, m.mu1, m.mu2, m.mu_star,
            m.gap, m.kappa, m.lambda_E, m.lambda_w, m.phi_min, m.wear_b, m.wear_c1, m.wear_c2, m.wear_c3]
    need(all(np.isfinite(v) for v in vals), "all Lipschitz constants finite: parameters must be finite")
    if m.wear_b < 0:
        warn.append("wear Robin coefficient b < 0: diffusion operator may be indefinite")
    if init is not None:
        xi = np.asarray(init.xi0, dtype=float)
        need(np.all((xi > 0) & (xi < 1)), "initial damage xi0 in (0,1)")
    rho = float(trace_norm)
    L_A = 2 * m.theta_A + 2 * m.zeta_A
    L_B = 2 * m.theta_B + 2 * m.zeta_B
    L_C = m.kernel.lipschitz
    c = {
        "m_A": 2 * m.theta_A, "L_A": L_A, "L_B": L_B, "L_C": L_C,
        "L_p": m.L_p, "p_star": m.p_star, "L_mu": m.L_mu, "mu_star": m.mu_star,
        "L_phi": m.L_phi_damage, "L_varphi": m.L_varphi, "trace_norm": rho,
        "L1": 1.0, "L2": L_A, "m": 2 * m.theta_A,
        "alpha": m.L_p * rho * (1 + m.mu_star),
        "beta": m.L_mu * m.p_star * rho ** 2,
        "gamma": m.L_mu * m.p_star * rho,
        "r1J": L_B + L_C, "r2J": L_C, "sJ": 1.0,
        "g1": m.kappa, "g2": m.kappa,
    }
    return HypothesisReport(c, tuple(fail), tuple(warn))


# ---------------------------------------------------------------------------
# assembled problem
# ---------------------------------------------------------------------------

class ContactProblem:
    """Discrete contact problem: all operators assembled once for a mesh, grid and parameter set.

    Contact-node velocity dofs are rotated into the local (normal, tangent)
    frame so that the friction term acts on a single tangential dof per node.
    """

    def __init__(self, mesh: Mesh2D, grid: TimeGrid, material: MaterialModel,
                 load: LoadModel, init: InitialState, lumped_wear_mass: bool = True):
        self.mesh, self.grid, self.material, self.load, self.init = mesh, grid, material, load, init
        self.V = DiscreteSpace.vector(mesh)
        self.Y = DiscreteSpace.scalar(mesh)
        self.curve: CurveMesh = extract_curve(mesh)
        self.W = DiscreteSpace.curve(self.curve)
        self.frame = boundary_frame(mesh, self.curve)
        mat = material

        self.A_op = assemble_viscosity(mesh, self.V, mat.theta_A, mat.zeta_A)
        self.D_A = isotropic_voigt(mat.theta_A, mat.zeta_A)
        self.D_B = isotropic_voigt(mat.theta_B, mat.zeta_B)
        self.gram = assemble_strain_gram(mesh, self.V).matrix
        _, self.area = p1_gradients(mesh)
        self.Bmat = self._strain_operator()

        self.damage_mass = assemble_mass(mesh, self.Y, lumped=True)
        self.damage_stiff = assemble_damage_stiffness(mesh, self.Y, mat.kappa) if mat.kappa > 0 else None
        self.wear_mass = assemble_mass(self.curve, self.W, lumped=lumped_wear_mass)
        self.wear_diff = assemble_curve_diffusion(self.curve, mat.wear_b)

        # contact nodes and the local frame
        self.omega = self.curve.nodal_weights()
        nd = self.V.node_dofs[self.curve.node_ids]
        self.contact_free = np.flatnonzero(nd[:, 0] >= 0)
        self.dof_x = nd[:, 0]
        self.dof_y = nd[:, 1]
        n = self.V.dof_count
        Q = sp.lil_matrix((n, n))
        Q.setdiag(1.0)
        for i in self.contact_free:
            a, b = self.dof_x[i], self.dof_y[i]
            nu, tau = self.frame.normals[i], self.frame.tangents[i]
            Q[a, a], Q[b, a] = nu
            Q[a, b], Q[b, b] = tau
        self.Q = Q.tocsr()
        self.M_local = (self.Q.T @ self.A_op.matrix @ self.Q).toarray()
        self.M_local = 0.5 * (self.M_local + self.M_local.T)
        self.tau_dofs = self.dof_y[self.contact_free]  # local tangential dof index
        self.groups = [np.array([d]) for d in self.tau_dofs]
        self._system: ReducedVISystem | None = None

        self.loads = np.array([assemble_load(mesh, self.V, load.body_force, load.traction, t) for t in grid.times])
        u0 = np.zeros(n) if init.u0 is None else np.asarray(init.u0, dtype=float)
        if u0.shape != (n,):
            raise ValueError(f"u0 must have {n} entries")
        self.u0 = u0
        self.strain_u0 = self.strains(u0)
        self.u0_normal = self.normal_component(u0)
        self.xi0 = np.broadcast_to(np.asarray(init.xi0, dtype=float), (mesh.n_vertices,)).copy()
        self.w0 = np.broadcast_to(np.asarray(init.w0, dtype=float), (self.curve.n_nodes,)).copy()
        self._trace_norm: float | None = None

    # -- discrete operators -------------------------------------------------
    def _strain_operator(self) -> sp.csr_matrix:
        B = strain_matrices(self.mesh)
        dofs = element_vector_dofs(self.mesh, self.V)
        nt = self.mesh.n_triangles
        rows = np.repeat((3 * np.arange(nt)[:, None] + np.arange(3))[:, :, None], 6, axis=2)
        cols = np.repeat(dofs[:, None, :], 3, axis=1)
        keep = cols >= 0
        return sp.csr_matrix((B[keep], (rows[keep], cols[keep])), shape=(3 * nt, self.V.dof_count))

    @property
    def system(self) -> ReducedVISystem:
        if self._system is None:
            self._system = ReducedVISystem(self.M_local, np.sort(self.tau_dofs))
        return self._system

    def strains(self, vec: np.ndarray) -> np.ndarray:
        """Engineering Voigt strains ``(..., nt, 3)`` of one or many velocity vectors."""
        vec = np.asarray(vec, dtype=float)
        flat = vec.reshape(-1, vec.shape[-1])
        e = (self.Bmat @ flat.T).T
        return e.reshape(vec.shape[:-1] + (self.mesh.n_triangles, 3))

    def divergence(self, stress: np.ndarray) -> np.ndarray:
        """Vector(s) of ``v -> <stress, eps(v)>_Q`` for tensor-component stresses ``(..., nt, 3)``."""
        stress = np.asarray(stress, dtype=float)
        flat = (stress * self.area[:, None]).reshape(-1, 3 * self.mesh.n_triangles)
        out = (self.Bmat.T @ flat.T).T
        return out.reshape(stress.shape[:-2] + (self.V.dof_count,))

    def v_norm(self, vec: np.ndarray) -> float:
        vec = np.asarray(vec, dtype=float)
        return float(np.sqrt(max(vec @ (self.gram @ vec), 0.0)))

    def normal_component(self, vec: np.ndarray) -> np.ndarray:
        """Normal velocity at every curve node (zero at constrained nodes); accepts batches."""
        nodal = np.asarray(vec, dtype=float)
        out = np.zeros(nodal.shape[:-1] + (self.curve.n_nodes,))
        i = self.contact_free
        nu = self.frame.normals[i]
        out[..., i] = nodal[..., self.dof_x[i]] * nu[:, 0] + nodal[..., self.dof_y[i]] * nu[:, 1]
        return out

    def tangential_component(self, vec: np.ndarray) -> np.ndarray:
        nodal = np.asarray(vec, dtype=float)
        out = np.zeros(nodal.shape[:-1] + (self.curve.n_nodes,))
        i = self.contact_free
        tau = self.frame.tangents[i]
        out[..., i] = nodal[..., self.dof_x[i]] * tau[:, 0] + nodal[..., self.dof_y[i]] * tau[:, 1]
        return out

    def element_average(self, nodal: np.ndarray) -> np.ndarray:
        return np.asarray(nodal, dtype=float)[..., self.mesh.triangles].mean(axis=-1)

    def curve_trace(self, nodal: np.ndarray) -> np.ndarray:
        return np.asarray(nodal, dtype=float)[..., self.curve.node_ids]

    @property
    def trace_norm(self) -> float:
        """``sup ||v||_{L2(Gamma3)} / ||v||_V`` over discrete fields, from a generalized eigenproblem."""
        if self._trace_norm is None:
            n = self.V.dof_count
            wdiag = np.zeros(n)
            i = self.contact_free
            wdiag[self.dof_x[i]] = self.omega[i]
            wdiag[self.dof_y[i]] = self.omega[i]
            G = self.gram.toarray()
            ev = sla.eigh(np.diag(wdiag), G, eigvals_only=True)
            self._trace_norm = float(np.sqrt(max(ev[-1], 0.0)))
        return self._trace_norm

    def hypotheses(self) -> HypothesisReport:
        return validate_hypotheses(self.material, self.load, self.init, self.trace_norm)

    # -- history operators --------------------------------------------------
    def history_stress(self, eta_traj: np.ndarray, xi_traj: np.ndarray) -> np.ndarray:
        """History stress of the velocity trajectory for all ``k``: tensor stresses ``(n+1, nt, 3)``."""
        return apply_R_all(self.strains(eta_traj), self.element_average(xi_traj), self.grid,
                           self.D_B, self.material.kernel, self.strain_u0)

    def normal_history(self, eta_traj: np.ndarray) -> np.ndarray:
        """Normal displacement at the curve nodes from the velocity trajectory, ``(n+1, n_curve)``."""
        return self.u0_normal + cumulative_trapezoid(self.normal_component(eta_traj), self.grid.dt)

    def contact_terms(self, S_val, slip, w):
        return friction_weights(S_val, slip, w, self.material, self.omega)

    def normal_load(self, normal_coeff: np.ndarray) -> np.ndarray:
        """Global vector of ``v -> sum_i coeff_i v_nu,i``; accepts batches ``(..., n_curve)``."""
        c = np.asarray(normal_coeff, dtype=float)
        out = np.zeros(c.shape[:-1] + (self.V.dof_count,))
        i = self.contact_free
        nu = self.frame.normals[i]
        out[..., self.dof_x[i]] = c[..., i] * nu[:, 0]
        out[..., self.dof_y[i]] = c[..., i] * nu[:, 1]
        return out

    def j_value(self, S_val, u_vec, w, v_vec) -> float:
        """``j(S, u, w, v)`` with nodal lumping on the contact curve."""
        normal, lam = self.contact_terms(S_val, self.tangential_component(u_vec), w)
        return float(normal @ self.normal_component(v_vec) + lam @ np.abs(self.tangential_component(v_vec)))

    def step_problem(self, k: int, hist_div: np.ndarray, normal_coeff: np.ndarray,
                     lam: np.ndarray) -> EllipticVIProblem:
        """Elliptic VI at time ``t_k`` in local coordinates, history and friction frozen."""
        rhs = self.loads[k] - hist_div - self.normal_load(normal_coeff)
        return EllipticVIProblem(self.M_local, self.Q.T @ rhs, self.groups, lam[self.contact_free])

    # -- stress ---------------------------------------------------------------
    def reconstruct_stress(self, eta_traj: np.ndarray, xi_traj: np.ndarray, k: int | None = None) -> np.ndarray:
        """Elementwise stress ``A eps(eta) + B eps(u) + memory`` (tensor components)."""
        eta_traj = np.asarray(eta_traj, dtype=float)
        sig = np.einsum("ij,ktj->kti", self.D_A, self.strains(eta_traj)) + self.history_stress(eta_traj, xi_traj)
        return sig if k is None else sig[k]


def reconstruct_stress(problem: ContactProblem, eta, xi, k: int) -> np.ndarray:
    eta = eta.values if isinstance(eta, Trajectory) else eta
    xi = xi.values if isinstance(xi, Trajectory) else xi
    return problem.reconstruct_stress(eta, xi, k)
