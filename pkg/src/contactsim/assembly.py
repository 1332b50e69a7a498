"""P1 finite element assembly on :class:`~contactsim.geometry.Mesh2D`.

Vector fields use interleaved degrees of freedom ``(2k, 2k+1)`` for the
``k``-th free node.  Strains are stored in Voigt form ``(xx, yy, 2xy)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .geometry import GAMMA1, GAMMA2, CurveMesh, Mesh2D


@dataclass(frozen=True)
class QuadratureRule:
    points: np.ndarray
    weights: np.ndarray
    degree: int


# edge-midpoint rule, exact for quadratics on the reference triangle (area 1/2)
TRIANGLE_RULE = QuadratureRule(
    points=np.array([[0.5, 0.0], [0.5, 0.5], [0.0, 0.5]]),
    weights=np.full(3, 1.0 / 6.0),
    degree=2,
)

# 2-point Gauss-Legendre on [0, 1]
SEGMENT_RULE = QuadratureRule(
    points=np.array([0.5 - 0.5 / np.sqrt(3.0), 0.5 + 0.5 / np.sqrt(3.0)]),
    weights=np.array([0.5, 0.5]),
    degree=3,
)


@dataclass(frozen=True, eq=False)
class DiscreteSpace:
    """Map from mesh nodes to degrees of freedom.

    ``node_dofs`` has shape ``(n_nodes, components)``; constrained entries are -1.
    """

    kind: str
    node_dofs: np.ndarray
    dof_count: int

    @classmethod
    def vector(cls, mesh: Mesh2D, constrained: bool = True) -> "DiscreteSpace":
        fixed = set(mesh.nodes_with_label(GAMMA1).tolist()) if constrained else set()
        node_dofs = -np.ones((mesh.n_vertices, 2), dtype=np.int64)
        k = 0
        for node in range(mesh.n_vertices):
            if node not in fixed:
                node_dofs[node] = (k, k + 1)
                k += 2
        return cls("V_vector", node_dofs, k)

    @classmethod
    def scalar(cls, mesh: Mesh2D) -> "DiscreteSpace":
        return cls("Y_scalar", np.arange(mesh.n_vertices, dtype=np.int64)[:, None], mesh.n_vertices)

    @classmethod
    def curve(cls, curve: CurveMesh) -> "DiscreteSpace":
        return cls("W_curve", np.arange(curve.n_nodes, dtype=np.int64)[:, None], curve.n_nodes)

    def free_nodes(self) -> np.ndarray:
        return np.flatnonzero(self.node_dofs[:, 0] >= 0)

    def to_nodal(self, vec: np.ndarray) -> np.ndarray:
        """Scatter a dof vector to an ``(n_nodes, components)`` array with zeros on constrained nodes."""
        out = np.zeros(self.node_dofs.shape)
        mask = self.node_dofs >= 0
        out[mask] = np.asarray(vec)[self.node_dofs[mask]]
        return out

    def from_nodal(self, nodal: np.ndarray) -> np.ndarray:
        nodal = np.asarray(nodal, dtype=float).reshape(self.node_dofs.shape)
        vec = np.zeros(self.dof_count)
        mask = self.node_dofs >= 0
        vec[self.node_dofs[mask]] = nodal[mask]
        return vec


@dataclass(frozen=True, eq=False)
class SparseOperator:
    """Assembled CSR matrix plus its symmetry flag and recorded constants."""

    matrix: sp.csr_matrix
    symmetric: bool = True
    constants: dict = field(default_factory=dict)

    @property
    def shape(self) -> tuple[int, int]:
        return self.matrix.shape

    def toarray(self) -> np.ndarray:
        return self.matrix.toarray()

    def __matmul__(self, other):
        return self.matrix @ other

    def symmetry_defect(self) -> float:
        A = self.matrix
        scale = abs(A).max() if A.nnz else 0.0
        return float(abs(A - A.T).max() / scale) if scale > 0 else 0.0

    def triplets(self) -> list[tuple[int, int, float]]:
        coo = self.matrix.tocoo()
        return list(zip(coo.row.tolist(), coo.col.tolist(), coo.data.tolist()))

    def save_triplets(self, path: str | Path) -> None:
        Path(path).write_text("".join(f"{i} {j} {v!r}\n" for i, j, v in self.triplets()))


def _csr(rows, cols, vals, n, m=None) -> sp.csr_matrix:
    A = sp.coo_matrix((np.ravel(vals), (np.ravel(rows), np.ravel(cols))), shape=(n, m or n)).tocsr()
    A.sum_duplicates()
    return A


def p1_gradients(mesh: Mesh2D) -> tuple[np.ndarray, np.ndarray]:
    """Return per-triangle basis gradients ``(nt, 3, 2)`` and areas ``(nt,)``."""
    P = mesh.vertices[mesh.triangles]  # (nt, 3, 2)
    J = np.stack([P[:, 1] - P[:, 0], P[:, 2] - P[:, 0]], axis=2)  # columns are edge vectors
    det = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
    invJ = np.empty_like(J)
    invJ[:, 0, 0] = J[:, 1, 1] / det
    invJ[:, 1, 1] = J[:, 0, 0] / det
    invJ[:, 0, 1] = -J[:, 0, 1] / det
    invJ[:, 1, 0] = -J[:, 1, 0] / det
    ref = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])
    grads = np.einsum("aj,tjk->tak", ref, invJ)
    return grads, 0.5 * det


def strain_matrices(mesh: Mesh2D) -> np.ndarray:
    """Element strain-displacement matrices ``B`` of shape ``(nt, 3, 6)``.

    Local dof order is ``(u1x, u1y, u2x, u2y, u3x, u3y)``.
    """
    grads, _ = p1_gradients(mesh)
    B = np.zeros((mesh.n_triangles, 3, 6))
    B[:, 0, 0::2] = grads[:, :, 0]
    B[:, 1, 1::2] = grads[:, :, 1]
    B[:, 2, 0::2] = grads[:, :, 1]
    B[:, 2, 1::2] = grads[:, :, 0]
    return B


def isotropic_voigt(theta: float, zeta: float) -> np.ndarray:
    """Voigt matrix of ``eps -> 2*theta*eps + zeta*tr(eps)*I`` acting on engineering strain."""
    return np.array([[2 * theta + zeta, zeta, 0.0], [zeta, 2 * theta + zeta, 0.0], [0.0, 0.0, theta]])


def element_vector_dofs(mesh: Mesh2D, space: DiscreteSpace) -> np.ndarray:
    """Global dof index (or -1) of each local dof, shape ``(nt, 6)``."""
    return space.node_dofs[mesh.triangles].reshape(mesh.n_triangles, 6)


def _assemble_vector_form(mesh: Mesh2D, space: DiscreteSpace, D: np.ndarray) -> sp.csr_matrix:
    B = strain_matrices(mesh)
    _, area = p1_gradients(mesh)
    Ke = np.einsum("t,tai,ab,tbj->tij", area, B, D, B)
    dofs = element_vector_dofs(mesh, space)
    rows = np.repeat(dofs[:, :, None], 6, axis=2)
    cols = np.repeat(dofs[:, None, :], 6, axis=1)
    keep = (rows >= 0) & (cols >= 0)
    return _csr(rows[keep], cols[keep], Ke[keep], space.dof_count)


def extreme_eigenvalues(A) -> tuple[float, float]:
    """Smallest and largest eigenvalue of a symmetric matrix (dense at desk scale)."""
    dense = A.toarray() if sp.issparse(A) else np.asarray(A)
    if dense.size == 0:
        return 0.0, 0.0
    ev = np.linalg.eigvalsh(dense)
    return float(ev[0]), float(ev[-1])


def _check_params(theta: float, zeta: float, name: str, allow_zero: bool) -> None:
    if allow_zero:
        if theta < 0 or zeta < 0:
            raise ValueError(f"{name}: parameters must be non-negative")
    elif theta <= 0 or zeta < 0:
        raise ValueError(f"{name}: theta must be positive and zeta non-negative")


def assemble_viscosity(mesh: Mesh2D, space: DiscreteSpace, theta_A: float, zeta_A: float) -> SparseOperator:
    """Matrix of ``(u, v) -> int A eps(u) : eps(v)`` for the linear isotropic viscosity."""
    _check_params(theta_A, zeta_A, "viscosity", allow_zero=False)
    M = _assemble_vector_form(mesh, space, isotropic_voigt(theta_A, zeta_A))
    lo, hi = extreme_eigenvalues(M)
    return SparseOperator(M, True, {"m_A": 2 * theta_A, "L_A": 2 * theta_A + 2 * zeta_A,
                                    "eig_min": lo, "eig_max": hi})


def assemble_elasticity(mesh: Mesh2D, space: DiscreteSpace, theta_B: float, zeta_B: float) -> SparseOperator:
    _check_params(theta_B, zeta_B, "elasticity", allow_zero=True)
    M = _assemble_vector_form(mesh, space, isotropic_voigt(theta_B, zeta_B))
    lo, hi = extreme_eigenvalues(M)
    return SparseOperator(M, True, {"L_B": 2 * theta_B + 2 * zeta_B, "eig_min": lo, "eig_max": hi})


def assemble_strain_gram(mesh: Mesh2D, space: DiscreteSpace) -> SparseOperator:
    """Gram matrix of the energy inner product ``<u, v>_V = int eps(u) : eps(v)``."""
    return SparseOperator(_assemble_vector_form(mesh, space, isotropic_voigt(0.5, 0.0)))


def assemble_damage_stiffness(mesh: Mesh2D, space: DiscreteSpace, kappa: float) -> SparseOperator:
    """``kappa * int grad(a) . grad(b)`` on scalar P1 fields."""
    if kappa <= 0:
        raise ValueError("kappa must be positive")
    grads, area = p1_gradients(mesh)
    Ke = kappa * np.einsum("t,tak,tbk->tab", area, grads, grads)
    dofs = space.node_dofs[mesh.triangles, 0]
    rows = np.repeat(dofs[:, :, None], 3, axis=2)
    cols = np.repeat(dofs[:, None, :], 3, axis=1)
    return SparseOperator(_csr(rows, cols, Ke, space.dof_count), True, {"g1": kappa, "g2": kappa})


def assemble_mass(domain, space: DiscreteSpace, lumped: bool = False) -> SparseOperator:
    """Scalar P1 mass matrix on a mesh or on a contact curve.

    The lumped variant places each row sum on the diagonal.
    """
    if isinstance(domain, CurveMesh):
        pairs = domain.segments()
        h = domain.segment_lengths()
        Me = h[:, None, None] * np.array([[1 / 3, 1 / 6], [1 / 6, 1 / 3]])
        dofs = space.node_dofs[pairs, 0]
        k = 2
    else:
        _, area = p1_gradients(domain)
        Me = area[:, None, None] * (np.ones((3, 3)) + np.eye(3)) / 12.0
        dofs = space.node_dofs[domain.triangles, 0]
        k = 3
    rows = np.repeat(dofs[:, :, None], k, axis=2)
    cols = np.repeat(dofs[:, None, :], k, axis=1)
    M = _csr(rows, cols, Me, space.dof_count)
    if lumped:
        M = sp.diags(np.asarray(M.sum(axis=1)).ravel()).tocsr()
    return SparseOperator(M, True, {"lumped": lumped})


def assemble_curve_diffusion(curve: CurveMesh, b: float) -> SparseOperator:
    """Arc-length P1 stiffness plus ``b`` on the endpoint diagonals of an open curve."""
    pairs = curve.segments()
    h = curve.segment_lengths()
    Ke = (1.0 / h)[:, None, None] * np.array([[1.0, -1.0], [-1.0, 1.0]])
    rows = np.repeat(pairs[:, :, None], 2, axis=2)
    cols = np.repeat(pairs[:, None, :], 2, axis=1)
    K = _csr(rows, cols, Ke, curve.n_nodes).tolil()
    for i in np.flatnonzero(curve.endpoint_flags):
        K[i, i] += b
    K = K.tocsr()
    return SparseOperator(K, True, {"b": b, "positive_semidefinite": b >= 0})


def assemble_load(mesh: Mesh2D, space: DiscreteSpace,
                  f0: Callable[[float, np.ndarray], np.ndarray] | None,
                  f2: Callable[[float, np.ndarray], np.ndarray] | None,
                  t: float) -> np.ndarray:
    """Load vector of ``v -> int f0(t) . v dx + int_{Gamma2} f2(t) . v ds``.

    ``f0`` and ``f2`` take ``(t, points)`` with points of shape ``(n, 2)`` and
    return values of shape ``(n, 2)``.
    """
    out = np.zeros(space.dof_count)
    if f0 is not None:
        grads, area = p1_gradients(mesh)
        P = mesh.vertices[mesh.triangles]
        ref = TRIANGLE_RULE.points
        lam = np.column_stack([1 - ref.sum(axis=1), ref])  # basis values at rule points (q, 3)
        for q in range(len(ref)):
            x = np.einsum("a,tak->tk", lam[q], P)
            val = np.asarray(f0(t, x), dtype=float).reshape(-1, 2)
            w = 2.0 * area * TRIANGLE_RULE.weights[q]
            for a in range(3):
                for c in range(2):
                    d = space.node_dofs[mesh.triangles[:, a], c]
                    keep = d >= 0
                    np.add.at(out, d[keep], (w * lam[q, a] * val[:, c])[keep])
    if f2 is not None:
        edges = mesh.edges_with_label(GAMMA2)
        if len(edges):
            X0, X1 = mesh.vertices[edges[:, 0]], mesh.vertices[edges[:, 1]]
            L = np.hypot(*(X1 - X0).T)
            for s, wq in zip(SEGMENT_RULE.points, SEGMENT_RULE.weights):
                x = (1 - s) * X0 + s * X1
                val = np.asarray(f2(t, x), dtype=float).reshape(-1, 2)
                for node, phi in ((edges[:, 0], 1 - s), (edges[:, 1], s)):
                    for c in range(2):
                        d = space.node_dofs[node, c]
                        keep = d >= 0
                        np.add.at(out, d[keep], (wq * L * phi * val[:, c])[keep])
    return out


def element_strains(mesh: Mesh2D, space: DiscreteSpace, vec: np.ndarray) -> np.ndarray:
    """Constant Voigt strain ``(xx, yy, 2xy)`` per triangle for a batch of dof vectors.

    ``vec`` may be ``(ndof,)`` or ``(..., ndof)``; output is ``(..., nt, 3)``.
    """
    vec = np.asarray(vec, dtype=float)
    dofs = element_vector_dofs(mesh, space)
    padded = np.concatenate([vec, np.zeros(vec.shape[:-1] + (1,))], axis=-1)
    local = padded[..., np.where(dofs >= 0, dofs, vec.shape[-1])]  # (..., nt, 6)
    return np.einsum("tij,...tj->...ti", strain_matrices(mesh), local)


def stress_divergence(mesh: Mesh2D, space: DiscreteSpace, stress: np.ndarray) -> np.ndarray:
    """Vector of ``v -> <stress, eps(v)>_Q`` for elementwise tensors ``(xx, yy, xy)``.

    Accepts ``(nt, 3)`` or a batch ``(..., nt, 3)``.
    """
    stress = np.asarray(stress, dtype=float)
    B = strain_matrices(mesh)
    _, area = p1_gradients(mesh)
    local = np.einsum("t,tia,...ti->...ta", area, B, stress)  # xy pairs with engineering shear
    dofs = element_vector_dofs(mesh, space)
    out = np.zeros(stress.shape[:-2] + (space.dof_count + 1,))
    idx = np.where(dofs >= 0, dofs, space.dof_count)
    flat_out = out.reshape(-1, space.dof_count + 1)
    flat_loc = local.reshape(-1, mesh.n_triangles * 6)
    for r in range(flat_out.shape[0]):
        np.add.at(flat_out[r], idx.ravel(), flat_loc[r])
    return out[..., :-1]


def voigt_to_tensor(strain: np.ndarray) -> np.ndarray:
    """Convert engineering Voigt ``(xx, yy, 2xy)`` to tensor components ``(xx, yy, xy)``."""
    out = np.array(strain, dtype=float, copy=True)
    out[..., 2] *= 0.5
    return out


def q_norm(mesh: Mesh2D, tensor: np.ndarray) -> float:
    """``||q||_Q`` for elementwise tensor components ``(xx, yy, xy)``."""
    _, area = p1_gradients(mesh)
    tensor = np.asarray(tensor)
    dens = tensor[..., 0] ** 2 + tensor[..., 1] ** 2 + 2 * tensor[..., 2] ** 2
    return float(np.sqrt(np.sum(area * dens)))
