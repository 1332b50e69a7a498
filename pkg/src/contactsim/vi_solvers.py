"""Inner solvers: elliptic VI with group-sparse friction, box-constrained damage step, Robin heat step."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .history import Trajectory

logger = logging.getLogger(__name__)


class SolverError(RuntimeError):
    """Raised when an inner problem is ill-posed (non-SPD, singular)."""


class ConvergenceError(SolverError):
    """Raised when an iterative inner solver exhausts its iteration budget."""


def _dense(A) -> np.ndarray:
    if sp.issparse(A):
        return A.toarray()
    if hasattr(A, "matrix"):
        return _dense(A.matrix)
    return np.asarray(A, dtype=float)


# ---------------------------------------------------------------------------
# elliptic VI
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class EllipticVIProblem:
    """Find ``v`` with ``<Mv - rhs, z - v> + j(z) - j(v) >= 0`` for all admissible ``z``.

    ``j(v) = sum_g weights[g] * ||v[groups[g]]||`` and the admissible set is
    the box ``lower <= v <= upper`` (infinite bounds allowed).  Boxed dofs
    must not belong to a friction group.
    """

    M: object
    rhs: np.ndarray
    groups: list = field(default_factory=list)
    weights: np.ndarray = field(default_factory=lambda: np.zeros(0))
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None

    def __post_init__(self):
        self.M = _dense(self.M)
        self.rhs = np.asarray(self.rhs, dtype=float)
        n = len(self.rhs)
        if self.M.shape != (n, n):
            raise ValueError(f"operator shape {self.M.shape} does not match rhs length {n}")
        self.groups = [np.atleast_1d(np.asarray(g, dtype=np.int64)) for g in self.groups]
        self.weights = np.asarray(self.weights, dtype=float).reshape(-1)
        if len(self.weights) != len(self.groups):
            raise ValueError("one weight per friction group is required")
        if np.any(self.weights < 0):
            raise ValueError("friction weights must be non-negative")
        self.lower = np.full(n, -np.inf) if self.lower is None else np.asarray(self.lower, dtype=float)
        self.upper = np.full(n, np.inf) if self.upper is None else np.asarray(self.upper, dtype=float)
        if np.any(self.lower > self.upper):
            raise ValueError("lower bound exceeds upper bound")
        in_group = np.zeros(n, dtype=bool)
        for g in self.groups:
            if np.any(in_group[g]):
                raise ValueError("friction groups overlap")
            in_group[g] = True
        boxed = np.isfinite(self.lower) | np.isfinite(self.upper)
        if np.any(boxed & in_group):
            raise ValueError("a dof cannot carry both a box constraint and a friction weight")

    @property
    def n(self) -> int:
        return len(self.rhs)

    def boxed(self) -> np.ndarray:
        return np.flatnonzero(np.isfinite(self.lower) | np.isfinite(self.upper))

    def nonsmooth_dofs(self) -> np.ndarray:
        idx = [g for g in self.groups] + [self.boxed()]
        return np.unique(np.concatenate(idx)) if idx else np.zeros(0, dtype=np.int64)

    def j(self, v: np.ndarray) -> float:
        v = np.asarray(v)
        return float(sum(w * np.linalg.norm(v[g]) for g, w in zip(self.groups, self.weights)))

    def prox(self, z: np.ndarray, step: float) -> np.ndarray:
        """Proximal map of ``step * (j + box indicator)``."""
        return _prox(z, step, self.groups, self.weights, self.lower, self.upper)

    def inequality_gap(self, v: np.ndarray, z: np.ndarray) -> float:
        """Left-hand side minus right-hand side of the VI at test point ``z``."""
        return float((self.M @ v - self.rhs) @ (z - v) + self.j(z) - self.j(v))


def prox_friction_node(z, lam: float) -> np.ndarray:
    """Shrink the tangential part of ``z = (z_nu, z_tau...)`` by ``lam``; the normal part is kept.

    ``||z_tau|| <= lam`` maps to zero (stick).
    """
    z = np.asarray(z, dtype=float)
    out = z.copy()
    zt = z[1:]
    nrm = float(np.linalg.norm(zt))
    out[1:] = 0.0 if nrm <= lam else (1.0 - lam / nrm) * zt
    return out


def _prox(z, step, groups, weights, lower, upper):
    out = np.clip(z, lower, upper)
    for g, w in zip(groups, weights):
        zg = z[g]
        nrm = float(np.linalg.norm(zg))
        thr = step * w
        out[g] = 0.0 if nrm <= thr else (1.0 - thr / nrm) * zg
    return out


@dataclass
class VIResult:
    v: np.ndarray
    residual: float
    iterations: int
    converged: bool
    newton_steps: int = 0


class ReducedVISystem:
    """Factorisation reused across VI solves that share the operator and the nonsmooth pattern.

    The smooth dofs are eliminated exactly through a Cholesky factor; what is
    left is a small dense problem on the friction and box dofs.
    """

    def __init__(self, M, nonsmooth: np.ndarray):
        M = _dense(M)
        self.M = M
        n = M.shape[0]
        self.N = np.asarray(nonsmooth, dtype=np.int64)
        self.R = np.setdiff1d(np.arange(n), self.N)
        if n and np.max(np.abs(M - M.T)) > 1e-12 * max(1.0, float(np.max(np.abs(M)))):
            raise SolverError("operator is not symmetric")
        lo, hi = (np.linalg.eigvalsh(M)[[0, -1]] if n else (0.0, 0.0))
        if n and not lo > 0:
            raise SolverError(f"operator is not SPD (smallest eigenvalue {lo:.3e})")
        self.m_hat, self.L_hat = float(lo), float(hi)
        self.rho = self.m_hat / self.L_hat ** 2 if n else 0.0
        if len(self.R):
            self.chol = sla.cho_factor(M[np.ix_(self.R, self.R)])
            self.MRN = M[np.ix_(self.R, self.N)]
            S = M[np.ix_(self.N, self.N)] - self.MRN.T @ sla.cho_solve(self.chol, self.MRN)
        else:
            self.chol, self.MRN = None, np.zeros((0, len(self.N)))
            S = M[np.ix_(self.N, self.N)]
        self.S = 0.5 * (S + S.T)
        self.L_S = float(np.linalg.eigvalsh(self.S)[-1]) if len(self.N) else 0.0

    def matches(self, prob: EllipticVIProblem) -> bool:
        return prob.M.shape == self.M.shape and np.array_equal(prob.nonsmooth_dofs(), self.N) \
            and (prob.M is self.M or np.array_equal(prob.M, self.M))


def prepare_vi(prob: EllipticVIProblem) -> ReducedVISystem:
    return ReducedVISystem(prob.M, prob.nonsmooth_dofs())


def vi_residual(prob: EllipticVIProblem, v: np.ndarray, rho: float) -> float:
    """Fixed-point residual ``||v - Prox_{rho j}(v - rho (Mv - rhs))||``."""
    return float(np.linalg.norm(v - prob.prox(v - rho * (prob.M @ v - prob.rhs), rho)))


def _local_structure(prob: EllipticVIProblem, N: np.ndarray):
    pos = {int(d): i for i, d in enumerate(N)}
    groups = [np.array([pos[int(d)] for d in g], dtype=np.int64) for g in prob.groups]
    return groups, prob.weights, prob.lower[N], prob.upper[N]


def _reduced_solve(S, c, groups, weights, lower, upper, y, sigma, tol, max_iter):
    """Semismooth Newton on ``y = Prox(y - sigma (S y - c))`` with a prox-gradient safeguard."""
    p = len(c)

    def objective(x):
        return 0.5 * x @ S @ x - c @ x + sum(w * np.linalg.norm(x[g]) for g, w in zip(groups, weights))

    boxed = np.isfinite(lower) | np.isfinite(upper)
    in_group = np.zeros(p, dtype=bool)
    for g in groups:
        in_group[g] = True
    I = np.eye(p)
    A = I - sigma * S
    y = np.clip(y, lower, upper)
    q = objective(y)
    newton = 0
    for it in range(1, max_iter + 1):
        z = y - sigma * (S @ y - c)
        py = _prox(z, sigma, groups, weights, lower, upper)
        F = y - py
        if np.max(np.abs(F), initial=0.0) <= tol:
            return y, it - 1, newton, True
        D = np.diag(np.where(boxed, ((z > lower) & (z < upper)).astype(float), 1.0))
        for g, w in zip(groups, weights):
            zg = z[g]
            nrm = np.linalg.norm(zg)
            thr = sigma * w
            if nrm <= thr:
                D[np.ix_(g, g)] = 0.0
            else:
                D[np.ix_(g, g)] = (1 - thr / nrm) * np.eye(len(g)) + thr / nrm ** 3 * np.outer(zg, zg)
        try:
            step = np.linalg.solve(I - D @ A, -F)
        except np.linalg.LinAlgError:
            step = None
        if step is not None:
            cand = np.clip(y + step, lower, upper)
            qc = objective(cand)
            if qc <= q + 1e-13 * (1.0 + abs(q)):
                y, q = cand, qc
                newton += 1
                continue
        y = py  # prox-gradient step, monotone in the objective for sigma <= 1/L
        q = objective(y)
    z = y - sigma * (S @ y - c)
    F = y - _prox(z, sigma, groups, weights, lower, upper)
    return y, max_iter, newton, bool(np.max(np.abs(F), initial=0.0) <= tol)


def solve_elliptic_vi(prob: EllipticVIProblem, init: np.ndarray | None = None, tol: float = 1e-10,
                      max_iter: int = 2000, system: ReducedVISystem | None = None) -> VIResult:
    """Solve the elliptic VI; ``residual`` is the prox fixed-point residual with ``rho = m/L^2``.

    ``system`` caches the factorisation when many problems share ``M`` and the
    friction/box pattern.
    """
    if system is None or not system.matches(prob):
        system = prepare_vi(prob)
    N, R = system.N, system.R
    rhs = prob.rhs
    v = np.zeros(prob.n)
    its, newton, ok = 0, 0, True
    if len(N):
        wR = sla.cho_solve(system.chol, rhs[R]) if len(R) else np.zeros(0)
        c = rhs[N] - system.MRN.T @ wR
        groups, weights, lo, hi = _local_structure(prob, N)
        y0 = np.zeros(len(N)) if init is None else np.asarray(init, dtype=float)[N]
        sigma = 1.0 / system.L_S
        y, its, newton, ok = _reduced_solve(system.S, c, groups, weights, lo, hi, y0, sigma,
                                            tol * 1e-2, max_iter)
        v[N] = y
        if len(R):
            v[R] = wR - sla.cho_solve(system.chol, system.MRN @ y)
    elif len(R):
        v[R] = sla.cho_solve(system.chol, rhs[R])
    res = vi_residual(prob, v, system.rho)
    return VIResult(v, res, its, bool(ok and res <= tol), newton)


# ---------------------------------------------------------------------------
# parabolic VI step (damage)
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class ParabolicVIStepProblem:
    """One backward Euler step of the damage inequality with box ``[lower, upper]``.

    ``mass`` is the lumped mass (vector or matrix), ``source`` the load vector
    of the damage source at the new time.
    """

    mass: object
    stiffness: object
    prev: np.ndarray
    source: np.ndarray
    dt: float
    lower: float = 0.0
    upper: float = 1.0

    def __post_init__(self):
        self.prev = np.asarray(self.prev, dtype=float)
        self.source = np.asarray(self.source, dtype=float)
        if np.any(self.prev < self.lower) or np.any(self.prev > self.upper):
            raise ValueError("previous damage state leaves the admissible box")
        if self.dt <= 0:
            raise ValueError("dt must be positive")

    def system(self) -> tuple[sp.csr_matrix, np.ndarray]:
        m = self.mass.matrix if hasattr(self.mass, "matrix") else self.mass
        M = sp.diags(np.asarray(m, dtype=float)) if np.ndim(m) == 1 else sp.csr_matrix(m)
        G = self.stiffness.matrix if hasattr(self.stiffness, "matrix") else sp.csr_matrix(self.stiffness)
        H = (M / self.dt + G).tocsr()
        return H, M @ self.prev / self.dt + self.source


def box_qp_residual(H, b, x, lower, upper) -> float:
    """Jacobi-scaled natural residual ``||x - clip(x - (Hx - b)/diag H)||_inf``."""
    d = H.diagonal()
    r = x - np.clip(x - (H @ x - b) / d, lower, upper)
    return float(np.max(np.abs(r), initial=0.0))


def projected_gauss_seidel(H: sp.csr_matrix, b: np.ndarray, x0: np.ndarray, lower, upper,
                           tol: float, max_iter: int) -> tuple[np.ndarray, int]:
    H = sp.csr_matrix(H)
    n = len(b)
    lo = np.broadcast_to(np.asarray(lower, dtype=float), (n,)).tolist()
    hi = np.broadcast_to(np.asarray(upper, dtype=float), (n,)).tolist()
    indptr, indices, data = H.indptr.tolist(), H.indices.tolist(), H.data.tolist()
    diag = H.diagonal().tolist()
    if min(diag, default=1.0) <= 0:
        raise SolverError("damage step matrix has a non-positive diagonal")
    bl = np.asarray(b, dtype=float).tolist()
    x = np.clip(np.asarray(x0, dtype=float), lo, hi).tolist()
    for it in range(1, max_iter + 1):
        change = 0.0
        for i in range(n):
            r = bl[i]
            for p in range(indptr[i], indptr[i + 1]):
                j = indices[p]
                if j != i:
                    r -= data[p] * x[j]
            xi = r / diag[i]
            xi = lo[i] if xi < lo[i] else (hi[i] if xi > hi[i] else xi)
            delta = abs(xi - x[i])
            if delta > change:
                change = delta
            x[i] = xi
        if change <= tol:
            xa = np.array(x)
            if box_qp_residual(H, b, xa, lo, hi) <= tol:
                return xa, it
    raise ConvergenceError(f"projected Gauss-Seidel did not reach {tol:g} in {max_iter} sweeps")


def parabolic_vi_step(prob: ParabolicVIStepProblem, tol: float = 1e-12, max_iter: int = 10000) -> np.ndarray:
    """Solve the box-constrained step by projected Gauss-Seidel; output lies in the box exactly."""
    H, b = prob.system()
    x, _ = projected_gauss_seidel(H, b, prob.prev, prob.lower, prob.upper, tol, max_iter)
    return np.clip(x, prob.lower, prob.upper)


# ---------------------------------------------------------------------------
# Robin heat step (wear)
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class HeatStepProblem:
    """``(M/dt + K_b) w = M w_prev / dt + M source``; ``source`` holds nodal values."""

    mass: object
    diffusion: object
    prev: np.ndarray
    source: np.ndarray
    dt: float

    def __post_init__(self):
        self.prev = np.asarray(self.prev, dtype=float)
        self.source = np.asarray(self.source, dtype=float)
        n = len(self.prev)
        for name in ("mass", "diffusion"):
            A = getattr(self, name)
            A = A.matrix if hasattr(A, "matrix") else A
            if A.shape != (n, n):
                raise ValueError(f"{name} has shape {A.shape}, expected {(n, n)}")
            setattr(self, name, sp.csc_matrix(A))
        if len(self.source) != n:
            raise ValueError("source length does not match the curve dofs")


class HeatStepper:
    """Factorises ``M/dt + K_b`` once for repeated steps."""

    def __init__(self, mass, diffusion, dt: float):
        M = sp.csc_matrix(mass.matrix if hasattr(mass, "matrix") else mass)
        K = sp.csc_matrix(diffusion.matrix if hasattr(diffusion, "matrix") else diffusion)
        self.M, self.dt = M, dt
        try:
            self.lu = spla.splu((M / dt + K).tocsc())
        except RuntimeError as exc:
            raise SolverError(f"singular heat step system: {exc}") from None
        if not np.all(np.isfinite(self.lu.U.diagonal())) or np.any(self.lu.U.diagonal() == 0):
            raise SolverError("singular heat step system")

    def step(self, prev: np.ndarray, source: np.ndarray) -> np.ndarray:
        return self.lu.solve(self.M @ (np.asarray(prev) / self.dt + np.asarray(source)))


def heat_robin_step(prob: HeatStepProblem) -> np.ndarray:
    return HeatStepper(prob.mass, prob.diffusion, prob.dt).step(prob.prev, prob.source)


def sup_norm_estimate(w_traj) -> float:
    vals = w_traj.values if isinstance(w_traj, Trajectory) else np.asarray(w_traj)
    return float(np.max(np.abs(vals), initial=0.0))
