"""Brute-force oracles and manufactured-solution studies.

Nothing here calls the production VI or damage solvers; the oracles are
deliberately naive so that agreement is meaningful.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .assembly import assemble_curve_diffusion, assemble_mass, DiscreteSpace
from .geometry import CurveMesh
from .vi_solvers import HeatStepper

MAX_ORACLE_DIM = 12
MAX_ENUM_DIM = 6


@dataclass
class OracleProblem:
    """``min 1/2 x'Mx - rhs'x + sum_g w_g ||x_g||`` over ``lower <= x <= upper``."""

    M: np.ndarray
    rhs: np.ndarray
    groups: list = field(default_factory=list)
    weights: list = field(default_factory=list)
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None

    def __post_init__(self):
        self.M = np.array(self.M, dtype=float)
        self.rhs = np.array(self.rhs, dtype=float)
        n = len(self.rhs)
        if n > MAX_ORACLE_DIM:
            raise ValueError(f"oracle problems are capped at n <= {MAX_ORACLE_DIM}")
        self.lower = np.full(n, -np.inf) if self.lower is None else np.array(self.lower, dtype=float)
        self.upper = np.full(n, np.inf) if self.upper is None else np.array(self.upper, dtype=float)
        self.groups = [list(map(int, g)) for g in self.groups]
        self.weights = [float(w) for w in self.weights]

    @property
    def n(self) -> int:
        return len(self.rhs)

    def objective(self, x: np.ndarray) -> float:
        val = 0.5 * x @ self.M @ x - self.rhs @ x
        for g, w in zip(self.groups, self.weights):
            val += w * np.sqrt(sum(x[i] ** 2 for i in g))
        return float(val)


def proximal_gradient_oracle(prob: OracleProblem, iterations: int = 10 ** 6, step: float | None = None,
                             stagnation: float = 1e-15) -> np.ndarray:
    """Forward-backward iteration with step ``1/L``; stops early once the iterate no longer moves."""
    L = float(np.max(np.linalg.eigvalsh(prob.M)))
    t = 1.0 / L if step is None else step
    if not 0 < t < 2.0 / L:
        raise ValueError("step must lie in (0, 2/L)")
    x = np.zeros(prob.n)
    for _ in range(iterations):
        z = x - t * (prob.M @ x - prob.rhs)
        y = np.minimum(np.maximum(z, prob.lower), prob.upper)
        for g, w in zip(prob.groups, prob.weights):
            nrm = np.sqrt(np.sum(z[g] ** 2))
            y[g] = z[g] * max(0.0, 1.0 - t * w / nrm) if nrm > 0 else 0.0
        moved = np.max(np.abs(y - x))
        x = y
        if moved <= stagnation * (1.0 + np.max(np.abs(x))):
            break
    return x


def active_set_oracle(prob: OracleProblem, tol: float = 1e-10) -> np.ndarray:
    """Enumerate every lower/free/upper pattern of a box QP and return the KKT-consistent candidate."""
    if prob.groups and any(w != 0 for w in prob.weights):
        raise ValueError("active-set oracle handles box constraints only")
    n = prob.n
    if n > MAX_ENUM_DIM:
        raise ValueError(f"active-set enumeration is capped at n <= {MAX_ENUM_DIM}")
    M, b, lo, hi = prob.M, prob.rhs, prob.lower, prob.upper
    scale = 1.0 + np.max(np.abs(b)) + np.max(np.abs(M))
    best, best_obj = None, np.inf
    for pattern in itertools.product((0, 1, 2), repeat=n):
        pat = np.array(pattern)
        if np.any((pat == 0) & ~np.isfinite(lo)) or np.any((pat == 2) & ~np.isfinite(hi)):
            continue
        x = np.where(pat == 0, lo, np.where(pat == 2, hi, 0.0))
        F = np.flatnonzero(pat == 1)
        A = np.flatnonzero(pat != 1)
        if len(F):
            rhsF = b[F] - M[np.ix_(F, A)] @ x[A]
            x[F] = np.linalg.solve(M[np.ix_(F, F)], rhsF)
            if np.any(x[F] < lo[F] - tol * scale) or np.any(x[F] > hi[F] + tol * scale):
                continue
        g = M @ x - b
        if np.any(g[pat == 0] < -tol * scale) or np.any(g[pat == 2] > tol * scale):
            continue
        obj = prob.objective(x)
        if obj < best_obj:
            best, best_obj = x, obj
    if best is None:
        raise RuntimeError("no KKT-consistent active pattern found")
    return best


def kkt_residual_box(prob: OracleProblem, x: np.ndarray) -> float:
    g = prob.M @ x - prob.rhs
    return float(np.max(np.abs(x - np.clip(x - g, prob.lower, prob.upper))))


# ---------------------------------------------------------------------------
# convergence studies
# ---------------------------------------------------------------------------

@dataclass
class ConvergenceStudy:
    label: str
    params: list
    errors: list
    target: float

    def __post_init__(self):
        if len(self.params) < 3:
            raise ValueError("a convergence study needs at least 3 levels")
        if any(e <= 0 for e in self.errors):
            raise ValueError("errors must be positive")

    def fit(self) -> tuple[float, float]:
        """Least-squares slope of ``log(error)`` against ``log(param)`` and its R^2."""
        x, y = np.log(self.params), np.log(self.errors)
        slope, icpt = np.polyfit(x, y, 1)
        pred = slope * x + icpt
        ss = np.sum((y - y.mean()) ** 2)
        r2 = 1.0 - np.sum((y - pred) ** 2) / ss if ss > 0 else 1.0
        return float(slope), float(r2)

    @property
    def order(self) -> float:
        return self.fit()[0]

    @property
    def passed(self) -> bool:
        return self.order >= self.target

    def to_csv(self, path: str | Path) -> None:
        rows = ["level,param,error"] + [f"{i},{p!r},{e!r}" for i, (p, e) in enumerate(zip(self.params, self.errors))]
        Path(path).write_text("\n".join(rows) + "\n")

    def summary(self) -> str:
        order, r2 = self.fit()
        return f"{self.label}: fitted order {order:.4f} (R^2 {r2:.5f}), target {self.target}"


def unit_segment(n_cells: int) -> CurveMesh:
    s = np.linspace(0.0, 1.0, n_cells + 1)
    flags = np.zeros(n_cells + 1, dtype=bool)
    flags[[0, -1]] = True
    return CurveMesh(np.arange(n_cells + 1), s, flags)


def exact_heat(s, t):
    return np.exp(-t) * np.cos(np.pi * s)


def heat_source(s, t):
    # w_t - w_ss for w = exp(-t) cos(pi s)
    return (np.pi ** 2 - 1.0) * np.exp(-t) * np.cos(np.pi * s)


def heat_error(n_cells: int, n_steps: int, T: float, lumped: bool = True) -> float:
    """Max nodal error at ``T`` of implicit Euler against the manufactured solution (b = 0)."""
    curve = unit_segment(n_cells)
    M = assemble_mass(curve, DiscreteSpace.curve(curve), lumped=lumped)
    K = assemble_curve_diffusion(curve, 0.0)
    dt = T / n_steps
    stepper = HeatStepper(M, K, dt)
    s = curve.arc_length
    w = exact_heat(s, 0.0)
    for k in range(1, n_steps + 1):
        w = stepper.step(w, heat_source(s, k * dt))
    return float(np.max(np.abs(w - exact_heat(s, T))))


def manufactured_heat_study(levels: int = 4, spatial_T: float = 0.1, spatial_dt: float = 1e-5,
                            temporal_cells: int = 1024, lumped: bool = True) -> tuple[ConvergenceStudy, ConvergenceStudy]:
    """Spatial study (h = 1/16 ... with tiny dt) and temporal study (dt = 1/16 ... with tiny h, T = 1)."""
    if levels < 3:
        raise ValueError("levels must be at least 3")
    cells = [16 * 2 ** i for i in range(levels)]
    n_sp = int(round(spatial_T / spatial_dt))
    spatial = ConvergenceStudy("spatial", [1.0 / c for c in cells],
                               [heat_error(c, n_sp, spatial_T, lumped) for c in cells], 1.9)
    steps = [16 * 2 ** i for i in range(levels)]
    temporal = ConvergenceStudy("temporal", [1.0 / n for n in steps],
                                [heat_error(temporal_cells, n, 1.0, lumped) for n in steps], 0.9)
    return spatial, temporal


# ---------------------------------------------------------------------------
# Lipschitz probing and reference element matrices
# ---------------------------------------------------------------------------

def lipschitz_probe(op: Callable, sampler: Callable[[np.random.Generator], np.ndarray], pairs: int = 1000,
                    rng: np.random.Generator | None = None, norm_in: Callable | None = None,
                    norm_out: Callable | None = None) -> float:
    """Largest ``||op(a) - op(b)|| / ||a - b||`` over random pairs."""
    if pairs < 100:
        raise ValueError("at least 100 pairs are required")
    rng = rng or np.random.default_rng(0)
    nin = norm_in or (lambda v: float(np.linalg.norm(v)))
    nout = norm_out or (lambda v: float(np.linalg.norm(v)))
    best = 0.0
    for _ in range(pairs):
        a, b = sampler(rng), sampler(rng)
        d = nin(np.asarray(a) - np.asarray(b))
        if d > 0:
            best = max(best, nout(np.asarray(op(a)) - np.asarray(op(b))) / d)
    return best


def reference_element_stiffness(P: np.ndarray, theta: float, zeta: float) -> np.ndarray:
    """6x6 element matrix of ``int 2 theta eps(u):eps(v) + zeta div u div v`` on triangle ``P``.

    Basis gradients come from inverting the affine interpolation matrix and the
    strains are contracted component by component.
    """
    V = np.column_stack([np.ones(3), P])
    C = np.linalg.inv(V)  # column a holds the coefficients of basis function a
    grads = C[1:, :].T
    area = 0.5 * abs(np.linalg.det(V))
    K = np.zeros((6, 6))
    for a in range(3):
        for i in range(2):
            Ea = np.zeros((2, 2))
            Ea[i, :] += 0.5 * grads[a]
            Ea[:, i] += 0.5 * grads[a]
            for b in range(3):
                for j in range(2):
                    Eb = np.zeros((2, 2))
                    Eb[j, :] += 0.5 * grads[b]
                    Eb[:, j] += 0.5 * grads[b]
                    K[2 * a + i, 2 * b + j] = area * (2 * theta * np.sum(Ea * Eb) + zeta * np.trace(Ea) * np.trace(Eb))
    return K


# ---------------------------------------------------------------------------
# suites for the command line
# ---------------------------------------------------------------------------

def random_spd(rng: np.random.Generator, n: int, cond: float = 50.0) -> np.ndarray:
    Qm, _ = np.linalg.qr(rng.standard_normal((n, n)))
    ev = np.exp(rng.uniform(0.0, np.log(cond), n))
    return (Qm * ev) @ Qm.T


def random_vi_instance(rng: np.random.Generator, n: int | None = None) -> OracleProblem:
    """Random SPD instance with 1- or 2-dof friction groups and boxes on the remaining dofs."""
    n = n or int(rng.integers(2, 9))
    M = random_spd(rng, n)
    rhs = rng.uniform(-3, 3, n)
    perm = rng.permutation(n)
    groups, weights, pos = [], [], 0
    lower, upper = np.full(n, -np.inf), np.full(n, np.inf)
    while pos < n:
        kind = rng.integers(0, 3)
        size = int(min(rng.integers(1, 3), n - pos))
        idx = perm[pos:pos + size]
        if kind == 0:
            groups.append(idx.tolist())
            weights.append(float(rng.uniform(0, 2)))
        elif kind == 1:
            lower[idx] = rng.uniform(-1.0, 0.0, size)
            upper[idx] = lower[idx] + rng.uniform(0.1, 1.5, size)
        pos += size
    return OracleProblem(M, rhs, groups, weights, lower, upper)


def random_box_step(rng: np.random.Generator, n: int = 6):
    """Random damage step pieces: lumped mass, graph-Laplacian stiffness, previous state, source, dt."""
    mass = rng.uniform(0.05, 0.3, n)
    G = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            if rng.random() < 0.5:
                c = rng.uniform(0.0, 1.0)
                G[[i, j], [i, j]] += c
                G[i, j] -= c
                G[j, i] -= c
    prev = rng.uniform(0.0, 1.0, n)
    source = rng.uniform(-2.0, 2.0, n)
    dt = float(rng.uniform(0.01, 0.5))
    return mass, G, prev, source, dt


def run_suite(name: str, seed: int = 42) -> list[tuple[str, bool, str]]:
    """Run a named verification suite; each entry is ``(check, passed, detail)``."""
    from .vi_solvers import (EllipticVIProblem, ParabolicVIStepProblem, parabolic_vi_step, prox_friction_node,
                             solve_elliptic_vi)
    suites = ("oracles", "heat", "lipschitz", "all")
    if name not in suites:
        raise ValueError(f"unknown suite {name!r}; expected one of {suites}")
    rng = np.random.default_rng(seed)
    out = []
    if name in ("oracles", "all"):
        worst = 0.0
        for _ in range(50):
            op = random_vi_instance(rng)
            prob = EllipticVIProblem(op.M, op.rhs, [np.array(g) for g in op.groups], op.weights, op.lower, op.upper)
            v = solve_elliptic_vi(prob, tol=1e-12).v
            worst = max(worst, float(np.max(np.abs(v - proximal_gradient_oracle(op)))))
        out.append(("elliptic VI vs proximal gradient (50)", worst <= 1e-7, f"max err {worst:.2e}"))
        worst = 0.0
        for _ in range(50):
            mass, G, prev, src, dt = random_box_step(rng)
            step = ParabolicVIStepProblem(mass, G, prev, src, dt)
            H = np.diag(mass / dt) + G
            ref = active_set_oracle(OracleProblem(H, mass * prev / dt + src, lower=np.zeros(6), upper=np.ones(6)))
            worst = max(worst, float(np.max(np.abs(parabolic_vi_step(step) - ref))))
        out.append(("damage step vs active-set enumeration (50)", worst <= 1e-9, f"max err {worst:.2e}"))
    if name in ("heat", "all"):
        for study in manufactured_heat_study():
            out.append((f"heat {study.label} order", study.passed, study.summary()))
    if name in ("lipschitz", "all"):
        L = lipschitz_probe(lambda a: prox_friction_node(a, 1.0), lambda r: r.normal(size=3) * r.uniform(0, 5),
                            1000, rng)
        out.append(("friction prox is 1-Lipschitz", L <= 1 + 1e-9, f"probe {L:.6f}"))
        A = rng.standard_normal((4, 4))
        spec = float(np.linalg.norm(A, 2))
        L = lipschitz_probe(lambda x: A @ x, lambda r: r.standard_normal(4), 1000, rng)
        out.append(("linear map probe within [0.5, 1] x spectral norm", 0.5 * spec <= L <= spec * (1 + 1e-12),
                    f"probe {L:.4f} vs {spec:.4f}"))
    return out
