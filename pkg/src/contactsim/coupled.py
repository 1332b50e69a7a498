"""Fixed-point orchestration: inner history loop, damage and wear marching, outer velocity loop."""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .contact_model import ContactProblem, damage_source, wear_source
from .history import PicardResult, TimeGrid, Trajectory, c_norm, cumulative_trapezoid, integrate_trajectory, \
    picard_trajectory
from .vi_solvers import ConvergenceError, EllipticVIProblem, HeatStepper, projected_gauss_seidel, \
    solve_elliptic_vi

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SolverConfig:
    pi_tol: float = 1e-8
    lambda_tol: float = 1e-9
    vi_tol: float = 1e-10
    pi_max_iter: int = 200
    lambda_max_iter: int = 200
    vi_max_iter: int = 500
    pgs_tol: float = 1e-13
    pgs_max_iter: int = 20000
    probes: int = 20
    seed: int = 42
    certificate_directions: int = 50

    def __post_init__(self):
        if not (0 < self.vi_tol < self.lambda_tol < self.pi_tol):
            raise ValueError("tolerances must satisfy 0 < vi_tol < lambda_tol < pi_tol")
        for name in ("pi_max_iter", "lambda_max_iter", "vi_max_iter", "pgs_max_iter"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be at least 1")
        if self.pgs_tol <= 0:
            raise ValueError("pgs_tol must be positive")
        if self.probes < 1 or self.certificate_directions < 1:
            raise ValueError("probes and certificate_directions must be positive")


# ---------------------------------------------------------------------------
# inner history loop
# ---------------------------------------------------------------------------

@dataclass
class QVIResult:
    eta: np.ndarray
    picard: PicardResult
    max_vi_residual: float
    vi_failures: int

    @property
    def converged(self) -> bool:
        return self.picard.converged and self.vi_failures == 0


class ContactQVI:
    """History loop map for the contact problem with damage and wear frozen."""

    def __init__(self, problem: ContactProblem, config: SolverConfig):
        self.problem, self.config = problem, config
        self.stats = {"max_residual": 0.0, "failures": 0}

    def norm(self, v: np.ndarray) -> float:
        return self.problem.v_norm(v)

    def frozen_terms(self, u: np.ndarray, xi: np.ndarray, w: np.ndarray):
        pb = self.problem
        hist = pb.divergence(pb.history_stress(u, xi))
        S = pb.normal_history(u)
        normal, lam = pb.contact_terms(S, pb.tangential_component(u), w)
        return hist, normal, lam

    def __call__(self, u: np.ndarray, xi: np.ndarray, w: np.ndarray) -> np.ndarray:
        pb, cfg = self.problem, self.config
        hist, normal, lam = self.frozen_terms(u, xi, w)
        eta = np.empty_like(u)
        system = pb.system
        for k in range(len(u)):
            prob = pb.step_problem(k, hist[k], normal[k], lam[k])
            res = solve_elliptic_vi(prob, pb.Q.T @ u[k], cfg.vi_tol, cfg.vi_max_iter, system)
            if not res.converged:
                self.stats["failures"] += 1
            self.stats["max_residual"] = max(self.stats["max_residual"], res.residual)
            eta[k] = pb.Q @ res.v
        return eta


@dataclass
class ScalarQVI:
    """One-dof synthetic instance: ``A(y, v) = m v + y`` with ``y = r * int u`` and
    ``j(z, u, w, v) = max(0, lam0 + beta |u| + alpha z + gamma w) |v|``, ``z = int u``.

    In the sliding regime the history map contracts with factor ``beta / m``
    up to the memory contribution.
    """

    grid: TimeGrid
    m: float
    beta: float
    lam0: float = 0.0
    alpha: float = 0.0
    gamma: float = 0.0
    r: float = 0.0
    f: float = 10.0
    vi_tol: float = 1e-12

    def norm(self, v: np.ndarray) -> float:
        return float(np.linalg.norm(v))

    def __call__(self, u: np.ndarray, xi=None, w=None) -> np.ndarray:
        u = np.asarray(u, dtype=float).reshape(len(self.grid), 1)
        z = cumulative_trapezoid(u[:, 0], self.grid.dt)
        w = np.zeros(len(u)) if w is None else np.asarray(w, dtype=float).reshape(len(u), -1)[:, 0]
        lam = np.maximum(0.0, self.lam0 + self.beta * np.abs(u[:, 0]) + self.alpha * z + self.gamma * w)
        out = np.empty_like(u)
        for k in range(len(u)):
            prob = EllipticVIProblem(np.array([[self.m]]), np.array([self.f - self.r * z[k]]), [[0]], [lam[k]])
            out[k] = solve_elliptic_vi(prob, u[k], self.vi_tol).v
        return out


def solve_qvi_trajectory(model, xi: np.ndarray, w: np.ndarray, tol: float, max_iter: int,
                         init: np.ndarray | None = None) -> QVIResult:
    """Picard iteration on the velocity trajectory with damage and wear frozen."""
    xi = xi.values if isinstance(xi, Trajectory) else xi
    w = w.values if isinstance(w, Trajectory) else w
    if init is None:
        init = np.zeros((len(xi), model.problem.V.dof_count)) if hasattr(model, "problem") else np.zeros((len(xi), 1))
    stats = getattr(model, "stats", None)
    if stats is not None:
        stats.update(max_residual=0.0, failures=0)
    res = picard_trajectory(lambda u: model(u, xi, w), np.asarray(init, dtype=float), tol, max_iter, model.norm)
    if not res.converged:
        logger.warning("history loop did not converge: last differences %s", res.diffs[-3:])
    return QVIResult(np.asarray(res.solution), res,
                     stats["max_residual"] if stats else 0.0, stats["failures"] if stats else 0)


# ---------------------------------------------------------------------------
# damage and wear marching
# ---------------------------------------------------------------------------

def damage_sources(problem: ContactProblem, kappa: np.ndarray) -> np.ndarray:
    """Damage load vectors at every time level for the velocity trajectory ``kappa``."""
    return np.array([damage_source(problem.mesh, problem.V, kk, problem.material) for kk in kappa])


def march_damage(problem: ContactProblem, loads: np.ndarray, xi0: np.ndarray, config: SolverConfig) -> np.ndarray:
    """Backward Euler with box [0, 1]; ``loads[k]`` is the source load vector at ``t_k``."""
    dt = problem.grid.dt
    m = problem.damage_mass.matrix
    H = m / dt
    if problem.damage_stiff is not None:
        H = H + problem.damage_stiff.matrix
    H = sp.csr_matrix(H)
    md = m.diagonal()
    out = np.empty((len(loads), len(xi0)))
    out[0] = xi0
    for k in range(1, len(loads)):
        b = md * out[k - 1] / dt + loads[k]
        x, _ = projected_gauss_seidel(H, b, out[k - 1], 0.0, 1.0, config.pgs_tol, config.pgs_max_iter)
        out[k] = np.clip(x, 0.0, 1.0)
    return out


def solve_damage_trajectory(problem: ContactProblem, kappa, config: SolverConfig) -> Trajectory:
    kappa = kappa.values if isinstance(kappa, Trajectory) else np.asarray(kappa, dtype=float)
    return Trajectory(problem.grid, march_damage(problem, damage_sources(problem, kappa), problem.xi0, config))


def march_wear(problem: ContactProblem, sources: np.ndarray, w0: np.ndarray,
               stepper: HeatStepper | None = None) -> np.ndarray:
    """Implicit Euler for the curve heat equation; ``sources[k]`` holds nodal source values at ``t_k``."""
    stepper = stepper or HeatStepper(problem.wear_mass, problem.wear_diff, problem.grid.dt)
    out = np.empty((len(sources), len(w0)))
    out[0] = w0
    for k in range(1, len(sources)):
        out[k] = stepper.step(out[k - 1], sources[k])
    return out


def solve_wear_trajectory(problem: ContactProblem, kappa, xi, stepper: HeatStepper | None = None) -> Trajectory:
    kappa = kappa.values if isinstance(kappa, Trajectory) else np.asarray(kappa, dtype=float)
    xi = xi.values if isinstance(xi, Trajectory) else np.asarray(xi, dtype=float)
    src = wear_source(problem.tangential_component(kappa), problem.curve_trace(xi), problem.material)
    return Trajectory(problem.grid, march_wear(problem, src, problem.w0, stepper))


# ---------------------------------------------------------------------------
# contraction ledger
# ---------------------------------------------------------------------------

def compute_m0(c: dict) -> float:
    """``beta + T(L1 r1J + alpha sJ) + gamma c L_varphi + (L1 r2J T + gamma c L_varphi) sqrt(d1 L_phi T)``."""
    T = c["T"]
    wear = c["gamma"] * c["c_hat"] * c["L_varphi"]
    return (c["beta"] + T * (c["L1"] * c["r1J"] + c["alpha"] * c["sJ"]) + wear
            + (c["L1"] * c["r2J"] * T + wear) * math.sqrt(c["d1_hat"] * c["L_phi"] * T))


@dataclass
class ContractionReport:
    constants: dict
    failures: tuple = ()
    warnings: tuple = ()
    lambda_ratios: list = field(default_factory=list)
    pi_ratios: list = field(default_factory=list)

    @property
    def m(self) -> float:
        return self.constants["m"]

    @property
    def m0(self) -> float:
        return self.constants["m0"]

    @property
    def verdict_beta(self) -> bool:
        return self.constants["m"] > self.constants["beta"]

    @property
    def verdict_m0(self) -> bool:
        return self.constants["m"] > self.constants["m0"]

    def lines(self) -> list[str]:
        keys = ["m", "L1", "L2", "alpha", "beta", "gamma", "r1J", "r2J", "sJ", "L_A", "m_A", "L_B", "L_C",
                "L_p", "p_star", "L_mu", "mu_star", "L_phi", "L_varphi", "g1", "g2", "trace_norm",
                "c_hat", "d1_hat", "T", "l_K", "L_K", "m0"]
        out = [f"{k} = {self.constants[k]!r}" for k in keys]
        out.append(f"m > beta: {str(self.verdict_beta).lower()}")
        out.append(f"m > m_0: {str(self.verdict_m0).lower()}")
        for f in self.failures:
            out.append(f"hypothesis failed: {f}")
        for w in self.warnings:
            out.append(f"warning: {w}")
        if self.lambda_ratios:
            out.append("lambda ratios (last sweep): " + " ".join(f"{r:.6g}" for r in self.lambda_ratios))
        if self.pi_ratios:
            out.append("pi ratios: " + " ".join(f"{r:.6g}" for r in self.pi_ratios))
        return out


def estimate_c_hat(problem: ContactProblem, rng: np.random.Generator, probes: int) -> float:
    """Largest observed ``sup|w1 - w2| / sup|s1 - s2|`` over random source perturbations (linear in the source)."""
    stepper = HeatStepper(problem.wear_mass, problem.wear_diff, problem.grid.dt)
    shape = (len(problem.grid), problem.curve.n_nodes)
    best = 0.0
    for i in range(probes):
        ds = rng.uniform(-1.0, 1.0, shape) if i else np.ones(shape)
        dw = march_wear(problem, ds, np.zeros(shape[1]), stepper)
        best = max(best, float(np.max(np.abs(dw)) / np.max(np.abs(ds))))
    return best


def estimate_d1_hat(problem: ContactProblem, config: SolverConfig, rng: np.random.Generator, probes: int) -> float:
    """Largest observed ``||xi1(t_k) - xi2(t_k)||^2 / int_0^{t_k} ||p1 - p2||^2`` in the lumped L2 norm."""
    grid = problem.grid
    md = problem.damage_mass.matrix.diagonal()
    nn = problem.mesh.n_vertices
    base = np.full((len(grid), nn), problem.material.lambda_w)
    xi1 = march_damage(problem, base * md, problem.xi0, config)
    scale = 0.1 * max(abs(problem.material.lambda_w), 1.0)
    best = 0.0
    for _ in range(probes):
        dp = scale * rng.uniform(-1.0, 1.0, (len(grid), nn))
        xi2 = march_damage(problem, (base + dp) * md, problem.xi0, config)
        num = np.sum(md * (xi1 - xi2) ** 2, axis=1)
        den = cumulative_trapezoid(np.sum(md * dp ** 2, axis=1), grid.dt)
        ok = den > 0
        if np.any(ok):
            best = max(best, float(np.max(num[ok] / den[ok])))
    return best


def contraction_report(problem: ContactProblem, config: SolverConfig) -> ContractionReport:
    hyp = problem.hypotheses()
    c = dict(hyp.constants)
    rng = np.random.default_rng(config.seed)
    c["T"] = problem.grid.T
    c["c_hat"] = estimate_c_hat(problem, rng, config.probes)
    c["d1_hat"] = estimate_d1_hat(problem, config, rng, config.probes)
    c["l_K"] = c["beta"] / c["m"]
    c["L_K"] = (c["L1"] * c["r1J"] + c["alpha"] * c["sJ"]) / c["m"]
    c["m0"] = compute_m0(c)
    return ContractionReport(c, hyp.failures, hyp.warnings)


# ---------------------------------------------------------------------------
# outer loop and driver
# ---------------------------------------------------------------------------

@dataclass
class SimulationResult:
    grid: TimeGrid
    eta: Trajectory
    u: Trajectory
    xi: Trajectory
    w: Trajectory
    stress: dict
    report: ContractionReport
    converged: bool
    diagnostics: dict


class PiSolver:
    """Outer loop ``kappa -> eta(xi(kappa), w(kappa, xi(kappa)))``; keeps the last damage and wear."""

    def __init__(self, problem: ContactProblem, config: SolverConfig):
        self.problem, self.config = problem, config
        self.qvi = ContactQVI(problem, config)
        self.heat = HeatStepper(problem.wear_mass, problem.wear_diff, problem.grid.dt)
        self.xi: Trajectory | None = None
        self.w: Trajectory | None = None
        self.last_eta: np.ndarray | None = None
        self.lambda_log: list[list[float]] = []
        self.lambda_converged = True
        self.max_vi_residual = 0.0

    def sweep(self, kappa: np.ndarray) -> np.ndarray:
        pb, cfg = self.problem, self.config
        self.xi = solve_damage_trajectory(pb, kappa, cfg)
        self.w = solve_wear_trajectory(pb, kappa, self.xi, self.heat)
        init = self.last_eta if self.last_eta is not None else np.zeros_like(kappa)
        res = solve_qvi_trajectory(self.qvi, self.xi, self.w, cfg.lambda_tol, cfg.lambda_max_iter, init)
        self.lambda_log.append(res.picard.diffs)
        self.lambda_converged &= res.converged
        self.max_vi_residual = max(self.max_vi_residual, res.max_vi_residual)
        self.last_eta = res.eta
        return res.eta


def vi_certificate(problem: ContactProblem, eta: np.ndarray, xi: np.ndarray, w: np.ndarray,
                   n_dirs: int, rng: np.random.Generator) -> np.ndarray:
    """Smallest VI gap over random unit V-norm directions at each time step.

    The gap ``<A eps(eta) + R, eps(v - eta)> + j(v) - j(eta) - <f, v - eta>``
    is evaluated with the history of ``eta`` itself.
    """
    hist, normal, lam = ContactQVI(problem, None).frozen_terms(eta, xi, w)
    M = problem.A_op.matrix
    n = problem.V.dof_count
    out = np.empty(len(eta))
    for k in range(len(eta)):
        d = rng.standard_normal((n_dirs, n))
        d /= np.sqrt(np.einsum("ij,ij->i", d, (problem.gram @ d.T).T))[:, None]
        grad = M @ eta[k] + hist[k] + problem.normal_load(normal[k]) - problem.loads[k]
        tan0 = problem.tangential_component(eta[k])
        tan1 = problem.tangential_component(eta[k] + d)
        gap = d @ grad + np.abs(tan1) @ lam[k] - lam[k] @ np.abs(tan0)
        out[k] = float(gap.min())
    return out


def solve_pi_fixed_point(problem: ContactProblem, config: SolverConfig, stress_steps=None,
                         report: ContractionReport | None = None, check_hypotheses: bool = True) -> SimulationResult:
    """Outer Picard iteration from ``kappa = 0``; the best iterate is returned (flagged) on failure."""
    report = report or contraction_report(problem, config)
    if check_hypotheses and report.failures:
        raise ValueError("hypotheses violated: " + "; ".join(report.failures))
    if not report.verdict_m0:
        logger.warning("m = %.6g <= m0 = %.6g: contraction not guaranteed, iterating anyway", report.m, report.m0)
    t0 = time.perf_counter()
    pi = PiSolver(problem, config)
    grid = problem.grid
    kappa0 = np.zeros((len(grid), problem.V.dof_count))
    states = {}

    def step(kappa):
        eta = pi.sweep(kappa)
        states[id(eta)] = (pi.xi, pi.w)
        return eta

    res = picard_trajectory(step, kappa0, config.pi_tol, config.pi_max_iter, problem.v_norm)
    eta = np.asarray(res.solution)
    xi, w = states[id(res.solution)]
    report.pi_ratios = res.ratios
    report.lambda_ratios = PicardResult(None, pi.lambda_log[-1], True, 0).ratios if pi.lambda_log else []
    eta_t = Trajectory(grid, eta)
    u = integrate_trajectory(eta_t, problem.u0)
    n = grid.n_steps
    steps = sorted(set(stress_steps if stress_steps is not None else (0, n // 2, n)))
    sig = problem.reconstruct_stress(eta, xi.values)
    stress = {k: sig[k] for k in steps}
    converged = res.converged and pi.lambda_converged
    diag = {
        "pi_iterations": res.iterations, "pi_diffs": res.diffs, "pi_converged": res.converged,
        "lambda_iterations": [len(d) for d in pi.lambda_log], "lambda_converged": pi.lambda_converged,
        "lambda_diffs": pi.lambda_log, "max_vi_residual": pi.max_vi_residual,
        "wall_time": time.perf_counter() - t0,
        "first_step_wear_change": float(np.max(np.abs(w.values[1] - w.values[0]))) if n else 0.0,
    }
    return SimulationResult(grid, eta_t, u, xi, w, stress, report, converged, diag)


def extra_pi_sweep(problem: ContactProblem, config: SolverConfig, result: SimulationResult) -> float:
    """C-norm change of the velocity under one more outer sweep (fixed-point certificate)."""
    pi = PiSolver(problem, config)
    pi.last_eta = result.eta.values
    eta = pi.sweep(result.eta.values)
    return c_norm(eta - result.eta.values, problem.v_norm)


def report_text(result: SimulationResult, invariants: dict | None = None, timings: dict | None = None) -> str:
    d = result.diagnostics
    lines = ["contactsim run report", f"status: {'converged' if result.converged else 'NOT converged'}",
             f"time steps: {result.grid.n_steps}  T = {result.grid.T!r}",
             f"outer iterations: {d['pi_iterations']}",
             "outer differences: " + " ".join(f"{x:.3e}" for x in d["pi_diffs"]),
             "inner iterations per outer sweep: " + " ".join(str(x) for x in d["lambda_iterations"]),
             f"max VI residual: {d['max_vi_residual']:.3e}",
             f"first-step max wear change: {d['first_step_wear_change']:.3e}",
             "", "[contraction report]"]
    lines += result.report.lines()
    if invariants:
        lines += ["", "[invariants]"] + [f"{k}: {v}" for k, v in invariants.items()]
    if timings:
        lines += ["", "[timings]"] + [f"{k}: {v:.3f} s" for k, v in timings.items()]
    return "\n".join(lines) + "\n"
