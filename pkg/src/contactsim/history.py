"""Time grids, trajectories and history-dependent operators.

All time integrals use the trapezoidal rule on a uniform grid.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np


@dataclass(frozen=True)
class TimeGrid:
    T: float
    n_steps: int

    def __post_init__(self):
        if not self.T > 0:
            raise ValueError("T must be positive")
        if self.n_steps < 1:
            raise ValueError("n_steps must be at least 1")

    @property
    def dt(self) -> float:
        return self.T / self.n_steps

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n_steps + 1) * self.dt

    def __len__(self) -> int:
        return self.n_steps + 1


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Field vectors sampled at every grid time; ``values`` has shape ``(n_steps + 1, dim)``."""

    grid: TimeGrid
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim == 1:
            vals = vals[:, None]
        if vals.ndim != 2 or vals.shape[0] != len(self.grid):
            raise ValueError(f"expected {len(self.grid)} time samples, got array of shape {vals.shape}")
        vals = vals.copy()
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @classmethod
    def zeros(cls, grid: TimeGrid, dim: int) -> "Trajectory":
        return cls(grid, np.zeros((len(grid), dim)))

    @classmethod
    def constant(cls, grid: TimeGrid, vec) -> "Trajectory":
        vec = np.atleast_1d(np.asarray(vec, dtype=float))
        return cls(grid, np.tile(vec, (len(grid), 1)))

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    def __getitem__(self, k: int) -> np.ndarray:
        return self.values[k]

    def __len__(self) -> int:
        return self.values.shape[0]

    def to_csv(self, path: str | Path) -> None:
        write_trajectory_csv(self, path)


def trajectory_csv_text(traj: Trajectory) -> str:
    """One row per time step: ``t, dof_0, dof_1, ...`` in shortest round-trip notation."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t"] + [f"dof_{i}" for i in range(traj.dim)])
    for t, row in zip(traj.grid.times.tolist(), traj.values.tolist()):
        w.writerow([repr(t)] + [repr(v) for v in row])
    return buf.getvalue()


def write_trajectory_csv(traj: Trajectory, path: str | Path) -> None:
    Path(path).write_text(trajectory_csv_text(traj))


def read_trajectory_csv(path: str | Path, grid: TimeGrid) -> Trajectory:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return Trajectory(grid, np.array([[float(v) for v in r[1:]] for r in rows[1:]]))


def trapezoid_weights(grid: TimeGrid) -> np.ndarray:
    """Matrix ``W`` with ``(W @ f)[k]`` the trapezoid integral of ``f`` over ``[0, t_k]``."""
    n = len(grid)
    W = np.zeros((n, n))
    for k in range(1, n):
        W[k, : k + 1] = grid.dt
        W[k, 0] = W[k, k] = 0.5 * grid.dt
    return W


def cumulative_trapezoid(values: np.ndarray, dt: float) -> np.ndarray:
    """Cumulative trapezoid integral along axis 0, starting at zero."""
    values = np.asarray(values, dtype=float)
    out = np.zeros_like(values)
    if len(values) > 1:
        out[1:] = dt * np.cumsum(0.5 * (values[1:] + values[:-1]), axis=0)
    return out


def integrate_trajectory(traj: Trajectory, u0) -> Trajectory:
    """Displacement ``u(t) = u0 + int_0^t eta(s) ds``."""
    u0 = np.atleast_1d(np.asarray(u0, dtype=float))
    if u0.shape != (traj.dim,):
        raise ValueError(f"u0 has shape {u0.shape}, trajectory dimension is {traj.dim}")
    return Trajectory(traj.grid, u0 + cumulative_trapezoid(traj.values, traj.grid.dt))


@dataclass(frozen=True)
class RelaxationKernel:
    """``C(t, eps, xi) = scale * k(t) * (1 - damage_coupling * xi) * eps``.

    ``kind`` is ``zero``, ``constant`` (``k = 1``) or ``exponential``
    (``k = exp(-rate * t)``).  The damage factor is Lipschitz in ``xi`` only for
    bounded strains; ``strain_bound`` is the bound used in the constant ledger.
    """

    kind: str = "zero"
    scale: float = 0.0
    rate: float = 0.0
    damage_coupling: float = 0.0
    strain_bound: float = 1.0

    def __post_init__(self):
        if self.kind not in ("zero", "constant", "exponential"):
            raise ValueError(f"unknown kernel kind {self.kind!r}")
        if not 0.0 <= self.damage_coupling <= 1.0:
            raise ValueError("damage_coupling must lie in [0, 1]")
        if self.scale < 0 or self.rate < 0:
            raise ValueError("kernel scale and rate must be non-negative")

    @property
    def active(self) -> bool:
        return self.kind != "zero" and self.scale != 0.0

    def time_factor(self, t):
        t = np.asarray(t, dtype=float)
        if not self.active:
            return np.zeros_like(t)
        if self.kind == "constant":
            return self.scale * np.ones_like(t)
        return self.scale * np.exp(-self.rate * t)

    def damage_factor(self, xi):
        return 1.0 - self.damage_coupling * np.asarray(xi, dtype=float)

    def __call__(self, t, strain, xi):
        return self.time_factor(t) * self.damage_factor(xi)[..., None] * np.asarray(strain)

    @property
    def lipschitz(self) -> float:
        """Lipschitz constant in ``(strain, xi)``: ``scale * max(1, coupling * strain_bound)``."""
        if not self.active:
            return 0.0
        return self.scale * max(1.0, self.damage_coupling * self.strain_bound)


def memory_stress(kernel: RelaxationKernel, grid: TimeGrid, strain: np.ndarray, xi_elem: np.ndarray) -> np.ndarray:
    """Trapezoid Volterra term ``int_0^{t_k} C(t_k - s, eps(s), xi(s)) ds`` for every ``k``.

    ``strain`` has shape ``(n+1, nt, 3)`` (tensor components), ``xi_elem`` ``(n+1, nt)``.
    """
    strain = np.asarray(strain, dtype=float)
    if not kernel.active:
        return np.zeros_like(strain)
    t = grid.times
    lag = t[:, None] - t[None, :]
    Kw = trapezoid_weights(grid) * np.where(lag >= 0, kernel.time_factor(np.maximum(lag, 0.0)), 0.0)
    g = kernel.damage_factor(xi_elem)[..., None] * strain
    return np.einsum("ks,s...->k...", Kw, g)


def apply_R(strain_eta: np.ndarray, xi_elem: np.ndarray, grid: TimeGrid, k: int,
            elasticity: np.ndarray, kernel: RelaxationKernel, strain_u0: np.ndarray | None = None) -> np.ndarray:
    """History stress ``B eps(I eta)(t_k) + int_0^{t_k} C(...) ds`` per element.

    ``strain_eta`` are engineering Voigt strains ``(n+1, nt, 3)`` of the velocity,
    ``elasticity`` the ``3x3`` Voigt matrix of ``B``.  Returns tensor components.
    """
    return apply_R_all(strain_eta, xi_elem, grid, elasticity, kernel, strain_u0)[k]


def apply_R_all(strain_eta, xi_elem, grid, elasticity, kernel, strain_u0=None) -> np.ndarray:
    strain_eta = np.asarray(strain_eta, dtype=float)
    disp = cumulative_trapezoid(strain_eta, grid.dt)
    if strain_u0 is not None:
        disp = disp + strain_u0
    elastic = np.einsum("ij,...j->...i", elasticity, disp)
    tensor = strain_eta.copy()
    tensor[..., 2] *= 0.5
    return elastic + memory_stress(kernel, grid, tensor, xi_elem)


def apply_S(eta_normal: np.ndarray, u0_normal: np.ndarray, grid: TimeGrid, k: int | None = None) -> np.ndarray:
    """Normal displacement on the contact nodes, ``int_0^t eta_nu ds + u0_nu``.

    Returns all time levels when ``k`` is None.
    """
    out = np.asarray(u0_normal, dtype=float) + cumulative_trapezoid(eta_normal, grid.dt)
    return out if k is None else out[k]


@dataclass
class HistoryState:
    """Running accumulators for the displacement, the normal history and the memory term.

    The convolution accumulator is updated recursively for the constant and
    exponential kernels, so each push costs O(1) in the number of past steps.
    """

    grid: TimeGrid
    kernel: RelaxationKernel
    u0: np.ndarray
    u0_normal: np.ndarray
    k: int = -1
    displacement: np.ndarray = field(init=False)
    normal_history: np.ndarray = field(init=False)
    memory: np.ndarray | None = field(init=False, default=None)
    _prev_eta: np.ndarray | None = field(init=False, default=None)
    _prev_eta_nu: np.ndarray | None = field(init=False, default=None)
    _g0: np.ndarray | None = field(init=False, default=None)
    _gk: np.ndarray | None = field(init=False, default=None)
    _conv_full: np.ndarray | None = field(init=False, default=None)

    def __post_init__(self):
        self.displacement = np.array(self.u0, dtype=float)
        self.normal_history = np.array(self.u0_normal, dtype=float)

    def push(self, eta: np.ndarray, eta_normal: np.ndarray, memory_arg: np.ndarray | None = None) -> None:
        """Advance to the next time index.

        ``memory_arg`` is the already damage-weighted kernel argument
        ``(1 - c xi) eps(eta)`` at the new time.
        """
        eta = np.asarray(eta, dtype=float)
        eta_normal = np.asarray(eta_normal, dtype=float)
        dt = self.grid.dt
        self.k += 1
        if self.k > 0:
            self.displacement = self.displacement + dt * 0.5 * (self._prev_eta + eta)
            self.normal_history = self.normal_history + dt * 0.5 * (self._prev_eta_nu + eta_normal)
        self._prev_eta, self._prev_eta_nu = eta, eta_normal
        if memory_arg is None:
            return
        g = np.asarray(memory_arg, dtype=float)
        if not self.kernel.active:
            self.memory = np.zeros_like(g)
            return
        if self.kernel.kind == "exponential":
            decay = np.exp(-self.kernel.rate * dt)
        else:
            decay = 1.0
        if self.k == 0:
            self._g0 = g
            self._conv_full = g.copy()
            self.memory = np.zeros_like(g)
            return
        # full-weight sum P_k = decay * P_{k-1} + g_k, then correct both endpoint weights
        self._conv_full = decay * self._conv_full + g
        tk = self.k * dt
        c = self.kernel.scale
        self.memory = c * dt * (self._conv_full - 0.5 * float(self.kernel.time_factor(tk) / c) * self._g0 - 0.5 * g)


@dataclass
class PicardResult:
    solution: object
    diffs: list[float]
    converged: bool
    iterations: int

    @property
    def ratios(self) -> list[float]:
        d = self.diffs
        return [d[i + 1] / d[i] for i in range(len(d) - 1) if d[i] > 0]


def _vals(x) -> np.ndarray:
    return x.values if isinstance(x, Trajectory) else np.asarray(x, dtype=float)


def c_norm(values: np.ndarray, norm: Callable[[np.ndarray], float] | None = None) -> float:
    """Discrete ``C(I; V)`` norm: max over time of the field norm."""
    values = np.asarray(values)
    if values.ndim == 1:
        values = values[:, None]
    if norm is None:
        return float(np.max(np.sqrt(np.sum(values ** 2, axis=1)))) if values.size else 0.0
    return max(norm(v) for v in values)


def picard_trajectory(map_: Callable, init, tol: float, max_iter: int,
                      norm: Callable[[np.ndarray], float] | None = None) -> PicardResult:
    """Fixed-point iteration ``x <- map_(x)`` on trajectories.

    Stops once the C-norm of the successive difference is at most ``tol``.
    On failure the iterate with the smallest successive difference is returned.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    x = init
    diffs: list[float] = []
    best, best_d = init, np.inf
    for it in range(1, max_iter + 1):
        y = map_(x)
        d = c_norm(_vals(y) - _vals(x), norm)
        diffs.append(d)
        x = y
        if d < best_d:
            best, best_d = y, d
        if d <= tol:
            return PicardResult(y, diffs, True, it)
    return PicardResult(best, diffs, False, max_iter)
