"""Flat ``key = value`` run configuration with dotted keys."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

from .contact_model import InitialState, LoadModel, MaterialModel
from .coupled import SolverConfig
from .geometry import Mesh2D, generate_rect_mesh, load_mesh
from .history import RelaxationKernel, TimeGrid


class ConfigError(ValueError):
    pass


_FLOAT, _INT, _STR, _VEC, _INTS = "float", "int", "str", "vec2", "ints"

SCHEMA = {
    "mesh.file": _STR, "mesh.nx": _INT, "mesh.ny": _INT,
    "mesh.left": _STR, "mesh.right": _STR, "mesh.bottom": _STR, "mesh.top": _STR,
    "grid.T": _FLOAT, "grid.n_steps": _INT,
    "material.theta_A": _FLOAT, "material.zeta_A": _FLOAT, "material.theta_B": _FLOAT, "material.zeta_B": _FLOAT,
    "material.kernel.kind": _STR, "material.kernel.scale": _FLOAT, "material.kernel.rate": _FLOAT,
    "material.kernel.damage_coupling": _FLOAT, "material.kernel.strain_bound": _FLOAT,
    "material.p_star": _FLOAT, "material.L_p": _FLOAT,
    "material.mu0": _FLOAT, "material.mu1": _FLOAT, "material.mu2": _FLOAT, "material.mu_star": _FLOAT,
    "material.gap": _FLOAT, "material.kappa": _FLOAT, "material.lambda_E": _FLOAT, "material.lambda_w": _FLOAT,
    "material.phi_min": _FLOAT, "material.wear_b": _FLOAT,
    "material.wear_c1": _FLOAT, "material.wear_c2": _FLOAT, "material.wear_c3": _FLOAT,
    "load.f0": _VEC, "load.f2": _VEC, "load.profile": _STR, "load.slope": _FLOAT,
    "load.amplitude": _FLOAT, "load.frequency": _FLOAT,
    "init.w0": _FLOAT, "init.xi0": _FLOAT,
    "solver.pi_tol": _FLOAT, "solver.lambda_tol": _FLOAT, "solver.vi_tol": _FLOAT,
    "solver.pi_max_iter": _INT, "solver.lambda_max_iter": _INT, "solver.vi_max_iter": _INT,
    "solver.pgs_tol": _FLOAT, "solver.pgs_max_iter": _INT, "solver.probes": _INT,
    "solver.certificate_directions": _INT,
    "seed": _INT,
    "output.stress_steps": _INTS,
}


def _convert(key: str, raw: str, lineno: int):
    kind = SCHEMA[key]
    try:
        if kind == _FLOAT:
            return float(raw)
        if kind == _INT:
            return int(raw)
        if kind == _VEC:
            parts = [float(p) for p in raw.replace(",", " ").split()]
            if len(parts) != 2:
                raise ValueError("expected two components")
            return tuple(parts)
        if kind == _INTS:
            return [int(p) for p in raw.replace(",", " ").split()]
        return raw
    except ValueError as exc:
        raise ConfigError(f"line {lineno}: bad value for {key!r}: {raw!r} ({exc})") from None


def parse_text(text: str) -> dict:
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in SCHEMA:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        values[key] = _convert(key, raw, lineno)
    return values


@dataclass
class RunConfig:
    mesh: Mesh2D
    grid: TimeGrid
    material: MaterialModel
    load: LoadModel
    init: InitialState
    solver: SolverConfig
    stress_steps: list
    source: str = ""


def _section(values: dict, prefix: str) -> dict:
    return {k[len(prefix):]: v for k, v in values.items() if k.startswith(prefix) and "." not in k[len(prefix):]}


def build_config(values: dict, base_dir: Path | None = None, source: str = "") -> RunConfig:
    base_dir = base_dir or Path.cwd()
    try:
        if "mesh.file" in values:
            if any(k in values for k in ("mesh.nx", "mesh.ny")):
                raise ConfigError("give either mesh.file or mesh.nx/mesh.ny, not both")
            path = Path(values["mesh.file"])
            path = path if path.is_absolute() else base_dir / path
            if not path.exists():
                raise ConfigError(f"mesh file not found: {path}")
            mesh = load_mesh(path)
        else:
            labels = {"bottom": "Gamma3", "top": "Gamma1", "left": "Gamma2", "right": "Gamma2"}
            labels.update(_section(values, "mesh."))
            labels.pop("nx", None)
            labels.pop("ny", None)
            mesh = generate_rect_mesh(values.get("mesh.nx", 8), values.get("mesh.ny", 8), labels)
        grid = TimeGrid(values.get("grid.T", 1.0), values.get("grid.n_steps", 32))
        kern = {k: v for k, v in _section(values, "material.kernel.").items()}
        mat_kw = _section(values, "material.")
        material = MaterialModel(kernel=RelaxationKernel(**kern), **mat_kw)
        load = LoadModel(**_section(values, "load."))
        init = InitialState(**_section(values, "init."))
        solver_kw = _section(values, "solver.")
        if "seed" in values:
            solver_kw["seed"] = values["seed"]
        solver = SolverConfig(**solver_kw)
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from None
    steps = values.get("output.stress_steps", [0, grid.n_steps // 2, grid.n_steps])
    bad = [k for k in steps if not 0 <= k <= grid.n_steps]
    if bad:
        raise ConfigError(f"output.stress_steps outside [0, {grid.n_steps}]: {bad}")
    return RunConfig(mesh, grid, material, load, init, solver, sorted(set(steps)), source)


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return build_config(parse_text(text), path.parent, str(path))


def config_keys() -> list[str]:
    return sorted(SCHEMA)

