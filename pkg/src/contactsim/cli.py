"""``contactsim`` command line: run, verify, estimate, mesh-info."""
from __future__ import annotations

import argparse
import logging
import os
import sys
import tempfile
import time
from pathlib import Path

import numpy as np

from .config import ConfigError, RunConfig, load_config
from .contact_model import ContactProblem
from .coupled import contraction_report, report_text, solve_pi_fixed_point, vi_certificate
from .geometry import GAMMA1, GAMMA2, GAMMA3, MeshError, extract_curve, load_mesh
from .history import cumulative_trapezoid, trajectory_csv_text

EXIT_OK, EXIT_ERROR, EXIT_NOT_CONVERGED = 0, 1, 2

logger = logging.getLogger("contactsim")


def _fail(msg: str) -> int:
    print(f"contactsim: error: {msg}", file=sys.stderr)
    return EXIT_ERROR


def atomic_write(path: Path, text: str) -> None:
    """Write through a temporary file in the target directory, then rename over ``path``."""
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _stress_text(sig: np.ndarray) -> str:
    lines = ["element,xx,yy,xy"] + [f"{e},{a!r},{b!r},{c!r}" for e, (a, b, c) in enumerate(sig.tolist())]
    return "\n".join(lines) + "\n"


def _threads() -> int:
    raw = os.environ.get("CONTACTSIM_THREADS", "0")
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"CONTACTSIM_THREADS must be a non-negative integer, got {raw!r}") from None
    if n < 0:
        raise ConfigError("CONTACTSIM_THREADS must be non-negative")
    return n


def _prepare(cfg: RunConfig):
    problem = ContactProblem(cfg.mesh, cfg.grid, cfg.material, cfg.load, cfg.init)
    report = contraction_report(problem, cfg.solver)
    return problem, report


def check_invariants(problem: ContactProblem, result, cfg: RunConfig) -> dict:
    xi, w, eta, u = result.xi.values, result.w.values, result.eta.values, result.u.values
    inv = {}
    inv["damage in [0,1]"] = bool(xi.min() >= 0.0 and xi.max() <= 1.0)
    u_ref = problem.u0 + cumulative_trapezoid(eta, cfg.grid.dt)
    inv["u = trapezoid integral of eta (max dev)"] = float(np.max(np.abs(u - u_ref)))
    src_nonneg = min(cfg.material.wear_c1, cfg.material.wear_c2, cfg.material.wear_c3) >= 0
    if src_nonneg and cfg.material.wear_b == 0:
        inv["wear nondecreasing (min step change)"] = float(np.min(np.diff(w, axis=0))) if len(w) > 1 else 0.0
    rng = np.random.default_rng(cfg.solver.seed)
    gaps = vi_certificate(problem, eta, xi, w, cfg.solver.certificate_directions, rng)
    tol = 10 * cfg.solver.vi_tol
    inv["VI certificate min gap"] = float(gaps.min())
    inv["VI certificate passed"] = bool(gaps.min() >= -tol)
    return inv


def cmd_run(config: str, out: str) -> int:
    try:
        _threads()
        cfg = load_config(config)
    except (ConfigError, MeshError) as exc:
        return _fail(str(exc))
    out_dir = Path(out)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        fd, probe = tempfile.mkstemp(dir=out_dir)
        os.close(fd)
        os.unlink(probe)
    except OSError as exc:
        return _fail(f"output directory {out_dir} is not writable: {exc.strerror}")
    t0 = time.perf_counter()
    try:
        problem, report = _prepare(cfg)
    except (ValueError, MeshError) as exc:
        return _fail(str(exc))
    if report.failures:
        return _fail("hypotheses violated: " + "; ".join(report.failures))
    t1 = time.perf_counter()
    result = solve_pi_fixed_point(problem, cfg.solver, cfg.stress_steps, report)
    t2 = time.perf_counter()
    inv = check_invariants(problem, result, cfg)
    t3 = time.perf_counter()
    timings = {"setup and estimates": t1 - t0, "fixed point": t2 - t1, "invariant checks": t3 - t2}
    try:
        atomic_write(out_dir / "eta.csv", trajectory_csv_text(result.eta))
        atomic_write(out_dir / "u.csv", trajectory_csv_text(result.u))
        atomic_write(out_dir / "xi.csv", trajectory_csv_text(result.xi))
        atomic_write(out_dir / "wear.csv", trajectory_csv_text(result.w))
        for k, sig in result.stress.items():
            atomic_write(out_dir / f"stress_k{k}.csv", _stress_text(sig))
        atomic_write(out_dir / "report.txt", report_text(result, inv, timings))
    except OSError as exc:
        return _fail(f"cannot write outputs to {out_dir}: {exc.strerror}")
    status = "converged" if result.converged else "not converged"
    print(f"{status}: {result.diagnostics['pi_iterations']} outer sweeps, outputs in {out_dir}")
    return EXIT_OK if result.converged else EXIT_NOT_CONVERGED


def cmd_verify(suite: str) -> int:
    from .verify import run_suite
    try:
        rows = run_suite(suite)
    except ValueError as exc:
        return _fail(str(exc))
    width = max(len(r[0]) for r in rows)
    for name, ok, detail in rows:
        print(f"{'PASS' if ok else 'FAIL'}  {name:<{width}}  {detail}")
    return EXIT_OK if all(r[1] for r in rows) else EXIT_ERROR


def cmd_estimate(config: str) -> int:
    try:
        cfg = load_config(config)
        problem, report = _prepare(cfg)
    except (ConfigError, MeshError, ValueError) as exc:
        return _fail(str(exc))
    print("\n".join(report.lines()))
    return EXIT_ERROR if report.failures else EXIT_OK


def cmd_mesh_info(mesh_path: str) -> int:
    try:
        mesh = load_mesh(mesh_path)
    except OSError as exc:
        return _fail(f"cannot read mesh {mesh_path}: {exc.strerror}")
    except MeshError as exc:
        return _fail(str(exc))
    print(f"vertices: {mesh.n_vertices}")
    print(f"triangles: {mesh.n_triangles}")
    print(f"area: {float(mesh.signed_areas().sum())!r}")
    for lab in (GAMMA1, GAMMA2, GAMMA3):
        print(f"{lab}: {len(mesh.edges_with_label(lab))} edges, length {mesh.label_length(lab)!r}")
    try:
        curve = extract_curve(mesh)
        kind = "closed" if curve.closed else "open"
        print(f"contact curve: {curve.n_nodes} nodes, {kind}, length {curve.length!r}")
    except MeshError as exc:
        print(f"contact curve: unavailable ({exc})")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="contactsim", description="Viscoelastic contact with damage and wear.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to standard error")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="solve the coupled problem and write CSV outputs")
    r.add_argument("--config", required=True)
    r.add_argument("--out", required=True)
    v = sub.add_parser("verify", help="run oracle and convergence suites")
    v.add_argument("--suite", default="all")
    e = sub.add_parser("estimate", help="print the contraction constant ledger")
    e.add_argument("--config", required=True)
    m = sub.add_parser("mesh-info", help="summarize a mesh file")
    m.add_argument("--mesh", required=True)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "run":
        return cmd_run(args.config, args.out)
    if args.command == "verify":
        return cmd_verify(args.suite)
    if args.command == "estimate":
        return cmd_estimate(args.config)
    return cmd_mesh_info(args.mesh)


if __name__ == "__main__":
    sys.exit(main())
