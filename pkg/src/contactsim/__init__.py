"""Quasistatic viscoelastic frictional contact with damage and wear on 2-D P1 meshes."""
from __future__ import annotations

from .contact_model import ContactProblem, InitialState, LoadModel, MaterialModel, validate_hypotheses
from .coupled import ContractionReport, SimulationResult, SolverConfig, contraction_report, solve_pi_fixed_point
from .geometry import CurveMesh, Mesh2D, generate_rect_mesh, load_mesh, save_mesh
from .history import RelaxationKernel, TimeGrid, Trajectory

__version__ = "0.1.0"

__all__ = [
    "ContactProblem", "ContractionReport", "CurveMesh", "InitialState", "LoadModel", "MaterialModel", "Mesh2D",
    "RelaxationKernel", "SimulationResult", "SolverConfig", "TimeGrid", "Trajectory", "contraction_report",
    "generate_rect_mesh", "load_mesh", "save_mesh", "solve_pi_fixed_point", "validate_hypotheses",
]
