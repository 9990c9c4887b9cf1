"""Regularised graph neural diffusion with rotational charges and structure-preserving integrators."""
from .charges import SkewGenerator, charge_trace, charge_y, charge_Y, commutes, skew_basis
from .dynamics import Model, build_C, gradient_check_C, hamiltonian, rhs_canonical, rhs_diffusion, rhs_rescaled
from .errors import GndiffError
from .experiments import ExperimentConfig, drift_study, preset, run
from .graph_model import (
    ActivationFn,
    AttentionParams,
    Graph,
    PhaseVector,
    assemble_W,
    chart_convert,
    validate_graph,
)
from .integrators import GridSpec, SolverConfig, Trajectory, integrate

__all__ = [
    "ActivationFn", "AttentionParams", "ExperimentConfig", "drift_study", "preset", "run", "GndiffError", "Graph", "GridSpec", "Model", "PhaseVector",
    "SkewGenerator", "SolverConfig", "Trajectory", "assemble_W", "build_C", "chart_convert",
    "charge_Y", "charge_trace", "charge_y", "commutes", "gradient_check_C", "hamiltonian",
    "integrate", "rhs_canonical", "rhs_diffusion", "rhs_rescaled", "skew_basis", "validate_graph",
]
__version__ = "0.1.0"
