"""Strong-order experiments for a semilinear parabolic SPDE on a rectangle.

Piecewise linear finite elements in space, a stochastic exponential Euler
integrator in time, additive Q-Wiener noise with cosine modes, and a Monte
Carlo harness that measures strong convergence against fine-step references.
"""

from .assembly import (CoefficientField, DiscreteOperators, apply_Ah,
                       assemble_bilinear, assemble_mass, build_operators,
                       l2_load, project_l2)
from .backend import kernel_backend
from .darcy import (PermeabilityField, VelocityField, boundary_flux,
                    build_permeability, nodal_divergence, solve_pressure,
                    velocity_from_pressure)
from .errors import (CoercivityError, ConfigError, MatFuncConvergenceError,
                     NumericalError)
from .harness import (ConvergenceReport, ExperimentConfig, SpatialConfig,
                      fit_order, run_experiment, spatial_experiment,
                      strong_error, write_csv)
from .integrator import (DRIFTS, DriftSpec, TrajectoryState, exp_euler_step,
                         run_trajectory, semi_implicit_step)
from .matfunc import MatFuncResult, OperatorHandle, expm_action, phi1_action
from .mesh import Mesh, build_mesh
from .noise import (NoiseSpec, WienerPath, coarsen, eigenvalue, eigenvalues,
                    increment_field, read_path, sample_path, truncation_tail,
                    write_path)
from .oracle import (SpectralBasis, cross_validate, expected_coupling_error,
                     regularity_functional, regularity_study, spectral_basis,
                     spectral_step)

__version__ = "0.1.0"

__all__ = [
    "CoefficientField", "DiscreteOperators", "apply_Ah", "assemble_bilinear",
    "assemble_mass", "build_operators", "l2_load", "project_l2",
    "kernel_backend",
    "PermeabilityField", "VelocityField", "boundary_flux",
    "build_permeability", "nodal_divergence", "solve_pressure",
    "velocity_from_pressure",
    "CoercivityError", "ConfigError", "MatFuncConvergenceError",
    "NumericalError",
    "ConvergenceReport", "ExperimentConfig", "SpatialConfig", "fit_order",
    "run_experiment", "spatial_experiment", "strong_error", "write_csv",
    "DRIFTS", "DriftSpec", "TrajectoryState", "exp_euler_step",
    "run_trajectory", "semi_implicit_step",
    "MatFuncResult", "OperatorHandle", "expm_action", "phi1_action",
    "Mesh", "build_mesh",
    "NoiseSpec", "WienerPath", "coarsen", "eigenvalue", "eigenvalues",
    "increment_field", "read_path", "sample_path", "truncation_tail",
    "write_path",
    "SpectralBasis", "cross_validate", "regularity_functional",
    "regularity_study", "spectral_basis", "spectral_step",
    "__version__",
]
