"""Discrete inner Riesz balayage, equilibrium measures and Wiener-type series."""
__version__ = "0.1.0"

from ._accel import BACKEND
from .balayage import (
    BalayageResult,
    InfeasibleCandidate,
    check_extremal,
    check_restriction,
    check_symmetry,
    default_probes,
    mass_deficit,
    superpose_diracs,
    sweep,
    sweep_decreasing,
    sweep_increasing,
)
from .equilibrium import EquilibriumResult, capacity, equilibrium, reduced_kernel, richardson, support_profile
from .geometry import (
    PointCloud,
    RefinementLadder,
    RotationBodySpec,
    invert_cloud,
    merge_clouds,
    sample_ball,
    sample_rotation_body,
    sample_sphere,
    shell_clouds,
    spherical_cap,
)
from .kelvin import KelvinContext, dirac_balayage_duality, kelvin_transform
from .kernel import DiscreteMeasure, KernelModel, RieszParams, energy, eval_potential, kernel_matrix, mutual_energy
from .nnqp import ConvergenceError, KktReport, NnqpProblem, NnqpSolution, solve, verify_kkt
from .wiener import (
    SeriesDiagnostic,
    ShellDecomposition,
    capacity_finiteness_series,
    classify_point,
    equilibrium_existence_series,
    irregularity_series,
    shell_capacities,
)
