"""Semidefinite-relaxation moving-horizon state estimation for power grids."""

from sdrmhe.grid import (
    GridModel,
    Kind,
    LineParams,
    MeasurementDescriptor,
    ModelValidationError,
    build_admittance,
    load_grid,
    measurement_matrix,
)
from sdrmhe.dynamics import NoiseModel, Trajectory, simulate
from sdrmhe.sdr import LiftedEstimate, SdrProblem, SolverConfig, solve_relaxed
from sdrmhe.mhe import MheConfig, run_mhe
from sdrmhe.ekf import ekf_run
from sdrmhe.config import ScenarioConfig, load_config
from sdrmhe.harness import emit_reports, run_scenario

__version__ = "0.1.0"
