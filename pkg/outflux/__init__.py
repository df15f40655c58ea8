"""outflux: steady Navier-Stokes flow in symmetric domains with one outlet to infinity.

Builds solenoidal extensions of boundary data with large fluxes, solves the
perturbation problem on invading truncations and checks the local energy
estimates numerically.
"""

__version__ = "0.1.0"

from outflux.config import RunConfig, load_config, parse_config
from outflux.exceptions import (
    ArtifactNotFoundError,
    CompatibilityError,
    ConfigError,
    DomainError,
    GeometryError,
    HypothesisError,
    MeshResolutionError,
    NonConvergenceError,
    NumericError,
    OutfluxError,
    PreconditionError,
    ProfileInvalidError,
    QuadratureError,
    SingularSystemError,
    StorageError,
)
from outflux.extension import BoundaryData, assemble_extension, leray_hopf_ratio
from outflux.geometry import DomainSpec, Hole, OutletProfile, TruncationLadder, build_ladder
from outflux.models import ArtifactRecord, RunManifest, StageRecord
from outflux.pipeline import Pipeline, emit_plot_data, run_pipeline
from outflux.solver import ForceField, SolveConfig, homotopy_solve, invade
from outflux.storage import RunStore

__all__ = [
    "RunConfig",
    "load_config",
    "parse_config",
    "OutfluxError",
    "ConfigError",
    "NumericError",
    "QuadratureError",
    "SingularSystemError",
    "NonConvergenceError",
    "StorageError",
    "ArtifactNotFoundError",
    "GeometryError",
    "ProfileInvalidError",
    "MeshResolutionError",
    "DomainError",
    "HypothesisError",
    "PreconditionError",
    "CompatibilityError",
    "BoundaryData",
    "assemble_extension",
    "leray_hopf_ratio",
    "DomainSpec",
    "Hole",
    "OutletProfile",
    "TruncationLadder",
    "build_ladder",
    "ArtifactRecord",
    "RunManifest",
    "StageRecord",
    "Pipeline",
    "emit_plot_data",
    "run_pipeline",
    "ForceField",
    "SolveConfig",
    "homotopy_solve",
    "invade",
    "RunStore",
]
