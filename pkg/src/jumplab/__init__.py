"""Numerical laboratory for jump-diffusion flows, densities, and conservation laws.

The package simulates systems driven by Wiener noise and finitely many Poisson
jump types, verifies the chain rule for random fields composed with such
flows, constructs and tests conserved quantities, evolves flow volumes and
per-noise density fields, and solves the forward/backward evolution equations
for the law of the state, with cross-checks between every pair of routes.
"""

from .coefficients import CoefficientField, MarkMeasure, centered_drift, check_derivatives
from .checks import CHECKS, CheckResult, run_check
from .density import (
    DensityFieldPath,
    InvariantReport,
    WeakCheckReport,
    check_density_invariant,
    check_normalization,
    evolve_density_field,
    flow_ensemble_from_path,
    mean_density_over_noises,
)
from .errors import (
    ConfigError,
    ContextMismatch,
    DerivativeUnavailable,
    InvalidGrid,
    InverseMapDiverged,
    JumplabError,
    NonInvertibleJumpFlow,
    NumericalBlowup,
    StabilityBoundViolated,
    SupportOverflow,
    UniquenessDomainViolated,
)
from .first_integral import (
    ConservationReport,
    InverseJumpSolve,
    SFICandidate,
    check_conservation,
    determinant_identity_error,
    inverse_jump_map,
    inverse_map_determinant_fd,
    sfi_triple,
)
from .grids import GridDensity, TestFunctionSet, lattice_masses, rebin_density, sample_from_density
from .ito_wentzell import (
    DifferentialTriple,
    LadderReport,
    RandomScalarField,
    ResidualReport,
    compose_increment,
    residual_ladder,
    verify_along_path,
)
from .jacobian import JacobianPath, evolve_jacobian
from .kolmogorov import (
    BackwardSolution,
    DensityMetrics,
    DualityReport,
    ForwardSolution,
    MCDensityResult,
    check_duality,
    compare_densities,
    mc_density,
    solve_backward,
    solve_forward,
)
from .paths import (
    JumpEvent,
    NoiseContext,
    PathEnsemble,
    SamplePath,
    simulate_ensemble,
    simulate_path,
)
from .rng import INIT_CHANNEL, JUMP_CHANNEL, PROBE_CHANNEL, WIENER_CHANNEL, substream
from .scenarios import (
    SCENARIOS,
    CheckSpec,
    ResolvedRun,
    ScenarioDef,
    build_scenario,
    load_config,
    resolve_config,
)

__version__ = "0.1.0"

__all__ = [
    "BackwardSolution",
    "CHECKS",
    "CheckResult",
    "CheckSpec",
    "CoefficientField",
    "ConfigError",
    "ConservationReport",
    "ContextMismatch",
    "DensityFieldPath",
    "DensityMetrics",
    "DerivativeUnavailable",
    "DifferentialTriple",
    "DualityReport",
    "ForwardSolution",
    "GridDensity",
    "INIT_CHANNEL",
    "InvalidGrid",
    "InvariantReport",
    "InverseJumpSolve",
    "InverseMapDiverged",
    "JUMP_CHANNEL",
    "JacobianPath",
    "JumpEvent",
    "JumplabError",
    "LadderReport",
    "MCDensityResult",
    "MarkMeasure",
    "NoiseContext",
    "NonInvertibleJumpFlow",
    "NumericalBlowup",
    "PROBE_CHANNEL",
    "PathEnsemble",
    "RandomScalarField",
    "ResidualReport",
    "ResolvedRun",
    "SCENARIOS",
    "SFICandidate",
    "SamplePath",
    "ScenarioDef",
    "StabilityBoundViolated",
    "SupportOverflow",
    "TestFunctionSet",
    "UniquenessDomainViolated",
    "WIENER_CHANNEL",
    "WeakCheckReport",
    "build_scenario",
    "centered_drift",
    "check_conservation",
    "check_density_invariant",
    "check_derivatives",
    "check_duality",
    "check_normalization",
    "compare_densities",
    "compose_increment",
    "determinant_identity_error",
    "evolve_density_field",
    "evolve_jacobian",
    "flow_ensemble_from_path",
    "inverse_jump_map",
    "inverse_map_determinant_fd",
    "lattice_masses",
    "load_config",
    "mc_density",
    "mean_density_over_noises",
    "rebin_density",
    "residual_ladder",
    "resolve_config",
    "run_check",
    "sample_from_density",
    "sfi_triple",
    "simulate_ensemble",
    "simulate_path",
    "solve_backward",
    "solve_forward",
    "substream",
    "verify_along_path",
]
