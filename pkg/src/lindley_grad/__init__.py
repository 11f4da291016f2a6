"""Pathwise first, second and third derivative estimators for waiting times
in a single-server FCFS queue, with Monte Carlo and quadrature oracles."""

from .distributions import (
    Deterministic,
    DeterministicThetaModel,
    Exponential,
    LocationModel,
    RandomStream,
    ScaleModel,
    Uniform,
    UniformLocation,
    lemma3_derivative,
)
from .errors import (
    BoundaryError,
    CapabilityError,
    ConvergenceError,
    DegenerateDensityError,
    LindleyGradError,
    ParameterRegionError,
    ParseError,
    ShapeMismatchError,
    SmoothnessError,
    UnsupportedScenarioError,
    ValidationError,
)
from .estimators import estimate_batch, estimate_path
from .lindley import first_busy_period_end, simulate_path
from .montecarlo import compare, finite_difference, run_replications
from .oracles import closed_form_w2, quadrature_derivatives, quadrature_expectation
from .scenario import Scenario, load_scenario, parse_scenario, validate_scenario

__version__ = "0.1.0"
