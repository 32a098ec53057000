"""Pilot-wave dynamics and measurement statistics of a particle in a 2D box."""

from .spectral import (
    BOX_HALF_WIDTH,
    MODE_NORM,
    Amplitude,
    Basis1D,
    ConfigurationError,
    DegenerateCollapseError,
    DomainError,
    Mode,
    OperatorMatrix1D,
    ReducedDensity,
    StateMatrix,
    build_singlet_state,
    commutator_norm,
    correlation_analytic,
    evaluate,
    evolve,
    marginal_density,
    mode_eval,
    operator_correlation,
    project_half,
    reduced_density,
    sigma_matrix,
    theta_matrix,
)
from .dynamics import (
    Ensemble,
    IntegrationFailureError,
    IntegratorConfig,
    NodeProximityError,
    Position2D,
    PropagationError,
    Trajectory,
    equivariance_check,
    integrate_trajectory,
    propagate_ensemble,
    sample_equilibrium,
    sample_weighted,
    velocity,
)
from .experiments import (
    ConditionalDensityGrid,
    CorrelationEstimate,
    DetectionReport,
    DipoleSeries,
    ExperimentError,
    LambdaField,
    SignalRun,
    TwoTimeProtocol,
    conditional_density_grid,
    detect_bit,
    detection_rate,
    radiation_proxy,
    run_signalling_protocol,
    run_two_time_measurement,
)

__version__ = "0.1.0"

__all__ = [
    "Amplitude", "Basis1D", "BOX_HALF_WIDTH", "ConditionalDensityGrid",
    "ConfigurationError", "CorrelationEstimate", "DegenerateCollapseError",
    "DetectionReport", "DipoleSeries", "DomainError", "Ensemble",
    "ExperimentError", "IntegrationFailureError", "IntegratorConfig",
    "LambdaField", "MODE_NORM", "Mode", "NodeProximityError",
    "OperatorMatrix1D", "Position2D", "PropagationError", "ReducedDensity",
    "SignalRun", "StateMatrix", "Trajectory", "TwoTimeProtocol",
    "build_singlet_state", "commutator_norm", "conditional_density_grid",
    "correlation_analytic", "detect_bit", "detection_rate",
    "equivariance_check", "evaluate", "evolve", "integrate_trajectory",
    "marginal_density", "mode_eval", "operator_correlation",
    "project_half", "propagate_ensemble", "radiation_proxy",
    "reduced_density", "run_signalling_protocol", "run_two_time_measurement",
    "sample_equilibrium", "sample_weighted", "sigma_matrix", "theta_matrix",
    "velocity",
]
