"""Simulation of continuously monitored quantum systems.

The package evolves pure states under continuous measurement in three
equivalent ways (Ito stochastic master equation, a Stratonovich Liouville
equation driven by explicit stochastic Hamiltonians, and a gradient flow
on the unitary orbit) and implements two record-driven feedback
protocols: deterministic ground-state preparation and state-agnostic
stabilization of a target state.

Modules
-------
core         operator algebra, states, jump channels, model builders
sde          noise paths, records, Ito steppers, midpoint Liouville stepper
hamiltonian  stochastic generator increments and formulation equivalence
gradient     orbit gradients, measurement potentials, variance law
feedback     ground-state flow, state-agnostic feedback, stability analysis
experiments  presets, ensemble runs, CSV/JSON output
cli          command-line entry point
"""

from .core import (
    SIGMA_MINUS,
    SIGMA_PLUS,
    SIGMA_X,
    SIGMA_Y,
    SIGMA_Z,
    DimensionError,
    JumpChannel,
    ParameterError,
    StateError,
    bloch_coords,
    bloch_state,
    commutator_superop,
    decompose_jump,
    double_bracket,
    heisenberg_hamiltonian,
    projector,
    singlet_product_state,
    trace_distance,
)
from .experiments import ExperimentConfig, TrajectoryResult, load_config, run_experiment, write_outputs
from .feedback import (
    FeedbackKind,
    FeedbackSpec,
    StabilityReport,
    db_groundstate_step,
    empirical_stability_probe,
    lyapunov_criterion,
    population_rates,
    state_agnostic_step,
)
from .gradient import (
    directional_derivative_check,
    landscape_quadratic_form,
    orbit_gradient,
    potential_K,
    potential_V,
    variance_flow_check,
)
from .hamiltonian import (
    EquivalenceReport,
    GeneratorIncrement,
    build_H_D,
    build_H_DB,
    build_H_M,
    build_H_SB,
    check_formulation_equivalence,
    liouville_hamiltonian,
)
from .sde import (
    MeasurementRecord,
    NoisePath,
    SchemeKind,
    heun_liouville_step,
    ito_sme_step,
    ito_sse_step,
    record_increment,
    sample_noise_path,
)
from .stats import fit_exponential, fit_exponential_rate

__version__ = "0.1.0"
