"""oscerr: a priori global-error estimates for explicit Runge-Kutta methods
on oscillatory problems, with the machinery to validate them numerically.

The pipeline: rooted-tree combinatorics (:mod:`oscerr.trees`) feeds the
exact-rational B-series algebra (:mod:`oscerr.bseries`), which turns a
Butcher tableau (:mod:`oscerr.rk`) into modified-equation coefficients.
Problem-side asymptotics live in :mod:`oscerr.oscillators`; the error series,
closed-form estimates and measurement harness in :mod:`oscerr.estimator`;
the experiment driver and CLI in :mod:`oscerr.experiment` and
:mod:`oscerr.cli`.
"""

from .bseries import (
    CoefficientMap,
    CoverageError,
    InconsistentMethodError,
    elementary_weight,
    exact_solution_coeffs,
    lie_derivative,
    local_error_coeffs,
    method_order,
    modified_equation_coeffs,
    rk_bseries,
)
from .estimator import (
    ElementaryIntegralSample,
    ErrorEstimate,
    ErrorMeasurement,
    closed_form_error_estimate,
    closed_form_estimate_ef,
    closed_form_envelope_ef,
    detect_breakdown,
    elementary_integral_numeric,
    elementary_integrals_numeric,
    envelope_fit,
    error_series,
    linosc_estimate,
    measure_global_error,
    parameter_space_error,
    peak_envelope,
    reference_trajectory,
)
from .oscillators import (
    DomainError,
    EmdenFowlerProblem,
    FitError,
    LinearOscillatorProblem,
    ReferenceOscillation,
    airy_system,
    ef_system,
    elementary_differential,
    fit_action_angle,
    liouville_green,
    make_airy_problem,
    parse_problem_spec,
    solution_amplitude,
    wn_build,
    xt_map,
)
from .rk import (
    ButcherTableau,
    DegenerateParameterError,
    DivergenceError,
    OdeSystem,
    Trajectory,
    builtin_methods,
    design_tuned_3stage,
    get_method,
    integrate,
    step,
    tuned_condition_value,
)
from .trees import RootedTree, TreeStats, edge_cuts, enumerate_trees, parse_tree, stats

__version__ = "0.1.0"
