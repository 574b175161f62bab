"""Geometric pose-and-bias observer on SE(3) with invariant-cost innovations.

The package provides:

* ``lie_core``  -- SO(3)/SE(3) primitives (exp/log, adjoint, bases).
* ``outputs``   -- landmark and direction measurement models, the
  difference transform of landmark sets, observability checks.
* ``cost``      -- invariant state-estimation costs, their differentials,
  and the Hessian at the identity.
* ``observer``  -- the gain-mapped pose observer with input-bias
  estimation, in a landmark flavor and a transformed-direction flavor,
  plus geometric time stepping.
* ``analysis``  -- error/Lyapunov evaluation, error-dynamics cross-checks,
  autonomy probe, linearization, excitation bound, rate fitting.
* ``simulate``  -- scenario configuration, truth generation, sensor
  simulation, batch runs, CSV export.
* ``cli``       -- the ``se3obs`` command-line entry point.
"""

from .analysis import (
    ErrorState,
    autonomy_probe,
    compound_distance,
    error,
    fit_rate,
    linearize,
    lyapunov,
    lyapunov_dot_analytic,
    pe_check,
)
from .cost import (
    InvariantCost,
    d1_phi_row,
    direction_cost,
    hessian_at_identity,
    landmark_cost,
    phi_eval,
)
from .lie_core import (
    AlgebraVec6,
    Pose,
    TangentIncrement,
    adjoint_matrix,
    compose,
    condition_number,
    exp_se3,
    exp_so3,
    frobenius_distance,
    hat3,
    inverse,
    left_translation_matrix,
    log_se3,
    log_so3,
    se3_bracket,
    vec6_to_tangent,
    vee3,
)
from .observer import (
    GainGamma,
    GainK,
    ObserverState,
    direction_observer_rhs,
    landmark_observer_rhs,
    step,
    validate_gains,
)
from .outputs import (
    DirectionOutputSet,
    LandmarkSet,
    Measurement,
    direction_set_from_landmarks,
    measure_landmarks,
    stabilizer_kernel_dimension,
    z_transform,
)
from .simulate import (
    GainConfig,
    RunSummary,
    RunTrace,
    Scenario,
    VelocityProfile,
    default_scenario,
    generate_truth,
    run,
    scenario_from_dict,
    simulate_sensors,
    sweep,
    write_csv,
)

__version__ = "0.1.0"

__all__ = [
    "AlgebraVec6",
    "DirectionOutputSet",
    "ErrorState",
    "GainConfig",
    "GainGamma",
    "GainK",
    "InvariantCost",
    "LandmarkSet",
    "Measurement",
    "ObserverState",
    "Pose",
    "RunSummary",
    "RunTrace",
    "Scenario",
    "TangentIncrement",
    "VelocityProfile",
    "adjoint_matrix",
    "autonomy_probe",
    "compose",
    "compound_distance",
    "condition_number",
    "d1_phi_row",
    "default_scenario",
    "direction_cost",
    "direction_observer_rhs",
    "direction_set_from_landmarks",
    "error",
    "exp_se3",
    "exp_so3",
    "fit_rate",
    "frobenius_distance",
    "generate_truth",
    "hat3",
    "hessian_at_identity",
    "inverse",
    "landmark_cost",
    "landmark_observer_rhs",
    "left_translation_matrix",
    "linearize",
    "log_se3",
    "log_so3",
    "lyapunov",
    "lyapunov_dot_analytic",
    "measure_landmarks",
    "pe_check",
    "phi_eval",
    "run",
    "scenario_from_dict",
    "se3_bracket",
    "simulate_sensors",
    "stabilizer_kernel_dimension",
    "step",
    "sweep",
    "validate_gains",
    "vec6_to_tangent",
    "vee3",
    "write_csv",
    "z_transform",
]
