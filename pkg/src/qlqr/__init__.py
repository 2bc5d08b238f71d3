"""Model-free LQR synthesis toolkit.

Learns the optimal state-feedback gain of an unknown discrete-time linear
plant by policy-iteration Q-learning, with the policy evaluator realized as
a two-layer quadratic network trained by convex optimization.  Model-based
oracles (Riccati / Lyapunov solves) make every learned quantity
independently checkable.
"""

from .errors import (
    ConfigError,
    ControllabilityError,
    ConvergenceError,
    DimensionError,
    DiscretizationError,
    DivergenceError,
    ExcitationError,
    ImprovementError,
    QlqrError,
    UnsupportedConfigError,
)
from .lti import (
    ContinuousStateSpace,
    CostParams,
    LinearPolicy,
    ProbingConfig,
    StateSpace,
    Trajectory,
    is_stabilizing,
    local_cost,
    rollout,
    spectral_radius,
    step,
    tustin_discretize,
)
from .oracle import (
    QuadraticForm,
    build_h,
    improved_gain,
    policy_iteration_exact,
    riccati_lqr,
    solve_policy_value,
)
from .qlearn import (
    EvalConfig,
    PiConfig,
    PiReference,
    PiTrace,
    TrainingSet,
    X0Policy,
    collect_data,
    make_labels,
    policy_evaluation,
    policy_improvement,
    run_policy_iteration,
)
from .qnn import (
    ActivationCoeffs,
    LstsqQuadraticTrainer,
    Neuron,
    QnnModel,
    RegressionData,
    SdpQuadraticTrainer,
    SdpSolution,
    SolverConfig,
    extract_neurons,
    fit_quadratic_lstsq,
    predict,
    solve_sdp,
    train,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    # errors
    "QlqrError",
    "DimensionError",
    "DiscretizationError",
    "ControllabilityError",
    "ExcitationError",
    "ConvergenceError",
    "DivergenceError",
    "ImprovementError",
    "UnsupportedConfigError",
    "ConfigError",
    # plant
    "StateSpace",
    "ContinuousStateSpace",
    "CostParams",
    "LinearPolicy",
    "ProbingConfig",
    "Trajectory",
    "tustin_discretize",
    "step",
    "local_cost",
    "rollout",
    "is_stabilizing",
    "spectral_radius",
    # oracle
    "QuadraticForm",
    "solve_policy_value",
    "build_h",
    "riccati_lqr",
    "improved_gain",
    "policy_iteration_exact",
    # trainer
    "ActivationCoeffs",
    "RegressionData",
    "SolverConfig",
    "SdpSolution",
    "QnnModel",
    "Neuron",
    "train",
    "solve_sdp",
    "predict",
    "extract_neurons",
    "fit_quadratic_lstsq",
    "SdpQuadraticTrainer",
    "LstsqQuadraticTrainer",
    # learner
    "EvalConfig",
    "PiConfig",
    "X0Policy",
    "TrainingSet",
    "PiReference",
    "PiTrace",
    "collect_data",
    "make_labels",
    "policy_evaluation",
    "policy_improvement",
    "run_policy_iteration",
]
