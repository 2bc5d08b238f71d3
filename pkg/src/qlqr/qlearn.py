"""Model-free policy iteration on rollout data.

The learner never sees the plant matrices: it is handed a rollout callable
``rollout_fn(policy, x0, steps, probe) -> Trajectory`` and the cost
parameters.  Each outer sweep evaluates the current policy by iterating a
fixed-point label recursion through the quadratic-network trainer, then
improves the policy analytically from the learned quadratic form.
"""

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import oracle
from .errors import (
    ConvergenceError,
    DimensionError,
    DivergenceError,
    ExcitationError,
    ImprovementError,
    QlqrError,
)
from .lti import (
    CostParams,
    LinearPolicy,
    ProbingConfig,
    Trajectory,
    derive_seed,
)
from .oracle import QuadraticForm
from .qnn import (
    QnnModel,
    RegressionData,
    SdpQuadraticTrainer,
    SolverConfig,
    svec,
    sym_param_count,
)

RolloutFn = Callable[[LinearPolicy, np.ndarray, int, ProbingConfig | None], Trajectory]
Trainer = Callable[[RegressionData], QnnModel]

H0_INITS = ("zero", "random_psd")
RESAMPLE_MODES = ("fresh_each_sweep", "fixed_dataset")
X0_MODES = ("fixed", "random_ball")

# internal stream tags so probing, initial states, and H0 draws decorrelate
_PROBE_STREAM = 11
_X0_STREAM = 23

# states larger than this multiple of the collection scale abort the sweep
_DIVERGENCE_FACTOR = 1e9


@dataclass(frozen=True)
class EvalConfig:
    """Inner policy-evaluation loop settings.

    ``epsilon`` is the Frobenius threshold on successive learned forms;
    ``N`` samples are collected per sweep and must be at least
    (n_x+n_u)(n_x+n_u+1)/2, the number of independent entries of the form.
    """

    epsilon: float = 1e-6
    max_inner: int = 500
    N: int = 100
    h0_init: str = "zero"
    h0_seed: int = 0
    resample: str = "fresh_each_sweep"

    def __post_init__(self):
        if not (self.epsilon > 0):
            raise QlqrError("epsilon must be positive")
        if self.max_inner < 1:
            raise QlqrError("max_inner must be >= 1")
        if self.N < 1:
            raise QlqrError("N must be >= 1")
        if self.h0_init not in H0_INITS:
            raise QlqrError(f"h0_init must be one of {H0_INITS}, got {self.h0_init!r}")
        if self.resample not in RESAMPLE_MODES:
            raise QlqrError(
                f"resample must be one of {RESAMPLE_MODES}, got {self.resample!r}"
            )


@dataclass(frozen=True)
class X0Policy:
    """How initial states are chosen during data collection.

    ``fixed`` runs one long rollout from ``x0``; ``random_ball`` draws a
    fresh start in the ball of ``radius`` (default: the norm of ``x0``)
    for every one-step transition, reseeded per sweep.
    """

    mode: str
    x0: np.ndarray
    radius: float | None = None
    seed: int = 0

    def __post_init__(self):
        if self.mode not in X0_MODES:
            raise QlqrError(f"x0 mode must be one of {X0_MODES}, got {self.mode!r}")
        x0 = np.asarray(self.x0, dtype=float).reshape(-1)
        if not np.all(np.isfinite(x0)):
            raise QlqrError("x0 contains non-finite entries")
        if self.radius is not None and self.radius < 0:
            raise QlqrError("radius must be >= 0")
        x0.setflags(write=False)
        object.__setattr__(self, "x0", x0)

    @property
    def ball_radius(self) -> float:
        return float(self.radius) if self.radius is not None else float(
            np.linalg.norm(self.x0)
        )


@dataclass(frozen=True)
class PiConfig:
    """Outer policy-iteration loop settings."""

    probing: ProbingConfig
    x0_policy: X0Policy
    outer_epsilon: float = 1e-4
    max_outer: int = 50

    def __post_init__(self):
        if not (self.outer_epsilon > 0):
            raise QlqrError("outer_epsilon must be positive")
        if self.max_outer < 1:
            raise QlqrError("max_outer must be >= 1")


@dataclass(frozen=True)
class TrainingSet:
    """Joint inputs X_k = [x_k; u_k] with Bellman labels for one sweep.

    The excitation rank of the inputs is certified at collection time by
    :func:`collect_data`; construction re-checks only the sample count.
    """

    inputs: np.ndarray
    labels: np.ndarray
    label_iteration: int = 0

    def __post_init__(self):
        X = np.asarray(self.inputs, dtype=float)
        y = np.asarray(self.labels, dtype=float).reshape(-1)
        if X.ndim != 2 or X.shape[0] != y.shape[0]:
            raise DimensionError("inputs must be (N, n) with one label per row")
        M = sym_param_count(X.shape[1])
        if X.shape[0] < M:
            raise ExcitationError(
                f"need at least {M} samples to identify the form, got {X.shape[0]}"
            )
        object.__setattr__(self, "inputs", X)
        object.__setattr__(self, "labels", y)

    @property
    def N(self) -> int:
        return self.inputs.shape[0]


def excitation_rank(X: np.ndarray) -> tuple[int, int]:
    """Numerical rank of the svec outer-product design matrix, and the
    rank M it must reach to identify a quadratic form."""
    X = np.asarray(X, dtype=float)
    M = sym_param_count(X.shape[1])
    outer = X[:, :, None] * X[:, None, :]
    Phi = svec(outer)
    return int(np.linalg.matrix_rank(Phi)), M


def collect_data(
    rollout_fn: RolloutFn,
    pol: LinearPolicy,
    cfg: EvalConfig,
    probing: ProbingConfig,
    x0_policy: X0Policy,
    sweep_key: int = 0,
) -> Trajectory:
    """Gather N transitions under the excited policy and certify excitation.

    Raises :class:`ExcitationError` when the joint [x; u] samples cannot
    identify all independent entries of the quadratic form (remedy: more
    samples, larger probing amplitude, or richer initial states), and
    :class:`DivergenceError` when states blow up during collection.
    """
    n_x, n_u = pol.n_x, pol.n_u
    M = sym_param_count(n_x + n_u)
    if cfg.N < M:
        raise ExcitationError(
            f"N = {cfg.N} samples cannot identify the {M} independent entries "
            f"of the quadratic form; need N >= {M}"
        )
    if x0_policy.mode == "fixed":
        probe = ProbingConfig(
            probing.amplitude,
            probing.kind,
            derive_seed(probing.seed, _PROBE_STREAM, sweep_key),
        )
        data = rollout_fn(pol, x0_policy.x0, cfg.N, probe)
        scale = max(1.0, float(np.linalg.norm(x0_policy.x0)))
    else:
        radius = x0_policy.ball_radius
        rng = np.random.default_rng(derive_seed(x0_policy.seed, _X0_STREAM, sweep_key))
        starts = rng.standard_normal((cfg.N, n_x))
        norms = np.linalg.norm(starts, axis=1, keepdims=True)
        norms[norms == 0] = 1.0
        starts = starts / norms * radius * rng.uniform(size=(cfg.N, 1)) ** (1.0 / n_x)
        pieces = []
        for k in range(cfg.N):
            probe = ProbingConfig(
                probing.amplitude,
                probing.kind,
                derive_seed(probing.seed, _PROBE_STREAM, sweep_key, k),
            )
            pieces.append(rollout_fn(pol, starts[k], 1, probe))
        data = Trajectory(
            np.vstack([p.states for p in pieces]),
            np.vstack([p.inputs for p in pieces]),
            np.vstack([p.next_states for p in pieces]),
        )
        scale = max(1.0, radius)

    big = max(
        np.max(np.abs(data.states), initial=0.0),
        np.max(np.abs(data.next_states), initial=0.0),
    )
    if not np.isfinite(big) or big > _DIVERGENCE_FACTOR * scale:
        raise DivergenceError(
            "rollout states diverged during data collection; the policy "
            "being excited does not appear to be stabilizing"
        )
    X = np.hstack([data.states, data.inputs])
    rank, M = excitation_rank(X)
    if rank < M:
        raise ExcitationError(
            f"excitation rank {rank} < {M}; increase probing amplitude, "
            f"sample count, or initial-state spread"
        )
    return data


def make_labels(
    data: Trajectory,
    pol: LinearPolicy,
    cp: CostParams,
    H_prev,
    iteration: int = 0,
) -> TrainingSet:
    """Bellman labels y_k = c(x_k, u_k) + g * z' H_prev z at z = [x+; -K x+].

    The bootstrap uses the evaluated policy's own (noise-free) action at the
    next state; the regressed input u_k keeps its probing noise.
    """
    H = H_prev.H if isinstance(H_prev, QuadraticForm) else np.asarray(H_prev, float)
    n = pol.n_x + pol.n_u
    if H.shape != (n, n):
        raise DimensionError(f"H must be {(n, n)}, got {H.shape}")
    X = np.hstack([data.states, data.inputs])
    stage = np.einsum("ki,ij,kj->k", data.states, cp.Q, data.states) + np.einsum(
        "ki,ij,kj->k", data.inputs, cp.R, data.inputs
    )
    next_actions = data.next_states @ (-pol.K.T)
    Z = np.hstack([data.next_states, next_actions])
    boot = np.einsum("ki,ij,kj->k", Z, H, Z)
    return TrainingSet(X, stage + cp.gamma * boot, iteration)


@dataclass(frozen=True)
class EvalResult:
    """Outcome of one policy evaluation."""

    form: QuadraticForm
    inner_iterations: int
    residuals: list[float]
    dataset: Trajectory


def _initial_h(cfg: EvalConfig, n: int) -> np.ndarray:
    if cfg.h0_init == "zero":
        return np.zeros((n, n))
    rng = np.random.default_rng(cfg.h0_seed)
    W = rng.standard_normal((n, n))
    return W @ W.T / n


def policy_evaluation(
    rollout_fn: RolloutFn,
    pol: LinearPolicy,
    cp: CostParams,
    cfg: EvalConfig,
    probing: ProbingConfig,
    x0_policy: X0Policy,
    trainer: Trainer | None = None,
    dataset: Trajectory | None = None,
    sweep_key: int = 0,
) -> EvalResult:
    """Learn the quadratic action-value form of a stabilizing policy.

    Iterates: relabel the fixed dataset from the current form, retrain,
    symmetrize the learned core block, until the Frobenius change drops
    below ``cfg.epsilon``.  Raises :class:`ConvergenceError` (with the
    residual history attached) at the iteration cap and
    :class:`ImprovementError` when the final uu block is not positive
    definite.
    """
    trainer = trainer or SdpQuadraticTrainer()
    if dataset is None:
        dataset = collect_data(rollout_fn, pol, cfg, probing, x0_policy, sweep_key)
    n = pol.n_x + pol.n_u
    H = _initial_h(cfg, n)
    residuals: list[float] = []
    for i in range(1, cfg.max_inner + 1):
        labels = make_labels(dataset, pol, cp, H, iteration=i - 1)
        model = trainer(RegressionData(labels.inputs, labels.labels))
        H_new = model.core
        H_new = 0.5 * (H_new + H_new.T)
        delta = float(np.linalg.norm(H_new - H, "fro"))
        if not np.isfinite(delta):
            raise DivergenceError(
                "policy evaluation diverged; the evaluated policy is likely "
                "not stabilizing for the discounted system"
            )
        residuals.append(delta)
        H = H_new
        if delta < cfg.epsilon:
            break
    else:
        raise ConvergenceError(
            f"policy evaluation did not contract below {cfg.epsilon} "
            f"within {cfg.max_inner} iterations",
            residuals=residuals,
        )
    form = QuadraticForm(H, pol.n_x, pol.n_u)
    if np.linalg.eigvalsh(form.uu).min() <= 0:
        raise ImprovementError(
            "learned uu block is not positive definite; improvement is blocked"
        )
    return EvalResult(form, len(residuals), residuals, dataset)


def policy_improvement(form: QuadraticForm) -> LinearPolicy:
    """Greedy policy for a learned form; same formula as the oracle's."""
    return oracle.improved_gain(form)


@dataclass(frozen=True)
class PiReference:
    """Optional oracle annotations for traces; never used by the learner."""

    gain: np.ndarray | None = None
    stabilizing_check: Callable[[LinearPolicy], bool] | None = None


@dataclass(frozen=True)
class PiIterationRecord:
    """One policy of the iteration and the evaluation performed under it.

    The last record of a converged run carries the final gain only
    (``inner_iterations`` is None since that policy is never evaluated).
    """

    index: int
    gain: np.ndarray
    gain_delta: float | None = None
    form: QuadraticForm | None = None
    inner_iterations: int | None = None
    inner_residuals: list[float] | None = None
    gain_error: float | None = None
    stabilizing: bool | None = None


@dataclass
class PiTrace:
    """Append-only record of a policy-iteration run."""

    records: list[PiIterationRecord] = field(default_factory=list)
    converged: bool = False

    @property
    def gains(self) -> list[np.ndarray]:
        return [r.gain for r in self.records]

    @property
    def final_gain(self) -> np.ndarray:
        return self.records[-1].gain

    @property
    def outer_iterations(self) -> int:
        return len(self.records) - 1

    @property
    def evaluated_records(self) -> list[PiIterationRecord]:
        return [r for r in self.records if r.form is not None]


def _annotate(pol: LinearPolicy, reference: PiReference | None):
    if reference is None:
        return None, None
    err = None
    if reference.gain is not None:
        err = float(np.max(np.abs(pol.K - reference.gain)))
    stab = None
    if reference.stabilizing_check is not None:
        stab = bool(reference.stabilizing_check(pol))
    return err, stab


def run_policy_iteration(
    rollout_fn: RolloutFn,
    pi0: LinearPolicy,
    cp: CostParams,
    eval_cfg: EvalConfig,
    pi_cfg: PiConfig,
    trainer: Trainer | None = None,
    reference: PiReference | None = None,
) -> PiTrace:
    """Alternate evaluation and improvement from a stabilizing initial gain.

    Stops when the Frobenius gain change drops below
    ``pi_cfg.outer_epsilon`` or at ``pi_cfg.max_outer`` sweeps (trace marked
    unconverged).  Any failure inside a sweep propagates with the partial
    trace attached as ``exc.trace``.
    """
    trainer = trainer or SdpQuadraticTrainer()
    trace = PiTrace()
    pol = pi0
    dataset: Trajectory | None = None
    prev_gain: np.ndarray | None = None
    try:
        for j in range(pi_cfg.max_outer):
            if eval_cfg.resample == "fresh_each_sweep":
                dataset = None
            result = policy_evaluation(
                rollout_fn,
                pol,
                cp,
                eval_cfg,
                pi_cfg.probing,
                pi_cfg.x0_policy,
                trainer=trainer,
                dataset=dataset,
                sweep_key=j,
            )
            dataset = result.dataset
            err, stab = _annotate(pol, reference)
            delta_prev = (
                float(np.linalg.norm(pol.K - prev_gain, "fro"))
                if prev_gain is not None
                else None
            )
            trace.records.append(
                PiIterationRecord(
                    index=j,
                    gain=pol.K,
                    gain_delta=delta_prev,
                    form=result.form,
                    inner_iterations=result.inner_iterations,
                    inner_residuals=result.residuals,
                    gain_error=err,
                    stabilizing=stab,
                )
            )
            improved = policy_improvement(result.form)
            delta = float(np.linalg.norm(improved.K - pol.K, "fro"))
            prev_gain = pol.K
            pol = improved
            if delta < pi_cfg.outer_epsilon:
                err, stab = _annotate(pol, reference)
                trace.records.append(
                    PiIterationRecord(
                        index=j + 1,
                        gain=pol.K,
                        gain_delta=delta,
                        gain_error=err,
                        stabilizing=stab,
                    )
                )
                trace.converged = True
                return trace
        err, stab = _annotate(pol, reference)
        trace.records.append(
            PiIterationRecord(
                index=pi_cfg.max_outer,
                gain=pol.K,
                gain_delta=float(np.linalg.norm(pol.K - prev_gain, "fro"))
                if prev_gain is not None
                else None,
                gain_error=err,
                stabilizing=stab,
            )
        )
        trace.converged = False
        return trace
    except QlqrError as exc:
        exc.trace = trace
        raise


__all__ = [
    "H0_INITS",
    "RESAMPLE_MODES",
    "X0_MODES",
    "EvalConfig",
    "X0Policy",
    "PiConfig",
    "TrainingSet",
    "EvalResult",
    "PiReference",
    "PiIterationRecord",
    "PiTrace",
    "excitation_rank",
    "collect_data",
    "make_labels",
    "policy_evaluation",
    "policy_improvement",
    "run_policy_iteration",
]
