"""Experiment configuration: a single JSON file drives a full run.

Sections: ``plant`` (continuous matrices plus sample time, or discrete
matrices), ``cost``, ``qnn``, ``eval``, ``pi``, plus ``initial_policies``,
``seed``, ``output_dir`` and an optional ``report`` block.  Matrices are
row-major nested arrays of finite doubles.  Validation failures raise
:class:`ConfigError` naming the offending field.
"""

import copy
import json
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, QlqrError
from .lti import (
    ContinuousStateSpace,
    CostParams,
    LinearPolicy,
    ProbingConfig,
    StateSpace,
    is_stabilizing,
    tustin_discretize,
)
from .qlearn import EvalConfig, PiConfig, X0Policy
from .qnn import SolverConfig, sym_param_count

DEFAULT_PROBING_SCALE = 1e-2  # default amplitude = this times the state scale


@dataclass
class ExperimentConfig:
    """Validated experiment description plus the raw dict it came from."""

    ss: StateSpace
    sample_time: float
    cost: CostParams
    qnn_beta: float
    solver: SolverConfig
    eval_cfg: EvalConfig
    outer_epsilon: float
    max_outer: int
    probing_amplitude: float
    probing_kind: str
    x0: np.ndarray
    x0_mode: str
    radius: float | None
    initial_policies: list[LinearPolicy]
    seed: int
    output_dir: str
    rollout_steps: int
    raw: dict

    def pi_config(self, probing_seed: int, x0_seed: int) -> PiConfig:
        return PiConfig(
            probing=ProbingConfig(self.probing_amplitude, self.probing_kind, probing_seed),
            x0_policy=X0Policy(self.x0_mode, self.x0, self.radius, x0_seed),
            outer_epsilon=self.outer_epsilon,
            max_outer=self.max_outer,
        )


def _section(d: dict, key: str, required: bool = True) -> dict:
    if key not in d:
        if required:
            raise ConfigError(f"{key}: missing required section")
        return {}
    if not isinstance(d[key], dict):
        raise ConfigError(f"{key}: must be an object")
    return d[key]


def _matrix(section: dict, key: str, path: str) -> np.ndarray:
    if key not in section:
        raise ConfigError(f"{path}.{key}: missing required matrix")
    try:
        M = np.asarray(section[key], dtype=float)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}.{key}: not a numeric array ({exc})") from exc
    if M.ndim == 1:
        M = M.reshape(-1, 1) if key.upper().startswith("B") else M.reshape(1, -1)
    if M.ndim != 2 or not np.all(np.isfinite(M)):
        raise ConfigError(f"{path}.{key}: must be a finite 2-d matrix")
    return M


def _scalar(section: dict, key: str, path: str, default=None, cast=float):
    if key not in section:
        if default is None:
            raise ConfigError(f"{path}.{key}: missing required value")
        return default
    try:
        return cast(section[key])
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}.{key}: {exc}") from exc


def parse_config(raw: dict) -> ExperimentConfig:
    """Validate a parsed JSON dict into an :class:`ExperimentConfig`."""
    raw = copy.deepcopy(raw)
    plant = _section(raw, "plant")
    has_cont = "continuous" in plant
    has_disc = "discrete" in plant
    if has_cont == has_disc:
        raise ConfigError(
            "plant: exactly one of 'continuous' or 'discrete' must be present"
        )
    try:
        if has_cont:
            sec = _section(plant, "continuous")
            T = _scalar(sec, "sample_time", "plant.continuous")
            cs = ContinuousStateSpace(
                _matrix(sec, "A", "plant.continuous"),
                _matrix(sec, "B", "plant.continuous"),
                T,
            )
            ss = tustin_discretize(cs)
            sample_time = T
        else:
            sec = _section(plant, "discrete")
            ss = StateSpace(
                _matrix(sec, "A", "plant.discrete"),
                _matrix(sec, "B", "plant.discrete"),
            )
            sample_time = _scalar(sec, "sample_time", "plant.discrete", default=1.0)
    except QlqrError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"plant: {exc}") from exc

    cost_sec = _section(raw, "cost")
    try:
        cost = CostParams(
            _matrix(cost_sec, "Q", "cost"),
            _matrix(cost_sec, "R", "cost"),
            _scalar(cost_sec, "gamma", "cost", default=1.0),
        )
    except QlqrError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"cost: {exc}") from exc
    if cost.Q.shape[0] != ss.n_x:
        raise ConfigError(
            f"cost.Q: size {cost.Q.shape[0]} does not match state dimension {ss.n_x}"
        )
    if cost.R.shape[0] != ss.n_u:
        raise ConfigError(
            f"cost.R: size {cost.R.shape[0]} does not match input dimension {ss.n_u}"
        )

    qnn_sec = _section(raw, "qnn", required=False)
    beta = _scalar(qnn_sec, "beta", "qnn", default=0.005)
    if beta < 0:
        raise ConfigError("qnn.beta: must be >= 0")
    try:
        solver = SolverConfig(
            tol=_scalar(qnn_sec, "solver_tol", "qnn", default=1e-8),
            max_iter=_scalar(qnn_sec, "solver_max_iter", "qnn", default=50_000, cast=int),
        )
    except QlqrError as exc:
        raise ConfigError(f"qnn: {exc}") from exc

    eval_sec = _section(raw, "eval", required=False)
    try:
        eval_cfg = EvalConfig(
            epsilon=_scalar(eval_sec, "epsilon", "eval", default=1e-6),
            max_inner=_scalar(eval_sec, "max_inner", "eval", default=500, cast=int),
            N=_scalar(eval_sec, "N", "eval", default=100, cast=int),
            h0_init=_scalar(eval_sec, "h0_init", "eval", default="zero", cast=str),
            resample=_scalar(
                eval_sec, "resample", "eval", default="fresh_each_sweep", cast=str
            ),
        )
    except QlqrError as exc:
        raise ConfigError(f"eval: {exc}") from exc
    M = sym_param_count(ss.n_x + ss.n_u)
    if eval_cfg.N < M:
        raise ConfigError(
            f"eval.N: {eval_cfg.N} is below the {M} samples needed for a "
            f"{ss.n_x + ss.n_u}-dimensional joint vector"
        )

    pi_sec = _section(raw, "pi", required=False)
    x0 = np.asarray(pi_sec.get("x0", np.zeros(ss.n_x)), dtype=float).reshape(-1)
    if x0.shape[0] != ss.n_x:
        raise ConfigError(
            f"pi.x0: length {x0.shape[0]} does not match state dimension {ss.n_x}"
        )
    x0_mode = _scalar(pi_sec, "x0_mode", "pi", default="random_ball", cast=str)
    radius = pi_sec.get("radius")
    if radius is not None:
        radius = float(radius)
    state_scale = radius if radius is not None else max(1.0, float(np.linalg.norm(x0)))
    probing_sec = _section(pi_sec, "probing", required=False)
    amplitude = _scalar(
        probing_sec,
        "amplitude",
        "pi.probing",
        default=DEFAULT_PROBING_SCALE * state_scale,
    )
    kind = _scalar(probing_sec, "kind", "pi.probing", default="gaussian", cast=str)
    try:
        ProbingConfig(amplitude, kind, 0)
        X0Policy(x0_mode, x0, radius, 0)
    except QlqrError as exc:
        raise ConfigError(f"pi: {exc}") from exc
    outer_epsilon = _scalar(pi_sec, "outer_epsilon", "pi", default=1e-4)
    max_outer = _scalar(pi_sec, "max_outer", "pi", default=50, cast=int)
    if outer_epsilon <= 0:
        raise ConfigError("pi.outer_epsilon: must be positive")
    if max_outer < 1:
        raise ConfigError("pi.max_outer: must be >= 1")

    if "initial_policies" not in raw or not raw["initial_policies"]:
        raise ConfigError("initial_policies: at least one gain matrix is required")
    policies = []
    for idx, entry in enumerate(raw["initial_policies"]):
        K = np.asarray(entry, dtype=float)
        if K.ndim == 1:
            K = K.reshape(1, -1)
        if K.shape != (ss.n_u, ss.n_x):
            raise ConfigError(
                f"initial_policies[{idx}]: shape {K.shape} does not match "
                f"({ss.n_u}, {ss.n_x})"
            )
        pol = LinearPolicy(K)
        if not is_stabilizing(ss, pol):
            raise ConfigError(
                f"initial_policies[{idx}]: gain {K.tolist()} is not stabilizing "
                f"for the configured plant"
            )
        policies.append(pol)

    seed = _scalar(raw, "seed", "", default=0, cast=int)
    output_dir = str(raw.get("output_dir", "out"))
    report_sec = _section(raw, "report", required=False)
    rollout_steps = _scalar(report_sec, "rollout_steps", "report", default=200, cast=int)
    if rollout_steps < 1:
        raise ConfigError("report.rollout_steps: must be >= 1")

    return ExperimentConfig(
        ss=ss,
        sample_time=sample_time,
        cost=cost,
        qnn_beta=beta,
        solver=solver,
        eval_cfg=eval_cfg,
        outer_epsilon=outer_epsilon,
        max_outer=max_outer,
        probing_amplitude=amplitude,
        probing_kind=kind,
        x0=x0,
        x0_mode=x0_mode,
        radius=radius,
        initial_policies=policies,
        seed=seed,
        output_dir=output_dir,
        rollout_steps=rollout_steps,
        raw=raw,
    )


def load_config(
    path: str,
    seed_override: int | None = None,
    out_override: str | None = None,
) -> ExperimentConfig:
    """Read, override, and validate a JSON experiment file."""
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be an object")
    if seed_override is not None:
        raw["seed"] = int(seed_override)
    if out_override is not None:
        raw["output_dir"] = str(out_override)
    return parse_config(raw)


__all__ = ["ExperimentConfig", "parse_config", "load_config", "DEFAULT_PROBING_SCALE"]
