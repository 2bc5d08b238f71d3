"""Discrete-time LTI plants: discretization, simulation, local cost.

The learner-facing surface of this module is :func:`rollout`; everything
that needs the plant matrices directly (:func:`is_stabilizing` and the
``oracle`` module) is considered oracle-side and takes the
:class:`StateSpace` explicitly.
"""

from dataclasses import dataclass

import numpy as np

from .errors import (
    ControllabilityError,
    DimensionError,
    DiscretizationError,
    QlqrError,
)

# Margin inside the unit circle below which a closed loop is not counted
# as stabilizing (guards against roundoff on marginal loops).
STABILITY_MARGIN = 1e-9

PROBING_KINDS = ("gaussian", "uniform", "sinusoid_mix")


def _as_matrix(x, name: str) -> np.ndarray:
    a = np.asarray(x, dtype=float)
    if a.ndim != 2:
        raise DimensionError(f"{name} must be a 2-d matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise QlqrError(f"{name} contains non-finite entries")
    return a


def _frozen(a: np.ndarray) -> np.ndarray:
    a = a.copy()
    a.setflags(write=False)
    return a


def controllability_matrix(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Stack [B, AB, ..., A^(n_x-1) B] column-wise."""
    blocks = [B]
    for _ in range(A.shape[0] - 1):
        blocks.append(A @ blocks[-1])
    return np.hstack(blocks)


def _check_controllable(A: np.ndarray, B: np.ndarray) -> None:
    n_x, n_u = A.shape[0], B.shape[1]
    C = controllability_matrix(A, B)
    sv = np.linalg.svd(C, compute_uv=False)
    tol = max(n_x, n_u) * (sv[0] if sv.size else 0.0) * 1e-12
    rank = int(np.sum(sv > tol))
    if rank < n_x:
        raise ControllabilityError(
            f"controllability matrix has rank {rank} < {n_x}"
        )


@dataclass(frozen=True)
class StateSpace:
    """Discrete-time plant x[k+1] = A x[k] + B u[k].

    The pair (A, B) must be controllable; this is checked at construction.
    """

    A: np.ndarray
    B: np.ndarray

    def __post_init__(self):
        A = _as_matrix(self.A, "A")
        B = _as_matrix(self.B, "B")
        if A.shape[0] != A.shape[1]:
            raise DimensionError(f"A must be square, got {A.shape}")
        if B.shape[0] != A.shape[0]:
            raise DimensionError(
                f"B must have {A.shape[0]} rows to match A, got {B.shape}"
            )
        _check_controllable(A, B)
        object.__setattr__(self, "A", _frozen(A))
        object.__setattr__(self, "B", _frozen(B))

    @property
    def n_x(self) -> int:
        return self.A.shape[0]

    @property
    def n_u(self) -> int:
        return self.B.shape[1]


@dataclass(frozen=True)
class ContinuousStateSpace:
    """Continuous-time plant xdot = Ac x + Bc u with sample time T (seconds)."""

    Ac: np.ndarray
    Bc: np.ndarray
    T: float

    def __post_init__(self):
        Ac = _as_matrix(self.Ac, "Ac")
        Bc = _as_matrix(self.Bc, "Bc")
        if Ac.shape[0] != Ac.shape[1]:
            raise DimensionError(f"Ac must be square, got {Ac.shape}")
        if Bc.shape[0] != Ac.shape[0]:
            raise DimensionError(
                f"Bc must have {Ac.shape[0]} rows to match Ac, got {Bc.shape}"
            )
        if not (self.T > 0):
            raise QlqrError(f"sample time must be positive, got {self.T}")
        M = np.eye(Ac.shape[0]) - 0.5 * self.T * Ac
        if np.linalg.matrix_rank(M) < Ac.shape[0]:
            raise DiscretizationError(
                "I - (T/2) Ac is singular; bilinear discretization ill-posed"
            )
        object.__setattr__(self, "Ac", _frozen(Ac))
        object.__setattr__(self, "Bc", _frozen(Bc))


@dataclass(frozen=True)
class CostParams:
    """Quadratic stage cost x'Qx + u'Ru with discount factor gamma in (0, 1]."""

    Q: np.ndarray
    R: np.ndarray
    gamma: float = 1.0

    def __post_init__(self):
        Q = _as_matrix(self.Q, "Q")
        R = _as_matrix(self.R, "R")
        for name, M in (("Q", Q), ("R", R)):
            if M.shape[0] != M.shape[1]:
                raise DimensionError(f"{name} must be square, got {M.shape}")
            if np.linalg.norm(M - M.T) > 1e-10 * max(1.0, np.linalg.norm(M)):
                raise QlqrError(f"{name} must be symmetric")
            if np.linalg.eigvalsh(M).min() <= 0:
                raise QlqrError(f"{name} must be positive definite")
        if not (0 < self.gamma <= 1):
            raise QlqrError(f"gamma must lie in (0, 1], got {self.gamma}")
        object.__setattr__(self, "Q", _frozen(Q))
        object.__setattr__(self, "R", _frozen(R))


@dataclass(frozen=True)
class LinearPolicy:
    """State feedback u = -K x."""

    K: np.ndarray

    def __post_init__(self):
        K = _as_matrix(self.K, "K")
        object.__setattr__(self, "K", _frozen(K))

    @property
    def n_u(self) -> int:
        return self.K.shape[0]

    @property
    def n_x(self) -> int:
        return self.K.shape[1]

    def action(self, x: np.ndarray) -> np.ndarray:
        return -self.K @ x


@dataclass(frozen=True)
class ProbingConfig:
    """Exploration noise added to the policy action during rollouts.

    ``amplitude`` sets the scale (std for gaussian, half-width for uniform,
    RMS for the sinusoid mix).  Generation is deterministic given ``seed``.
    """

    amplitude: float
    kind: str = "gaussian"
    seed: int = 0

    def __post_init__(self):
        if self.amplitude < 0:
            raise QlqrError(f"probing amplitude must be >= 0, got {self.amplitude}")
        if self.kind not in PROBING_KINDS:
            raise QlqrError(
                f"unknown probing kind {self.kind!r}; expected one of {PROBING_KINDS}"
            )


def derive_seed(seed: int, *keys: int) -> int:
    """Mix a base seed with stream keys into a fresh 64-bit seed.

    Used to give sweeps / samples independent but reproducible noise streams.
    """
    ss = np.random.SeedSequence([int(seed) & (2**63 - 1), *[int(k) for k in keys]])
    return int(ss.generate_state(1, np.uint64)[0])


def probing_noise(probe: ProbingConfig, steps: int, n_u: int, n_x: int) -> np.ndarray:
    """Noise sequence of shape (steps, n_u), deterministic given probe.seed."""
    if probe.amplitude == 0.0:
        return np.zeros((steps, n_u))
    rng = np.random.default_rng(probe.seed)
    if probe.kind == "gaussian":
        return probe.amplitude * rng.standard_normal((steps, n_u))
    if probe.kind == "uniform":
        return probe.amplitude * rng.uniform(-1.0, 1.0, size=(steps, n_u))
    # sinusoid_mix: 2*n_x sinusoids at pairwise-incommensurate frequencies,
    # random phases per channel, scaled so the mix has RMS ~ amplitude.
    n_sin = max(2 * n_x, 2)
    primes = _first_primes(n_sin)
    omega = np.pi * np.mod(np.sqrt(primes), 1.0)  # irrational fractions of pi
    phases = rng.uniform(0.0, 2.0 * np.pi, size=(n_sin, n_u))
    k = np.arange(steps)[:, None, None]
    waves = np.sin(omega[None, :, None] * k + phases[None, :, :])
    return probe.amplitude * np.sqrt(2.0 / n_sin) * waves.sum(axis=1)


def _first_primes(count: int) -> np.ndarray:
    primes = []
    n = 2
    while len(primes) < count:
        if all(n % p for p in primes):
            primes.append(n)
        n += 1
    return np.array(primes, dtype=float)


@dataclass(frozen=True)
class Trajectory:
    """A batch of one-step transitions (x_k, u_k, x_{k+1})."""

    states: np.ndarray       # (steps, n_x)
    inputs: np.ndarray       # (steps, n_u)
    next_states: np.ndarray  # (steps, n_x)

    def __len__(self) -> int:
        return self.states.shape[0]

    def __iter__(self):
        return zip(self.states, self.inputs, self.next_states)

    def concat(self, other: "Trajectory") -> "Trajectory":
        return Trajectory(
            np.vstack([self.states, other.states]),
            np.vstack([self.inputs, other.inputs]),
            np.vstack([self.next_states, other.next_states]),
        )


def tustin_discretize(cs: ContinuousStateSpace) -> StateSpace:
    """Bilinear (trapezoidal) discretization of a continuous plant.

    A = (I - (T/2) Ac)^-1 (I + (T/2) Ac),  B = (I - (T/2) Ac)^-1 T Bc.
    The result must pass the controllability check.
    """
    n = cs.Ac.shape[0]
    M = np.eye(n) - 0.5 * cs.T * cs.Ac
    try:
        A = np.linalg.solve(M, np.eye(n) + 0.5 * cs.T * cs.Ac)
        B = np.linalg.solve(M, cs.T * cs.Bc)
    except np.linalg.LinAlgError as exc:
        raise DiscretizationError(f"bilinear transform failed: {exc}") from exc
    return StateSpace(A, B)


def _check_vec(v, size: int, name: str) -> np.ndarray:
    a = np.asarray(v, dtype=float).reshape(-1)
    if a.shape[0] != size:
        raise DimensionError(f"{name} must have length {size}, got {a.shape[0]}")
    return a


def step(ss: StateSpace, x, u) -> np.ndarray:
    """One plant step: A x + B u."""
    x = _check_vec(x, ss.n_x, "x")
    u = _check_vec(u, ss.n_u, "u")
    return ss.A @ x + ss.B @ u


def local_cost(cp: CostParams, x, u) -> float:
    """Stage cost x'Qx + u'Ru."""
    x = _check_vec(x, cp.Q.shape[0], "x")
    u = _check_vec(u, cp.R.shape[0], "u")
    return float(x @ cp.Q @ x + u @ cp.R @ u)


def rollout(
    ss: StateSpace,
    pol: LinearPolicy,
    x0,
    steps: int,
    probe: ProbingConfig | None = None,
) -> Trajectory:
    """Simulate the closed loop u_k = -K x_k + n_k for ``steps`` steps.

    With ``probe`` absent the input is the pure policy action.  The result is
    deterministic given the probing seed.
    """
    if steps < 1:
        raise QlqrError(f"steps must be >= 1, got {steps}")
    if pol.n_x != ss.n_x or pol.n_u != ss.n_u:
        raise DimensionError(
            f"policy shape {pol.K.shape} does not match plant ({ss.n_u}, {ss.n_x})"
        )
    x = _check_vec(x0, ss.n_x, "x0")
    noise = (
        probing_noise(probe, steps, ss.n_u, ss.n_x)
        if probe is not None
        else np.zeros((steps, ss.n_u))
    )
    X = np.empty((steps, ss.n_x))
    U = np.empty((steps, ss.n_u))
    Xn = np.empty((steps, ss.n_x))
    for k in range(steps):
        u = pol.action(x) + noise[k]
        X[k] = x
        U[k] = u
        x = ss.A @ x + ss.B @ u
        Xn[k] = x
    return Trajectory(X, U, Xn)


def spectral_radius(M: np.ndarray) -> float:
    return float(np.max(np.abs(np.linalg.eigvals(M))))


def is_stabilizing(ss: StateSpace, pol: LinearPolicy) -> bool:
    """True iff the closed loop A - BK is strictly Schur (margin 1e-9)."""
    if pol.n_x != ss.n_x or pol.n_u != ss.n_u:
        raise DimensionError(
            f"policy shape {pol.K.shape} does not match plant ({ss.n_u}, {ss.n_x})"
        )
    return spectral_radius(ss.A - ss.B @ pol.K) < 1.0 - STABILITY_MARGIN


__all__ = [
    "STABILITY_MARGIN",
    "PROBING_KINDS",
    "StateSpace",
    "ContinuousStateSpace",
    "CostParams",
    "LinearPolicy",
    "ProbingConfig",
    "Trajectory",
    "controllability_matrix",
    "derive_seed",
    "probing_noise",
    "tustin_discretize",
    "step",
    "local_cost",
    "rollout",
    "spectral_radius",
    "is_stabilizing",
]
