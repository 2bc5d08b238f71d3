"""Model-based ground truth for the learning pipeline.

Everything here takes the plant matrices explicitly and produces the exact
quantities the data-driven path must converge to: per-policy value matrices,
the action-value quadratic form, and the optimal gain from the discounted
Riccati recursion.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceError, DimensionError, DivergenceError, ImprovementError
from .lti import CostParams, LinearPolicy, StateSpace, is_stabilizing, spectral_radius

LYAPUNOV_TOL = 1e-12
LYAPUNOV_MAX_ITER = 100_000
RICCATI_TOL = 1e-12
RICCATI_MAX_ITER = 200_000


def _sym(M: np.ndarray) -> np.ndarray:
    return 0.5 * (M + M.T)


@dataclass(frozen=True)
class QuadraticForm:
    """Symmetric matrix H over the joint vector [x; u].

    Partition blocks: xx is (n_x, n_x), xu is (n_x, n_u), uu is (n_u, n_u).
    """

    H: np.ndarray
    n_x: int
    n_u: int

    def __post_init__(self):
        H = np.asarray(self.H, dtype=float)
        n = self.n_x + self.n_u
        if H.shape != (n, n):
            raise DimensionError(
                f"H must be {(n, n)} for n_x={self.n_x}, n_u={self.n_u}, got {H.shape}"
            )
        if np.linalg.norm(H - H.T) > 1e-8 * max(1.0, np.linalg.norm(H)):
            raise DimensionError("H must be symmetric")
        H = _sym(H)
        H.setflags(write=False)
        object.__setattr__(self, "H", H)

    @property
    def xx(self) -> np.ndarray:
        return self.H[: self.n_x, : self.n_x]

    @property
    def xu(self) -> np.ndarray:
        return self.H[: self.n_x, self.n_x :]

    @property
    def uu(self) -> np.ndarray:
        return self.H[self.n_x :, self.n_x :]

    def value(self, x, u) -> float:
        z = np.concatenate([np.asarray(x, float).ravel(), np.asarray(u, float).ravel()])
        if z.shape[0] != self.n_x + self.n_u:
            raise DimensionError("state/input sizes do not match the form")
        return float(z @ self.H @ z)


def solve_policy_value(ss: StateSpace, cp: CostParams, pol: LinearPolicy) -> np.ndarray:
    """Value matrix P of a stabilizing linear policy.

    Fixed point of P = Q + K'RK + gamma * Acl' P Acl with Acl = A - BK.
    The iteration stops when the relative Frobenius change is below 1e-12,
    which bounds the equation residual by the same amount.
    """
    K = pol.K
    Acl = ss.A - ss.B @ K
    g = cp.gamma
    if np.sqrt(g) * spectral_radius(Acl) >= 1.0:
        raise DivergenceError(
            "policy is not stabilizing for the discounted system; "
            "value iteration would diverge"
        )
    X = _sym(cp.Q + K.T @ cp.R @ K)
    P = X.copy()
    for _ in range(LYAPUNOV_MAX_ITER):
        P_next = _sym(X + g * Acl.T @ P @ Acl)
        delta = np.linalg.norm(P_next - P, "fro")
        P = P_next
        if delta <= LYAPUNOV_TOL * max(1.0, np.linalg.norm(P, "fro")):
            return P
    raise ConvergenceError(
        f"Lyapunov fixed point did not converge in {LYAPUNOV_MAX_ITER} iterations"
    )


def build_h(ss: StateSpace, cp: CostParams, P: np.ndarray) -> QuadraticForm:
    """Action-value form for a value matrix P:

    H = [[Q + g A'PA,  g A'PB],
         [g B'PA,      R + g B'PB]]
    """
    P = np.asarray(P, dtype=float)
    if P.shape != (ss.n_x, ss.n_x):
        raise DimensionError(f"P must be {(ss.n_x, ss.n_x)}, got {P.shape}")
    P = _sym(P)
    g = cp.gamma
    A, B = ss.A, ss.B
    H = np.block(
        [
            [cp.Q + g * A.T @ P @ A, g * A.T @ P @ B],
            [g * B.T @ P @ A, cp.R + g * B.T @ P @ B],
        ]
    )
    return QuadraticForm(_sym(H), ss.n_x, ss.n_u)


def improved_gain(form: QuadraticForm) -> LinearPolicy:
    """Greedy gain for a quadratic action-value form: K = uu^-1 xu'.

    Requires the uu block to be positive definite, which certifies the
    minimizer; raises otherwise since that signals a broken evaluation.
    """
    uu = form.uu
    eigs = np.linalg.eigvalsh(_sym(uu))
    if eigs.min() <= 0:
        raise ImprovementError(
            f"uu block is not positive definite (min eigenvalue {eigs.min():.3e})"
        )
    K = np.linalg.solve(_sym(uu), form.xu.T)
    return LinearPolicy(K)


def riccati_lqr(
    ss: StateSpace,
    cp: CostParams,
    tol: float = RICCATI_TOL,
    max_iter: int = RICCATI_MAX_ITER,
) -> tuple[LinearPolicy, np.ndarray]:
    """Optimal gain and value matrix from the discounted Riccati recursion.

    Iterates P <- Q + g A'PA - g^2 A'PB (R + g B'PB)^-1 B'PA until the
    Frobenius change drops below ``tol``, then returns
    K = g (R + g B'PB)^-1 B'PA and P.
    """
    A, B = ss.A, ss.B
    g = cp.gamma
    P = cp.Q.copy()
    for _ in range(max_iter):
        BtPB = cp.R + g * B.T @ P @ B
        BtPA = g * B.T @ P @ A
        K = np.linalg.solve(BtPB, BtPA)
        P_next = _sym(cp.Q + g * A.T @ P @ A - g * A.T @ P @ B @ K)
        delta = np.linalg.norm(P_next - P, "fro")
        P = P_next
        if delta <= tol:
            break
    else:
        raise ConvergenceError(
            f"Riccati recursion did not converge in {max_iter} iterations"
        )
    K = g * np.linalg.solve(cp.R + g * B.T @ P @ B, B.T @ P @ A)
    pol = LinearPolicy(K)
    if not is_stabilizing(ss, pol):
        raise ConvergenceError("Riccati recursion returned a non-stabilizing gain")
    return pol, P


def policy_iteration_exact(
    ss: StateSpace,
    cp: CostParams,
    pol0: LinearPolicy,
    tol: float = 1e-10,
    max_iter: int = 100,
) -> list[LinearPolicy]:
    """Model-based policy iteration trace starting from a stabilizing gain.

    Returns the full gain sequence [K_0, K_1, ...] ending at the first gain
    whose change from its predecessor is below ``tol`` (Frobenius).
    """
    gains = [pol0]
    for _ in range(max_iter):
        P = solve_policy_value(ss, cp, gains[-1])
        nxt = improved_gain(build_h(ss, cp, P))
        delta = np.linalg.norm(nxt.K - gains[-1].K, "fro")
        gains.append(nxt)
        if delta < tol:
            return gains
    raise ConvergenceError(
        f"model-based policy iteration did not converge in {max_iter} sweeps"
    )


__all__ = [
    "QuadraticForm",
    "solve_policy_value",
    "build_h",
    "improved_gain",
    "riccati_lqr",
    "policy_iteration_exact",
]
