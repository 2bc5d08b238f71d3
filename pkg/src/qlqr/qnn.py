"""Two-layer quadratic network trained by convex optimization.

The network computes sum_j rho_j * f(x' W_j) with polynomial activation
f(z) = a z^2 + b z + c and unit-norm input weights.  Training is posed as a
small semidefinite program over split matrix variables (Z1p, Z1m) and split
vectors (Z2p, Z2m):

    minimize   sum_i (yhat_i - y_i)^2 + beta * trace(Z1p + Z1m)
    subject to yhat_i = a x_i'(Z1p - Z1m) x_i + b x_i'(Z2p - Z2m)
                        + c trace(Z1p - Z1m)
               [[Z1p, Z2p], [Z2p', tr Z1p]] >= 0
               [[Z1m, Z2m], [Z2m', tr Z1m]] >= 0

which is solved here by an operator-splitting (ADMM) loop: an exact
least-squares step in the split variables, projection of the two lifted
blocks onto the PSD cone by eigendecomposition, and a scaled dual update.
The trained model collapses to an explicit quadratic input-output map, from
which the hidden neurons are recovered by eigendecomposition.
"""

from dataclasses import dataclass
from functools import lru_cache
import json

import numpy as np

from .errors import DimensionError, QlqrError, UnsupportedConfigError

SOLVER_STATUSES = ("optimal", "max_iter", "infeasible")


# ---------------------------------------------------------------------------
# symmetric-matrix vectorization (svec): off-diagonals scaled by sqrt(2) so
# that svec(A) . svec(B) == <A, B>_F and x'Hx == svec(H) . svec(xx')
# ---------------------------------------------------------------------------

@lru_cache(maxsize=None)
def _svec_indices(n: int):
    iu = np.triu_indices(n)
    scale = np.where(iu[0] == iu[1], 1.0, np.sqrt(2.0))
    scale.setflags(write=False)
    return iu, scale


def svec(M: np.ndarray) -> np.ndarray:
    """Half-vectorize symmetric matrices (last two axes)."""
    n = M.shape[-1]
    iu, scale = _svec_indices(n)
    return M[..., iu[0], iu[1]] * scale


def smat(v: np.ndarray, n: int) -> np.ndarray:
    """Inverse of :func:`svec`."""
    iu, scale = _svec_indices(n)
    M = np.zeros(v.shape[:-1] + (n, n))
    M[..., iu[0], iu[1]] = v / scale
    M[..., iu[1], iu[0]] = M[..., iu[0], iu[1]]
    return M


def sym_param_count(n: int) -> int:
    """Independent entries of a symmetric n x n matrix."""
    return n * (n + 1) // 2


# ---------------------------------------------------------------------------
# data / configuration types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ActivationCoeffs:
    """Coefficients of the polynomial activation f(z) = a z^2 + b z + c."""

    a: float = 1.0
    b: float = 0.0
    c: float = 0.0

    def __post_init__(self):
        if self.a == 0:
            raise QlqrError("activation coefficient a must be nonzero")

    @property
    def pure_quadratic(self) -> bool:
        return self.b == 0.0 and self.c == 0.0


@dataclass(frozen=True)
class RegressionData:
    """Paired inputs (N, n) and scalar labels (N,)."""

    inputs: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        X = np.asarray(self.inputs, dtype=float)
        y = np.asarray(self.labels, dtype=float).reshape(-1)
        if X.ndim != 2:
            raise DimensionError(f"inputs must be (N, n), got shape {X.shape}")
        if X.shape[0] != y.shape[0]:
            raise DimensionError(
                f"{X.shape[0]} inputs but {y.shape[0]} labels"
            )
        if X.shape[0] < 1:
            raise QlqrError("at least one sample is required")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise QlqrError("regression data contains non-finite entries")
        object.__setattr__(self, "inputs", X)
        object.__setattr__(self, "labels", y)

    @property
    def N(self) -> int:
        return self.inputs.shape[0]

    @property
    def n(self) -> int:
        return self.inputs.shape[1]


@dataclass(frozen=True)
class SolverConfig:
    """Tolerances and caps for the operator-splitting solver."""

    tol: float = 1e-8
    max_iter: int = 50_000
    over_relaxation: float = 1.6
    rho: float | None = None          # None: set from the data scale
    rho_update_every: int = 50        # residual-balancing cadence
    record_history: bool = True

    def __post_init__(self):
        if not (self.tol > 0):
            raise QlqrError("solver tol must be positive")
        if self.max_iter < 1:
            raise QlqrError("solver max_iter must be >= 1")
        if not (1.0 <= self.over_relaxation < 2.0):
            raise QlqrError("over_relaxation must lie in [1, 2)")


@dataclass(frozen=True)
class AdmmState:
    """Solver iterates (unscaled) for warm-starting a related problem."""

    v: np.ndarray
    s: np.ndarray
    u: np.ndarray
    rho: float


@dataclass
class SdpProblem:
    """Assembled cone program; produced by :func:`assemble_problem`.

    Variable vector v stacks [svec(Z1p); svec(Z1m); Z2p; Z2m].  ``lift``
    maps v to the stacked svec of the two lifted blocks; predictions are
    ``data_map @ v``.
    """

    inputs: np.ndarray
    labels: np.ndarray
    coeffs: ActivationCoeffs
    beta: float
    data_map: np.ndarray            # (N, d)
    lift: np.ndarray                # (2*m2, d)
    trace_dir: np.ndarray           # gradient direction of trace(Z1p)+trace(Z1m)
    n: int
    m: int                          # sym_param_count(n)
    m2: int                         # sym_param_count(n + 1)

    @property
    def d(self) -> int:
        return 2 * self.m + 2 * self.n

    def set_labels(self, labels: np.ndarray) -> None:
        """Swap labels in place; the operators depend only on the inputs."""
        y = np.asarray(labels, dtype=float).reshape(-1)
        if y.shape[0] != self.data_map.shape[0]:
            raise DimensionError("label count does not match the assembled data")
        self.labels = y


@dataclass(frozen=True)
class SdpSolution:
    """Split solution of the training program plus solver diagnostics.

    ``residual_history`` rows are (iteration, primal_residual,
    dual_residual, objective); ``state`` allows warm-starting subsequent
    solves on the same inputs.
    """

    Z1p: np.ndarray
    Z1m: np.ndarray
    Z2p: np.ndarray
    Z2m: np.ndarray
    objective: float
    status: str
    primal_residual: float
    dual_residual: float
    iterations: int
    residual_history: np.ndarray
    state: AdmmState

    @property
    def Z1(self) -> np.ndarray:
        return self.Z1p - self.Z1m

    def lifted_blocks(self) -> tuple[np.ndarray, np.ndarray]:
        """The two PSD-constrained blocks, rebuilt exactly from the parts."""
        def lift(Z1, Z2):
            n = Z1.shape[0]
            out = np.empty((n + 1, n + 1))
            out[:n, :n] = Z1
            out[:n, n] = Z2
            out[n, :n] = Z2
            out[n, n] = np.trace(Z1)
            return out

        return lift(self.Z1p, self.Z2p), lift(self.Z1m, self.Z2m)


@dataclass(frozen=True)
class QnnModel:
    """Quadratic input-output map of a trained network.

    ``predict`` evaluates [x; 1]' Hfull [x; 1]; with b = c = 0 the last
    row/column of Hfull is zero and the core block is a * (Z1p - Z1m).
    """

    Hfull: np.ndarray
    coeffs: ActivationCoeffs
    beta: float

    def __post_init__(self):
        H = np.asarray(self.Hfull, dtype=float)
        if H.ndim != 2 or H.shape[0] != H.shape[1]:
            raise DimensionError(f"Hfull must be square, got {H.shape}")
        if np.linalg.norm(H - H.T) > 1e-8 * max(1.0, np.linalg.norm(H)):
            raise DimensionError("Hfull must be symmetric")
        H = 0.5 * (H + H.T)
        H.setflags(write=False)
        object.__setattr__(self, "Hfull", H)

    @property
    def n(self) -> int:
        return self.Hfull.shape[0] - 1

    @property
    def core(self) -> np.ndarray:
        """Quadratic block acting on the raw input."""
        return self.Hfull[: self.n, : self.n]


@dataclass(frozen=True)
class Neuron:
    """One hidden unit: unit-norm input weights W and output weight rho."""

    W: np.ndarray
    rho: float

    def __post_init__(self):
        W = np.array(self.W, dtype=float).reshape(-1)
        if abs(np.linalg.norm(W) - 1.0) > 1e-10:
            raise QlqrError("neuron input weights must have unit norm")
        W.setflags(write=False)
        object.__setattr__(self, "W", W)


# ---------------------------------------------------------------------------
# assembly and the ADMM solver
# ---------------------------------------------------------------------------

def assemble_problem(
    data: RegressionData, coeffs: ActivationCoeffs, beta: float
) -> SdpProblem:
    """Build the prediction operator and the PSD lifting map."""
    if beta < 0:
        raise QlqrError("beta must be >= 0")
    X = data.inputs
    N, n = X.shape
    m = sym_param_count(n)
    m2 = sym_param_count(n + 1)
    outer = X[:, :, None] * X[:, None, :]
    phi = svec(outer)                       # (N, m); phi . svec(H) = x'Hx
    iota = svec(np.eye(n))                  # trace in svec coordinates
    row = coeffs.a * phi + coeffs.c * iota
    D = np.concatenate([row, -row, coeffs.b * X, -coeffs.b * X], axis=1)

    iu_n, _ = _svec_indices(n)
    iu_1, _ = _svec_indices(n + 1)
    pos_1 = {(i, j): r for r, (i, j) in enumerate(zip(iu_1[0], iu_1[1]))}
    d = 2 * m + 2 * n
    L = np.zeros((2 * m2, d))
    for r, (i, j) in enumerate(zip(iu_n[0], iu_n[1])):
        L[pos_1[(i, j)], r] = 1.0
        L[m2 + pos_1[(i, j)], m + r] = 1.0
        if i == j:
            # corner entry of each lifted block carries the trace
            L[pos_1[(n, n)], r] = 1.0
            L[m2 + pos_1[(n, n)], m + r] = 1.0
    for i in range(n):
        L[pos_1[(i, n)], 2 * m + i] = np.sqrt(2.0)
        L[m2 + pos_1[(i, n)], 2 * m + n + i] = np.sqrt(2.0)

    diag_mask = (iu_n[0] == iu_n[1]).astype(float)
    trace_dir = np.concatenate([diag_mask, diag_mask, np.zeros(2 * n)])
    return SdpProblem(
        inputs=X,
        labels=data.labels,
        coeffs=coeffs,
        beta=float(beta),
        data_map=D,
        lift=L,
        trace_dir=trace_dir,
        n=n,
        m=m,
        m2=m2,
    )


def solve_sdp(
    problem: SdpProblem,
    cfg: SolverConfig | None = None,
    warm_start: AdmmState | None = None,
) -> SdpSolution:
    """Run the splitting loop on an assembled program.

    Terminates when max(primal, dual) relative residual drops below
    ``cfg.tol`` (status "optimal") or at ``cfg.max_iter`` (status
    "max_iter", best iterate returned).  PSD projections clamp negative
    eigenvalues of the lifted blocks to zero.
    """
    cfg = cfg or SolverConfig()
    D, L = problem.data_map, problem.lift
    n, m, m2, d = problem.n, problem.m, problem.m2, problem.d
    DtD = D.T @ D
    LtL = L.T @ L

    # Work on labels scaled to O(1); exact under v -> v / y_scale with the
    # trace penalty scaled the same way.
    y_scale = max(1.0, float(np.max(np.abs(problem.labels), initial=0.0)))
    y = problem.labels / y_scale
    beta_s = problem.beta / y_scale
    q = beta_s * problem.trace_dir
    Dty = D.T @ y
    lin = 2.0 * Dty - q

    if warm_start is None:
        rho = cfg.rho if cfg.rho is not None else max(
            np.trace(2.0 * DtD) / max(np.trace(LtL), 1e-12), 1e-8
        )
        v = np.zeros(d)
        s = np.zeros(2 * m2)
        u = np.zeros(2 * m2)
    else:
        rho = warm_start.rho
        v = warm_start.v / y_scale
        s = warm_start.s / y_scale
        u = warm_start.u / y_scale

    def metric_inverse(rho):
        return np.linalg.inv(2.0 * DtD + rho * LtL)

    Minv = metric_inverse(rho)
    alpha = cfg.over_relaxation
    grad0 = max(1.0, np.linalg.norm(lin))
    history = [] if cfg.record_history else None

    status = "max_iter"
    rp = rd = np.inf
    it = 0
    for it in range(1, cfg.max_iter + 1):
        v = Minv @ (lin + rho * (L.T @ (s - u)))
        Lv = L @ v
        w = alpha * Lv + (1.0 - alpha) * s
        blocks = smat((w + u).reshape(2, m2), n + 1)
        lam, V = np.linalg.eigh(blocks)
        lam[lam < 0] = 0.0
        proj = (V * lam[:, None, :]) @ np.swapaxes(V, -1, -2)
        s_new = svec(proj).reshape(-1)
        u = u + w - s_new
        r_abs = float(np.linalg.norm(Lv - s_new))
        d_abs = float(rho * np.linalg.norm(L.T @ (s_new - s)))
        s = s_new
        rp = r_abs / max(1.0, np.linalg.norm(Lv), np.linalg.norm(s))
        rd = d_abs / max(1.0, rho * np.linalg.norm(L.T @ u), 1e-3 * grad0)
        if history is not None:
            resid = D @ v - y
            obj = y_scale**2 * (resid @ resid + q @ v)
            history.append((it, rp, rd, obj))
        if max(rp, rd) <= cfg.tol:
            status = "optimal"
            break
        if it % cfg.rho_update_every == 0:
            # residual balancing; the scaled dual tracks 1/rho
            if r_abs > 10.0 * d_abs and rho < 1e10:
                rho *= 2.0
                u *= 0.5
                Minv = metric_inverse(rho)
            elif d_abs > 10.0 * r_abs and rho > 1e-10:
                rho *= 0.5
                u *= 2.0
                Minv = metric_inverse(rho)

    v_out = v * y_scale
    resid = D @ v_out - problem.labels
    objective = float(resid @ resid + problem.beta * (problem.trace_dir @ v_out))
    Z1p = smat(v_out[:m], n)
    Z1m = smat(v_out[m : 2 * m], n)
    Z2p = v_out[2 * m : 2 * m + n].copy()
    Z2m = v_out[2 * m + n :].copy()
    return SdpSolution(
        Z1p=Z1p,
        Z1m=Z1m,
        Z2p=Z2p,
        Z2m=Z2m,
        objective=objective,
        status=status,
        primal_residual=float(rp),
        dual_residual=float(rd),
        iterations=it,
        residual_history=np.array(history if history else np.zeros((0, 4))),
        state=AdmmState(v=v_out, s=s * y_scale, u=u * y_scale, rho=rho),
    )


def model_from_solution(sol: SdpSolution, coeffs: ActivationCoeffs, beta: float) -> QnnModel:
    """Collapse a split solution to the explicit quadratic map."""
    Z1 = 0.5 * (sol.Z1 + sol.Z1.T)
    Z2 = sol.Z2p - sol.Z2m
    n = Z1.shape[0]
    H = np.zeros((n + 1, n + 1))
    H[:n, :n] = coeffs.a * Z1
    H[:n, n] = 0.5 * coeffs.b * Z2
    H[n, :n] = 0.5 * coeffs.b * Z2
    H[n, n] = coeffs.c * np.trace(Z1)
    return QnnModel(Hfull=H, coeffs=coeffs, beta=beta)


def train(
    data: RegressionData,
    coeffs: ActivationCoeffs | None = None,
    beta: float = 0.0,
    loss: str = "squared",
    solver: SolverConfig | None = None,
    warm_start: AdmmState | None = None,
) -> tuple[SdpSolution, QnnModel]:
    """Fit the network by convex optimization; returns (solution, model).

    Convexity makes the achieved weights globally optimal up to solver
    tolerance.  On hitting the iteration cap the best iterate is returned
    with status "max_iter" and the caller decides how to proceed.
    """
    if loss != "squared":
        raise UnsupportedConfigError(f"unsupported loss {loss!r}; only 'squared'")
    coeffs = coeffs or ActivationCoeffs()
    problem = assemble_problem(data, coeffs, beta)
    sol = solve_sdp(problem, solver, warm_start)
    return sol, model_from_solution(sol, coeffs, beta)


# ---------------------------------------------------------------------------
# model evaluation and neuron recovery
# ---------------------------------------------------------------------------

def predict(model: QnnModel, x) -> float:
    """Evaluate the trained map at one input."""
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.shape[0] != model.n:
        raise DimensionError(f"input must have length {model.n}, got {x.shape[0]}")
    z = np.concatenate([x, [1.0]])
    return float(z @ model.Hfull @ z)


def extract_neurons(model: QnnModel, tol: float = 1e-6) -> list[Neuron]:
    """Recover explicit hidden units from the quadratic map.

    Eigendecomposes the core block and keeps one neuron per eigenvalue with
    |lam| > tol * max|lam|; W is the eigenvector, rho = lam / a.  The
    reconstruction sum_j rho_j * a * (x'W_j)^2 reproduces the model output.
    Only defined for the pure quadratic activation (b = c = 0).
    """
    if not model.coeffs.pure_quadratic:
        raise UnsupportedConfigError(
            "neuron extraction requires activation coefficients b = c = 0"
        )
    if tol <= 0:
        raise QlqrError("tol must be positive")
    lam, V = np.linalg.eigh(0.5 * (model.core + model.core.T))
    top = np.max(np.abs(lam), initial=0.0)
    if top == 0.0:
        return []
    keep = np.abs(lam) > tol * top
    order = np.argsort(-np.abs(lam[keep]))
    lam_k = lam[keep][order]
    V_k = V[:, keep][:, order]
    a = model.coeffs.a
    return [Neuron(W=V_k[:, j], rho=float(lam_k[j] / a)) for j in range(lam_k.size)]


# ---------------------------------------------------------------------------
# direct least-squares backend (cross-check path, beta = 0)
# ---------------------------------------------------------------------------

def fit_quadratic_lstsq(data: RegressionData) -> np.ndarray:
    """Least squares over the symmetric parametrization, no PSD split.

    Solves min_H sum_i (x_i' H x_i - y_i)^2 directly in svec coordinates
    and returns the symmetric matrix.  Independent of the SDP path; used
    as its cross-check.
    """
    X = data.inputs
    outer = X[:, :, None] * X[:, None, :]
    Phi = svec(outer)
    h, *_ = np.linalg.lstsq(Phi, data.labels, rcond=None)
    return smat(h, data.n)


# ---------------------------------------------------------------------------
# trainers: callables data -> model, reusable across related solves
# ---------------------------------------------------------------------------

class SdpQuadraticTrainer:
    """Stateful trainer for the pure quadratic map (a=1, b=c=0).

    Reuses the assembled operators and warm-starts the solver whenever the
    inputs are unchanged between calls (the situation in iterative policy
    evaluation, where only the labels move).  Not safe to share across
    threads; use one instance per evaluation.
    """

    def __init__(self, beta: float = 0.005, solver: SolverConfig | None = None):
        if beta < 0:
            raise QlqrError("beta must be >= 0")
        self.beta = float(beta)
        self.solver = solver or SolverConfig()
        self.coeffs = ActivationCoeffs(a=1.0, b=0.0, c=0.0)
        self.last_solution: SdpSolution | None = None
        self._problem: SdpProblem | None = None
        self._state: AdmmState | None = None

    def __call__(self, data: RegressionData) -> QnnModel:
        reuse = (
            self._problem is not None
            and self._problem.inputs.shape == data.inputs.shape
            and np.array_equal(self._problem.inputs, data.inputs)
        )
        if reuse:
            self._problem.set_labels(data.labels)
        else:
            self._problem = assemble_problem(data, self.coeffs, self.beta)
            self._state = None
        sol = solve_sdp(self._problem, self.solver, self._state)
        self._state = sol.state
        self.last_solution = sol
        return model_from_solution(sol, self.coeffs, self.beta)


class LstsqQuadraticTrainer:
    """Cross-check trainer: direct symmetric least squares (beta = 0)."""

    def __call__(self, data: RegressionData) -> QnnModel:
        H = fit_quadratic_lstsq(data)
        n = data.n
        Hfull = np.zeros((n + 1, n + 1))
        Hfull[:n, :n] = H
        return QnnModel(Hfull=Hfull, coeffs=ActivationCoeffs(), beta=0.0)


# ---------------------------------------------------------------------------
# solver diagnostics dump
# ---------------------------------------------------------------------------

def dump_solution(sol: SdpSolution, basepath: str) -> tuple[str, str]:
    """Write ``<basepath>.json`` (matrices, status) and ``<basepath>.csv``
    (per-iteration residual history).  Returns the two paths."""
    json_path = f"{basepath}.json"
    csv_path = f"{basepath}.csv"
    payload = {
        "status": sol.status,
        "objective": sol.objective,
        "primal_residual": sol.primal_residual,
        "dual_residual": sol.dual_residual,
        "iterations": sol.iterations,
        "Z1p": sol.Z1p.tolist(),
        "Z1m": sol.Z1m.tolist(),
        "Z2p": sol.Z2p.tolist(),
        "Z2m": sol.Z2m.tolist(),
    }
    with open(json_path, "w") as fh:
        json.dump(payload, fh, indent=2)
    with open(csv_path, "w") as fh:
        fh.write("iteration,primal_residual,dual_residual,objective\n")
        for row in sol.residual_history:
            fh.write(
                f"{int(row[0])},{row[1]!r},{row[2]!r},{row[3]!r}\n"
            )
    return json_path, csv_path


__all__ = [
    "SOLVER_STATUSES",
    "svec",
    "smat",
    "sym_param_count",
    "ActivationCoeffs",
    "RegressionData",
    "SolverConfig",
    "AdmmState",
    "SdpProblem",
    "SdpSolution",
    "QnnModel",
    "Neuron",
    "assemble_problem",
    "solve_sdp",
    "model_from_solution",
    "train",
    "predict",
    "extract_neurons",
    "fit_quadratic_lstsq",
    "SdpQuadraticTrainer",
    "LstsqQuadraticTrainer",
    "dump_solution",
]
